"""Chat-completion clients: a live HTTP backend and an offline replay backend."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import defaultdict
from typing import Protocol

import httpx

from .errors import ClientError

log = logging.getLogger(__name__)

ENDPOINT_ENV = "SUPREME_LLM_ENDPOINT"
TOKEN_ENV = "SUPREME_LLM_TOKEN"
_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class LlmClient(Protocol):
    def complete(self, messages: list[dict], record_id: str) -> str: ...


class HttpLlmClient:
    """POSTs ``{model, messages, temperature: 0}`` to an OpenAI-style endpoint.

    Transport errors and retryable status codes are retried with
    exponential backoff; after ``max_retries`` retries a
    :class:`ClientError` is raised.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str = "",
        token: str | None = None,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ClientError(f"no LLM endpoint configured (set {ENDPOINT_ENV})")
        self.model = model
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self):
        self._http.close()

    def complete(self, messages: list[dict], record_id: str = "") -> str:
        body = {"model": self.model, "messages": messages, "temperature": 0}
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self._http.post(self.endpoint, json=body)
            except httpx.HTTPError as exc:
                last = f"transport error: {exc}"
                log.warning("record %s attempt %d: %s", record_id, attempt + 1, last)
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("record %s attempt %d: %s", record_id, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise ClientError(f"record {record_id}: HTTP {resp.status_code}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ClientError(f"record {record_id}: malformed completion payload") from exc
        raise ClientError(f"record {record_id}: giving up after {self.max_retries + 1} attempts ({last})")


class ReplayClient:
    """Serves recorded responses from JSONL lines ``{"record_id", "response"}``.

    Several lines for one record are returned in file order on successive
    calls (the last one repeats), which lets fixtures script a re-ask.
    """

    def __init__(self, path):
        self._responses: dict[str, list[str]] = defaultdict(list)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    self._responses[obj["record_id"]].append(obj["response"])
        self._calls: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def complete(self, messages: list[dict], record_id: str = "") -> str:
        if record_id not in self._responses:
            raise ClientError(f"no replay fixture for record {record_id!r}")
        with self._lock:
            k = self._calls[record_id]
            self._calls[record_id] += 1
        seq = self._responses[record_id]
        return seq[min(k, len(seq) - 1)]
