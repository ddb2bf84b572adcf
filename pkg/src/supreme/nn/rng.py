"""Named, independent random streams derived from one seed.

Each stream is a counter-based Philox generator keyed on (seed, name), so
drawing more numbers from one stream never shifts another.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("init", "dropout", "droppath", "shuffle")


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))


class RngStreams:
    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = stream(self.seed, name)
        return self._streams[name]

    @property
    def dropout(self) -> np.random.Generator:
        return self["dropout"]

    @property
    def droppath(self) -> np.random.Generator:
        return self["droppath"]
