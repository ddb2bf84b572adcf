"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SupremeError(Exception):
    """Base class for all package errors."""


class FormatError(SupremeError, ValueError):
    """A binary file has a bad magic, version, or inconsistent header."""


class TruncatedError(FormatError):
    """A binary payload ended before the header said it would."""


class IrreparableLeadError(SupremeError, ValueError):
    """A lead has too few finite samples for neighbour-mean repair."""


class DegenerateSplitError(SupremeError, ValueError):
    """A split with a positive ratio came out empty."""


class SchemaError(SupremeError, ValueError):
    """An LLM response does not match the extraction schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ExtractionError(SupremeError):
    """A report could not be turned into a valid extraction."""


class ClientError(SupremeError):
    """The LLM transport failed after all retries."""


class NormalizationError(SupremeError, ValueError):
    """A vector that must be unit-norm is not."""


class EmptyVocabularyError(SupremeError, ValueError):
    pass


class AlignmentError(SupremeError, ValueError):
    """Embedding rows and their term list disagree in length."""


class ShapeError(SupremeError, ValueError):
    pass


class ConfigError(SupremeError, ValueError):
    """Invalid configuration; ``key`` names the offending path when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.message = message
        self.key = key


class CheckpointError(SupremeError):
    pass


class DegenerateClassError(SupremeError, ValueError):
    """AUROC is undefined because only one label value is present."""


class MissingTermError(SupremeError, KeyError):
    """Terms absent from an embedding store; ``terms`` lists them."""

    def __init__(self, terms):
        self.terms = list(terms)
        super().__init__(f"no embedding for {len(self.terms)} term(s): {self.terms[:10]}")
