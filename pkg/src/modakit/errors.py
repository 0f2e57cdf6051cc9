"""Exception hierarchy shared by all modakit modules."""
from __future__ import annotations


class ModakitError(Exception):
    """Base class for every error raised deliberately by modakit."""


class FormatError(ModakitError, ValueError):
    """A file does not follow the expected binary or text layout."""


class UnsupportedError(ModakitError, ValueError):
    """A valid file uses a feature modakit does not handle (datatype, 4D data)."""


class DataError(ModakitError, ValueError):
    """Voxel or feature values violate a type invariant (NaN, non-integer labels)."""


class ShapeError(ModakitError, ValueError):
    """Array dimensions or channel counts disagree."""


class ConfigError(ModakitError, ValueError):
    """A configuration value is out of its allowed range."""


class ModeError(ModakitError, ValueError):
    """An operation mode is not allowed for the given input kind."""


class ManifestError(ModakitError, ValueError):
    """A dataset manifest is malformed or references missing files."""


class UndefinedMetricError(ModakitError, ValueError):
    """A metric has no value for the given inputs (e.g. ASSD with an empty surface).

    ``side`` names which input was empty: ``"pred"``, ``"gt"`` or ``"both"``.
    """

    def __init__(self, message: str, side: str):
        super().__init__(message)
        self.side = side


class InsufficientSamplesError(ModakitError, ValueError):
    """Too few samples to estimate a covariance."""


class InvalidCovarianceError(ModakitError, ValueError):
    """A covariance matrix is not symmetric positive semi-definite."""


class ParseError(ModakitError, ValueError):
    """A feature file could not be parsed.

    ``line`` (1-based, text files) or ``offset`` (bytes, raw files) locates the
    problem when known.
    """

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset
