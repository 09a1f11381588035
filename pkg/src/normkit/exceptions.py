"""Exception hierarchy shared across the toolkit.

``DataError`` and its subclasses mark problems with input data (malformed
files, inconsistent references); the CLI maps them to exit code 2. Everything
else is a programming or numerical error and propagates normally.
"""

from __future__ import annotations


class NormkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(NormkitError):
    """Input data violates a documented contract."""


class LoadError(DataError):
    """A file failed to parse. Carries the offending path and line number."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class MissingGoldError(DataError):
    """A prediction refers to a mention with no gold label."""

    def __init__(self, mention_id: str):
        super().__init__(f"no gold label for mention {mention_id!r}")
        self.mention_id = mention_id


class ZeroVectorError(NormkitError, ValueError):
    """Cosine similarity is undefined for a zero vector."""


class TrainingDivergedError(NormkitError):
    """Training produced a non-finite loss or weight."""
