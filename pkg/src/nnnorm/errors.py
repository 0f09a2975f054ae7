"""Exception types shared across the package.

File-format errors carry the byte offset of the violation so a failing
load can be diagnosed with a hex dump alone.
"""
from __future__ import annotations


class NnnormError(Exception):
    """Base class for all data and format errors raised by this package."""


class BadMagic(NnnormError):
    """File header field is not what the format requires."""

    def __init__(self, offset: int, detail: str):
        self.offset = offset
        super().__init__(f"bad header field at byte offset {offset}: {detail}")


class TruncatedFile(NnnormError):
    """File ends before the declared content does."""

    def __init__(self, offset: int, detail: str):
        self.offset = offset
        super().__init__(f"file truncated at byte offset {offset}: {detail}")


class NonFiniteValue(NnnormError):
    """A stored or supplied float is NaN or infinite."""

    def __init__(self, offset: int, detail: str = "NaN or Inf value"):
        self.offset = offset
        super().__init__(f"{detail} at byte offset {offset}")


class IoError(NnnormError):
    """Underlying OS write or read failure."""


class RaggedRows(NnnormError):
    def __init__(self, line: int, expected: int, got: int):
        self.line = line
        self.expected = expected
        self.got = got
        super().__init__(
            f"line {line}: expected {expected} fields, got {got}"
        )


class ZeroVectorOnNormalize(NnnormError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has zero norm and cannot be normalized")


class ParseError(NnnormError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class KTooLarge(NnnormError):
    pass


class DimMismatch(NnnormError):
    pass


class EmptyReferenceSet(NnnormError):
    pass


class LengthMismatch(NnnormError):
    pass


class MissingReference(NnnormError):
    def __init__(self, method: str, which: str):
        self.method = method
        super().__init__(f"method {method!r} requires {which}")


class IndexOutOfRange(NnnormError):
    pass


class DegenerateDistribution(NnnormError):
    pass


class MissingTruth(NnnormError):
    def __init__(self, query: int):
        self.query = query
        super().__init__(f"no ground-truth entry for query {query}")


class EmptyInput(NnnormError):
    pass


class InsufficientData(NnnormError):
    pass


class UnlabeledCandidate(NnnormError):
    def __init__(self, index: int, detail: str = "no attribute label"):
        self.index = index
        super().__init__(f"candidate {index}: {detail}")
