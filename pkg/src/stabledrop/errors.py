"""Exception types shared across the package."""


class StableDropError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(StableDropError):
    """6D rotation input is numerically unusable (zero or parallel columns)."""


class InvalidDimensions(StableDropError):
    """Body or scene dimensions are non-positive or otherwise unbuildable."""


class PenetratingScene(StableDropError):
    """Bodies overlap beyond the contact tolerance where none may."""


class UnstableBaseScene(StableDropError):
    """A built scene is not in static equilibrium before any placement."""


class PointOffSurface(StableDropError):
    """Query point does not lie on any body surface."""


class LpNumericalFailure(StableDropError):
    """The simplex solver could not certify a reliable answer."""


class Infeasible(StableDropError):
    """LP has no feasible point."""


class Unbounded(StableDropError):
    """LP objective is unbounded above."""


class Exhausted(StableDropError):
    """Proposal budget ran out before a valid placement was found."""


class ParseError(StableDropError):
    """Scene file could not be parsed; carries line/column context."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class DataFormatError(StableDropError):
    """Dataset record or header violates the JSONL contract."""


class NonFiniteLoss(StableDropError):
    """Training loss became NaN or infinite."""


class VersionMismatch(StableDropError):
    """Checkpoint magic or format version is not the supported one."""


class CorruptPayload(StableDropError):
    """Checkpoint payload is truncated or inconsistent with its header."""


class MissingCheckpoint(StableDropError):
    """A benchmark config references a checkpoint file that does not exist."""
