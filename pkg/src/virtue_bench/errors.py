"""Exception types shared across virtue_bench."""

from __future__ import annotations


class VirtueBenchError(Exception):
    pass


class WidthMismatch(VirtueBenchError, ValueError):
    pass


class UnknownSymbol(VirtueBenchError, KeyError):
    pass


class KraftViolation(VirtueBenchError, ValueError):
    pass


class DecodeError(VirtueBenchError, ValueError):
    """Raised when a symbol stream does not decode to a valid explanation.

    Edit-neighborhood searches treat this as an infeasible neighbor.
    """


class FixedPointOverflow(VirtueBenchError, ArithmeticError):
    pass


class DidNotConverge(VirtueBenchError):
    def __init__(self, result):
        super().__init__(
            f"training stopped at step cap with accuracy {result.accuracy:.4f}"
        )
        self.result = result


class NeighborhoodTooLarge(VirtueBenchError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"edit neighborhood has {size} candidates, cap is {cap}")
        self.size = size
        self.cap = cap


class MissingThreshold(VirtueBenchError, KeyError):
    pass


class ConfigError(VirtueBenchError, ValueError):
    pass


class PipelineError(VirtueBenchError):
    """A run stage failed; ``stage`` names it for the structured report."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

    def report(self) -> dict:
        return {"error": "pipeline", "stage": self.stage, "type": type(self.cause).__name__, "message": str(self.cause)}
