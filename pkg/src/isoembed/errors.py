"""Exception hierarchy.

Every error carries a ``condition`` label naming the mathematical condition it
guards, and the pipeline adds a ``stage`` tag when it re-raises.
"""

from __future__ import annotations


class EmbeddingError(Exception):
    condition: str = ""
    exit_code: int = 2

    def __init__(self, message: str, *, condition: str | None = None, stage: str | None = None, **details):
        super().__init__(message)
        if condition is not None:
            self.condition = condition
        self.stage = stage
        self.details = details

    def __str__(self) -> str:
        msg = super().__str__()
        tags = [s for s in (self.stage and f"stage={self.stage}", self.condition and f"condition: {self.condition}") if s]
        return f"{msg} [{'; '.join(tags)}]" if tags else msg


class DegenerateMetricError(EmbeddingError):
    condition = "B > 0 on the strip"


class OrderMismatchError(EmbeddingError):
    condition = "K = x2^(2 alpha - 1) K0 with K0 != 0 on the base curve"


class PreconditionError(EmbeddingError):
    condition = "kg K0 > 0 on the base curve"


class SingularityError(EmbeddingError):
    condition = "scaled residual finite on the strip"


class EmbeddingGradientError(EmbeddingError):
    condition = "g^ij dz_i dz_j < 1"


class DomainError(EmbeddingError):
    condition = "|x2| <= delta"


class BranchError(EmbeddingError):
    condition = "kg of one sign on the base curve"


class AssemblyError(EmbeddingError):
    condition = "A, B symmetric"


class SolveError(EmbeddingError):
    exit_code = 3
    condition = "normal equations converge"


class CalibrationError(EmbeddingError):
    pass


class ConvergenceError(EmbeddingError):
    exit_code = 3
    condition = "Newton iteration converges"


class TurningNumberError(EmbeddingError):
    condition = "total turning: integral of kg over a period equals 2 pi"


class ClosureError(EmbeddingError):
    condition = "closure: integral of exp(i int_0^x1 kg) over a period vanishes"


class FlatnessError(EmbeddingError):
    condition = "g - dz^2 flat"


class InsufficientRegularityError(EmbeddingError):
    condition = "s* >= 2 alpha + 31"


class UnsupportedLevelError(EmbeddingError):
    condition = "tangential norm level s in {0, 1}"


class ConfigError(EmbeddingError):
    exit_code = 4
    condition = "valid configuration"
