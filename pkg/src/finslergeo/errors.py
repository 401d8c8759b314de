"""Exception hierarchy shared by all finslergeo modules.

Every error carries a stable ``code`` string so CLI consumers and tests can
match on the failure kind without parsing messages.
"""

from __future__ import annotations


class FinslerError(Exception):
    """Base class for all library errors."""

    code = "finsler-error"


class UnsupportedOrderError(FinslerError):
    code = "unsupported-order"


class DomainError(FinslerError):
    code = "domain-error"


class SingularEvaluationError(FinslerError):
    """Evaluation at a point where the quantity is not differentiable
    (e.g. the fiber origin y = 0, or sqrt/division through zero)."""

    code = "singular-evaluation"


class InvalidStepError(FinslerError):
    code = "invalid-step"


class ExpressionParseError(FinslerError):
    """Parse failure with the byte offset of the offending token."""

    code = "parse-error"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class ConstructionError(FinslerError):
    code = "construction-error"


class MetricDegeneracyError(FinslerError):
    """Fundamental tensor failed the positive-definiteness floor."""

    code = "metric-degeneracy"

    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DegenerateFlagError(FinslerError):
    code = "degenerate-flag"


class UnsupportedValenceError(FinslerError):
    code = "unsupported-valence"


class EmptyPathError(FinslerError):
    code = "empty-path"


class CriticalPointError(FinslerError):
    """A gradient or warp evaluation hit a critical point (d-rho = 0 or
    rho'(t) = 0)."""

    code = "critical-point-singularity"


class ConvergenceFailureError(FinslerError):
    code = "convergence-failure"

    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


class EmptyLevelError(FinslerError):
    code = "empty-level"


class InvalidProfileError(FinslerError):
    code = "invalid-profile"
