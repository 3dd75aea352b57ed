"""
Error types raised by the cavity-field simulator.

Plain precondition violations on arguments raise ``ValueError``; the classes
below signal numerical or structural failures that callers may want to catch
selectively (the optimizer treats ``EvaluationError`` as a rejected step, the
CLI maps ``CavityFieldError`` to exit status 2).
"""

from typing import Any, List, Optional, Sequence


class CavityFieldError(Exception):
    """Base class for every simulator failure."""


class DimensionMismatchError(CavityFieldError, ValueError):
    """Operators that must share a Hilbert-space dimension do not."""


class SteadyStateAmbiguityError(CavityFieldError):
    """The generator has (numerically) more than one stationary state."""

    def __init__(self, message: str, candidates: Sequence[Any], singular_values: Sequence[float]):
        super().__init__(message)
        self.candidates = list(candidates)
        self.singular_values = list(singular_values)


class SolverError(CavityFieldError):
    """A linear solve produced a result that fails its own checks."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class IntegrationError(CavityFieldError):
    """Adaptive time integration stopped before reaching the final time."""

    def __init__(self, message: str, t_reached: Optional[float] = None, nfev: Optional[int] = None):
        super().__init__(message)
        self.t_reached = t_reached
        self.nfev = nfev


class DegenerateSpectrumError(CavityFieldError):
    """Every eigenvalue of the generator is zero."""


class StructureError(CavityFieldError, ValueError):
    """A system does not have the channel structure an operation needs."""


class TruncationError(CavityFieldError):
    """The Fock truncation did not converge within the allowed range."""

    def __init__(self, message: str, sequence: Sequence[float]):
        super().__init__(message)
        self.sequence = list(sequence)


class NumericalHealthError(CavityFieldError):
    """A quantity that must be non-negative came out negative beyond round-off."""


class QuadratureError(CavityFieldError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, tail_estimate: float):
        super().__init__(message)
        self.tail_estimate = tail_estimate


class EvaluationError(CavityFieldError):
    """The energy functional could not be evaluated at a parameter point."""

    def __init__(self, message: str, lam: Any):
        super().__init__(message)
        self.lam = lam


class GradientError(CavityFieldError):
    """A finite-difference evaluation failed."""

    def __init__(self, message: str, component: int):
        super().__init__(message)
        self.component = component


class ConfigError(CavityFieldError, ValueError):
    """A run configuration violates one or more invariants."""

    def __init__(self, violations: List[str]):
        super().__init__("Invalid configuration:\n  - " + "\n  - ".join(violations))
        self.violations = list(violations)
