"""Exception types shared across the package.

Everything derives from LatticeClockError so callers can catch broadly;
ValueError mixins keep plain-stdlib expectations working.
"""


class LatticeClockError(Exception):
    pass


class DomainError(LatticeClockError, ValueError):
    """Input outside the mathematical/physical domain of an operation."""


class CapacityError(LatticeClockError, ValueError):
    """Request exceeds a hard size guard (e.g. too many spins for dense ED)."""


class ConvergenceError(LatticeClockError, RuntimeError):
    """A numerical routine failed its internal convergence check."""


class UnreachableTargetError(LatticeClockError, RuntimeError):
    """Requested excitation target exceeds the lineshape peak."""


class BracketError(LatticeClockError, RuntimeError):
    """Root bracketing failed on the searched detuning span."""


class RescaleUndefinedError(LatticeClockError, ZeroDivisionError):
    """Model-shift denominator too small to define a rescale factor."""


class SingularConfigurationError(LatticeClockError, RuntimeError):
    """Perturbative expression evaluated at (or too close to) a resonance."""


class SlopeDegenerateError(LatticeClockError, RuntimeError):
    """Lineshape slope at the lock point too small to divide by."""


class InsufficientDataError(LatticeClockError, ValueError):
    """Not enough points in a record/series for the requested analysis."""


class SignInconsistencyError(LatticeClockError, RuntimeError):
    """Power-law fit window mixes shifts of opposite sign."""
