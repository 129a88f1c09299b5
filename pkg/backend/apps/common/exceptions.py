"""
Error hierarchy shared by all agebif apps.

Configuration problems map to exit code 2, solver failures to exit code 3.
"""
from typing import Any, Dict, Optional


class AgebifError(Exception):
    """Base class for every error raised by the toolkit"""

    exit_code = 1

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error': self.__class__.__name__,
            'message': self.message,
            'diagnostics': self.diagnostics,
        }


class ConfigurationError(AgebifError):
    """Unreadable or invalid run configuration"""

    exit_code = 2


class ShapeMismatchError(AgebifError, ValueError):
    exit_code = 2


class InvalidBirthProfileError(AgebifError, ValueError):
    exit_code = 2


class SolverError(AgebifError):
    """A numerical procedure could not deliver its result"""

    exit_code = 3


class PositivityGuardError(SolverError):
    """Age step too coarse for a negative zeroth-order coefficient"""


class CoefficientFloorError(SolverError):
    """Cross-diffusion multiplier 1 + gamma*v dropped below the floor"""


class StepperDivergenceError(SolverError):
    """Per-step Newton iteration of an implicit stepper failed"""

    def __init__(self, message: str, step: int, residual: float, **extra):
        super().__init__(message, {'step': step, 'residual': residual, **extra})
        self.step = step
        self.residual = residual


class SpectralConvergenceError(SolverError):
    """Power iteration exhausted its iteration budget"""


class NoPositiveSolution(SolverError):
    """Semi-trivial problem has only the trivial solution for this parameter"""


class ShootingDivergenceError(SolverError):
    """Newton shooting on the initial-age trace failed"""


class BranchExtensionError(SolverError):
    """Sign-flipped prey branch could not be followed down to the requested eta"""

    def __init__(self, message: str, smallest_reached: Optional[float], **extra):
        super().__init__(message, {'smallest_reached': smallest_reached, **extra})
        self.smallest_reached = smallest_reached


class NoBifurcation(SolverError):
    """Defining relation of a bifurcation point has no bracketed root"""


class ContinuationFailure(SolverError):
    """Launch off a bifurcation point failed after all amplitude halvings"""
