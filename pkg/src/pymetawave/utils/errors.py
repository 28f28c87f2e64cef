"""
errors.py

Module Overview
---------------
Error codes, exception classes and warning categories shared by every
numerical module of pymetawave, plus terminal colour codes used by the
command-line layer.

Every exception raised on purpose by the toolkit derives from
``MetawaveError`` and carries an ``ErrorCode``. The concrete classes also
derive from the closest builtin exception, so ``except ValueError`` keeps
working for callers that do not know about the toolkit.

Examples
--------
>>> ErrorCode.get_message(7)
'Error: Lattice incompatible with the travelling wave.'
"""

from enum import Enum


class bcolors:
    """
    Terminal color codes for styling console output.

    Prepend a code to the string and append ``bcolors.ENDC`` to reset.
    """

    HEADER = "\033[95m"
    OKBLUE = "\033[94m"
    OKCYAN = "\033[96m"
    OKGREEN = "\033[92m"
    WARNING = "\033[93m"
    FAIL = "\033[91m"
    ENDC = "\033[0m"
    BOLD = "\033[1m"
    UNDERLINE = "\033[4m"


class ErrorCode(Enum):
    """
    Enumeration for error codes with associated messages.

    Attributes
    ----------
    SUCCESS : tuple
        Successful run.
    DOMAIN_ERROR : tuple
        Argument outside the mathematical domain (elliptic modulus, beta ...).
    DEGENERATE_LEVEL : tuple
        Energy level at the centre or at the saddle.
    RESOLUTION_ERROR : tuple
        Sampling or step count too coarse for the requested quantity.
    CONVERGENCE_FAILURE : tuple
        Newton iteration did not reach the tolerance.
    SINGULAR_JACOBIAN : tuple
        Newton matrix numerically singular (typically near a fold).
    RESONANCE : tuple
        Linear operator singular at the drive mode.
    INCOMPATIBLE_LATTICE : tuple
        Drive wavenumber incompatible with periodic boundary conditions.
    QUADRATURE_FAILURE : tuple
        Adaptive quadrature did not reach the tolerance.
    SINGULARITY : tuple
        Closed form evaluated at a pole.
    CONFIG_ERROR : tuple
        Invalid configuration file or flag.
    STEP_UNDERFLOW : tuple
        Continuation step fell below the minimum.
    UNKNOWN_ERROR : tuple
        Anything else.

    Methods
    -------
    get_message(code)
        Retrieves the descriptive message corresponding to a given error code.
    """

    SUCCESS = (0, "Success")
    DOMAIN_ERROR = (1, "Error: Argument outside the admissible domain.")
    DEGENERATE_LEVEL = (2, "Error: Degenerate energy level.")
    RESOLUTION_ERROR = (3, "Error: Insufficient numerical resolution.")
    CONVERGENCE_FAILURE = (4, "Error: Newton iteration did not converge.")
    SINGULAR_JACOBIAN = (5, "Error: Singular Jacobian.")
    RESONANCE = (6, "Error: Resonant linear response.")
    INCOMPATIBLE_LATTICE = (7, "Error: Lattice incompatible with the travelling wave.")
    QUADRATURE_FAILURE = (8, "Error: Quadrature did not converge.")
    SINGULARITY = (9, "Error: Closed form evaluated at a singularity.")
    CONFIG_ERROR = (10, "Error: Invalid configuration.")
    STEP_UNDERFLOW = (11, "Warning: Continuation step underflow.")
    UNKNOWN_ERROR = (99, "Unknown error.")

    def __init__(self, code, message):
        self.code = code
        self.message = message

    @classmethod
    def get_message(cls, code):
        for error in cls:
            if error.code == code:
                return error.message
        return "Error: Invalid error code."


class MetawaveError(Exception):
    """Base class of all toolkit errors. ``error_code`` is an ErrorCode member."""

    error_code = ErrorCode.UNKNOWN_ERROR

    def __init__(self, message=None):
        if message is None:
            message = self.error_code.message
        super().__init__(message)


class EllipticDomainError(MetawaveError, ValueError):
    error_code = ErrorCode.DOMAIN_ERROR


class DegenerateLevelError(MetawaveError, ValueError):
    error_code = ErrorCode.DEGENERATE_LEVEL


class ResolutionError(MetawaveError, ValueError):
    error_code = ErrorCode.RESOLUTION_ERROR


class ConvergenceError(MetawaveError, RuntimeError):
    error_code = ErrorCode.CONVERGENCE_FAILURE


class SingularJacobianError(ConvergenceError):
    error_code = ErrorCode.SINGULAR_JACOBIAN


class ResonanceError(MetawaveError, ZeroDivisionError):
    error_code = ErrorCode.RESONANCE


class IncompatibleLatticeError(MetawaveError, ValueError):
    error_code = ErrorCode.INCOMPATIBLE_LATTICE


class QuadratureError(MetawaveError, RuntimeError):
    error_code = ErrorCode.QUADRATURE_FAILURE


class SingularityError(MetawaveError, ZeroDivisionError):
    error_code = ErrorCode.SINGULARITY


class ConfigError(MetawaveError, ValueError):
    error_code = ErrorCode.CONFIG_ERROR


class StepUnderflowError(MetawaveError, RuntimeError):
    error_code = ErrorCode.STEP_UNDERFLOW


class NearDegenerateWarning(RuntimeWarning):
    """Elliptic modulus so close to 1 that K(k) is dominated by its log singularity."""


class NearHomoclinicWarning(RuntimeWarning):
    """Periodic orbit so close to the separatrix that its profile loses accuracy."""


class SmallOrbitWarning(RuntimeWarning):
    """Orbit amplitude so small that a ratio of vanishing quantities is reported."""
