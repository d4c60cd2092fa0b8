"""Centralized error handling for the quantum-reflection trap simulator"""
import logging
import sys
import traceback
from functools import wraps

logger = logging.getLogger("qrtrap.errors")

# ===== EXIT CODES =====

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4

# ===== ERROR CLASSES =====


class TrapError(Exception):
    """Base error class for qrtrap"""
    def __init__(self, message, code, exit_code=EXIT_FAILURE):
        self.message = message
        self.code = code
        self.exit_code = exit_code
        super().__init__(self.message)


class InvalidParameterError(TrapError):
    """Physical or numerical parameter out of range"""
    def __init__(self, message):
        super().__init__(message, 'INVALID_PARAMETER', EXIT_USAGE)


class ResolutionError(TrapError):
    """Grid too coarse for the requested state"""
    def __init__(self, message):
        super().__init__(message, 'RESOLUTION_ERROR', EXIT_USAGE)


class ConfigError(TrapError):
    """Config file or plan does not match the schema"""
    def __init__(self, message):
        super().__init__(message, 'CONFIG_ERROR', EXIT_USAGE)


class SpeciesLookupError(TrapError):
    """Species name not found in the data file"""
    def __init__(self, name, available):
        self.available = list(available)
        msg = f"Unknown species '{name}'. Available: {', '.join(self.available)}"
        super().__init__(msg, 'UNKNOWN_SPECIES', EXIT_USAGE)


class SingularSystemError(TrapError):
    """Zero pivot in a tridiagonal solve"""
    def __init__(self, message="Tridiagonal system is singular"):
        super().__init__(message, 'SINGULAR_SYSTEM', EXIT_NUMERICAL)


class CollapseSuspectedError(TrapError):
    """Nonlinear iteration did not converge; carries the last iterate"""
    def __init__(self, state, iterations, residual):
        self.state = state
        self.iterations = iterations
        self.residual = residual
        msg = (f"Fixed-point iteration failed at tau={state.tau:.6g} "
               f"after {iterations} passes (relative change {residual:.3e})")
        super().__init__(msg, 'COLLAPSE_SUSPECTED', EXIT_OK)


class NumericalBlowupError(TrapError):
    """NaN or Inf in the amplitudes"""
    def __init__(self, tau):
        self.tau = tau
        super().__init__(f"Non-finite amplitudes at tau={tau:.6g}", 'NUMERICAL_BLOWUP', EXIT_NUMERICAL)


class QuadratureAccuracyError(TrapError):
    """Adaptive quadrature did not reach the requested tolerance"""
    def __init__(self, message):
        super().__init__(message, 'QUADRATURE_ACCURACY', EXIT_NUMERICAL)


class DegenerateDerivativeError(TrapError):
    """Interaction derivative too small to solve for gamma"""
    def __init__(self, alpha):
        super().__init__(f"Degenerate interaction derivative at alpha={alpha:.6g}",
                         'DEGENERATE_DERIVATIVE', EXIT_NUMERICAL)


class BracketError(TrapError):
    """Bisection bracket does not enclose the collapse threshold"""
    def __init__(self, message):
        super().__init__(message, 'BRACKET_ERROR', EXIT_VALIDATION)


class PlanValidationError(TrapError):
    """Sweep plan is empty or inconsistent"""
    def __init__(self, message):
        super().__init__(message, 'PLAN_INVALID', EXIT_VALIDATION)

# ===== EXIT CODE TRANSLATOR =====


def error_exit_code(error, context=None):
    """Log an error and map it to a process exit code"""
    if isinstance(error, TrapError):
        log_msg = f"[{context or 'qrtrap'}] {error.code}: {error.message}"
        if error.exit_code >= EXIT_NUMERICAL:
            logger.error(log_msg)
        else:
            logger.warning(log_msg)
        return error.exit_code

    logger.error(f"[{context or 'qrtrap'}] Unhandled error: {error}")
    logger.error(traceback.format_exc())
    return EXIT_FAILURE

# ===== DECORATOR FOR COMMANDS =====


def handle_errors(f):
    """Wrap a CLI command so errors become exit codes"""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except TrapError as e:
            print(f"error: {e.message}", file=sys.stderr)
            return error_exit_code(e, f.__name__)
        except Exception as e:
            print(f"error: {e}", file=sys.stderr)
            return error_exit_code(e, f.__name__)
    return decorated_function