import math
import numbers
import logging
from typing import Optional, Tuple

from config.constants import ERROR_MESSAGES, GRID_DEFAULTS


class PairModelError(Exception):
    """Base error; `code` is the stable error name reported by the CLI"""

    code = 'PAIR_MODEL_ERROR'

    def __init__(self, detail: Optional[str] = None, code: Optional[str] = None):
        if code is not None:
            self.code = code
        base = ERROR_MESSAGES.get(self.code, self.code)
        self.detail = detail
        message = f"{self.code}: {base}" if not detail else f"{self.code}: {base} ({detail})"
        super().__init__(message)


class ParameterValidationError(PairModelError):
    code = 'VALIDATION_FAILED'


class ConfigError(ParameterValidationError):
    code = 'CONFIG_INVALID'


class DimensionMismatchError(ParameterValidationError):
    code = 'DIMENSION_MISMATCH'


class WindowTooLargeError(ParameterValidationError):
    code = 'WINDOW_TOO_LARGE'


class WindowTooSmallError(ParameterValidationError):
    code = 'WINDOW_TOO_SMALL'


class HardCoreUnsupportedError(ParameterValidationError):
    code = 'HARD_CORE_UNSUPPORTED'


class ZeroVectorError(ParameterValidationError):
    code = 'ZERO_VECTOR'


class StepCountError(ParameterValidationError):
    code = 'STEP_COUNT'


class DysonOrderError(ParameterValidationError):
    code = 'ORDER_INVALID'


class SingularFiberError(ParameterValidationError):
    code = 'UNDEFINED_AT_SINGULAR'


class DivisionAtBError(ParameterValidationError):
    code = 'DIVISION_AT_B'


class NumericalFailure(PairModelError):
    code = 'NUMERICAL_FAILURE'


class SpectrumProximityError(NumericalFailure):
    code = 'SPECTRUM_PROXIMITY'


class NoRootError(NumericalFailure):
    code = 'NO_ROOT'


class ConvergenceError(NumericalFailure):
    code = 'NON_CONVERGENCE'


class SingularHessianError(NumericalFailure):
    code = 'SINGULAR_HESSIAN'


class GapConditionError(NumericalFailure):
    code = 'GAP_CONDITION_FAILED'


class CalibrationUnreachableError(NumericalFailure):
    code = 'TARGET_UNREACHABLE'


class DegeneratePairShapeWarning(UserWarning):
    """r_p = 0: the hard-core gap is not uniform in k"""


class ParameterValidator:
    """Validator for physical parameters"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def validate_nonnegative(self, name: str, value: float) -> Tuple[bool, str]:
        """Validate a real parameter that must be finite and >= 0"""

        try:
            value = float(value)
        except (TypeError, ValueError):
            return False, f"{name} must be a real number, got {value!r}"
        if not math.isfinite(value) or value < 0:
            return False, f"{name} must be finite and >= 0, got {value}"
        return True, f"{name} is valid"

    def validate_repulsion(self, U: float) -> Tuple[bool, str]:
        """Validate the on-site repulsion (finite and >= 0, or hard core)"""

        if U == math.inf:
            return True, "U is hard core"
        return self.validate_nonnegative('U', U)

    def validate_h_b(self, h_b: float, bound_pair: bool = True) -> Tuple[bool, str]:
        """
        Validate the boson/fermion hopping ratio

        Args:
            h_b: Hopping ratio
            bound_pair: Whether the caller needs b(k) <= z(k)

        Returns:
            Tuple of (is_valid: bool, message: str)
        """

        ok, message = self.validate_nonnegative('h_b', h_b)
        if not ok:
            return ok, message
        if bound_pair and h_b > 0.5:
            return False, f"{ERROR_MESSAGES['h_b_range']}, got h_b = {h_b}"
        return True, "h_b is valid"

    def require(self, result: Tuple[bool, str], error_cls=ParameterValidationError) -> None:
        """Raise `error_cls` when a validation tuple reports failure"""

        ok, message = result
        if not ok:
            self.logger.error(f"Validation failed: {message}")
            raise error_cls(message)


class GridValidator:
    """Validator for grid sizes, windows and grid functions"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def validate_grid_size(self, N: int) -> Tuple[bool, str]:
        """Validate the number of points per axis"""

        if not isinstance(N, numbers.Integral) or isinstance(N, bool):
            return False, f"N must be an integer, got {N!r}"
        if N < GRID_DEFAULTS['min_N'] or N % 2:
            return False, f"N must be even and >= {GRID_DEFAULTS['min_N']}, got {N}"
        return True, "Grid size is valid"

    def validate_window(self, N: int, window: int) -> Tuple[bool, str]:
        """Validate a lattice window half-width against the grid"""

        if window < 0:
            return False, f"window must be >= 0, got {window}"
        if window > N // 2:
            return False, f"window {window} exceeds N/2 = {N // 2}"
        return True, "Window is valid"

    def validate_length(self, N: int, length: int) -> Tuple[bool, str]:
        """Validate a grid function length"""

        if length != N * N:
            return False, f"expected {N * N} values, got {length}"
        return True, "Length is valid"
