"""
Calibration of the exchange amplitude against a target pair fraction and
eV/K conversions for comparisons with measured scales.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from backend.model_params import ModelParams, TorusPoint, eval_upsilon_hat
from backend.spectral_solver import PairState, SpectralSolver
from backend.torus_grid import TorusGrid
from config.constants import CALIBRATION_DEFAULTS, PHYSICAL_CONSTANTS
from utils.validators import (
    CalibrationUnreachableError, NumericalFailure, ParameterValidationError,
)

KB_EV_PER_K = PHYSICAL_CONSTANTS['kB_eV_per_K']


def ev_to_kelvin(x: float) -> float:
    return x / KB_EV_PER_K


def kelvin_to_ev(x: float) -> float:
    return x * KB_EV_PER_K


@dataclass(frozen=True)
class CalibrationResult:
    target_rho: float
    fitted_upsilon_peak: float
    iterations: int
    residual: float
    K: TorusPoint
    achieved_rho: float
    scan: Tuple[Tuple[float, float], ...] = ()

    def to_dict(self) -> Dict:
        return {
            'target_rho': self.target_rho,
            'fitted_upsilon_peak_eV': self.fitted_upsilon_peak,
            'iterations': self.iterations,
            'residual': self.residual,
            'K': list(self.K),
            'achieved_rho': self.achieved_rho,
            'scan': [list(point) for point in self.scan],
        }


@dataclass(frozen=True)
class BindingEnergyReport:
    """The three readings of a quoted binding energy, in kelvin"""

    magnitude_K: float
    below_continuum_K: float
    below_boson_K: float
    target_K: float
    matches: Tuple[str, ...]

    def to_dict(self) -> Dict:
        return {
            '|E|_K': self.magnitude_K,
            'z-E_K': self.below_continuum_K,
            'b-E_K': self.below_boson_K,
            'target_K': self.target_K,
            'matches': list(self.matches),
            'note': 'the quoted binding energy does not fix which reading applies; all three are reported',
        }


def binding_energy_report(state: PairState, target_K: float = CALIBRATION_DEFAULTS['target_binding_K'],
                          tolerance: float = CALIBRATION_DEFAULTS['binding_tolerance']) -> BindingEnergyReport:
    readings = {
        '|E|': ev_to_kelvin(abs(state.E)),
        'z-E': ev_to_kelvin(state.z_k - state.E),
        'b-E': ev_to_kelvin(state.b_k - state.E),
    }
    matches = tuple(name for name, value in readings.items() if abs(value - target_K) <= tolerance * target_K)
    return BindingEnergyReport(
        magnitude_K=readings['|E|'], below_continuum_K=readings['z-E'], below_boson_K=readings['b-E'],
        target_K=target_K, matches=matches,
    )


class UpsilonCalibrator:
    """Fits the exchange amplitude at K so that the pair fraction hits a target"""

    def __init__(self, params: ModelParams, grid: TorusGrid):
        self.logger = logging.getLogger(__name__)
        self.params = params
        self.grid = grid

    def pair_fraction(self, peak: float, K: TorusPoint) -> float:
        """rho at K with upsilon_hat(K) = peak (shape unchanged)"""
        params = self.params.with_upsilon_peak(peak, K)
        return SpectralSolver(params, self.grid).solve_E(K).pair_fraction_rho

    def calibrate_upsilon(self, K: TorusPoint, target_rho: float,
                          tol: float = CALIBRATION_DEFAULTS['tolerance'],
                          bounds: Optional[Tuple[float, float]] = None) -> CalibrationResult:
        """
        Monotone root-find of rho(peak) = target_rho

        Args:
            K: Grid point where upsilon_hat is pinned and rho is evaluated
            target_rho: Target pair fraction in (0, 1)
            tol: Required |rho - target_rho|
            bounds: Peak range in units of epsilon (default [1e-4, 10])

        Returns:
            CalibrationResult
        """
        # Check target and pinning point
        if not 0.0 < target_rho < 1.0:
            raise ParameterValidationError(f"target_rho must lie in (0, 1), got {target_rho}")
        if self.grid.index_of(K) is None:
            raise ParameterValidationError(f"K = {K} is not a grid point of N = {self.grid.N}")
        if float(eval_upsilon_hat(self.params, K)) == 0.0:
            raise ParameterValidationError(f"upsilon_hat vanishes at K = {K}")

        # Scan rho on a geometric grid of peaks
        lo, hi = bounds or CALIBRATION_DEFAULTS['peak_bounds_eps']
        scale = self.params.energy_scale
        peaks = np.geomspace(lo * scale, hi * scale, CALIBRATION_DEFAULTS['scan_points'])
        rhos = np.array([self.pair_fraction(peak, K) for peak in peaks])
        scan = tuple((float(p), float(r)) for p, r in zip(peaks, rhos))

        if not np.all(np.diff(rhos) < 0):
            self.logger.error(f"Pair fraction not strictly decreasing on the scan at K={K}")
            raise NumericalFailure("rho(peak) is not strictly decreasing on the scan range")
        if not rhos[-1] <= target_rho <= rhos[0]:
            raise CalibrationUnreachableError(
                f"target rho = {target_rho} outside [{rhos[-1]:.6g}, {rhos[0]:.6g}] for peaks in [{lo}, {hi}] eps"
            )

        # Refine inside the scan interval that contains the target
        index = int(np.searchsorted(-rhos, -target_rho))
        index = min(max(index, 1), len(peaks) - 1)
        log_lo, log_hi = math.log(peaks[index - 1]), math.log(peaks[index])

        objective = lambda log_peak: self.pair_fraction(math.exp(log_peak), K) - target_rho
        log_peak, result = brentq(objective, log_lo, log_hi, xtol=1e-14, full_output=True)
        peak = math.exp(log_peak)
        achieved = self.pair_fraction(peak, K)
        residual = abs(achieved - target_rho)
        if residual > tol:
            raise NumericalFailure(f"calibration residual {residual:.3e} exceeds tol {tol:.1e}")
        self.logger.info(f"calibrate K={K} target_rho={target_rho} peak={peak!r} iterations={result.iterations}")
        return CalibrationResult(
            target_rho=target_rho, fitted_upsilon_peak=peak, iterations=result.iterations,
            residual=residual, K=(float(K[0]), float(K[1])), achieved_rho=achieved, scan=scan,
        )
