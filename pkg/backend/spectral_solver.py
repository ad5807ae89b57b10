"""
Fiber ground states from the scalar characteristic equation

    Phi(U, k, x) = upsilon_hat(k)^2 T(U, k, x) + x - b(k) = 0,

whose unique root below min(b(k), z(k)) is the dressed-pair energy E(U, k).
"""

import math
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from backend.fiber_operator import FiberOperator, continuum_bottom
from backend.model_params import ModelParams, TorusPoint, validate_nondegeneracy
from backend.torus_grid import GridFunction, TorusGrid, inner_product
from config.constants import ERROR_MESSAGES, HARD_CORE, SOLVER_TOLERANCES
from utils.helpers import format_repulsion
from utils.validators import (
    ConvergenceError, DegeneratePairShapeWarning, DivisionAtBError, NoRootError,
    NumericalFailure, ParameterValidationError,
)


@dataclass(frozen=True)
class PairState:
    """Fiber eigenpair (E, (psi_hat, -1)) with derived scalars"""

    k: TorusPoint
    U: float
    E: float
    psi_hat: GridFunction
    gap: float
    pair_fraction_rho: float
    z_k: float
    b_k: float
    upsilon_hat_k: float
    iterations: int = 0
    phi_residual: float = 0.0
    bosonic_amp: float = -1.0

    @property
    def N(self) -> int:
        return int(round(math.sqrt(self.psi_hat.size)))

    def fermionic_norm_sq(self) -> float:
        return float(np.vdot(self.psi_hat, self.psi_hat).real) / self.psi_hat.size

    def eigenvector(self) -> np.ndarray:
        """(psi_hat / N, -1) in the orthonormal coordinates of the dense fiber matrix"""
        return np.concatenate([self.psi_hat / self.N, [complex(self.bosonic_amp)]])

    def normalized(self) -> np.ndarray:
        vector = self.eigenvector()
        return vector / np.linalg.norm(vector)

    def to_dict(self) -> Dict:
        return {
            'k': list(self.k),
            'U_eV': format_repulsion(self.U),
            'E_eV': self.E,
            'gap_eV': self.gap,
            'rho': self.pair_fraction_rho,
            'z_eV': self.z_k,
            'b_eV': self.b_k,
            'upsilon_hat_eV': self.upsilon_hat_k,
            'bosonic_amp': self.bosonic_amp,
            'psi_norm_sq': self.fermionic_norm_sq(),
            'N': self.N,
            'iterations': self.iterations,
            'phi_residual': self.phi_residual,
        }


@dataclass(frozen=True)
class BirmanSchwingerReport:
    lam: float
    value: float
    deviation: float
    certified: bool


def essential_spectrum(params: ModelParams, k: TorusPoint) -> Tuple[float, float]:
    """[4 eps - 2 eps cos(k/2), 4 eps + 2 eps cos(k/2)]"""
    z = continuum_bottom(params, k)
    return z, 8.0 * params.epsilon - z


class SpectralSolver:
    """Root finder for the characteristic equation on a fixed grid"""

    def __init__(self, params: ModelParams, grid: TorusGrid):
        self.logger = logging.getLogger(__name__)
        validate_nondegeneracy(params)
        self.params = params
        self.grid = grid

    def _params_for(self, U: Optional[float]) -> ModelParams:
        return self.params if U is None else self.params.with_U(U)

    def fiber_operator(self, k: TorusPoint, U: Optional[float] = None) -> FiberOperator:
        return FiberOperator.assemble(self._params_for(U), self.grid, k)

    def _phi_and_slope(self, op: FiberOperator, x: float) -> Tuple[float, float, GridFunction]:
        """Phi(x), dPhi/dx and R(x) d for one resolvent application"""
        functions = op.functions
        Rd = op.resolvent(x).apply(functions.d_k)
        T = inner_product(self.grid, functions.d_k, Rd).real
        ups2 = functions.upsilon_hat_k ** 2
        phi = ups2 * T + x - functions.b_k
        slope = ups2 * inner_product(self.grid, Rd, Rd).real + 1.0
        return phi, slope, Rd

    def eval_phi(self, k: TorusPoint, x: float, U: Optional[float] = None) -> float:
        """
        Characteristic function Phi(U, k, x)

        Args:
            k: Total quasi-momentum
            x: Spectral parameter below min(f_k) (eV)
            U: Optional override of the on-site repulsion

        Returns:
            Phi in eV
        """
        return self._phi_and_slope(self.fiber_operator(k, U), x)[0]

    def phi_slope(self, k: TorusPoint, x: float, U: Optional[float] = None) -> float:
        return self._phi_and_slope(self.fiber_operator(k, U), x)[1]

    def solve_E(self, k: TorusPoint, U: Optional[float] = None) -> PairState:
        """
        Fiber ground state E(U, k) and its fermionic component

        Args:
            k: Total quasi-momentum
            U: Optional override of the on-site repulsion (HARD_CORE allowed)

        Returns:
            PairState with psi_hat = upsilon_hat(k) R(E) d(k)
        """
        params = self._params_for(U)
        params.require_bound_pair_regime()
        if params.is_hardcore and params.pair_size() == 0.0:
            message = ERROR_MESSAGES['DEGENERATE_PAIR_SHAPE']
            self.logger.warning(f"DEGENERATE_PAIR_SHAPE: {message}")
            warnings.warn(message, DegeneratePairShapeWarning, stacklevel=2)

        op = FiberOperator.assemble(params, self.grid, k)
        functions = op.functions
        scale = params.energy_scale

        # Decoupled fiber: the boson itself is the eigenvector
        if abs(functions.upsilon_hat_k) <= SOLVER_TOLERANCES['upsilon_zero']:
            return self._state(params, op, functions.b_k, np.zeros(self.grid.size, dtype=complex), 0, 0.0)

        x_lo, x_hi = self._bracket(op, scale)
        evaluations = [0]

        def phi(x: float) -> float:
            evaluations[0] += 1
            return self._phi_and_slope(op, x)[0]

        try:
            x, result = brentq(phi, x_lo, x_hi, xtol=SOLVER_TOLERANCES['bisection_xtol'] * scale,
                               full_output=True)
        except ValueError as e:
            self.logger.error(f"Bracketing failed: k={functions.k} U={format_repulsion(params.U)} {e}")
            raise NoRootError(f"k = {functions.k}: {e}")

        x, residual, Rd, newton_steps = self._polish(op, x, x_lo, x_hi, scale)
        psi_hat = functions.upsilon_hat_k * Rd
        iterations = result.iterations + newton_steps
        self.logger.debug(
            f"solve_E k={functions.k} U={format_repulsion(params.U)} E={x!r} "
            f"iterations={iterations} phi_residual={residual:.3e}"
        )
        return self._state(params, op, x, psi_hat, iterations, residual)

    def solve_E_hardcore(self, k: TorusPoint) -> PairState:
        return self.solve_E(k, U=HARD_CORE)

    def _state(self, params: ModelParams, op: FiberOperator, E: float, psi_hat: GridFunction,
               iterations: int, residual: float) -> PairState:
        functions = op.functions
        norm_sq = inner_product(self.grid, psi_hat, psi_hat).real
        return PairState(
            k=functions.k,
            U=params.U,
            E=float(E),
            psi_hat=psi_hat,
            gap=functions.z_k - float(E),
            pair_fraction_rho=1.0 / (norm_sq + 1.0),
            z_k=functions.z_k,
            b_k=functions.b_k,
            upsilon_hat_k=functions.upsilon_hat_k,
            iterations=iterations,
            phi_residual=residual,
        )

    def _bracket(self, op: FiberOperator, scale: float) -> Tuple[float, float]:
        """Upper bracket just below min(b, z) with Phi > 0, lower one with Phi < 0"""
        functions = op.functions
        top = min(functions.b_k, functions.z_k)
        tol = SOLVER_TOLERANCES

        # Candidate upper brackets approach min(b, z) from below
        candidates = []
        delta = tol['bracket_delta_start'] * scale
        while delta >= tol['spectrum_proximity'] * scale:
            candidates.append(top - delta)
            delta /= tol['bracket_delta_shrink']
        if functions.b_k < functions.z_k - tol['spectrum_proximity'] * scale:
            # Phi(b) = upsilon^2 T(b) > 0
            candidates.append(functions.b_k)

        # Take the first candidate with Phi > 0
        x_hi = None
        for candidate in candidates:
            if self._phi_and_slope(op, candidate)[0] > 0:
                x_hi = candidate
                break
        if x_hi is None:
            self.logger.error(f"No positive upper bracket: k={functions.k} top={top!r}")
            raise NoRootError(f"k = {functions.k}: Phi <= 0 up to min(b, z) - {tol['spectrum_proximity']} eps")

        # Walk down with doubling steps until Phi < 0
        step = scale
        for _ in range(tol['lower_bracket_max_doublings']):
            x_lo = x_hi - step
            if self._phi_and_slope(op, x_lo)[0] < 0:
                return x_lo, x_hi
            step *= 2.0
        raise NoRootError(f"k = {functions.k}: no lower bracket found")

    def _polish(self, op: FiberOperator, x: float, x_lo: float, x_hi: float,
                scale: float) -> Tuple[float, float, GridFunction, int]:
        """Safeguarded Newton steps until |Phi| < tolerance"""
        target = SOLVER_TOLERANCES['newton_phi_tol'] * scale
        for step in range(SOLVER_TOLERANCES['newton_max_iter']):
            phi, slope, Rd = self._phi_and_slope(op, x)
            if abs(phi) < target:
                return x, abs(phi), Rd, step
            if phi > 0:
                x_hi = x
            else:
                x_lo = x
            candidate = x - phi / slope
            if not x_lo < candidate < x_hi:
                candidate = 0.5 * (x_lo + x_hi)
            if candidate == x:
                return x, abs(phi), Rd, step
            x = candidate
        self.logger.error(f"Newton polish did not converge: k={op.functions.k} x={x!r} phi={phi:.3e}")
        raise ConvergenceError(f"k = {op.functions.k}, |Phi| = {abs(phi):.3e}")

    def birman_schwinger_check(self, k: TorusPoint, lam: float,
                               U: Optional[float] = None) -> BirmanSchwingerReport:
        """
        Scalar Birman-Schwinger eigenvalue upsilon^2 T(lam) / (b - lam)

        Args:
            k: Total quasi-momentum
            lam: Candidate eigenvalue below z(k)
            U: Optional override of the on-site repulsion

        Returns:
            BirmanSchwingerReport; certified when |value - 1| < 1e-9
        """
        op = self.fiber_operator(k, U)
        functions = op.functions
        if lam == functions.b_k:
            raise DivisionAtBError(f"k = {functions.k}, lambda = {lam}")
        if functions.upsilon_hat_k == 0.0:
            raise ParameterValidationError("Birman-Schwinger check requires upsilon_hat(k) != 0")
        Rd = op.resolvent(lam).apply(functions.d_k)
        T = inner_product(self.grid, functions.d_k, Rd).real
        value = functions.upsilon_hat_k ** 2 * T / (functions.b_k - lam)
        deviation = abs(value - 1.0)
        return BirmanSchwingerReport(
            lam=float(lam),
            value=float(value),
            deviation=deviation,
            certified=deviation < SOLVER_TOLERANCES['birman_schwinger_certify'],
        )

    def solve_many(self, kgrid: Sequence[TorusPoint], U: Optional[float] = None,
                   threads: int = 1) -> List[PairState]:
        """solve_E over a list of fibers, results in input order"""
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            return list(pool.map(lambda k: self.solve_E(k, U), kgrid))

    def ground_energy(self, kgrid: Sequence[TorusPoint], U: Optional[float] = None,
                      threads: int = 1) -> Tuple[float, TorusPoint]:
        """Minimum of E(U, k) over kgrid; ties resolve to the first fiber"""
        states = self.solve_many(kgrid, U, threads)
        energies = np.array([state.E for state in states])
        index = int(np.argmin(energies))
        E_min, k_min = float(energies[index]), states[index].k

        params = self._params_for(U)
        origin_present = any(abs(k[0]) < 1e-14 and abs(k[1]) < 1e-14 for k in kgrid)
        if origin_present and params.pair_size() > 0:
            origin = next(s for s in states if abs(s.k[0]) < 1e-14 and abs(s.k[1]) < 1e-14)
            if origin.upsilon_hat_k != 0.0 and E_min > 0.0:
                self.logger.error(f"Ground energy positive: E_min={E_min!r} at k={k_min}")
                raise NumericalFailure(f"E_min = {E_min} > 0 although upsilon_hat(0) != 0")
        return E_min, k_min

    def ground_energy_ladder(self, kgrid: Sequence[TorusPoint], U_values: Sequence[float],
                             threads: int = 1) -> List[Tuple[float, float, TorusPoint]]:
        """(U, E_min, argmin) along a ladder of repulsions"""
        return [(U,) + self.ground_energy(kgrid, U, threads) for U in U_values]
