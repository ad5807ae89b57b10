"""
Brillouin-zone sweeps of the dressed-pair dispersion: group velocities,
mass tensors, pairing-symmetry weights, real-space densities and
Combes-Thomas localization certificates.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import linregress

from backend.fiber_operator import FiberOperator, fiber_derivatives
from backend.model_params import ModelParams, TorusPoint, eval_upsilon_hat
from backend.spectral_solver import PairState, SpectralSolver
from backend.torus_grid import (
    GridFunction, LatticeMap, TorusGrid, inner_product, rotate_grid_function, to_lattice,
)
from config.constants import FD_STEPS, FILE_FORMATS, GRID_DEFAULTS, HARD_CORE, SOLVER_TOLERANCES, U_LADDER
from utils.helpers import format_repulsion, wrap_torus
from utils.validators import (
    GapConditionError, PairModelError, SingularFiberError, SingularHessianError,
    WindowTooSmallError, ZeroVectorError,
)

logger = logging.getLogger(__name__)


class SymmetryWeights(NamedTuple):
    w_s: float
    w_d: float
    w_p: float


def symmetry_projections(grid: TorusGrid, psi_hat: GridFunction) -> Tuple[GridFunction, GridFunction, GridFunction]:
    """P_s, P_d, P_p applied to psi_hat, with R the exact grid quarter turn"""
    r1 = rotate_grid_function(grid, psi_hat)
    r2 = rotate_grid_function(grid, r1)
    r3 = rotate_grid_function(grid, r2)
    psi = np.asarray(psi_hat, dtype=complex)
    return (
        (psi + r3 + r2 + r1) / 4.0,
        (psi - r3 + r2 - r1) / 4.0,
        (psi - r2) / 2.0,
    )


def symmetry_decompose(grid: TorusGrid, psi_hat: GridFunction) -> SymmetryWeights:
    """
    Weights ||P_# psi||^2 / ||psi||^2 in the s, d and p sectors

    Args:
        grid: Torus grid
        psi_hat: Non-zero grid function

    Returns:
        SymmetryWeights(w_s, w_d, w_p)
    """
    total = inner_product(grid, psi_hat, psi_hat).real
    if total == 0.0:
        raise ZeroVectorError()
    parts = symmetry_projections(grid, psi_hat)
    return SymmetryWeights(*(inner_product(grid, part, part).real / total for part in parts))


def rotation_matrix(grid: TorusGrid) -> np.ndarray:
    """Dense permutation matrix of the grid quarter turn"""
    R = np.zeros((grid.size, grid.size))
    R[np.arange(grid.size), grid.rotation_permutation] = 1.0
    return R


def symmetry_projector_matrices(grid: TorusGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    R1 = rotation_matrix(grid)
    R2 = R1 @ R1
    R3 = R2 @ R1
    I = np.eye(grid.size)
    return (I + R3 + R2 + R1) / 4.0, (I - R3 + R2 - R1) / 4.0, (I - R2) / 2.0


@dataclass(frozen=True)
class MassTensorResult:
    hessian: np.ndarray
    mass: np.ndarray
    condition_number: float


@dataclass(frozen=True)
class CombesThomasCertificate:
    alpha: float
    C: float
    holds: bool
    gap_min: float
    hopping_bound: float
    max_ratio: float

    def to_dict(self) -> Dict:
        return {
            'alpha': self.alpha, 'C': self.C, 'holds': self.holds, 'gap_min_eV': self.gap_min,
            'hopping_bound_eV': self.hopping_bound, 'max_ratio': self.max_ratio,
        }


@dataclass(frozen=True)
class RealSpacePair:
    """Normalized density |psi(x)|^2 on a window with per-axis decay lengths"""

    k: TorusPoint
    U: float
    density: LatticeMap
    xi_a: float
    xi_b: float
    xi_a_density: float
    xi_b_density: float
    confined_axes: Tuple[str, ...]
    combes_certificate: Optional[CombesThomasCertificate]

    def to_dict(self) -> Dict:
        return {
            'k': list(self.k),
            'U_eV': format_repulsion(self.U),
            'window': self.density.window,
            'xi_a_nm': self.xi_a,
            'xi_b_nm': self.xi_b,
            'xi_a_density_nm': self.xi_a_density,
            'xi_b_density_nm': self.xi_b_density,
            'xi_convention': 'xi_* are 1/e lengths of |psi|; xi_*_density of |psi|^2',
            'confined_axes': list(self.confined_axes),
            'combes_certificate': self.combes_certificate.to_dict() if self.combes_certificate else None,
        }


@dataclass(frozen=True)
class DispersionRecord:
    k: TorusPoint
    E: float = math.nan
    gap: float = math.nan
    rho: float = math.nan
    v: Tuple[float, float] = (math.nan, math.nan)
    mass_tensor: Tuple[Tuple[float, float], Tuple[float, float]] = ((math.nan, math.nan), (math.nan, math.nan))
    sym_weights: Tuple[float, float, float] = (math.nan, math.nan, math.nan)
    status: str = 'ok'

    def row(self) -> List[float]:
        (m11, m12), (_, m22) = self.mass_tensor
        return [self.k[0], self.k[1], self.E, self.gap, self.rho, self.v[0], self.v[1],
                m11, m12, m22, *self.sym_weights]


@dataclass
class DispersionTable:
    records: List[DispersionRecord]
    U: float
    params_fingerprint: str
    u_label: str
    cache_stats: Dict[str, float] = field(default_factory=dict)

    @property
    def kgrid(self) -> List[TorusPoint]:
        return [record.k for record in self.records]

    @property
    def failures(self) -> List[DispersionRecord]:
        return [record for record in self.records if record.status not in ('ok', 'SINGULAR_HESSIAN')]

    def energies(self) -> np.ndarray:
        return np.array([record.E for record in self.records])

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([record.row() for record in self.records], columns=FILE_FORMATS['sweep_columns'])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_dataframe().to_csv(path, index=False, float_format=FILE_FORMATS['float_format'])
        return path

    def to_dict(self) -> Dict:
        return {
            'U_eV': format_repulsion(self.U),
            'params_fingerprint': self.params_fingerprint,
            'u_label': self.u_label,
            'columns': FILE_FORMATS['sweep_columns'],
            'rows': [record.row() for record in self.records],
            'status': [record.status for record in self.records],
        }


def _is_origin(k: TorusPoint) -> bool:
    return abs(wrap_torus(k[0])) < 1e-14 and abs(wrap_torus(k[1])) < 1e-14


class DispersionAnalyzer:
    """Derived quantities of E(U, k) on a fixed grid"""

    def __init__(self, params: ModelParams, grid: TorusGrid,
                 gradient_step: Optional[float] = None, hessian_step: Optional[float] = None):
        self.logger = logging.getLogger(__name__)
        self.params = params
        self.grid = grid
        self.solver = SpectralSolver(params, grid)
        self.gradient_step = gradient_step or FD_STEPS['gradient']
        self.hessian_step = hessian_step or FD_STEPS['hessian']

    def _params_for(self, U: Optional[float]) -> ModelParams:
        return self.params if U is None else self.params.with_U(U)

    def _energy(self, k: TorusPoint, U: Optional[float]) -> float:
        return self.solver.solve_E(k, U).E

    def group_velocity(self, k: TorusPoint, U: Optional[float] = None,
                       state: Optional[PairState] = None) -> np.ndarray:
        """
        Analytic gradient of E(U, .) at k from the implicit function theorem

        Args:
            k: Total quasi-momentum, k != 0
            U: Optional override of the on-site repulsion
            state: Solved PairState at (k, U), recomputed when omitted

        Returns:
            2-vector in eV per unit quasi-momentum
        """
        if _is_origin(k):
            raise SingularFiberError(f"k = {k}")
        params = self._params_for(U)
        state = state or self.solver.solve_E(k, U)
        op = FiberOperator.assemble(params, self.grid, k)
        derivatives = fiber_derivatives(params, self.grid, k)
        ups = op.functions.upsilon_hat_k

        Rd = op.resolvent(state.E).apply(op.functions.d_k)
        T = inner_product(self.grid, op.functions.d_k, Rd).real
        dphi_dx = ups ** 2 * inner_product(self.grid, Rd, Rd).real + 1.0

        velocity = np.zeros(2)
        for j in range(2):
            dT = -inner_product(self.grid, Rd, derivatives.df_dk[j] * Rd).real
            dT += 2.0 * inner_product(self.grid, derivatives.dd_dk[j], Rd).real
            dphi_dk = 2.0 * ups * derivatives.dupsilon_dk[j] * T + ups ** 2 * dT - derivatives.db_dk[j]
            velocity[j] = -dphi_dk / dphi_dx
        return velocity

    def group_velocity_fd(self, k: TorusPoint, U: Optional[float] = None,
                          step: Optional[float] = None) -> np.ndarray:
        """Central finite-difference gradient of E"""
        h = step or self.gradient_step
        velocity = np.zeros(2)
        for j in range(2):
            shift = np.zeros(2)
            shift[j] = h
            plus = self._energy((k[0] + shift[0], k[1] + shift[1]), U)
            minus = self._energy((k[0] - shift[0], k[1] - shift[1]), U)
            velocity[j] = (plus - minus) / (2.0 * h)
        return velocity

    def mass_tensor(self, k: TorusPoint, U: Optional[float] = None,
                    step: Optional[float] = None) -> MassTensorResult:
        """
        Inverse of the central finite-difference Hessian of E

        Args:
            k: Total quasi-momentum, k != 0
            U: Optional override of the on-site repulsion
            step: Finite-difference step (defaults to 2 pi / 512)

        Returns:
            MassTensorResult with Hessian, mass tensor and condition number
        """
        if _is_origin(k):
            raise SingularFiberError(f"k = {k}")
        h = step or self.hessian_step
        E = lambda a, b: self._energy((k[0] + a, k[1] + b), U)
        centre = E(0.0, 0.0)
        H = np.zeros((2, 2))
        H[0, 0] = (E(h, 0.0) - 2.0 * centre + E(-h, 0.0)) / h ** 2
        H[1, 1] = (E(0.0, h) - 2.0 * centre + E(0.0, -h)) / h ** 2
        H[0, 1] = H[1, 0] = (E(h, h) - E(h, -h) - E(-h, h) + E(-h, -h)) / (4.0 * h ** 2)

        scale = float(np.max(np.abs(H)))
        determinant = float(np.linalg.det(H))
        if scale == 0.0 or abs(determinant) < FD_STEPS['singular_det_rel'] * scale ** 2:
            raise SingularHessianError(f"k = {k}, det = {determinant:.3e}, scale = {scale:.3e}")
        return MassTensorResult(hessian=H, mass=np.linalg.inv(H), condition_number=float(np.linalg.cond(H)))

    def sweep(self, kgrid: Sequence[TorusPoint], U: Optional[float] = None, threads: int = 1,
              cache=None, compute_velocity: bool = True, compute_mass: bool = True) -> DispersionTable:
        """
        One record per fiber; per-fiber failures are recorded and the sweep continues

        Args:
            kgrid: Fibers to evaluate
            U: Optional override of the on-site repulsion
            threads: Worker threads (results keep kgrid order)
            cache: Optional FiberCache for PairStates
            compute_velocity: Evaluate the analytic group velocity
            compute_mass: Evaluate the finite-difference mass tensor

        Returns:
            DispersionTable
        """
        params = self._params_for(U)
        params.require_bound_pair_regime()
        # Drop k = 0 when it carries no exchange coupling
        fibers = [k for k in kgrid
                  if not (_is_origin(k) and abs(float(eval_upsilon_hat(params, k))) <= SOLVER_TOLERANCES['upsilon_zero'])]
        skipped = len(kgrid) - len(fibers)
        if skipped:
            self.logger.info(f"Sweep skips the singular fiber k=0 (upsilon_hat(0) = 0)")

        def evaluate(k: TorusPoint) -> DispersionRecord:
            try:
                # Check the cache before solving
                state = cache.load_state(k, params.U) if cache is not None else None
                if state is None:
                    state = self.solver.solve_E(k, params.U)
                    if cache is not None:
                        cache.store_state(state)
                return self._record(state, params.U, compute_velocity, compute_mass)
            except PairModelError as e:
                self.logger.error(f"Sweep fiber failed: k={k} code={e.code} detail={e.detail}")
                return DispersionRecord(k=(float(k[0]), float(k[1])), status=e.code)

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            records = list(pool.map(evaluate, fibers))

        stats = cache.stats() if cache is not None else {}
        return DispersionTable(records, params.U, params.fingerprint(), params.u_label, stats)

    def _record(self, state: PairState, U: float, compute_velocity: bool,
                compute_mass: bool) -> DispersionRecord:
        k = state.k
        status = 'ok'
        velocity = (math.nan, math.nan)
        mass = ((math.nan, math.nan), (math.nan, math.nan))
        if not _is_origin(k):
            if compute_velocity:
                velocity = tuple(float(v) for v in self.group_velocity(k, U, state))
            if compute_mass:
                try:
                    m = self.mass_tensor(k, U).mass
                    mass = ((float(m[0, 0]), float(m[0, 1])), (float(m[1, 0]), float(m[1, 1])))
                except SingularHessianError as e:
                    status = e.code
        weights = (math.nan, math.nan, math.nan)
        if inner_product(self.grid, state.psi_hat, state.psi_hat).real > 0.0:
            weights = tuple(symmetry_decompose(self.grid, state.psi_hat))
        return DispersionRecord(
            k=k, E=state.E, gap=state.gap, rho=state.pair_fraction_rho,
            v=velocity, mass_tensor=mass, sym_weights=weights, status=status,
        )

    def minimum_gap(self, kgrid: Sequence[TorusPoint], U_values: Sequence[float],
                    threads: int = 1) -> float:
        """min over fibers and repulsions of z(k) - E(U, k)"""
        gaps = [state.gap for U in U_values for state in self.solver.solve_many(kgrid, U, threads)]
        return float(min(gaps))

    def combes_thomas_certificate(self, k: TorusPoint, U: Optional[float] = None,
                                  alpha: Optional[float] = None, gap_min: Optional[float] = None,
                                  window: Optional[int] = None,
                                  state: Optional[PairState] = None,
                                  kgrid: Optional[Sequence[TorusPoint]] = None,
                                  U_values: Optional[Sequence[float]] = None) -> CombesThomasCertificate:
        """
        Constructive bound |psi(x)| <= C exp(-alpha |x|) on the lattice window

        Args:
            k: Total quasi-momentum
            U: Optional override of the on-site repulsion
            alpha: Decay rate; defaults to half the gap-condition limit
            gap_min: Gap lower bound; defaults to minimum_gap over kgrid when one is given,
                otherwise to the fiber gap z(k) - E
            window: Lattice half-width (default 24, capped at N/2)
            state: Solved PairState at (k, U)
            kgrid: Fibers entering the uniform gap minimum
            U_values: Repulsions entering the gap minimum (U ladder plus hard core by default)

        Returns:
            CombesThomasCertificate
        """
        params = self._params_for(U)
        state = state or self.solver.solve_E(k, U)
        if gap_min is None and kgrid is not None:
            if U_values is None:
                U_values = [u * params.epsilon for u in U_LADDER] + [params.U, HARD_CORE]
            gap_min = self.minimum_gap(kgrid, U_values)
        gap = state.gap if gap_min is None else float(gap_min)
        eps = params.epsilon
        if alpha is None:
            alpha = 0.5 * math.log1p(gap / (4.0 * eps)) if eps > 0 else 1.0
        if not alpha > 0:
            raise GapConditionError(f"alpha must be > 0, got {alpha}")
        hopping = 4.0 * eps * math.expm1(alpha)
        if hopping >= gap:
            raise GapConditionError(f"alpha = {alpha}: 4 eps (e^alpha - 1) = {hopping:.6g} >= g = {gap:.6g}")

        C = abs(state.upsilon_hat_k) * (params.p1.weighted_mass(alpha) + params.p2.weighted_mass(alpha)) / (gap - hopping)
        W = min(window if window is not None else GRID_DEFAULTS['window'], self.grid.N // 2)
        psi = to_lattice(self.grid, state.psi_hat, W)
        magnitude = np.abs(psi.values)
        bound = C * np.exp(-alpha * psi.radii())
        slack = 1e-14 * float(np.max(magnitude)) if magnitude.size else 0.0
        holds = bool(np.all(magnitude <= bound * (1.0 + 1e-9) + slack))
        with np.errstate(divide='ignore', invalid='ignore'):
            ratios = np.where(bound > 0, magnitude / bound, 0.0)
        return CombesThomasCertificate(
            alpha=float(alpha), C=float(C), holds=holds, gap_min=gap,
            hopping_bound=hopping, max_ratio=float(np.max(ratios)) if ratios.size else 0.0,
        )

    def real_space_pair(self, k: TorusPoint, U: Optional[float] = None, window: Optional[int] = None,
                        state: Optional[PairState] = None, certify: bool = True,
                        gap_kgrid: Optional[Sequence[TorusPoint]] = None) -> RealSpacePair:
        """
        Normalized relative-coordinate density and decay lengths along the lattice axes

        Args:
            k: Total quasi-momentum
            U: Optional override of the on-site repulsion
            window: Lattice half-width W <= N/2 (default 24)
            state: Solved PairState at (k, U)
            certify: Attach a Combes-Thomas certificate
            gap_kgrid: Fibers for the certificate's uniform gap (fiber gap when omitted)

        Returns:
            RealSpacePair with xi in nm
        """
        params = self._params_for(U)
        W = GRID_DEFAULTS['window'] if window is None else window
        if W < SOLVER_TOLERANCES['min_fit_points']:
            raise WindowTooSmallError(f"window = {W}")
        state = state or self.solver.solve_E(k, U)
        if inner_product(self.grid, state.psi_hat, state.psi_hat).real == 0.0:
            raise ZeroVectorError(f"psi_hat vanishes at k = {state.k}")

        psi = to_lattice(self.grid, state.psi_hat, W)
        weights = np.abs(psi.values) ** 2
        density = LatticeMap(W, weights / weights.sum())

        spacing = params.lattice_spacing_nm
        lengths, confined = {}, []
        for axis in ('a', 'b'):
            xi_density = self._fit_decay(density, axis)
            if math.isnan(xi_density):
                confined.append(axis)
            lengths[axis] = xi_density * spacing

        certificate = None
        if certify:
            certificate = self.combes_thomas_certificate(k, U, window=W, state=state, kgrid=gap_kgrid)
        return RealSpacePair(
            k=state.k, U=state.U, density=density,
            xi_a=2.0 * lengths['a'], xi_b=2.0 * lengths['b'],
            xi_a_density=lengths['a'], xi_b_density=lengths['b'],
            confined_axes=tuple(confined), combes_certificate=certificate,
        )

    def _fit_decay(self, density: LatticeMap, axis: str) -> float:
        """1/e length (lattice units) of the density along one axis; NaN when confined"""
        W = density.window
        offsets = np.arange(1, W + 1)
        if axis == 'a':
            values = np.concatenate([density.values[W + offsets, W], density.values[W - offsets, W]])
        else:
            values = np.concatenate([density.values[W, W + offsets], density.values[W, W - offsets]])
        distance = np.concatenate([offsets, offsets]).astype(float)
        mask = values > SOLVER_TOLERANCES['density_threshold']
        if np.unique(distance[mask]).size < SOLVER_TOLERANCES['min_fit_points']:
            self.logger.info(f"Axis {axis} confined: {np.unique(distance[mask]).size} points above threshold")
            return math.nan
        fit = linregress(distance[mask], np.log(values[mask]))
        if fit.slope >= 0:
            return math.nan
        return -1.0 / fit.slope
