"""
Fiber Hamiltonian A(U, k) on a torus grid.

The (1,1) block is diag(f_k) plus a handful of rank-one projections onto
normalized plane waves, so resolvents are applied through a small
capacitance system instead of a dense solve. The dense assembly is kept
for small grids and is the reference every fast path is tested against.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from backend.model_params import (
    LatticeVector, ModelParams, TorusPoint, eval_d, eval_d_gradient,
    eval_upsilon_gradient, eval_upsilon_hat,
)
from backend.torus_grid import GridFunction, TorusGrid, inner_product, plane_wave
from config.constants import SOLVER_TOLERANCES
from utils.helpers import wrap_torus
from utils.validators import (
    DimensionMismatchError, HardCoreUnsupportedError, ParameterValidationError,
    SpectrumProximityError,
)

logger = logging.getLogger(__name__)


def fermion_dispersion(params: ModelParams, k: TorusPoint, p1, p2) -> np.ndarray:
    """f_k(p) = eps (4 - cos(p + k) - cos(p)), cos(q) = cos q1 + cos q2"""
    eps = params.epsilon
    return eps * (4.0 - np.cos(p1 + k[0]) - np.cos(p2 + k[1]) - np.cos(p1) - np.cos(p2))


def boson_dispersion(params: ModelParams, k: TorusPoint) -> float:
    """b(k) = h_b eps (2 - cos k1 - cos k2)"""
    return float(params.h_b * params.epsilon * (2.0 - np.cos(k[0]) - np.cos(k[1])))


def continuum_bottom(params: ModelParams, k: TorusPoint) -> float:
    """z(k) = 4 eps - 2 eps (cos(k1/2) + cos(k2/2)) with k wrapped to [-pi, pi)"""
    h1 = 0.5 * wrap_torus(k[0])
    h2 = 0.5 * wrap_torus(k[1])
    return float(4.0 * params.epsilon - 2.0 * params.epsilon * (np.cos(h1) + np.cos(h2)))


@dataclass(frozen=True)
class FiberFunctions:
    k: TorusPoint
    f_k: GridFunction
    b_k: float
    z_k: float
    d_k: GridFunction
    upsilon_hat_k: float

    @classmethod
    def build(cls, params: ModelParams, grid: TorusGrid, k: TorusPoint) -> 'FiberFunctions':
        k = (float(k[0]), float(k[1]))
        return cls(
            k=k,
            f_k=fermion_dispersion(params, k, grid.p1, grid.p2),
            b_k=boson_dispersion(params, k),
            z_k=continuum_bottom(params, k),
            d_k=eval_d(params, k, (grid.p1, grid.p2)),
            upsilon_hat_k=float(eval_upsilon_hat(params, k)),
        )


@dataclass(frozen=True)
class FiberDerivatives:
    """k-derivatives of the fiber functions, index 0/1 for k1/k2"""

    df_dk: np.ndarray
    dd_dk: np.ndarray
    db_dk: np.ndarray
    dupsilon_dk: np.ndarray


def fiber_derivatives(params: ModelParams, grid: TorusGrid, k: TorusPoint) -> FiberDerivatives:
    eps = params.epsilon
    df = np.stack([eps * np.sin(grid.p1 + k[0]), eps * np.sin(grid.p2 + k[1])])
    db = params.h_b * eps * np.array([np.sin(k[0]), np.sin(k[1])])
    return FiberDerivatives(
        df_dk=df,
        dd_dk=eval_d_gradient(params, k, (grid.p1, grid.p2)),
        db_dk=db,
        dupsilon_dk=np.asarray(eval_upsilon_gradient(params, k), dtype=float),
    )


def _rank_one_strengths(params: ModelParams, include_onsite: bool) -> Dict[LatticeVector, float]:
    strengths = dict(params.u.entries)
    if include_onsite and not params.is_hardcore and params.U > 0:
        strengths[(0, 0)] = strengths.get((0, 0), 0.0) + params.U
    return {vector: value for vector, value in sorted(strengths.items()) if value != 0.0}


@dataclass(frozen=True)
class FiberOperator:
    """A_{1,1}(U, k) = diag(f_k) + Sum_x c_x P_x, with the hard-core constraint as a flag"""

    grid: TorusGrid
    functions: FiberFunctions
    rank_one_terms: Tuple[Tuple[LatticeVector, float], ...]
    hardcore: bool
    energy_scale: float

    @classmethod
    def assemble(cls, params: ModelParams, grid: TorusGrid, k: TorusPoint,
                 background_only: bool = False,
                 functions: Optional[FiberFunctions] = None) -> 'FiberOperator':
        """
        Build the fiber operator at total quasi-momentum k

        Args:
            params: Model parameters
            grid: Torus grid
            k: Total quasi-momentum
            background_only: Drop the on-site U term (the operator B_{1,1}(k))
            functions: Precomputed fiber functions for this k

        Returns:
            FiberOperator
        """
        strengths = _rank_one_strengths(params, include_onsite=not background_only)
        return cls(
            grid=grid,
            functions=functions or FiberFunctions.build(params, grid, k),
            rank_one_terms=tuple(strengths.items()),
            hardcore=params.is_hardcore and not background_only,
            energy_scale=params.energy_scale,
        )

    def resolvent(self, x: float) -> 'ResolventSolver':
        return ResolventSolver(self, x)


class ResolventSolver:
    """(A_{1,1} - x)^{-1} for one operator and one spectral parameter x"""

    def __init__(self, op: FiberOperator, x: float):
        self.op = op
        self.x = float(x)
        grid = op.grid
        f = op.functions.f_k

        margin = float(np.min(f)) - self.x
        if margin < SOLVER_TOLERANCES['spectrum_proximity'] * op.energy_scale:
            logger.error(f"Resolvent refused: k={op.functions.k} x={self.x!r} min_f_minus_x={margin:.3e}")
            raise SpectrumProximityError(f"k = {op.functions.k}, x = {self.x}, min(f_k) - x = {margin:.3e}")
        self.inv_diag = 1.0 / (f - self.x)

        self._lu = None
        if op.rank_one_terms:
            self._E = np.column_stack([plane_wave(grid, vector) for vector, _ in op.rank_one_terms])
            self._c = np.array([strength for _, strength in op.rank_one_terms])
            G = self._E.conj().T @ (self.inv_diag[:, None] * self._E) / grid.size
            capacitance = np.eye(len(self._c)) + G * self._c[None, :]
            self._lu = lu_factor(capacitance)

        self._Rs = None
        if op.hardcore:
            self._Rs = self._apply_finite(np.ones(grid.size, dtype=complex))
            self._Rss = float(np.mean(self._Rs).real)

    def _apply_finite(self, rhs: np.ndarray) -> np.ndarray:
        y = self.inv_diag * rhs
        if self._lu is not None:
            w = self._E.conj().T @ y / self.op.grid.size
            correction = lu_solve(self._lu, w)
            y = y - self.inv_diag * (self._E @ (self._c * correction))
        return y

    def apply(self, rhs: GridFunction) -> GridFunction:
        """Solve (A_{1,1} - x) psi = rhs; hard core solves on the complement of e_0"""
        rhs = np.asarray(rhs, dtype=complex)
        self.op.grid.check_length(rhs)
        y = self._apply_finite(rhs)
        if self._Rs is not None:
            y = y - self._Rs * (np.mean(y) / self._Rss)
        return y


@dataclass(frozen=True)
class RConstants:
    """Resolvent matrix elements of B_{1,1}(k) between s = e_0 and d(k)"""

    R_ss: float
    R_sd: complex
    R_ds: complex
    R_dd: float

    def schur(self) -> float:
        return self.R_dd * self.R_ss - abs(self.R_sd) ** 2

    def hardcore_T(self) -> float:
        return self.schur() / self.R_ss

    def interpolated_T(self, U: float) -> float:
        denominator = U * self.R_ss + 1.0
        return self.R_dd / denominator + U * self.schur() / denominator


def apply_resolvent(op: FiberOperator, x: float, rhs: GridFunction) -> GridFunction:
    rhs = np.asarray(rhs)
    if rhs.size != op.grid.size:
        raise DimensionMismatchError(f"expected {op.grid.size} values, got {rhs.size}")
    return ResolventSolver(op, x).apply(rhs)


def compute_R_constants(params: ModelParams, grid: TorusGrid, k: TorusPoint, x: float) -> RConstants:
    op = FiberOperator.assemble(params, grid, k, background_only=True)
    solver = op.resolvent(x)
    s = np.ones(grid.size, dtype=complex)
    d = op.functions.d_k
    Rs = solver.apply(s)
    Rd = solver.apply(d)
    return RConstants(
        R_ss=inner_product(grid, s, Rs).real,
        R_sd=inner_product(grid, s, Rd),
        R_ds=inner_product(grid, d, Rs),
        R_dd=inner_product(grid, d, Rd).real,
    )


def compute_T(params: ModelParams, grid: TorusGrid, k: TorusPoint, x: float) -> float:
    """T(U, k, x) = <d(k), (A_{1,1}(U, k) - x)^{-1} d(k)>"""
    if params.is_hardcore:
        return compute_R_constants(params, grid, k, x).hardcore_T()
    op = FiberOperator.assemble(params, grid, k)
    d = op.functions.d_k
    return inner_product(grid, d, op.resolvent(x).apply(d)).real


def hardcore_interpolation_check(params: ModelParams, grid: TorusGrid, k: TorusPoint,
                                 x: float, U: float) -> float:
    """|T(U) - interpolation through the R-constants|"""
    if U == np.inf:
        raise ParameterValidationError("interpolation check needs a finite U")
    direct = compute_T(params.with_U(U), grid, k, x)
    constants = compute_R_constants(params, grid, k, x)
    residual = abs(direct - constants.interpolated_T(U))
    logger.debug(f"interpolation k={k} x={x!r} U={U!r} residual={residual:.3e}")
    return residual


def assemble_dense_A11(params: ModelParams, grid: TorusGrid, k: TorusPoint) -> np.ndarray:
    """Dense A_{1,1} in the orthonormal basis of normalized grid delta functions"""
    if params.is_hardcore:
        raise HardCoreUnsupportedError(f"k = {k}")
    functions = FiberFunctions.build(params, grid, k)
    A = np.diag(functions.f_k.astype(complex))
    for vector, strength in _rank_one_strengths(params, include_onsite=True).items():
        e = plane_wave(grid, vector)
        A += strength * np.outer(e, e.conj()) / grid.size
    return A


def assemble_dense_full(params: ModelParams, grid: TorusGrid, k: TorusPoint) -> np.ndarray:
    """Dense (N^2 + 1) x (N^2 + 1) fiber matrix; the last index is the boson"""
    A11 = assemble_dense_A11(params, grid, k)
    functions = FiberFunctions.build(params, grid, k)
    n = grid.size
    column = functions.upsilon_hat_k * functions.d_k / grid.N
    A = np.zeros((n + 1, n + 1), dtype=complex)
    A[:n, :n] = A11
    A[:n, n] = column
    A[n, :n] = column.conj()
    A[n, n] = functions.b_k
    return A
