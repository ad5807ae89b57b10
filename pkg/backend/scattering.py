"""
Finite-time interaction-picture propagators on a single fiber.

With X = A_{1,1} (+) b(k) and Y = A(k) - X the propagator
V_{t,s} = e^{itX} e^{i(s-t)A} e^{-isX} solves dV/dt = -i Y_t V,
Y_t = e^{itX} Y e^{-itX}. It is computed three ways: dense matrix
exponentials, fourth-order Runge-Kutta on the ODE, and the truncated
time-ordered series whose rank-one kernels collapse every nested
integral to vector operations.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import eigh, expm

from backend.fiber_operator import FiberFunctions, assemble_dense_A11, assemble_dense_full
from backend.model_params import LatticeCoupling, ModelParams, TorusPoint
from backend.spectral_solver import PairState, SpectralSolver
from backend.torus_grid import TorusGrid, inner_product
from config.constants import GRID_DEFAULTS, SCATTERING_DEFAULTS
from utils.helpers import format_repulsion
from utils.validators import (
    DysonOrderError, HardCoreUnsupportedError, ParameterValidationError, StepCountError,
)


@dataclass
class PropagatorRecord:
    k: TorusPoint
    U: float
    s: float
    t: float
    V: np.ndarray
    method: str
    oracle_error: float = math.nan
    unitarity_error: float = math.nan

    def __post_init__(self):
        if math.isnan(self.unitarity_error):
            n = self.V.shape[0]
            self.unitarity_error = float(np.linalg.norm(self.V.conj().T @ self.V - np.eye(n), 2))

    def summary(self) -> Dict:
        return {
            'k': list(self.k),
            'U_eV': format_repulsion(self.U),
            's': self.s,
            't': self.t,
            'method': self.method,
            'dimension': int(self.V.shape[0]),
            'oracle_error': self.oracle_error,
            'unitarity_error': self.unitarity_error,
        }


@dataclass
class UnboundChannelReport:
    k: TorusPoint
    times: List[float]
    cauchy_increments: List[float]
    generic_increments: List[float]
    bosonic_leakage_max: List[float]
    bosonic_leakage_generic: List[float]

    def to_dict(self) -> Dict:
        return {
            'k': list(self.k),
            'times': self.times,
            'cauchy_increments': self.cauchy_increments,
            'generic_increments': self.generic_increments,
            'bosonic_leakage_max': self.bosonic_leakage_max,
            'bosonic_leakage_generic': self.bosonic_leakage_generic,
        }


@dataclass
class _FiberDynamics:
    A: np.ndarray
    X11: np.ndarray
    b: float
    c: np.ndarray
    lam: np.ndarray
    Q: np.ndarray
    beta: np.ndarray
    D: Optional[np.ndarray]
    upsilon_hat: float
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.c.size

    def coupling_at(self, tau: float) -> np.ndarray:
        """c_tau = e^{i tau A11} c e^{-i tau b}"""
        return (self.Q @ (np.exp(1j * tau * self.lam) * self.beta)) * np.exp(-1j * tau * self.b)

    def X_exponential(self, tau: float) -> np.ndarray:
        n = self.n
        U = np.zeros((n + 1, n + 1), dtype=complex)
        U[:n, :n] = (self.Q * np.exp(1j * tau * self.lam)) @ self.Q.conj().T
        U[n, n] = np.exp(1j * tau * self.b)
        return U

    def apply_Y(self, tau: float, V: np.ndarray) -> np.ndarray:
        n = self.n
        c_tau = self.coupling_at(tau)
        out = np.empty_like(V)
        out[:n] = np.outer(c_tau, V[n])
        out[n] = c_tau.conj() @ V[:n]
        if self.D is not None:
            rotation = (self.Q * np.exp(1j * tau * self.lam)) @ self.Q.conj().T
            out[:n] += rotation @ (self.D @ (rotation.conj().T @ V[:n]))
        return out


class ScatteringEngine:
    """Propagators of a fiber for fixed model parameters and reference repulsion"""

    def __init__(self, params: ModelParams, grid: TorusGrid,
                 reference_U: Optional[float] = None,
                 reference_u: Optional[LatticeCoupling] = None):
        self.logger = logging.getLogger(__name__)
        if params.is_hardcore:
            raise HardCoreUnsupportedError("scattering needs a finite U")
        if grid.N > GRID_DEFAULTS['scattering_max_N']:
            self.logger.warning(f"Dense propagators on N={grid.N} exceed the recommended N<={GRID_DEFAULTS['scattering_max_N']}")
        self.params = params
        self.grid = grid
        self.reference = params
        if reference_U is not None or reference_u is not None:
            self.reference = ModelParams(
                epsilon=params.epsilon, h_b=params.h_b,
                U=params.U if reference_U is None else reference_U,
                u=params.u if reference_u is None else reference_u,
                p1=params.p1, p2=params.p2, upsilon=params.upsilon,
                lattice_spacing_nm=params.lattice_spacing_nm, u_label=params.u_label,
            )
            if self.reference.is_hardcore:
                raise HardCoreUnsupportedError("reference repulsion must be finite")
        self._fibers: Dict[TorusPoint, _FiberDynamics] = {}

    @property
    def default_reference(self) -> bool:
        return self.reference is self.params

    def fiber(self, k: TorusPoint) -> _FiberDynamics:
        key = (float(k[0]), float(k[1]))
        if key not in self._fibers:
            functions = FiberFunctions.build(self.params, self.grid, key)
            A = assemble_dense_full(self.params, self.grid, key)
            n = self.grid.size
            X11 = A[:n, :n] if self.default_reference else assemble_dense_A11(self.reference, self.grid, key)
            lam, Q = eigh(X11)
            c = A[:n, n].copy()
            D = None if self.default_reference else A[:n, :n] - X11
            self._fibers[key] = _FiberDynamics(
                A=A, X11=X11, b=functions.b_k, c=c, lam=lam, Q=Q, beta=Q.conj().T @ c, D=D,
                upsilon_hat=functions.upsilon_hat_k, d=functions.d_k,
            )
        return self._fibers[key]

    def _X(self, fiber: _FiberDynamics) -> np.ndarray:
        n = fiber.n
        X = np.zeros_like(fiber.A)
        X[:n, :n] = fiber.X11
        X[n, n] = fiber.b
        return X

    def interaction_picture_exact(self, k: TorusPoint, s: float, t: float) -> np.ndarray:
        """e^{itX} e^{i(s-t)A} e^{-isX} from three dense matrix exponentials"""
        fiber = self.fiber(k)
        X = self._X(fiber)
        return expm(1j * t * X) @ expm(1j * (s - t) * fiber.A) @ expm(-1j * s * X)

    def propagate_exact(self, k: TorusPoint, s: float, t: float) -> PropagatorRecord:
        """Matrix-exponential propagator as a record (it is its own oracle)"""
        V = self.interaction_picture_exact(k, s, t)
        return PropagatorRecord(k=(float(k[0]), float(k[1])), U=self.params.U, s=s, t=t, V=V,
                                method='exact', oracle_error=0.0)

    def propagate_ode(self, k: TorusPoint, s: float, t: float,
                      steps: int = SCATTERING_DEFAULTS['default_ode_steps'],
                      with_oracle: bool = True) -> PropagatorRecord:
        """
        Classical Runge-Kutta integration of dV/dt = -i Y_t V from V_{s,s} = 1

        Args:
            k: Total quasi-momentum
            s: Initial time
            t: Final time (t < s integrates backwards)
            steps: Number of uniform steps (>= 4)
            with_oracle: Compare against the matrix-exponential propagator

        Returns:
            PropagatorRecord with method 'ode'
        """
        if steps < SCATTERING_DEFAULTS['min_ode_steps']:
            raise StepCountError(f"steps = {steps}")
        fiber = self.fiber(k)
        h = (t - s) / steps
        V = np.eye(fiber.n + 1, dtype=complex)
        rhs = lambda tau, M: -1j * fiber.apply_Y(tau, M)
        tau = s
        for _ in range(steps):
            k1 = rhs(tau, V)
            k2 = rhs(tau + 0.5 * h, V + 0.5 * h * k1)
            k3 = rhs(tau + 0.5 * h, V + 0.5 * h * k2)
            k4 = rhs(tau + h, V + h * k3)
            V = V + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tau += h
        return self._record(k, s, t, V, 'ode', with_oracle)

    def _record(self, k: TorusPoint, s: float, t: float, V: np.ndarray, method: str,
                with_oracle: bool) -> PropagatorRecord:
        error = math.nan
        if with_oracle:
            error = float(np.linalg.norm(V - self.interaction_picture_exact(k, s, t), 2))
            self.logger.info(f"propagator k={k} s={s} t={t} method={method} oracle_error={error:.3e}")
        return PropagatorRecord(k=(float(k[0]), float(k[1])), U=self.params.U, s=s, t=t, V=V,
                                method=method, oracle_error=error)

    def _panel_count(self, fiber: _FiberDynamics, s: float, t: float) -> int:
        spread = float(np.max(np.abs(fiber.lam - fiber.b))) if fiber.lam.size else 0.0
        budget = SCATTERING_DEFAULTS['panel_phase_budget']
        return max(SCATTERING_DEFAULTS['min_panels'], int(math.ceil(spread * abs(t - s) / budget)))

    @staticmethod
    def _quadrature(s: float, t: float, panels: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes, full weights and cumulative-integral matrix on [s, t]"""
        order = SCATTERING_DEFAULTS['gl_order']
        x, w = legendre.leggauss(order)
        vandermonde = legendre.legvander(x, order - 1)
        integrated = np.column_stack([
            legendre.legval(x, legendre.legint(np.eye(order)[m], lbnd=-1)) for m in range(order)
        ])
        partial = integrated @ np.linalg.inv(vandermonde)

        H = (t - s) / panels
        M = panels * order
        nodes = np.empty(M)
        J = np.zeros((M, M))
        for p in range(panels):
            rows = slice(p * order, (p + 1) * order)
            nodes[rows] = s + p * H + 0.5 * H * (x + 1.0)
            for q in range(p):
                J[rows, q * order:(q + 1) * order] = 0.5 * H * w[None, :]
            J[rows, rows] = 0.5 * H * partial
        weights = np.tile(0.5 * H * w, panels)
        return nodes, weights, J

    def dyson_blocks(self, k: TorusPoint, s: float, t: float, order: int,
                     panels: Optional[int] = None, with_oracle: bool = True) -> PropagatorRecord:
        """
        Truncated time-ordered series of V_{t,s} up to `order` factors of Y

        Args:
            k: Total quasi-momentum
            s: Initial time
            t: Final time
            order: Truncation order, 1..6
            panels: Gauss-Legendre panels (chosen from the spectral spread when omitted)
            with_oracle: Compare against the matrix-exponential propagator

        Returns:
            PropagatorRecord with method 'series(order)'
        """
        if not 1 <= order <= SCATTERING_DEFAULTS['max_dyson_order']:
            raise DysonOrderError(f"order = {order}")
        if not self.default_reference:
            raise ParameterValidationError("the series path needs the default reference repulsion (V, v) = (U, u)")
        fiber = self.fiber(k)
        n = fiber.n
        if t == s:
            return self._record(k, s, t, np.eye(n + 1, dtype=complex), f'series({order})', with_oracle)

        panels = panels or self._panel_count(fiber, s, t)
        nodes, weights, J = self._quadrature(s, t, panels)
        C = np.stack([fiber.coupling_at(tau) for tau in nodes])
        kernel = J * (C.conj() @ C.T)

        P = np.eye(n, dtype=complex)
        q = np.zeros(n, dtype=complex)
        r = np.zeros(n, dtype=complex)
        w_final = 1.0 + 0j

        sigma = C.conj()
        w_nodes = np.ones(len(nodes), dtype=complex)
        for level in range(1, order + 1):
            # Odd levels feed the off-diagonal blocks, even levels the diagonal ones
            if level % 2:
                rho = -1j * (J @ sigma)
                r += -1j * (weights @ sigma)
                q += -1j * (C.T @ (weights * w_nodes))
                kappa = -1j * (kernel @ w_nodes)
            else:
                P += -1j * (C.T @ (weights[:, None] * rho))
                sigma = -1j * (kernel @ rho)
                w_final += -1j * (weights @ kappa)
                w_nodes = -1j * (J @ kappa)

        V = np.empty((n + 1, n + 1), dtype=complex)
        V[:n, :n] = P
        V[:n, n] = q
        V[n, :n] = r
        V[n, n] = w_final
        return self._record(k, s, t, V, f'series({order})', with_oracle)

    def scalar_kernel(self, k: TorusPoint, t: float, s: float) -> Tuple[complex, complex]:
        """c_t^H c_s from the rank-one couplings and from e^{i(s-t)A11} applied to d"""
        fiber = self.fiber(k)
        via_couplings = complex(np.vdot(fiber.coupling_at(t), fiber.coupling_at(s)))
        evolved = expm(1j * (s - t) * fiber.X11) @ fiber.d
        via_exponential = fiber.upsilon_hat ** 2 * np.exp(1j * (t - s) * fiber.b) * inner_product(self.grid, fiber.d, evolved)
        return via_couplings, complex(via_exponential)

    def wave_operator(self, k: TorusPoint, T: float) -> np.ndarray:
        """W(T) = e^{iTA} e^{-iTX}"""
        fiber = self.fiber(k)
        return expm(1j * T * fiber.A) @ expm(-1j * T * self._X(fiber))

    def unbound_channel_diagnostic(self, k: TorusPoint, T_max: float,
                                   levels: int = SCATTERING_DEFAULTS['ladder_levels'],
                                   seed: int = 0) -> UnboundChannelReport:
        """
        Cauchy increments and bosonic leakage of W(T) on the fermionic sector

        Args:
            k: Total quasi-momentum
            T_max: Largest time of the geometric ladder T_max / 2^j
            levels: Number of ladder points
            seed: Seed of the generic test vector

        Returns:
            UnboundChannelReport; convergence is reported, never asserted
        """
        fiber = self.fiber(k)
        n = fiber.n
        times = [T_max / 2.0 ** (levels - 1 - j) for j in range(levels)]
        generic = np.random.default_rng(seed).standard_normal(n) + 0j
        generic = np.concatenate([generic / np.linalg.norm(generic), [0j]])

        operators = [self.wave_operator(k, T) for T in times]
        increments, generic_increments = [], []
        for previous, current in zip(operators, operators[1:]):
            difference = (current - previous)[:, :n]
            increments.append(float(np.linalg.norm(difference, 2)))
            generic_increments.append(float(np.linalg.norm((current - previous) @ generic)))
        leakage = [float(np.max(np.abs(W[n, :n]))) if n else 0.0 for W in operators]
        leakage_generic = [float(abs((W @ generic)[n])) for W in operators]
        return UnboundChannelReport(
            k=(float(k[0]), float(k[1])), times=times,
            cauchy_increments=increments, generic_increments=generic_increments,
            bosonic_leakage_max=leakage, bosonic_leakage_generic=leakage_generic,
        )

    def bound_channel_check(self, k: TorusPoint, t: float, state: Optional[PairState] = None) -> float:
        """||e^{itA} Psi - e^{itE} Psi|| / ||Psi|| for the fiber ground state Psi"""
        fiber = self.fiber(k)
        state = state or SpectralSolver(self.params, self.grid).solve_E(k)
        Psi = state.eigenvector()
        evolved = expm(1j * t * fiber.A) @ Psi
        return float(np.linalg.norm(evolved - np.exp(1j * t * state.E) * Psi) / np.linalg.norm(Psi))
