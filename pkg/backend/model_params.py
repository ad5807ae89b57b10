"""
Physical parameters of the two-fermion / one-boson exchange model and the
Fourier transforms of its couplings on the torus [-pi, pi)^2.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from config.constants import (
    GRID_DEFAULTS, HARD_CORE, PHYSICAL_CONSTANTS, PROFILE_FORMS,
    PROTOTYPICAL_PARAMS, SOLVER_TOLERANCES, U_VARIANTS,
)
from utils.helpers import content_hash, format_repulsion, wrap_torus
from utils.validators import ParameterValidationError, ParameterValidator

logger = logging.getLogger(__name__)

LatticeVector = Tuple[int, int]
TorusPoint = Tuple[float, float]

# Orbits of the quarter-turn group used to build invariant couplings
SHELL_ORBITS = {
    (0, 0): ((0, 0),),
    (1, 0): ((1, 0), (0, 1), (-1, 0), (0, -1)),
    (1, 1): ((1, 1), (-1, 1), (-1, -1), (1, -1)),
}


@dataclass(frozen=True)
class LatticeCoupling:
    """Finitely supported, quarter-turn invariant real function on Z^2 (eV or dimensionless)"""

    entries: Mapping[LatticeVector, float] = field(default_factory=dict)

    def __post_init__(self):
        cleaned: Dict[LatticeVector, float] = {}
        for vector, value in dict(self.entries).items():
            if len(vector) != 2 or any(int(c) != c for c in vector):
                raise ParameterValidationError(f"lattice vector {vector!r} is not in Z^2")
            value = float(value)
            if not math.isfinite(value):
                raise ParameterValidationError(f"coupling value at {vector} is not finite")
            if value != 0.0:
                cleaned[(int(vector[0]), int(vector[1]))] = value
        object.__setattr__(self, 'entries', dict(sorted(cleaned.items())))

        tol = SOLVER_TOLERANCES['rotation_invariance']
        for (x, y), value in self.entries.items():
            partner = self.entries.get((-y, x), 0.0)
            if abs(partner - value) > tol * max(1.0, abs(value)):
                raise ParameterValidationError(
                    f"coupling is not invariant under (x, y) -> (-y, x): "
                    f"c{(x, y)} = {value}, c{(-y, x)} = {partner}"
                )

    @classmethod
    def zero(cls) -> 'LatticeCoupling':
        return cls({})

    @classmethod
    def delta(cls, value: float) -> 'LatticeCoupling':
        """Value at the origin only"""
        return cls({(0, 0): value})

    @classmethod
    def from_shells(cls, values: Mapping[LatticeVector, float], spacing: int = 1) -> 'LatticeCoupling':
        """
        Build an invariant coupling from one value per orbit

        Args:
            values: Map from orbit representative ((0,0), (1,0) or (1,1)) to value
            spacing: Lattice dilation applied to every orbit point

        Returns:
            LatticeCoupling constant on each dilated orbit
        """
        entries: Dict[LatticeVector, float] = {}
        for representative, value in values.items():
            if representative not in SHELL_ORBITS:
                raise ParameterValidationError(f"unknown shell {representative!r}")
            for x, y in SHELL_ORBITS[representative]:
                entries[(spacing * x, spacing * y)] = value
        return cls(entries)

    @classmethod
    def one_range(cls, value: float = 1.0, spacing: int = 1) -> 'LatticeCoupling':
        """`value` on the five points spacing * z with |z| <= 1"""
        return cls.from_shells({(0, 0): value, (1, 0): value}, spacing)

    @classmethod
    def nearest_neighbor(cls, value: float) -> 'LatticeCoupling':
        return cls.from_shells({(1, 0): value})

    @property
    def vectors(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 2), dtype=int)
        return np.array(list(self.entries.keys()), dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array(list(self.entries.values()), dtype=float)

    @property
    def is_zero(self) -> bool:
        return not self.entries

    def scaled(self, factor: float) -> 'LatticeCoupling':
        return LatticeCoupling({vector: factor * value for vector, value in self.entries.items()})

    def fourier(self, q1, q2) -> np.ndarray:
        """Sum_x c(x) cos(q . x); real because c(x) = c(-x)"""
        q1 = np.asarray(q1, dtype=float)
        q2 = np.asarray(q2, dtype=float)
        total = np.zeros(np.broadcast(q1, q2).shape)
        for (x, y), value in self.entries.items():
            total += value * np.cos(q1 * x + q2 * y)
        return total

    def fourier_complex(self, q1, q2) -> np.ndarray:
        """Sum_x c(x) exp(i q . x) without using the reflection symmetry"""
        q1 = np.asarray(q1, dtype=float)
        q2 = np.asarray(q2, dtype=float)
        total = np.zeros(np.broadcast(q1, q2).shape, dtype=complex)
        for (x, y), value in self.entries.items():
            total += value * np.exp(1j * (q1 * x + q2 * y))
        return total

    def gradient(self, q1, q2) -> np.ndarray:
        """d/dq_j of the transform, stacked along the first axis"""
        q1 = np.asarray(q1, dtype=float)
        q2 = np.asarray(q2, dtype=float)
        shape = np.broadcast(q1, q2).shape
        g = np.zeros((2,) + shape)
        for (x, y), value in self.entries.items():
            s = value * np.sin(q1 * x + q2 * y)
            g[0] -= x * s
            g[1] -= y * s
        return g

    def weighted_mass(self, alpha: float = 0.0) -> float:
        """Sum_x |c(x)| exp(alpha |x|)"""
        return float(sum(abs(v) * math.exp(alpha * math.hypot(x, y)) for (x, y), v in self.entries.items()))

    def support_radius(self) -> float:
        """Weighted mean distance of the support from the origin"""
        total = sum(abs(v) for v in self.entries.values())
        if total == 0.0:
            return 0.0
        return sum(math.hypot(x, y) * abs(v) for (x, y), v in self.entries.items()) / total

    def to_triples(self) -> List[Tuple[int, int, float]]:
        return [(x, y, v) for (x, y), v in self.entries.items()]


@dataclass(frozen=True)
class MomentumProfile:
    """
    Closed-form exchange profile on the torus.

    Every center c contributes [alpha * D_c(k) + 1]^-1 with the periodic
    squared distance D_c(k) = 2(1 - cos(k1 - c1)) + 2(1 - cos(k2 - c2)),
    which reduces to |k - c|^2 near c. The sum is scaled so that its value
    at the first center equals `peak`.
    """

    peak: float
    alpha: float = 1.0
    form: str = 'antinodal_lorentzian'
    centers: Tuple[TorusPoint, ...] = ()

    def __post_init__(self):
        if self.form not in PROFILE_FORMS:
            raise ParameterValidationError(f"unknown profile form {self.form!r}")
        if not self.centers:
            object.__setattr__(self, 'centers', tuple(PROFILE_FORMS[self.form]['centers']))
        object.__setattr__(self, 'centers', tuple((float(c[0]), float(c[1])) for c in self.centers))
        if not math.isfinite(self.peak):
            raise ParameterValidationError("profile peak must be finite")
        if not self.alpha > 0:
            raise ParameterValidationError(f"profile alpha must be > 0, got {self.alpha}")
        self._check_rotation_invariance()

    def _shape(self, k1, k2) -> np.ndarray:
        k1 = np.asarray(k1, dtype=float)
        k2 = np.asarray(k2, dtype=float)
        total = np.zeros(np.broadcast(k1, k2).shape)
        for c1, c2 in self.centers:
            dist = 2.0 * (1.0 - np.cos(k1 - c1)) + 2.0 * (1.0 - np.cos(k2 - c2))
            total += 1.0 / (self.alpha * dist + 1.0)
        return total

    @property
    def amplitude(self) -> float:
        c1, c2 = self.centers[0]
        return self.peak / float(self._shape(c1, c2))

    def evaluate(self, k1, k2) -> np.ndarray:
        return self.amplitude * self._shape(k1, k2)

    def gradient(self, k1, k2) -> np.ndarray:
        k1 = np.asarray(k1, dtype=float)
        k2 = np.asarray(k2, dtype=float)
        shape = np.broadcast(k1, k2).shape
        g = np.zeros((2,) + shape)
        for c1, c2 in self.centers:
            dist = 2.0 * (1.0 - np.cos(k1 - c1)) + 2.0 * (1.0 - np.cos(k2 - c2))
            denom = (self.alpha * dist + 1.0) ** 2
            g[0] -= 2.0 * self.alpha * np.sin(k1 - c1) / denom
            g[1] -= 2.0 * self.alpha * np.sin(k2 - c2) / denom
        return self.amplitude * g

    def _check_rotation_invariance(self) -> None:
        n = GRID_DEFAULTS['rotation_check_samples']
        axis = -math.pi + 2.0 * math.pi * np.arange(n) / n
        k1, k2 = np.meshgrid(axis, axis, indexing='ij')
        values = self._shape(k1, k2)
        rotated = self._shape(k2, -k1)
        deviation = float(np.max(np.abs(values - rotated)))
        if deviation > SOLVER_TOLERANCES['rotation_invariance'] * max(1.0, float(np.max(np.abs(values)))):
            raise ParameterValidationError(
                f"momentum profile is not invariant under (k1, k2) -> (k2, -k1): "
                f"max deviation {deviation:.3e} on the {n}x{n} sample"
            )

    def scaled(self, factor: float) -> 'MomentumProfile':
        return replace(self, peak=self.peak * factor)


Upsilon = Union[LatticeCoupling, MomentumProfile]


@dataclass(frozen=True)
class ModelParams:
    """Single source of truth for the fiber Hamiltonians"""

    epsilon: float
    h_b: float
    U: float
    u: LatticeCoupling
    p1: LatticeCoupling
    p2: LatticeCoupling
    upsilon: Upsilon
    lattice_spacing_nm: float = PROTOTYPICAL_PARAMS['lattice_spacing_nm']
    u_label: str = U_VARIANTS['none']['label']

    def __post_init__(self):
        validator = ParameterValidator()
        validator.require(validator.validate_nonnegative('epsilon', self.epsilon))
        validator.require(validator.validate_h_b(self.h_b, bound_pair=False))
        validator.require(validator.validate_repulsion(self.U))
        if not self.lattice_spacing_nm > 0:
            raise ParameterValidationError("lattice_spacing_nm must be > 0")
        for vector, value in self.u.entries.items():
            if value < 0:
                raise ParameterValidationError(f"extended repulsion u{vector} = {value} is negative")
        odd = [v for v in self.p2.entries if v[0] % 2 or v[1] % 2]
        if odd:
            raise ParameterValidationError(f"p2 must vanish off (2Z)^2, found support at {odd}")
        if not isinstance(self.upsilon, (LatticeCoupling, MomentumProfile)):
            raise ParameterValidationError("upsilon must be a LatticeCoupling or MomentumProfile")

    @property
    def kB_eV_per_K(self) -> float:
        return PHYSICAL_CONSTANTS['kB_eV_per_K']

    @property
    def is_hardcore(self) -> bool:
        return self.U == HARD_CORE

    @property
    def energy_scale(self) -> float:
        """epsilon, or 1 eV for the degenerate epsilon = 0 model"""
        return self.epsilon if self.epsilon > 0 else 1.0

    def pair_size(self) -> float:
        """r_p: weighted mean distance of the p1 and p2 supports from the origin"""
        total = sum(abs(v) for v in self.p1.entries.values()) + sum(abs(v) for v in self.p2.entries.values())
        if total == 0.0:
            return 0.0
        moment = sum(
            math.hypot(x, y) * abs(v)
            for coupling in (self.p1, self.p2)
            for (x, y), v in coupling.entries.items()
        )
        return moment / total

    def require_bound_pair_regime(self) -> None:
        """Raise unless h_b in [0, 1/2], which guarantees b(k) <= z(k)"""
        validator = ParameterValidator()
        validator.require(validator.validate_h_b(self.h_b, bound_pair=True))

    def with_U(self, U: float) -> 'ModelParams':
        return replace(self, U=float(U))

    def with_upsilon(self, upsilon: Upsilon) -> 'ModelParams':
        return replace(self, upsilon=upsilon)

    def with_upsilon_peak(self, peak: float, K: TorusPoint) -> 'ModelParams':
        """
        Rescale the exchange coupling, keeping its shape, so that upsilon_hat(K) = peak

        Args:
            peak: Target value of upsilon_hat at K (eV)
            K: Torus point where the amplitude is pinned

        Returns:
            New ModelParams with the rescaled coupling
        """
        current = float(eval_upsilon_hat(self, K))
        if current == 0.0:
            raise ParameterValidationError(f"upsilon_hat vanishes at K = {K}; cannot rescale its amplitude")
        return self.with_upsilon(self.upsilon.scaled(peak / current))

    def describe(self) -> Dict:
        """JSON-ready description used for fingerprints and manifests"""
        if isinstance(self.upsilon, MomentumProfile):
            upsilon = {
                'profile': self.upsilon.form,
                'peak_eV': self.upsilon.peak,
                'alpha': self.upsilon.alpha,
                'centers': [list(c) for c in self.upsilon.centers],
            }
        else:
            upsilon = {'lattice': self.upsilon.to_triples()}
        return {
            'epsilon_eV': self.epsilon,
            'h_b': self.h_b,
            'U_eV': format_repulsion(self.U),
            'u': self.u.to_triples(),
            'u_label': self.u_label,
            'p1': self.p1.to_triples(),
            'p2': self.p2.to_triples(),
            'upsilon': upsilon,
            'lattice_spacing_nm': self.lattice_spacing_nm,
        }

    def fingerprint(self) -> str:
        return content_hash(self.describe())

    @classmethod
    def prototypical(cls, u_variant: str = 'none', u_nn_eV: Optional[float] = None) -> 'ModelParams':
        """Cuprate-like parameter set with the chosen extended-repulsion variant"""
        if u_variant not in U_VARIANTS:
            raise ParameterValidationError(f"unknown u variant {u_variant!r}")
        if u_variant == 'nearest_neighbor':
            value = U_VARIANTS['nearest_neighbor']['default_u_nn_eV'] if u_nn_eV is None else u_nn_eV
            u = LatticeCoupling.nearest_neighbor(value)
            label = f"{U_VARIANTS[u_variant]['label']} ({value:g} eV)"
        else:
            u = LatticeCoupling.zero()
            label = U_VARIANTS['none']['label']
        return cls(
            epsilon=PROTOTYPICAL_PARAMS['epsilon_eV'],
            h_b=PROTOTYPICAL_PARAMS['h_b'],
            U=PROTOTYPICAL_PARAMS['U_eV'],
            u=u,
            p1=LatticeCoupling.one_range(1.0, spacing=1),
            p2=LatticeCoupling.one_range(1.0, spacing=2),
            upsilon=MomentumProfile(
                peak=PROTOTYPICAL_PARAMS['upsilon_peak_eV'],
                alpha=PROTOTYPICAL_PARAMS['upsilon_alpha'],
            ),
            lattice_spacing_nm=PROTOTYPICAL_PARAMS['lattice_spacing_nm'],
            u_label=label,
        )


@dataclass(frozen=True)
class NondegeneracyReport:
    passed: bool
    method: str
    min_norm_d: float
    argmin_k: Optional[TorusPoint]


def fourier_coupling(c: LatticeCoupling, q) -> np.ndarray:
    """Real Fourier transform Sum_x c(x) cos(q . x) at a torus point (or arrays of points)"""
    return c.fourier(q[0], q[1])


def eval_upsilon_hat(params: ModelParams, k) -> np.ndarray:
    """upsilon_hat(k) in eV"""
    if isinstance(params.upsilon, MomentumProfile):
        return params.upsilon.evaluate(k[0], k[1])
    return params.upsilon.fourier(k[0], k[1])


def eval_upsilon_gradient(params: ModelParams, k) -> np.ndarray:
    return params.upsilon.gradient(k[0], k[1])


def _half_momentum(k) -> Tuple[np.ndarray, np.ndarray]:
    return 0.5 * np.asarray(wrap_torus(k[0])), 0.5 * np.asarray(wrap_torus(k[1]))


def eval_d(params: ModelParams, k, p) -> np.ndarray:
    """
    Pair-shape function d(k)(p) = p1_hat(k + p) + p2_hat(k/2 + p)

    Args:
        params: Model parameters
        k: Total quasi-momentum (scalars)
        p: Relative momentum (scalars or arrays)

    Returns:
        Complex array broadcast over p
    """
    h1, h2 = _half_momentum(k)
    value = params.p1.fourier(k[0] + np.asarray(p[0]), k[1] + np.asarray(p[1]))
    value = value + params.p2.fourier(h1 + np.asarray(p[0]), h2 + np.asarray(p[1]))
    return value.astype(complex)


def eval_d_gradient(params: ModelParams, k, p) -> np.ndarray:
    """d/dk_j of d(k)(p), stacked along the first axis"""
    h1, h2 = _half_momentum(k)
    g = params.p1.gradient(k[0] + np.asarray(p[0]), k[1] + np.asarray(p[1]))
    g = g + 0.5 * params.p2.gradient(h1 + np.asarray(p[0]), h2 + np.asarray(p[1]))
    return g.astype(complex)


def lattice_coefficients_of_d(params: ModelParams, k) -> Dict[LatticeVector, complex]:
    """Lattice coefficients of d(k): exp(ik.x) p1(x) + exp(i(k/2).x) p2(x)"""
    h1, h2 = _half_momentum(k)
    coefficients: Dict[LatticeVector, complex] = {}
    for (x, y), v in params.p1.entries.items():
        coefficients[(x, y)] = coefficients.get((x, y), 0j) + v * np.exp(1j * (k[0] * x + k[1] * y))
    for (x, y), v in params.p2.entries.items():
        coefficients[(x, y)] = coefficients.get((x, y), 0j) + v * np.exp(1j * (float(h1) * x + float(h2) * y))
    return coefficients


def validate_nondegeneracy(params: ModelParams, samples: Optional[int] = None) -> NondegeneracyReport:
    """
    Check that d(k) is not the zero function for any k

    Passes immediately when p1 has support off the even sublattice; otherwise
    evaluates ||d(k)|| exactly from its lattice coefficients on a dense k sample.
    """
    if params.p1.is_zero and params.p2.is_zero:
        raise ParameterValidationError("p1 + p2 vanishes identically")

    if any(x % 2 or y % 2 for x, y in params.p1.entries):
        return NondegeneracyReport(True, 'sufficient_condition', math.nan, None)

    n = samples or GRID_DEFAULTS['nondegeneracy_samples']
    axis = -math.pi + 2.0 * math.pi * np.arange(n) / n
    best, best_k = math.inf, None
    for k1 in axis:
        for k2 in axis:
            coefficients = lattice_coefficients_of_d(params, (k1, k2))
            norm = math.sqrt(sum(abs(c) ** 2 for c in coefficients.values()))
            if norm < best:
                best, best_k = norm, (float(k1), float(k2))

    if best < SOLVER_TOLERANCES['nondegeneracy_min_d']:
        logger.error(f"Nondegeneracy check failed: min ||d(k)|| = {best:.3e} at k = {best_k}")
        raise ParameterValidationError(f"d(k) vanishes identically at k = {best_k} (||d|| = {best:.3e})")
    return NondegeneracyReport(True, 'sampled', best, best_k)
