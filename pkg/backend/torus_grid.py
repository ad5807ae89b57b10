"""
Uniform N x N discretization of the torus [-pi, pi)^2 with the normalized
Haar measure, lattice Fourier maps and grid-function persistence.
"""

import math
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.constants import FILE_FORMATS
from utils.helpers import wrap_torus
from utils.validators import (
    DimensionMismatchError, GridValidator, ParameterValidationError, WindowTooLargeError,
)

logger = logging.getLogger(__name__)

GridFunction = np.ndarray


@dataclass(frozen=True)
class TorusGrid:
    """Points p_{j,l} = (-pi + 2 pi j / N, -pi + 2 pi l / N), flattened as j * N + l"""

    N: int

    def __post_init__(self):
        ok, message = GridValidator().validate_grid_size(self.N)
        if not ok:
            raise ParameterValidationError(message)

    @cached_property
    def axis(self) -> np.ndarray:
        return -math.pi + 2.0 * math.pi * np.arange(self.N) / self.N

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        P1, P2 = np.meshgrid(self.axis, self.axis, indexing='ij')
        return P1.ravel(), P2.ravel()

    @property
    def p1(self) -> np.ndarray:
        return self.mesh[0]

    @property
    def p2(self) -> np.ndarray:
        return self.mesh[1]

    @property
    def size(self) -> int:
        return self.N * self.N

    @property
    def weight(self) -> float:
        return 1.0 / self.size

    @cached_property
    def points(self) -> np.ndarray:
        return np.column_stack(self.mesh)

    def kgrid(self) -> List[Tuple[float, float]]:
        """All grid points as torus-point tuples, in flattened order"""
        return [(float(a), float(b)) for a, b in self.points]

    def index_of(self, k: Tuple[float, float], tol: float = 1e-9) -> Optional[int]:
        """Flattened index of a grid point, or None when k is off the grid"""
        step = 2.0 * math.pi / self.N
        indices = []
        for component in k:
            position = (wrap_torus(component) + math.pi) / step
            nearest = int(round(position)) % self.N
            if abs(position - round(position)) > tol:
                return None
            indices.append(nearest)
        return indices[0] * self.N + indices[1]

    @cached_property
    def rotation_permutation(self) -> np.ndarray:
        """perm with (R phi)[i] = phi[perm[i]], where R phi(k1, k2) = phi(k2, -k1)"""
        j, l = np.meshgrid(np.arange(self.N), np.arange(self.N), indexing='ij')
        negated = (-j) % self.N
        return (l * self.N + negated).ravel()

    def check_length(self, phi: np.ndarray) -> None:
        ok, message = GridValidator().validate_length(self.N, np.asarray(phi).size)
        if not ok:
            raise DimensionMismatchError(message)


@dataclass(frozen=True)
class LatticeMap:
    """Values on the lattice window |x1|, |x2| <= W, stored as values[x1 + W, x2 + W]"""

    window: int
    values: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.window, self.window + 1)

    def at(self, x: Tuple[int, int]):
        return self.values[x[0] + self.window, x[1] + self.window]

    def radii(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.offsets, self.offsets, indexing='ij')
        return np.hypot(X1, X2)

    def to_frame(self, value_column: str = 'density') -> pd.DataFrame:
        X1, X2 = np.meshgrid(self.offsets, self.offsets, indexing='ij')
        return pd.DataFrame({
            'x': X1.ravel(),
            'y': X2.ravel(),
            value_column: np.asarray(self.values).ravel(),
        })


def inner_product(grid: TorusGrid, phi: GridFunction, psi: GridFunction) -> complex:
    """(1/N^2) Sum_p conj(phi(p)) psi(p)"""
    grid.check_length(phi)
    grid.check_length(psi)
    return complex(np.vdot(phi, psi) / grid.size)


def norm(grid: TorusGrid, phi: GridFunction) -> float:
    return math.sqrt(max(inner_product(grid, phi, phi).real, 0.0))


def plane_wave(grid: TorusGrid, x: Tuple[int, int]) -> GridFunction:
    """e^{i p . x} at every grid point"""
    return np.exp(1j * (grid.p1 * x[0] + grid.p2 * x[1]))


def _window_phases(grid: TorusGrid, window: int) -> np.ndarray:
    offsets = np.arange(-window, window + 1)
    return np.exp(-1j * np.outer(grid.axis, offsets))


def to_lattice(grid: TorusGrid, phi: GridFunction, window: int) -> LatticeMap:
    """
    Inverse lattice Fourier map on a window

    Args:
        grid: Torus grid
        phi: Grid function
        window: Half-width W <= N/2

    Returns:
        LatticeMap with psi(x) = (1/N^2) Sum_p e^{-i p.x} phi(p)
    """
    grid.check_length(phi)
    ok, message = GridValidator().validate_window(grid.N, window)
    if not ok:
        raise WindowTooLargeError(message)
    E = _window_phases(grid, window)
    F = np.asarray(phi, dtype=complex).reshape(grid.N, grid.N)
    values = E.T @ F @ E / grid.size
    return LatticeMap(window, values)


def from_lattice(grid: TorusGrid, lattice: LatticeMap) -> GridFunction:
    """Re-synthesize Sum_x psi(x) e^{i p.x} over the window"""
    E = np.conj(_window_phases(grid, lattice.window))
    return (E @ np.asarray(lattice.values, dtype=complex) @ E.T).ravel()


def rotate_grid_function(grid: TorusGrid, phi: GridFunction) -> GridFunction:
    """(R phi)(k1, k2) = phi(k2, -k1) as an exact permutation of grid values"""
    grid.check_length(phi)
    return np.asarray(phi)[grid.rotation_permutation]


def reflect_grid_function(grid: TorusGrid, phi: GridFunction) -> GridFunction:
    """phi(-k)"""
    return rotate_grid_function(grid, rotate_grid_function(grid, phi))


def save_grid_function_csv(grid: TorusGrid, phi: GridFunction, path: Union[str, Path]) -> Path:
    """Write `p1,p2,re,im` rows in flattened grid order"""
    grid.check_length(phi)
    phi = np.asarray(phi, dtype=complex)
    frame = pd.DataFrame({
        'p1': grid.p1, 'p2': grid.p2, 're': phi.real, 'im': phi.imag,
    }, columns=FILE_FORMATS['grid_function_columns'])
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FILE_FORMATS['float_format'])
    return path


def load_grid_function_csv(path: Union[str, Path]) -> Tuple[TorusGrid, GridFunction]:
    frame = pd.read_csv(path)
    N = int(round(math.sqrt(len(frame))))
    grid = TorusGrid(N)
    grid.check_length(frame['re'].to_numpy())
    return grid, frame['re'].to_numpy() + 1j * frame['im'].to_numpy()


def save_grid_function_npz(grid: TorusGrid, phi: GridFunction, path: Union[str, Path]) -> Path:
    """Binary container: header fields `format`, `format_version`, `N` plus `values`"""
    grid.check_length(phi)
    path = Path(path)
    with open(path, 'wb') as handle:
        np.savez(
            handle,
            format=np.array(FILE_FORMATS['grid_function_format']),
            format_version=np.array(FILE_FORMATS['format_version']),
            N=np.array(grid.N),
            values=np.asarray(phi, dtype=complex),
        )
    return path


def load_grid_function_npz(path: Union[str, Path]) -> Tuple[TorusGrid, GridFunction]:
    with np.load(path, allow_pickle=False) as data:
        if str(data['format']) != FILE_FORMATS['grid_function_format']:
            raise ParameterValidationError(f"{path} is not a grid-function container")
        if int(data['format_version']) > FILE_FORMATS['format_version']:
            raise ParameterValidationError(f"{path} has unsupported format version {int(data['format_version'])}")
        grid = TorusGrid(int(data['N']))
        values = np.array(data['values'])
    grid.check_length(values)
    return grid, values
