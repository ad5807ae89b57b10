import math

import numpy as np
import pytest

from backend.torus_grid import (
    LatticeMap, TorusGrid, from_lattice, inner_product, load_grid_function_csv,
    load_grid_function_npz, norm, plane_wave, reflect_grid_function, rotate_grid_function,
    save_grid_function_csv, save_grid_function_npz, to_lattice,
)
from utils.validators import DimensionMismatchError, ParameterValidationError, WindowTooLargeError


@pytest.mark.parametrize("N", [3, 2, 7])
def test_invalid_grid_sizes(N):
    with pytest.raises(ParameterValidationError):
        TorusGrid(N)


def test_grid_points_and_measure(grid4):
    assert grid4.size == 16
    assert grid4.weight == pytest.approx(1 / 16)
    np.testing.assert_allclose(grid4.axis, [-math.pi, -math.pi / 2, 0.0, math.pi / 2])
    # flattened index j * N + l with p = (axis[j], axis[l])
    assert grid4.points[1 * 4 + 3] == pytest.approx([-math.pi / 2, math.pi / 2])


def test_index_of(grid8):
    assert grid8.index_of((-math.pi, -math.pi)) == 0
    assert grid8.index_of((math.pi, 0.0)) == grid8.index_of((-math.pi, 0.0))
    assert grid8.index_of((0.1, 0.0)) is None


def test_inner_product_and_norm(grid8):
    ones = np.ones(grid8.size)
    assert inner_product(grid8, ones, ones) == pytest.approx(1.0)
    wave = plane_wave(grid8, (1, 2))
    assert abs(inner_product(grid8, ones, wave)) < 1e-14
    assert norm(grid8, 3.0 * wave) == pytest.approx(3.0)


def test_dimension_mismatch(grid8):
    with pytest.raises(DimensionMismatchError):
        inner_product(grid8, np.ones(10), np.ones(grid8.size))


def test_rotation_is_exact_quarter_turn(grid8):
    phi = np.cos(grid8.p1) + 2.0 * np.sin(grid8.p2)
    rotated = rotate_grid_function(grid8, phi)
    np.testing.assert_allclose(rotated, np.cos(grid8.p2) + 2.0 * np.sin(-grid8.p1), atol=1e-14)
    four = rotated
    for _ in range(3):
        four = rotate_grid_function(grid8, four)
    np.testing.assert_array_equal(four, phi)


def test_reflection(grid8):
    phi = np.sin(grid8.p1) + np.cos(2 * grid8.p2)
    np.testing.assert_allclose(reflect_grid_function(grid8, phi), -np.sin(grid8.p1) + np.cos(2 * grid8.p2),
                               atol=1e-14)


def test_plane_wave_maps_to_lattice_delta(grid8):
    lattice = to_lattice(grid8, plane_wave(grid8, (2, -1)), window=3)
    expected = np.zeros((7, 7))
    expected[2 + 3, -1 + 3] = 1.0
    np.testing.assert_allclose(np.abs(lattice.values), expected, atol=1e-13)
    assert abs(lattice.at((2, -1))) == pytest.approx(1.0)


def test_band_limited_function_resynthesizes(grid8):
    phi = 0.5 + np.cos(grid8.p1) - 0.25j * np.sin(grid8.p1 + grid8.p2)
    lattice = to_lattice(grid8, phi, window=2)
    np.testing.assert_allclose(from_lattice(grid8, lattice), phi, atol=1e-13)


def test_parseval_on_full_window(grid8):
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(grid8.size) + 1j * rng.standard_normal(grid8.size)
    lattice = to_lattice(grid8, phi, window=grid8.N // 2)
    # x = +N/2 duplicates x = -N/2 on the torus
    total = float(np.sum(np.abs(lattice.values[:-1, :-1]) ** 2))
    assert total == pytest.approx(norm(grid8, phi) ** 2, rel=1e-12)


def test_window_too_large(grid8):
    with pytest.raises(WindowTooLargeError):
        to_lattice(grid8, np.ones(grid8.size), window=5)


def test_lattice_map_frame_and_radii():
    lattice = LatticeMap(1, np.arange(9.0).reshape(3, 3))
    frame = lattice.to_frame('density')
    assert list(frame.columns) == ['x', 'y', 'density']
    assert frame.iloc[0].tolist() == [-1, -1, 0.0]
    assert lattice.radii()[2, 2] == pytest.approx(math.sqrt(2))


def test_grid_function_files(tmp_path, grid4):
    phi = np.exp(1j * grid4.p1) * (1.0 + grid4.p2 ** 2)
    csv_grid, csv_values = load_grid_function_csv(save_grid_function_csv(grid4, phi, tmp_path / 'phi.csv'))
    npz_grid, npz_values = load_grid_function_npz(save_grid_function_npz(grid4, phi, tmp_path / 'phi.npz'))
    assert csv_grid.N == npz_grid.N == 4
    np.testing.assert_allclose(csv_values, phi, rtol=1e-15)
    np.testing.assert_array_equal(npz_values, phi)
    assert (tmp_path / 'phi.csv').read_text().splitlines()[0] == 'p1,p2,re,im'
