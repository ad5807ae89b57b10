"""Tests for the fiber operator, its resolvent and the hard-core limit."""

import math

import numpy as np
import pytest

from backend.fiber_operator import (
    FiberFunctions, FiberOperator, apply_resolvent, assemble_dense_A11, assemble_dense_full,
    boson_dispersion, compute_R_constants, compute_T, continuum_bottom, fermion_dispersion,
    fiber_derivatives, hardcore_interpolation_check,
)
from backend.model_params import LatticeCoupling
from backend.torus_grid import inner_product
from config.constants import HARD_CORE
from utils.helpers import rotate_point
from utils.validators import DimensionMismatchError, HardCoreUnsupportedError, SpectrumProximityError

from conftest import make_random_params, make_simple_params, random_torus_point


def test_dispersions(simple_params, grid8):
    k = (0.3, -1.2)
    f = fermion_dispersion(simple_params, k, grid8.p1, grid8.p2)
    assert f.min() >= continuum_bottom(simple_params, k) - 1e-14
    assert boson_dispersion(simple_params, (0.0, 0.0)) == 0.0
    assert boson_dispersion(simple_params, (math.pi, math.pi)) == pytest.approx(0.4)
    assert continuum_bottom(simple_params, (0.0, 0.0)) == pytest.approx(0.0)
    assert continuum_bottom(simple_params, (-math.pi, 0.0)) == pytest.approx(2.0)


def test_boson_below_continuum_for_bound_pair_regime():
    params = make_simple_params(h_b=0.5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = random_torus_point(rng)
        assert boson_dispersion(params, k) <= continuum_bottom(params, k) + 1e-14


def test_fiber_derivatives_of_f(simple_params, grid8):
    k, h = (0.5, 2.0), 1e-6
    derivatives = fiber_derivatives(simple_params, grid8, k)
    fd = (fermion_dispersion(simple_params, (k[0] + h, k[1]), grid8.p1, grid8.p2)
          - fermion_dispersion(simple_params, (k[0] - h, k[1]), grid8.p1, grid8.p2)) / (2 * h)
    np.testing.assert_allclose(derivatives.df_dk[0], fd, atol=1e-8)
    db = (boson_dispersion(simple_params, (k[0], k[1] + h)) - boson_dispersion(simple_params, (k[0], k[1] - h))) / (2 * h)
    assert derivatives.db_dk[1] == pytest.approx(db, abs=1e-8)


def test_dense_matrices_are_hermitian(simple_params, grid4):
    A = assemble_dense_full(simple_params, grid4, (0.4, -0.9))
    assert A.shape == (17, 17)
    np.testing.assert_allclose(A, A.conj().T, atol=1e-14)


def test_woodbury_resolvent_matches_dense_solve(grid16):
    for seed in range(10):
        params = make_random_params(seed, with_diagonal_shell=False)
        rng = np.random.default_rng(100 + seed)
        k = random_torus_point(rng)
        op = FiberOperator.assemble(params, grid16, k)
        assert len(op.rank_one_terms) <= 6
        x = float(op.functions.f_k.min()) - rng.uniform(0.1, 1.0) * params.epsilon
        dense = assemble_dense_A11(params, grid16, k) - x * np.eye(grid16.size)
        solver = op.resolvent(x)
        for _ in range(5):
            rhs = rng.standard_normal(grid16.size) + 1j * rng.standard_normal(grid16.size)
            expected = np.linalg.solve(dense, rhs)
            error = np.linalg.norm(solver.apply(rhs) - expected) / np.linalg.norm(expected)
            assert error < 1e-10


def test_resolvent_refuses_spectrum(simple_params, grid8):
    op = FiberOperator.assemble(simple_params, grid8, (0.2, 0.1))
    with pytest.raises(SpectrumProximityError):
        op.resolvent(float(op.functions.f_k.min()))


def test_apply_resolvent_dimension_mismatch(simple_params, grid8):
    op = FiberOperator.assemble(simple_params, grid8, (0.2, 0.1))
    with pytest.raises(DimensionMismatchError):
        apply_resolvent(op, -1.0, np.ones(10))


def test_hardcore_resolvent_annihilates_on_site_component(simple_params, grid8):
    op = FiberOperator.assemble(simple_params.with_U(HARD_CORE), grid8, (1.0, -0.5))
    assert op.hardcore and not any(vector == (0, 0) for vector, _ in op.rank_one_terms)
    rng = np.random.default_rng(5)
    rhs = rng.standard_normal(grid8.size) + 0j
    result = op.resolvent(-0.5).apply(rhs)
    assert abs(np.mean(result)) < 1e-13


def test_hardcore_T_agrees_with_large_U(grid16):
    params = make_random_params(11)
    k = (0.9, -2.1)
    x = continuum_bottom(params, k) - 0.3 * params.epsilon
    hard = compute_T(params.with_U(HARD_CORE), grid16, k, x)
    large = compute_T(params.with_U(1e8), grid16, k, x)
    assert large == pytest.approx(hard, rel=1e-5)
    assert hard < compute_T(params.with_U(1.0), grid16, k, x)


def test_hardcore_T_two_paths(grid8):
    params = make_random_params(4).with_U(HARD_CORE)
    k = (-1.3, 0.6)
    x = continuum_bottom(params, k) - 0.2
    op = FiberOperator.assemble(params, grid8, k)
    via_projection = inner_product(grid8, op.functions.d_k, op.resolvent(x).apply(op.functions.d_k)).real
    assert via_projection == pytest.approx(compute_T(params, grid8, k, x), rel=1e-10)


def test_interpolation_identity_random_sweep(grid8):
    rng = np.random.default_rng(21)
    for sample in range(100):
        params = make_random_params(sample % 10)
        k = random_torus_point(rng)
        x = continuum_bottom(params, k) - rng.uniform(0.01, 2.0) * params.epsilon
        U = float(10 ** rng.uniform(-2, 4))
        residual = hardcore_interpolation_check(params, grid8, k, x, U)
        scale = max(1.0, abs(compute_T(params.with_U(U), grid8, k, x)))
        assert residual < 1e-9 * scale


def test_R_constants_at_zero_U(simple_params, grid8):
    k, x = (0.3, 0.3), -0.7
    constants = compute_R_constants(simple_params, grid8, k, x)
    assert constants.interpolated_T(0.0) == pytest.approx(constants.R_dd)
    assert constants.R_ds == pytest.approx(constants.R_sd.conjugate())
    assert constants.schur() >= 0.0


def test_schur_complement_vanishes_for_s_wave_pair_shape(grid8):
    params = make_simple_params(p1=LatticeCoupling.delta(1.0), p2=LatticeCoupling.zero(),
                                u=LatticeCoupling.from_shells({(1, 0): 0.3}))
    constants = compute_R_constants(params, grid8, (0.9, -1.3), -0.7)
    assert constants.R_dd == constants.R_ss
    assert abs(constants.schur()) <= 1e-14 * constants.R_ss ** 2
    assert abs(constants.hardcore_T()) <= 1e-14 * constants.R_ss


def test_T_is_rotation_invariant(grid8):
    params = make_random_params(2)
    k = (0.8, -2.4)
    x = continuum_bottom(params, k) - 0.4
    assert compute_T(params, grid8, rotate_point(k), x) == pytest.approx(compute_T(params, grid8, k, x), rel=1e-12)


def test_dense_hardcore_unsupported(simple_params, grid4):
    with pytest.raises(HardCoreUnsupportedError):
        assemble_dense_A11(simple_params.with_U(HARD_CORE), grid4, (0.0, 0.0))


def test_background_operator_drops_on_site_term(grid4):
    params = make_simple_params(u=LatticeCoupling.nearest_neighbor(0.5))
    full = FiberOperator.assemble(params, grid4, (0.0, 0.0))
    background = FiberOperator.assemble(params, grid4, (0.0, 0.0), background_only=True)
    assert dict(full.rank_one_terms)[(0, 0)] == pytest.approx(2.0)
    assert (0, 0) not in dict(background.rank_one_terms)
    assert len(background.rank_one_terms) == 4
    functions = FiberFunctions.build(params, grid4, (0.0, 0.0))
    np.testing.assert_array_equal(functions.d_k, full.functions.d_k)
