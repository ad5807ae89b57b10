import math

import numpy as np
import pytest

from backend.model_params import LatticeCoupling, ModelParams
from backend.torus_grid import TorusGrid


def make_simple_params(**overrides) -> ModelParams:
    """Unit-scale model with a short-range lattice exchange coupling"""
    values = dict(
        epsilon=1.0,
        h_b=0.1,
        U=2.0,
        u=LatticeCoupling.zero(),
        p1=LatticeCoupling.one_range(1.0, spacing=1),
        p2=LatticeCoupling.one_range(1.0, spacing=2),
        upsilon=LatticeCoupling.from_shells({(0, 0): 0.4, (1, 0): 0.1}),
    )
    values.update(overrides)
    return ModelParams(**values)


def make_random_params(seed: int, with_diagonal_shell: bool = True) -> ModelParams:
    """Random rotation-invariant model; p1 always has support off the even sublattice"""
    rng = np.random.default_rng(seed)
    u_shells = {(1, 0): rng.uniform(0.0, 1.0)}
    if with_diagonal_shell:
        u_shells[(1, 1)] = rng.uniform(0.0, 0.5)
    return ModelParams(
        epsilon=rng.uniform(0.5, 1.5),
        h_b=rng.uniform(0.0, 0.5),
        U=rng.uniform(0.0, 5.0),
        u=LatticeCoupling.from_shells(u_shells),
        p1=LatticeCoupling.from_shells({
            (0, 0): rng.uniform(-1.0, 1.0),
            (1, 0): rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.0),
            (1, 1): rng.uniform(-0.5, 0.5),
        }),
        p2=LatticeCoupling.from_shells({
            (0, 0): rng.uniform(-1.0, 1.0),
            (1, 0): rng.uniform(-1.0, 1.0),
        }, spacing=2),
        upsilon=LatticeCoupling.from_shells({
            (0, 0): rng.uniform(0.2, 0.6),
            (1, 0): rng.uniform(-0.04, 0.04),
        }),
    )


def random_torus_point(rng: np.random.Generator):
    return (float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(-math.pi, math.pi)))


@pytest.fixture
def simple_params() -> ModelParams:
    return make_simple_params()


@pytest.fixture
def weak_params() -> ModelParams:
    """Exchange coupling of 0.01 eps: truncated series converge quickly"""
    return make_simple_params(upsilon=LatticeCoupling.delta(0.01))


@pytest.fixture
def decoupled_params() -> ModelParams:
    return make_simple_params(upsilon=LatticeCoupling.zero())


@pytest.fixture
def proto_params() -> ModelParams:
    return ModelParams.prototypical()


@pytest.fixture
def grid4() -> TorusGrid:
    return TorusGrid(4)


@pytest.fixture
def grid8() -> TorusGrid:
    return TorusGrid(8)


@pytest.fixture
def grid16() -> TorusGrid:
    return TorusGrid(16)


@pytest.fixture
def grid32() -> TorusGrid:
    return TorusGrid(32)
