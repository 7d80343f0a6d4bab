import math

import numpy as np
import pytest

from jetflow.errors import AliasingError
from jetflow.spectral import (
    Grid,
    NormSpec,
    ScalarField,
    SymTensorField,
    VectorField,
    antidiv_B,
    antidiv_R,
    dilate,
    div,
    grad,
    laplacian,
    leray_project,
    lp_norm,
    parseval_l2,
    random_band_limited,
    translate,
)


@pytest.fixture
def grid():
    return Grid(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        Grid(48)
    with pytest.raises(ValueError):
        Grid(64, oversample=0)


def test_require_band():
    Grid(64).require_band(16)
    with pytest.raises(AliasingError, match="grid cannot resolve"):
        Grid(64).require_band(17)


def test_derivative_of_single_mode(grid):
    x1, x2 = grid.mesh
    f = ScalarField(grid, np.sin(2 * np.pi * (3 * x1 + 2 * x2)))
    g = grad(f).values
    ref = 2 * np.pi * np.cos(2 * np.pi * (3 * x1 + 2 * x2))
    assert np.allclose(g[0], 3 * ref, atol=1e-11)
    assert np.allclose(g[1], 2 * ref, atol=1e-11)
    lap = laplacian(f).values
    assert np.allclose(lap, -4 * np.pi**2 * 13 * f.values, atol=1e-9)


def test_antidiv_R_inverts_div(grid, rng):
    v = random_band_limited(grid, "vector", 8, rng)
    R = antidiv_R(v)
    assert np.allclose(R.trace().values, 0.0, atol=1e-14)
    back = div(R).values
    vm = v.values - v.values.mean(axis=(1, 2), keepdims=True)
    assert np.abs(back - vm).max() <= 1e-12 * np.abs(vm).max()


def test_antidiv_B_needs_zero_mean(grid, rng):
    v = random_band_limited(grid, "vector", 4, rng)
    a = random_band_limited(grid, "symtensor", 4, rng)
    if abs(a.values.mean()) < 1e-6:
        a = SymTensorField(grid, a.values + 1.0)
    with pytest.raises(ValueError):
        antidiv_B(v, a)


def test_leray_splits_field(grid, rng):
    v = random_band_limited(grid, "vector", 8, rng, zero_mean=True)
    pv, qv = leray_project(v)
    assert np.allclose(pv.values + qv.values, v.values, atol=1e-13)
    assert np.abs(div(pv).values).max() < 1e-11
    # orthogonal pieces
    assert abs(np.mean(np.sum(pv.values * qv.values, axis=0))) < 1e-14


def test_dilate_and_translate(grid):
    x1, x2 = grid.mesh
    f = ScalarField(grid, np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * 2 * x2))
    d = dilate(f, 3).values
    assert np.allclose(d, np.cos(6 * np.pi * x1) * np.sin(12 * np.pi * x2), atol=1e-12)
    t = translate(f, (0.25, 0.0)).values
    assert np.allclose(t, np.cos(2 * np.pi * (x1 + 0.25)) * np.sin(4 * np.pi * x2), atol=1e-12)


def test_l1_of_sine_matches_closed_form():
    # ||sin(2 pi x1)||_1 = 2 / pi; the line integrals are exact here
    grid = Grid(32, oversample=4)
    x1, _ = grid.mesh
    f = ScalarField(grid, np.sin(2 * np.pi * x1))
    assert lp_norm(f, 1.0) == pytest.approx(2 / math.pi, rel=1e-12)


def test_lp_norms_of_constant_and_l2_parseval(grid, rng):
    one = ScalarField(grid, np.ones((64, 64)))
    for p in (1.0, 1.5, 2.0, math.inf):
        assert lp_norm(one, p) == pytest.approx(1.0)
    v = random_band_limited(grid, "vector", 8, rng)
    assert parseval_l2(v) == pytest.approx(lp_norm(v, 2.0), rel=1e-12)


def test_sobolev_norm_of_mode(grid):
    x1, _ = grid.mesh
    f = ScalarField(grid, math.sqrt(2) * np.cos(2 * np.pi * 5 * x1))
    s = 0.6
    expected = (1 + 4 * np.pi**2 * 25) ** (s / 2)
    assert lp_norm(f, NormSpec(2.0, s)) == pytest.approx(expected, rel=1e-12)


def test_tensor_magnitude_is_operator_norm(grid):
    vals = np.zeros((3, 64, 64))
    vals[0], vals[1], vals[2] = 3.0, 0.0, -1.0
    T = SymTensorField(grid, vals)
    assert np.allclose(T.magnitude(), 3.0)


def test_vector_outer_and_dot(grid, rng):
    a = random_band_limited(grid, "vector", 4, rng)
    b = random_band_limited(grid, "vector", 4, rng)
    o = a.outer(b).values
    assert np.allclose(o[1], 0.5 * (a.values[0] * b.values[1] + a.values[1] * b.values[0]))
    assert np.allclose(a.dot(b).values, np.sum(a.values * b.values, axis=0))
    assert isinstance(a + b, VectorField)
