import math

import numpy as np
import pytest

from jetflow import bumps
from jetflow.errors import AliasingError, SupportError
from jetflow.jets import JetFamily, JetParams, continuous_constant, directional_derivative_bound, gradient_norm
from jetflow.spectral import Grid
from jetflow.temporal import build_temporal, gauss_time_norm, smooth_pieces
from jetflow.timegrid import fd6


def test_bump_derivatives_match_differences():
    s = np.linspace(-0.95, 0.95, 41)
    h = 1e-4
    assert np.allclose(fd6(bumps.bump, s, h), bumps.bump_d1(s), atol=1e-9)
    assert np.allclose(fd6(bumps.bump_d1, s, h), bumps.bump_d2(s), atol=1e-7)


def test_bump_transform_at_zero_is_integral():
    assert bumps.bump_transform(np.array([0.0]))[0] == pytest.approx(bumps.bump_integral().total, rel=1e-13)


def test_smooth_step_and_ramp():
    x = np.linspace(-1, 2, 301)
    st = bumps.smooth_step(x)
    assert np.all(st[x <= 0] == 0.0) and np.all(st[x >= 1] == 1.0)
    assert np.all(np.diff(st) >= 0)
    y = np.linspace(-2, 2, 401)
    ramp = bumps.smooth_ramp(y, 0.5)
    assert np.all(ramp >= np.maximum(y, 0) - 1e-15)
    outside = np.abs(y) >= 0.5
    assert np.array_equal(ramp[outside], np.maximum(y, 0)[outside])
    assert np.all(np.diff(ramp) >= -1e-15)


@pytest.mark.parametrize("nu,mu", [(8, 16), (8, 32), (16, 64)])
def test_profile_normalization(nu, mu):
    fam = JetFamily(JetParams(nu, mu))
    for i in range(len(fam)):
        assert fam.profile_norm(i, "w", 2.0) ** 2 == pytest.approx(1.0, abs=1e-8)


def test_continuous_constant_positive():
    assert continuous_constant() > 0


def test_directional_derivative_smaller_than_gradient():
    # mu = 16 nu: the longitudinal derivative is the small corrector profile
    fam = JetFamily(JetParams(8, 128))
    for i in range(len(fam)):
        ratio = directional_derivative_bound(fam, i, 2.0) / gradient_norm(fam, i, 2.0)
        assert ratio <= 2 * 8 / 128


def test_jet_params_validation():
    with pytest.raises(ValueError):
        JetParams(16, 8)
    with pytest.raises(SupportError):
        JetParams(8, 16, centers=((0.25, 0.25), (0.3, 0.3), (0.25, 0.75), (0.75, 0.75)))


def test_grid_jets_reject_unresolved_band():
    with pytest.raises(AliasingError):
        JetFamily(JetParams(8, 64), Grid(128), sigma=2)


def test_grid_jets_are_divergence_free_and_orthogonal_pieces():
    grid = Grid(128)
    fam = JetFamily(JetParams(8, 16), grid)
    ops = grid.ops
    for i in range(len(fam)):
        w, wc, psi = fam.fields(i)
        # W + W^c = grad^perp Psi
        assert np.abs(w.values + wc.values - ops.perp(psi.values)).max() < 1e-10 * np.abs(w.values).max()
        assert np.abs(ops.div(w.values + wc.values)).max() < 1e-9


@pytest.mark.parametrize("kappa,sigma,omega", [(8, 1, 16), (16, 2, 64), (32, 4, 8)])
def test_temporal_profiles(kappa, sigma, omega):
    prof = build_temporal(kappa, sigma, omega)
    for k in range(len(prof)):
        pieces = smooth_pieces(prof, k)
        # int_0^1 g_k^2 = 1
        l2 = gauss_time_norm(lambda t: prof.g(k, t), pieces, 2.0)
        assert l2**2 == pytest.approx(1.0, abs=1e-8)
        # ||g_k||_p within a factor 2 of kappa^(1/2 - 1/p)
        p = 1.5
        ratio = gauss_time_norm(lambda t: prof.g(k, t), pieces, p) / kappa ** (0.5 - 1 / p)
        assert 0.5 <= ratio <= 2.0
        t = np.linspace(0.013, 0.987, 23)
        dh = fd6(lambda s: prof.h(k, s), t, 1e-5) / sigma
        assert np.allclose(dh, prof.g(k, t) ** 2 - 1.0, atol=1e-6 * kappa)
        dphi = fd6(lambda s: prof.phi(k, s), t, 1e-5)
        assert np.allclose(dphi, omega * prof.g(k, t), atol=1e-6 * omega * kappa)


def test_temporal_h_vanishes_on_whole_periods():
    prof = build_temporal(8, 2, 16)
    for k in range(len(prof)):
        assert prof.h(k, 0.0) == 0.0
        assert abs(prof.h(k, 0.5)) < 1e-13
        assert abs(prof.h(k, 1.0)) < 1e-13


def test_temporal_windows_disjoint_and_overlap_rejected():
    prof = build_temporal(8, 1, 16)
    t = np.linspace(0, 1, 2001)
    active = np.array([[prof.g(k, s) > 0 for s in t] for k in range(4)])
    assert active.sum(axis=0).max() <= 1
    with pytest.raises(SupportError):
        build_temporal(2, 1, 16)
    with pytest.raises(AliasingError):
        build_temporal(64, 8, 16, time_resolution=1e-3)


def test_temporal_validation():
    with pytest.raises(ValueError):
        build_temporal(0.5, 1, 1)
    with pytest.raises(ValueError):
        build_temporal(8, 1.5, 1)
    assert math.isclose(build_temporal(8, 1, 16).offsets[0], 0.125)
