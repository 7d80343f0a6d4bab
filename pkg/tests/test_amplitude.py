import numpy as np
import pytest

from jetflow.amplitude import (
    AmplitudeSet,
    chi,
    gamma_decompose,
    reconstruct,
    regularize,
    theta_cutoff,
)
from jetflow.errors import BallViolationError
from jetflow.spectral import Grid, SymTensorField
from jetflow.verify import geometric_suite, random_ball_matrices


def test_identity_splits_evenly():
    g2 = gamma_decompose(np.eye(2))
    assert np.allclose(g2, 0.5)
    assert np.allclose(reconstruct(g2), [1.0, 0.0, 1.0])


def test_ball_violation():
    with pytest.raises(BallViolationError):
        gamma_decompose(np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_random_ball_reconstruction():
    rng = np.random.default_rng(4)
    R = random_ball_matrices(500, rng)
    g2 = gamma_decompose(R)
    assert np.abs(reconstruct(g2) - R).max() <= 1e-12
    assert g2.min() >= 0.0
    out = geometric_suite(200, seed=2)
    assert out["reconstruction"] <= 1e-12 and out["min_coefficient"] >= 0


def test_chi_bounds():
    s = np.linspace(0, 10, 2001)
    c = chi(s)
    assert np.all(c >= 2 * np.maximum(1.0, s) - 1e-14)
    assert np.all(s / c <= 0.5 + 1e-15)
    assert np.allclose(c[s >= 1.5], 2 * s[s >= 1.5])
    assert np.allclose(c[s <= 0.5], 2.0)


def test_theta_cutoff_profile():
    r_inf = 2.0
    t = np.linspace(0, 1, 1001)
    th = theta_cutoff(t, (0.0, 1.0), r_inf)
    d = np.minimum(t, 1 - t)
    assert np.all(th[d <= 1 / (8 * r_inf)] == 0.0)
    assert np.all(th[d >= 1 / (4 * r_inf)] == 1.0)
    assert np.all((th >= 0) & (th <= 1))


def test_amplitudes_reassemble_stress():
    grid = Grid(32)
    x1, x2 = grid.mesh
    R = np.stack([0.3 * np.sin(2 * np.pi * x1), 0.2 * np.cos(2 * np.pi * x2), -0.3 * np.sin(2 * np.pi * x1)])
    # a large cutoff scale puts t = 1/2 on the plateau of theta
    reg = regularize(lambda t: SymTensorField(grid, R), (0.0, 1.0), r_inf=4.0)
    amps = AmplitudeSet(reg)
    t = 0.5
    st = reg.state(t)
    assert st["theta"] == 1.0
    # sum_k a_k^2 e_k (x) e_k = rho Id - R
    back = reconstruct(amps.raw(t) ** 2)
    target = np.stack([st["rho"] - R[0], -R[1], st["rho"] - R[2]])
    assert np.abs(back - target).max() < 1e-12
    assert np.abs(reg.primitive_raw(t).sum(axis=0) - target).max() < 1e-12
    assert reg.ratio_max(t) <= 0.5
    # slow fields are static, so their time derivative vanishes
    assert np.abs(amps.dt_raw(t)).max() < 1e-9
