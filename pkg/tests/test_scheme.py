import json
import math
from fractions import Fraction

import numpy as np
import pytest

from jetflow.assembly import verify_nsr
from jetflow.errors import AliasingError, ConfigError
from jetflow.scheme import (
    CONDITION_KEYS,
    EnergyCorrection,
    EnergyProfile,
    HeatFlow,
    Knobs,
    SchemeParams,
    StepOptions,
    baseline_flow,
    check_exponents,
    condition_exponents,
    div_free_spectrum,
    fit_slope,
    numeric_exponents,
    run_iteration_step,
)
from jetflow.spectral import Grid
from jetflow.timegrid import IntervalSet


def test_osc_error_exponent_by_hand():
    # sigma^{-1} (nu mu)^{1 - 1/r} on the lambda ray
    g, r = Fraction(1, 100), Fraction(1001, 1000)
    expected = -2 * g + (2 - 8 * g) * (1 - 1 / r)
    assert expected == Fraction(-181, 10010)
    assert condition_exponents(0.01, 1.5, 1.001)["osc_error"] == expected


def test_exponents_at_r_equal_one_are_negative():
    exps = condition_exponents(0.001, 1.5, 1)
    assert all(v <= -Fraction(2, 1000) for v in exps.values())


def test_numeric_exponents_agree_with_exact():
    exact = condition_exponents(0.01, 1.5, 1.001)
    num = numeric_exponents(0.01, 1.5, 1.001, 2.0**40)
    for key in CONDITION_KEYS:
        if key == "acc_error":
            assert num[key] == pytest.approx(float(exact[key]), abs=math.log(2) / (40 * math.log(2)))
        else:
            assert num[key] == pytest.approx(float(exact[key]), abs=1e-9)


def test_exponent_validation():
    for bad in ((0.0, 1.5, 1.001), (0.01, 2.0, 1.001), (0.01, 1.5, 1.0)):
        with pytest.raises(ConfigError):
            check_exponents(*bad)
    with pytest.raises(ConfigError):
        Knobs(0, 8, 8, 16, 16)
    with pytest.raises(ConfigError):
        SchemeParams(interval=(0.5, 0.2))


def test_ray_knobs():
    p = SchemeParams.on_ray(0.01, 1.5, 1.001, 2.0**10)
    assert p.knobs.mu == 1024 and p.knobs.sigma == math.ceil(2 ** 0.2)
    assert p.s_p == pytest.approx(0.6)
    assert 1 / p.r == pytest.approx(0.5 + 1 / p.q)


def test_fit_slope_exact_power():
    x = np.array([2.0, 4.0, 8.0, 16.0])
    fit = fit_slope(x, 3.0 * x**-0.75)
    assert fit.slope == pytest.approx(-0.75, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)


def test_heat_flow_validation():
    grid = Grid(32)
    rng = np.random.default_rng(0)
    u0 = div_free_spectrum(grid, 4, rng)
    with pytest.raises(ValueError):
        HeatFlow(grid, u0, alpha=1.2)
    with pytest.raises(ValueError):
        HeatFlow(grid, u0 + 1.0)
    x1, _ = grid.mesh
    with pytest.raises(ValueError):
        HeatFlow(grid, np.stack([np.sin(2 * np.pi * x1), np.zeros_like(x1)]))


def test_heat_flow_solves_stressed_system():
    grid = Grid(64)
    u0 = div_free_spectrum(grid, 8, np.random.default_rng(2), decay=1.0)
    flow = HeatFlow(grid, u0, 1.5, 1e-2)
    res = verify_nsr(grid, flow.velocity, flow.stress, flow.pressure, [0.01, 0.3, 0.9], 1e-6,
                     velocity_dt=flow.velocity_dt)
    assert res.relative <= 1e-12
    e = [flow.energy(t) for t in np.linspace(0, 1, 9)]
    assert np.all(np.diff(e) <= 0)
    R = flow.stress(0.5)
    assert np.allclose(R[0] + R[2], 0.0, atol=1e-13)


def test_baseline_flow_hits_target():
    grid = Grid(64)
    flow = baseline_flow(grid, target=0.4)
    R = flow.stress(0.5)
    peak = float(np.max(np.sqrt(R[0] ** 2 + R[1] ** 2)))
    assert peak == pytest.approx(0.4, rel=1e-6)


def test_energy_profile_forms():
    poly = EnergyProfile(coefficients=[1.0, 0.5])
    assert poly(0.5) == pytest.approx(1.25)
    tab = EnergyProfile(table=([0, 0.5, 1], [1.0, 2.0, 3.0]))
    assert float(tab(0.25)) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        EnergyProfile()


@pytest.fixture(scope="module")
def corrector():
    grid = Grid(128)
    flow = baseline_flow(grid)
    energy = EnergyProfile.shifted(flow.energy, 0.1)
    return EnergyCorrection(flow, energy, IntervalSet([(0.0, 1.0)]), 0.25, 0.1, 16)


def test_energy_corrector_identities(corrector):
    ec = corrector
    for t in (0.3, 0.6, 0.9):
        wb = ec.w_bar(t)
        assert math.sqrt(float(np.mean(wb[0] ** 2 + wb[1] ** 2))) == pytest.approx(ec.rho(t), rel=1e-12)
        pre = ec.deficit(t)
        assert ec.post_deficit(t) == pytest.approx(pre / 100 - 2 * ec.cross(t), rel=1e-10)
        assert abs(ec.cross(t)) <= ec.cross_bound(t)
    assert ec.rho(0.05) == 0.0
    assert np.abs(ec.grid.ops.div(ec.w_bar(0.5))).max() < 1e-9


def test_energy_corrector_keeps_stressed_system(corrector):
    ec = corrector
    res = verify_nsr(ec.grid, ec.velocity, ec.stress, ec.pressure, [0.2, 0.5, 0.8], 1e-4)
    assert res.relative <= 1e-8


def test_energy_corrector_rejects_negative_deficit():
    grid = Grid(32)
    flow = baseline_flow(grid)
    with pytest.raises(ValueError):
        EnergyCorrection(flow, lambda t: 0.0, IntervalSet([(0.0, 1.0)]), 0.25, 0.1, 8)


def test_step_rejects_failing_exponents():
    grid = Grid(64)
    with pytest.raises(ConfigError):
        run_iteration_step(SchemeParams(r=1.01), baseline_flow(grid), grid)


def test_step_rejects_unresolved_grid():
    grid = Grid(32)
    with pytest.raises(AliasingError):
        run_iteration_step(SchemeParams(), baseline_flow(grid), grid)


def test_smoke_step_report(smoke_run):
    rep = smoke_run.report
    d = json.loads(rep.to_json())
    assert d["residuals"]["nsr"] <= 1e-5
    assert d["checks"]["off_E_zero"] is True
    step = d["extra"]["step"]
    assert step["theta_vanishes_at_ends"]
    E = smoke_run.exceptional
    assert E.measure() <= d["exceptional_set"]["measure_bound"] + 1e-12
    for t in smoke_run.times:
        if not E.contains(t):
            P = smoke_run.pert.parts(float(t))
            assert not np.any(P["w_p"]) and not np.any(P["w_a"])
    csv = rep.slices_csv().splitlines()
    assert len(csv) == len(smoke_run.times) + 1
    assert set(d["components"]) >= {"R1", "R_osc", "R_lin"}


def test_step_options_roundtrip():
    d = StepOptions(nsr_extra_steps=(2e-6,)).to_dict()
    assert d["nsr_extra_steps"] == [2e-6] and "progress" not in d
