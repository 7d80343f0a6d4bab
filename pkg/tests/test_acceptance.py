"""Acceptance suite: one pass/fail line per criterion, tolerances pinned.

The end-to-end step on 512^2 takes several minutes and runs once per
module.  Lines are echoed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from jetflow.assembly import verify_nsr
from jetflow.jets import JetFamily, JetParams
from jetflow.scheme import (
    EnergyCorrection,
    EnergyProfile,
    HeatFlow,
    Knobs,
    SchemeParams,
    StepOptions,
    baseline_flow,
    check_exponents,
    div_free_spectrum,
    fit_slope,
    run_iteration_step,
)
from jetflow.spectral import Grid
from jetflow.sweeps import run_sweep
from jetflow.timegrid import IntervalSet
from jetflow.verify import geometric_suite, operator_suite

TOL_OPERATOR = 1e-12
TOL_GEOMETRIC = 1e-12
TOL_NORMALIZATION = 1e-8
TOL_SLOPE = 0.1
TOL_DIV = 1e-10
TOL_MEAN_STRESS = 1e-10
TOL_COMPLETENESS = 1e-5
TOL_NSR = 1e-5
ORDER_TARGET, ORDER_TOL = 6.0, 1.0
TOL_RHO = 1e-8
TOL_DEFICIT = 1e-6
TOL_UNIVERSAL_NSR = 1e-8
TOL_SELF_CONVERGENCE = 0.01

E2E_KNOBS = Knobs(2, 16, 16, 64, 64)
NSR_STEPS = (1e-6, 2e-6, 4e-6)


@pytest.fixture(scope="module")
def e2e():
    grid = Grid(512)
    flow = baseline_flow(grid)
    params = SchemeParams(knobs=E2E_KNOBS)
    opt = StepOptions(coarse=8, per_component=8, nsr_step=NSR_STEPS[0], nsr_extra_steps=NSR_STEPS[1:],
                      check=False)
    t0 = time.perf_counter()
    res = run_iteration_step(params, flow, grid, opt)
    return res, time.perf_counter() - t0


def test_criterion_01_operator_identities(acceptance):
    t0 = time.perf_counter()
    out = operator_suite(n=64, count=100, seed=0)
    dt = time.perf_counter() - t0
    worst = max(out.values())
    ok = worst <= TOL_OPERATOR and dt < 10.0
    acceptance(1, ok, f"operator identities max relative residual {worst:.2e} (<= {TOL_OPERATOR:g}), {dt:.2f} s")
    assert ok


def test_criterion_02_geometric_decomposition(acceptance):
    t0 = time.perf_counter()
    out = geometric_suite(count=1000, seed=0)
    dt = time.perf_counter() - t0
    ok = out["reconstruction"] <= TOL_GEOMETRIC and out["min_coefficient"] >= 0.0 and dt < 1.0
    acceptance(2, ok, f"reconstruction {out['reconstruction']:.2e}, min coefficient "
                      f"{out['min_coefficient']:.2e}, {dt:.3f} s")
    assert ok


def test_criterion_03_jet_normalization(acceptance):
    settings = [(128, 8, 16, 1), (256, 8, 32, 1), (256, 16, 32, 2)]
    worst = 0.0
    for n, nu, mu, sigma in settings:
        profile = JetFamily(JetParams(nu, mu))
        grid_form = JetFamily(JetParams(nu, mu), Grid(n), sigma=sigma)
        for i in range(len(profile)):
            ek = np.outer(profile.e[i], profile.e[i])
            worst = max(worst, abs(profile.profile_norm(i, "w", 2.0) ** 2 - 1.0))
            W = grid_form.fields(i)[0].values
            M = np.array([[np.mean(W[a] * W[b]) for b in range(2)] for a in range(2)])
            worst = max(worst, float(np.abs(M - ek).max()))
    ok = worst <= TOL_NORMALIZATION
    acceptance(3, ok, f"mean W_k (x) W_k - e_k (x) e_k max {worst:.2e} over 3 settings (<= {TOL_NORMALIZATION:g})")
    assert ok


SWEEPS = [
    # quantity, axis, values, p, nu = mu^a, base knobs
    ("W", "mu", [32, 64, 128], 1.0, 0.9, Knobs(1, 8, 8, 16, 16)),
    ("W", "nu", [8, 16, 32], 1.5, None, Knobs(1, 8, 8, 256, 16)),
    ("Wc", "mu", [32, 64, 128], 1.5, None, Knobs(1, 8, 8, 16, 16)),
    ("Wc", "nu", [8, 16, 32], 1.5, None, Knobs(1, 8, 8, 256, 16)),
    ("Psi", "mu", [32, 64, 128], 1.5, None, Knobs(1, 8, 8, 16, 16)),
    ("Psi", "nu", [8, 16, 32], 1.0, None, Knobs(1, 8, 8, 256, 16)),
    ("g", "kappa", [8, 16, 32], 1.5, None, Knobs(1, 8, 8, 16, 16)),
    ("E", "kappa", [8, 16, 32], 1.5, None, Knobs(1, 8, 8, 16, 16)),
    ("w_o", "sigma", [2, 4, 8], 1.5, None, Knobs(1, 8, 8, 16, 16)),
    ("R_osc_t", "sigma", [2, 4, 8], 1.5, None, Knobs(1, 8, 8, 16, 16)),
]


def test_criterion_04_scaling_laws(acceptance):
    t0 = time.perf_counter()
    rows, ok = [], True
    for q, axis, values, p, nu_power, base in SWEEPS:
        res = run_sweep(q, axis, values, base, p, nu_power=nu_power)
        dev = abs(res.fit.slope - res.predicted)
        ok = ok and dev <= TOL_SLOPE
        rows.append(f"{q}/{axis} {res.fit.slope:+.3f} vs {res.predicted:+.3f}")
    dt = time.perf_counter() - t0
    ok = ok and dt < 300.0
    acceptance(4, ok, f"{len(SWEEPS)} sweeps within +-{TOL_SLOPE:g} in {dt:.0f} s: " + "; ".join(rows))
    assert ok


def test_criterion_05_divergence_and_support(acceptance, e2e, smoke_run):
    res, _ = e2e
    div = max(res.report.checks["div_free"], smoke_run.report.checks["div_free"])
    off = res.report.checks["off_E_zero"] and smoke_run.report.checks["off_E_zero"]
    ok = div <= TOL_DIV and off
    acceptance(5, ok, f"max ||div w||_2/||w||_2 {div:.2e} (<= {TOL_DIV:g}); w_p = w_c = w_a = 0 off E: {off}")
    assert ok


def test_criterion_06_mean_stress_identity_and_completeness(acceptance, smoke_run):
    lem = smoke_run.report.checks["mean_stress"]
    comp = smoke_run.report.residuals["completeness"]
    ok = lem <= TOL_MEAN_STRESS and comp <= TOL_COMPLETENESS
    acceptance(6, ok, f"smoke run: mean-stress identity {lem:.2e} (<= {TOL_MEAN_STRESS:g}), "
                      f"decomposition completeness {comp:.2e} (<= {TOL_COMPLETENESS:g})")
    assert ok


def test_criterion_07_end_to_end_residual(acceptance, e2e):
    res, runtime = e2e
    by = {h: r.relative for h, r in res.nsr.items()}
    main = by[NSR_STEPS[0]]
    order = math.log2(by[NSR_STEPS[2]] / by[NSR_STEPS[1]])
    ok = main <= TOL_NSR and abs(order - ORDER_TARGET) <= ORDER_TOL and runtime < 900.0
    steps = ", ".join(f"h={h:g}: {v:.2e}" for h, v in by.items())
    acceptance(7, ok, f"512^2 (2,16,16,64,64): NSR {main:.2e} (<= {TOL_NSR:g}); {steps}; "
                      f"observed order {order:.2f}; {runtime:.0f} s")
    assert ok


def test_criterion_08_exponent_checker(acceptance):
    t0 = time.perf_counter()
    good = check_exponents(0.01, 1.5, 1.001)
    bad = check_exponents(0.01, 1.5, 1.01)
    dt = time.perf_counter() - t0
    sob_ok = float(good.sobolev_exponent) == pytest.approx(-0.188) and float(good.s_p) == pytest.approx(0.6)
    ok = good.passed and sob_ok and bad.failed == ["osc_error"] and dt < 1.0
    acceptance(8, ok, f"(0.01,1.5,1.001) passes: {good.passed}, Sobolev exponent {float(good.sobolev_exponent):.3f}; "
                      f"(0.01,1.5,1.01) fails {bad.failed} (expected ['osc_error'])")
    assert ok


def test_criterion_09_energy_corrector(acceptance):
    grid = Grid(512)
    flow = baseline_flow(grid)
    energy = EnergyProfile.shifted(flow.energy, 0.1)
    good = IntervalSet([(0.0, 1.0)])
    times = (0.3, 0.5, 0.8)
    mus = [8, 16, 32, 64]
    rho_err, deficit_err, cross = 0.0, 0.0, []
    for mu_c in mus:
        ec = EnergyCorrection(flow, energy, good, 0.25, 0.1, mu_c)
        for t in times:
            wb = ec.w_bar(t)
            rho_err = max(rho_err, abs(math.sqrt(float(np.mean(wb[0] ** 2 + wb[1] ** 2))) - ec.rho(t)))
            pre = ec.deficit(t)
            predicted = pre / 100 - 2 * ec.cross(t)
            deficit_err = max(deficit_err, abs(ec.post_deficit(t) - predicted) / abs(pre))
        cross.append(abs(ec.cross(0.5)))
    slope = fit_slope(mus, cross).slope
    ok = rho_err <= TOL_RHO and deficit_err <= TOL_DEFICIT and abs(slope + 1.0) <= TOL_SLOPE
    acceptance(9, ok, f"||w_bar||_2 - rho {rho_err:.1e}; deficit identity {deficit_err:.1e}; "
                      f"cross-term slope in mu_c {slope:.2f} (expected -1 +- {TOL_SLOPE:g})")
    assert ok


def _rough_field(n: int, k_max: int = 15, seed: int = 3) -> np.ndarray:
    # same modes on every grid: draw on 256^2 and keep |m|_inf <= k_max
    base = Grid(256)
    u = div_free_spectrum(base, k_max, np.random.default_rng(seed), decay=1.2)
    c = base.ops.fft(u)
    ops = Grid(n).ops
    out = np.zeros((2,) + ops.spec_shape, dtype=complex)
    out[:, : k_max + 1, : k_max + 1] = c[:, : k_max + 1, : k_max + 1]
    out[:, -k_max:, : k_max + 1] = c[:, -k_max:, : k_max + 1]
    return ops.ifft(out)


def test_criterion_10_universality_initializer(acceptance):
    values, nsr = {}, 0.0
    for n in (64, 128):
        grid = Grid(n)
        flow = HeatFlow(grid, _rough_field(n), 1.5, 1e-3)
        r = verify_nsr(grid, flow.velocity, flow.stress, flow.pressure, [1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0],
                       1e-6, velocity_dt=flow.velocity_dt)
        nsr = max(nsr, r.relative)
        values[(n, 24)] = flow.stress_l1_time(0.0, 1.0, panels=24)
        if n == 64:
            values[(n, 48)] = flow.stress_l1_time(0.0, 1.0, panels=48)
    ref = values[(128, 24)]
    spread = max(abs(v - ref) / ref for v in values.values())
    ok = nsr <= TOL_UNIVERSAL_NSR and spread <= TOL_SELF_CONVERGENCE
    acceptance(10, ok, f"NSR {nsr:.1e} (<= {TOL_UNIVERSAL_NSR:g}); int ||R||_1 dt = {ref:.6f}, "
                       f"refinement spread {spread:.1e} (<= {TOL_SELF_CONVERGENCE:g})")
    assert ok
