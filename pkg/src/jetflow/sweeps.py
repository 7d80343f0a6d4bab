"""Doubling sweeps of building-block norms against their power laws.

A sweep varies one knob, optionally ties ``nu = mu^a``, measures one
quantity per point and fits the log-log slope.  The predicted slope comes
from the knob exponents of each quantity's closed-form scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from jetflow.amplitude import regularize
from jetflow.assembly import temporal_oscillation
from jetflow.errors import ConfigError
from jetflow.jets import JetFamily, JetParams
from jetflow.perturbation import build_exceptional_set, oscillation_corrector
from jetflow.scheme import Knobs, SlopeFit, baseline_flow, fit_slope
from jetflow.spectral import Grid, SymTensorField, sym_operator_norm
from jetflow.temporal import build_temporal, gauss_time_norm, smooth_pieces

AXES = ("sigma", "kappa", "nu", "mu", "omega")
QUANTITIES = ("W", "Wc", "Psi", "g", "E", "w_o", "R_osc_t", "const")


def knob_exponents(quantity: str, p: float) -> dict[str, float]:
    """Power of each knob in the scaling of ``quantity`` measured in ``L^p``."""
    a = 0.5 - 1.0 / p
    table = {
        "W": {"nu": a, "mu": a},
        "Wc": {"nu": 1.0 + a, "mu": a - 1.0},
        "Psi": {"nu": a, "mu": a - 1.0},
        "g": {"kappa": a},
        "E": {"kappa": -1.0},
        "w_o": {"sigma": -1.0},
        "R_osc_t": {"sigma": -1.0},
        "const": {},
    }
    if quantity not in table:
        raise ConfigError(f"unknown sweep quantity {quantity!r}; choose from {', '.join(QUANTITIES)}")
    return table[quantity]


def predicted_slope(quantity: str, axis: str, p: float, nu_power: Optional[float] = None) -> float:
    ex = knob_exponents(quantity, p)
    slope = ex.get(axis, 0.0)
    if nu_power is not None and axis == "mu":
        slope += nu_power * ex.get("nu", 0.0)
    return slope


@dataclass
class SweepResult:
    quantity: str
    axis: str
    values: list[float]
    measured: list[float]
    fit: SlopeFit
    predicted: float
    p: float

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "axis": self.axis,
            "p": self.p,
            "values": self.values,
            "measured": self.measured,
            "fit": self.fit.to_dict(),
            "predicted_slope": self.predicted,
            "deviation": self.fit.slope - self.predicted,
        }


def _knobs_at(base: Knobs, axis: str, value: float, nu_power: Optional[float]) -> Knobs:
    d = base.to_dict()
    d[axis] = int(value) if axis == "sigma" else float(value)
    if nu_power is not None and axis == "mu":
        d["nu"] = float(value) ** nu_power
    return Knobs(**d)


def _pipeline_norm(quantity: str, kn: Knobs, grid: Grid, p: float, nodes: int) -> float:
    # slow fields of a smooth baseline on a fixed grid; only the knob varies
    flow = baseline_flow(grid, target=0.4)
    # a large cutoff scale puts (1/4, 3/4) on the plateau of theta
    reg = regularize(lambda t: SymTensorField(grid, flow.stress(t)), (0.0, 1.0), r_inf=4.0)
    profiles = build_temporal(kn.kappa, kn.sigma, kn.omega)
    ops = grid.ops
    x, w = np.polynomial.legendre.leggauss(nodes)
    # (1/4, 3/4) holds sigma/2 whole periods of every h_k for even sigma;
    # panels match the width of the temporal windows
    a, b = 0.25, 0.75
    edges = np.linspace(a, b, max(4, int(math.ceil((b - a) * kn.kappa * kn.sigma))) + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(x, w):
            t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi
            if quantity == "w_o":
                vals = oscillation_corrector(reg, profiles, ops, t)[1]
                mag = np.hypot(vals[0], vals[1])
            else:
                R = temporal_oscillation(reg, profiles, ops, t)[0]
                mag = sym_operator_norm(R[0], R[1], R[2])
            total += 0.5 * (hi - lo) * wi * float(np.mean(mag**p))
    return (total / (b - a)) ** (1.0 / p)


def measure(quantity: str, kn: Knobs, p: float, *, grid: Optional[Grid] = None, points: int = 64,
            time_nodes: int = 24) -> float:
    """One sample of ``quantity`` at knobs ``kn``.

    Jet norms use the exact profiles, ``g`` the Gauss rule on its windows,
    ``E`` exact interval arithmetic, and ``w_o``/``R_osc_t`` the grid
    pipeline with the space-time ``L^p`` norm on the cutoff plateau.
    """
    if quantity == "const":
        return 1.0
    if quantity in ("W", "Wc", "Psi"):
        fam = JetFamily(JetParams(kn.nu, kn.mu))
        which = {"W": "w", "Wc": "wc", "Psi": "psi"}[quantity]
        return fam.profile_norm(0, which, p, points=points)
    profiles = build_temporal(kn.kappa, kn.sigma, kn.omega)
    if quantity == "g":
        pieces = smooth_pieces(profiles, 0)
        return gauss_time_norm(lambda t: profiles.g(0, t), pieces, p)
    if quantity == "E":
        return build_exceptional_set(profiles, (0.0, 1.0)).measure()
    if quantity in ("w_o", "R_osc_t"):
        if grid is None:
            grid = Grid(64)
        return _pipeline_norm(quantity, kn, grid, p, time_nodes)
    raise ConfigError(f"unknown sweep quantity {quantity!r}")


def run_sweep(quantity: str, axis: str, values: Sequence[float], base: Knobs, p: float, *,
              nu_power: Optional[float] = None, grid: Optional[Grid] = None, points: int = 64) -> SweepResult:
    """Measure ``quantity`` along ``axis`` and fit the log-log slope.

    Raises:
        ConfigError: fewer than three points, unknown axis or quantity.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(AXES)}")
    values = [float(v) for v in values]
    if len(values) < 3:
        raise ConfigError("a sweep needs at least three points")
    predicted = predicted_slope(quantity, axis, p, nu_power)
    measured = [measure(quantity, _knobs_at(base, axis, v, nu_power), p, grid=grid, points=points)
                for v in values]
    fit = fit_slope(values, measured)
    return SweepResult(quantity, axis, values, measured, fit, predicted, p)


def sweep_csv(results: Sequence[SweepResult]) -> str:
    rows = ["quantity,axis,value,measured"]
    for r in results:
        for v, m in zip(r.values, r.measured):
            rows.append(f"{r.quantity},{r.axis},{v!r},{m!r}")
    return "\n".join(rows) + "\n"


def gnuplot_script(csv_name: str, results: Sequence[SweepResult]) -> str:
    lines = [
        "set datafile separator ','",
        "set logscale xy",
        "set key left bottom",
        "set xlabel 'knob value'",
        "set ylabel 'measured'",
    ]
    plots = []
    for r in results:
        sel = f"(strcol(1) eq '{r.quantity}' && strcol(2) eq '{r.axis}' ? $4 : 1/0)"
        plots.append(f"'{csv_name}' using 3:{sel} with linespoints title '{r.quantity} vs {r.axis} "
                     f"(slope {r.fit.slope:.3f}, predicted {r.predicted:.3f})'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def slope_deviation(result: SweepResult) -> float:
    return abs(result.fit.slope - result.predicted)


