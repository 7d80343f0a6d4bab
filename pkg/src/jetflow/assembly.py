"""New Reynolds stress ``R_1 = R_lin + R_cor + R_osc`` and its verification.

All routines work on raw arrays at one time slice; the verification
helpers then compare both sides of each identity on a set of slices.
Stress entries use the ``(11, 12, 22)`` layout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from jetflow.errors import IdentityCheckError
from jetflow.perturbation import Perturbation
from jetflow.spectral import Grid, SymTensorField, lp_norm
from jetflow.timegrid import fd6, fd6_from_samples

SCHEMA_VERSION = 1
OSC_PARTS = ("R_osc_x", "R_osc_t", "R_osc_a", "R_rem")
LIN_PARTS = ("R_lap", "R_acc", "R_dri")
STRESS_PARTS = OSC_PARTS + ("R_cor",) + LIN_PARTS


def sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a (x) b + b (x) a) / 2`` in ``(11, 12, 22)`` form."""
    return np.stack([a[0] * b[0], 0.5 * (a[0] * b[1] + a[1] * b[0]), a[1] * b[1]])


def rel_l2(diff: np.ndarray, ref: np.ndarray) -> float:
    den = math.sqrt(float(np.sum(ref * ref)))
    num = math.sqrt(float(np.sum(diff * diff)))
    return num / den if den > 0 else num


def _theta_sq_primitive(reg, t: float) -> np.ndarray:
    return reg.theta(t) ** 2 * reg.primitive_raw(t)


def dt_theta_sq_primitive(reg, t: float) -> np.ndarray:
    """``d/dt (theta^2 R_k)`` by sixth-order differences with the stress time step."""
    return fd6(lambda s: _theta_sq_primitive(reg, s), t, reg.time_step)


def temporal_oscillation(reg, profiles, ops, t: float, h: Optional[np.ndarray] = None):
    """``R_osc,t`` and ``p3`` from the regularized stress and the profiles alone."""
    if h is None:
        h = np.array([float(profiles.h(j, t)) for j in range(len(profiles))])
    theta2 = float(reg.theta(t)) ** 2
    d = dt_theta_sq_primitive(reg, t)
    if theta2 == 0.0 and not np.any(d):
        return np.zeros((3,) + ops.shape), np.zeros(ops.shape)
    sigma = profiles.sigma
    Y = ops.div_sym(np.tensordot(h, d, axes=1))
    R = -ops.antidiv(Y) / sigma
    gk2 = np.array([float(profiles.g(j, t)) ** 2 for j in range(len(h))]) - 1.0
    rk = reg.primitive_raw(t)
    p3 = theta2 * ops.inv_lap_divdiv(np.tensordot(gk2, rk, axes=1))
    p3 = p3 + ops.inv_lap_divdiv(np.tensordot(h, d, axes=1)) / sigma
    return R, p3


class StressAssembly:
    """Per-slice construction of every stress and pressure component.

    Args:
        pert: The perturbation; its amplitudes carry the regularized stress.
        velocity: ``t -> u(t)`` raw ``(2, n, n)`` array of the old velocity.
    """

    def __init__(self, pert: Perturbation, velocity: Callable[[float], np.ndarray]):
        self.pert = pert
        self.reg = pert.reg
        self.amps = pert.amplitudes
        self.profiles = pert.profiles
        self.jets = pert.jets
        self.velocity = velocity
        self.ops = pert.ops
        self.grid = pert.grid
        self.sigma = pert.sigma
        self.omega = pert.omega

    # oscillation errors -----------------------------------------------------------
    def osc_x(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``sum g_k^2 B(grad a_k^2, W_k (x) W_k - mean)`` and ``p1``."""
        ops, P = self.ops, self.pert.parts(t)
        zero = np.zeros((3,) + ops.shape)
        if P["k"] is None:
            return zero, np.zeros(ops.shape)
        k, g = P["k"], P["g"]
        e = self.jets.e[k]
        f2 = P["jet"]["w"] ** 2
        ee = np.array([e[0] * e[0], e[0] * e[1], e[1] * e[1]])[:, None, None]
        A = (f2 - f2.mean()) * ee
        a2 = P["a"][k] ** 2
        R = g * g * ops.antidiv_B(ops.grad(a2), A)
        X = a2 * g * g * ops.div_sym(f2 * ee)
        return R, ops.inv_lap_div(X)

    def e1(self, t: float) -> np.ndarray:
        """The first oscillation remainder straight from its definition."""
        ops, P = self.ops, self.pert.parts(t)
        if P["k"] is None:
            return np.zeros((2,) + ops.shape)
        k, g = P["k"], P["g"]
        e = self.jets.e[k]
        f2 = P["jet"]["w"] ** 2
        a2 = P["a"][k] ** 2
        ga = ops.grad(a2)
        # grad(a^2) . (W (x) W - mean) = (grad a^2 . e)(f^2 - mean f^2) e
        first = g * g * (ga[0] * e[0] + ga[1] * e[1]) * (f2 - f2.mean())
        X = a2 * g * g * ops.div_sym(f2 * np.array([e[0] ** 2, e[0] * e[1], e[1] ** 2])[:, None, None])
        _, qx = ops.leray(X)
        return first[None] * e[:, None, None] + qx

    def _dt_a2g(self, t: float) -> Optional[np.ndarray]:
        P = self.pert.parts(t)
        if P["k"] is None:
            return None
        k = P["k"]
        da2 = self.amps.dt_sq_raw(t)[k]
        return da2 * P["g"] + P["a"][k] ** 2 * float(self.profiles.dg(k, t))

    def osc_a(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``-sigma/omega R sum d_t(a_k^2 g_k)|W_k|^2 e_k`` and ``p2``."""
        ops, P = self.ops, self.pert.parts(t)
        if P["k"] is None:
            return np.zeros((3,) + ops.shape), np.zeros(ops.shape)
        V = self._dt_a2g(t) * P["jet"]["w"] ** 2
        V = V[None] * self.jets.e[P["k"]][:, None, None]
        c = self.sigma / self.omega
        return -c * ops.antidiv(V), c * ops.inv_lap_div(V)

    def e2(self, t: float) -> np.ndarray:
        ops, P = self.ops, self.pert.parts(t)
        if P["k"] is None:
            return np.zeros((2,) + ops.shape)
        V = self._dt_a2g(t) * P["jet"]["w"] ** 2
        V = V[None] * self.jets.e[P["k"]][:, None, None]
        return -(self.sigma / self.omega) * ops.project(V)

    def osc_t(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``-sigma^{-1} R sum h_k div d_t(theta^2 R_k)`` and ``p3``."""
        return temporal_oscillation(self.reg, self.profiles, self.ops, t, self.pert.parts(t)["h"])

    def rem(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(1 - theta^2) R`` and ``p4 = theta^2 rho`` (mean removed)."""
        st = self.reg.state(t)
        th2 = st["theta"] ** 2
        p4 = th2 * st["rho"]
        return (1.0 - th2) * st["R"], p4 - p4.mean()

    # correction and linear errors -----------------------------------------------
    def cor(self, t: float) -> np.ndarray:
        P = self.pert.parts(t)
        w, wp = P["w"], P["w_p"]
        v = w - wp
        T = np.stack([v[0] * w[0] + wp[0] * v[0], v[0] * w[1] + wp[0] * v[1], v[1] * w[1] + wp[1] * v[1]])
        return self.ops.antidiv(self.ops.div_sym(T))

    def dt_wpc(self, t: float) -> np.ndarray:
        """``d/dt (w_p + w_c)`` from the stream form and the transport identity."""
        ops, P = self.ops, self.pert.parts(t)
        if P["k"] is None:
            return np.zeros((2,) + ops.shape)
        k, g = P["k"], P["g"]
        e = self.jets.e[k]
        psi = P["jet"]["psi"]
        ak = P["a"][k]
        dak = self.amps.dt_raw(t)[k]
        dg = float(self.profiles.dg(k, t))
        gpsi = ops.grad(psi)
        dpsi = (self.omega * g / self.sigma) * (gpsi[0] * e[0] + gpsi[1] * e[1])
        inner = (dak * g + ak * dg) * psi + ak * g * dpsi
        return ops.perp(inner) / self.sigma

    def lin(self, t: float) -> dict[str, np.ndarray]:
        ops, P = self.ops, self.pert.parts(t)
        w = P["w"]
        u = self.velocity(t)
        return {
            "R_lap": ops.antidiv(-ops.laplacian(w)),
            "R_acc": ops.antidiv(self.dt_wpc(t)),
            "R_dri": ops.antidiv(ops.div_sym(2.0 * sym_outer(u, w))),
        }

    def slice(self, t: float) -> dict[str, np.ndarray]:
        """Every stress component and pressure at ``t``."""
        out = {}
        out["R_osc_x"], out["p1"] = self.osc_x(t)
        out["R_osc_a"], out["p2"] = self.osc_a(t)
        out["R_osc_t"], out["p3"] = self.osc_t(t)
        out["R_rem"], out["p4"] = self.rem(t)
        out["R_cor"] = self.cor(t)
        out.update(self.lin(t))
        out["R_osc"] = out["R_osc_x"] + out["R_osc_t"] + out["R_osc_a"] + out["R_rem"]
        out["R_lin"] = out["R_lap"] + out["R_acc"] + out["R_dri"]
        out["R1"] = out["R_osc"] + out["R_cor"] + out["R_lin"]
        out["P"] = -(out["p1"] + out["p2"] + out["p3"] + out["p4"])
        return out


# identities --------------------------------------------------------------------


def mean_stress_residual(pert: Perturbation, t: float) -> float:
    """Pointwise ``sum a_k^2 g_k^2 mean(W_k (x) W_k) - theta^2(rho Id - R) - theta^2 sum (g_k^2 - 1) R_k``.

    Returned relative to ``max |theta^2 (rho Id - R)|`` (or absolute if that vanishes).
    """
    st = pert.reg.state(t)
    a2 = pert.amplitudes.raw_sq(t)
    rk = pert.reg.primitive_raw(t)
    th2 = st["theta"] ** 2
    target = th2 * np.stack([st["rho"] - st["R"][0], -st["R"][1], st["rho"] - st["R"][2]])
    lhs = np.zeros_like(target)
    tail = np.zeros_like(target)
    for k in range(len(pert.jets)):
        g2 = float(pert.profiles.g(k, t)) ** 2
        m = pert.jets.mean_tensor(k)
        lhs += a2[k] * g2 * np.array([m[0, 0], m[0, 1], m[1, 1]])[:, None, None]
        tail += (g2 - 1.0) * rk[k]
    diff = lhs - target - th2 * tail
    scale = float(np.max(np.abs(target)))
    err = float(np.max(np.abs(diff)))
    return err / scale if scale > 0 else err


def completeness_residual(asm: StressAssembly, t: float, h: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Both sides of ``d_t w_t + div(w_p (x) w_p + R) + grad P = div R_osc``.

    ``d_t w_t`` uses sixth-order differences with step ``h``.  Returns the
    relative L2 defect and the two sides.
    """
    ops, pert = asm.ops, asm.pert
    samples = [pert.parts(t + j * h) for j in range(-3, 4)]
    dwt = fd6_from_samples([s["w_o"] + s["w_a"] for s in samples], h)
    P = pert.parts(t)
    st = asm.reg.state(t)
    wp = P["w_p"]
    S = asm.slice(t)
    lhs = dwt + ops.div_sym(sym_outer(wp, wp) + st["R"]) + ops.grad(S["P"])
    rhs = ops.div_sym(S["R_osc"])
    return rel_l2(lhs - rhs, lhs), lhs, rhs


@dataclass
class NSRResidual:
    """Residual of the Navier-Stokes-Reynolds system on a set of slices."""

    times: np.ndarray
    slice_residual: np.ndarray
    slice_scale: np.ndarray
    relative: float
    step: float
    term_norms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "relative_L2": self.relative,
            "step": self.step,
            "times": self.times.tolist(),
            "slice_residual": self.slice_residual.tolist(),
            "slice_scale": self.slice_scale.tolist(),
            "term_norms": self.term_norms,
        }


def trapezoid_weights(times: np.ndarray, interval: Optional[tuple[float, float]] = None) -> np.ndarray:
    """Quadrature weights for samples at sorted ``times``; ends extend to ``interval``."""
    t = np.asarray(times, dtype=float)
    if t.size == 1:
        return np.ones(1) if interval is None else np.array([interval[1] - interval[0]])
    mids = 0.5 * (t[1:] + t[:-1])
    lo = t[0] if interval is None else interval[0]
    hi = t[-1] if interval is None else interval[1]
    edges = np.concatenate([[lo], mids, [hi]])
    return np.diff(edges)


def verify_nsr(
    grid: Grid,
    velocity: Callable[[float], np.ndarray],
    stress: Callable[[float], np.ndarray],
    pressure: Callable[[float], np.ndarray],
    times: Sequence[float],
    h: float,
    *,
    velocity_dt: Optional[Callable[[float], np.ndarray]] = None,
) -> NSRResidual:
    """Residual of ``d_t u - Delta u + div(u (x) u) + grad p - div R``.

    ``d_t u`` uses sixth-order central differences with step ``h`` unless
    ``velocity_dt`` is supplied.  The relative value divides the space-time
    L2 norm of the residual by the largest space-time L2 norm among the
    five terms.
    """
    ops = grid.ops
    times = np.asarray(sorted(times), dtype=float)
    wts = trapezoid_weights(times)
    res2 = []
    scale2 = []
    acc = {name: 0.0 for name in ("dt", "lap", "adv", "grad_p", "div_R")}
    for t, wt in zip(times, wts):
        if velocity_dt is None:
            dudt = fd6(velocity, t, h)
        else:
            dudt = velocity_dt(t)
        u = velocity(t)
        terms = {
            "dt": dudt,
            "lap": -ops.laplacian(u),
            "adv": ops.div_sym(sym_outer(u, u)),
            "grad_p": ops.grad(pressure(t)),
            "div_R": -ops.div_sym(stress(t)),
        }
        r = sum(terms.values())
        res2.append(float(np.mean(np.sum(r * r, axis=0))))
        norms = {k: float(np.mean(np.sum(v * v, axis=0))) for k, v in terms.items()}
        scale2.append(max(norms.values()))
        for k, v in norms.items():
            acc[k] += wt * v
    res2 = np.asarray(res2)
    total = math.sqrt(float(np.sum(wts * res2)))
    ref = math.sqrt(max(acc.values()))
    rel = total / ref if ref > 0 else total
    return NSRResidual(
        times=times,
        slice_residual=np.sqrt(res2),
        slice_scale=np.sqrt(np.asarray(scale2)),
        relative=rel,
        step=h,
        term_norms={k: math.sqrt(v) for k, v in acc.items()},
    )


def check_identity(component: str, residual: float, tolerance: float) -> None:
    if not residual <= tolerance:
        raise IdentityCheckError(component, residual, tolerance)


# reports -------------------------------------------------------------------


def tensor_norm(grid: Grid, values: np.ndarray, p: float) -> float:
    return lp_norm(SymTensorField(grid, values), p)


@dataclass
class StressReport:
    """Norms, residuals and fitted exponents of one iteration step."""

    parameters: dict
    components: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    exceptional_set: dict = field(default_factory=dict)
    exponents: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    slices: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "parameters": self.parameters,
            "components": self.components,
            "residuals": self.residuals,
            "checks": self.checks,
            "exceptional_set": self.exceptional_set,
            "exponents": self.exponents,
            "extra": self.extra,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable, **kw)

    def slices_csv(self) -> str:
        if not self.slices:
            return ""
        keys = sorted({k for row in self.slices for k in row})
        keys.remove("t")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["t"] + keys, lineterminator="\n")
        writer.writeheader()
        for row in self.slices:
            writer.writerow(row)
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def component_norms(
    grid: Grid,
    slices: Sequence[tuple[float, dict[str, np.ndarray]]],
    names: Sequence[str],
    r: float,
    p: float,
    interval: tuple[float, float],
) -> tuple[dict, list]:
    """``L^1_t L^r``, ``L^inf_t L^p`` and ``L^2_{t,x}`` of each named stress.

    Time integrals use trapezoid weights over the slice times.
    """
    times = np.array([t for t, _ in slices])
    wts = trapezoid_weights(times, interval)
    rows = []
    per = {name: {"r": [], "p": [], "2": []} for name in names}
    for t, comp in slices:
        row = {"t": t}
        for name in names:
            vals = comp[name]
            nr = tensor_norm(grid, vals, r)
            np_ = nr if p == r else tensor_norm(grid, vals, p)
            n2 = tensor_norm(grid, vals, 2.0)
            per[name]["r"].append(nr)
            per[name]["p"].append(np_)
            per[name]["2"].append(n2)
            row[f"{name}_Lr"] = nr
        rows.append(row)
    out = {}
    for name in names:
        out[name] = {
            "L1Lr": float(np.sum(wts * np.array(per[name]["r"]))),
            "LinfLp": float(np.max(per[name]["p"])),
            "L2L2": float(math.sqrt(np.sum(wts * np.array(per[name]["2"]) ** 2))),
        }
    return out, rows
