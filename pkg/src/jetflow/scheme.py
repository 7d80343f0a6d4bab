"""One iteration step: baseline flows, exponent bookkeeping, energy correction.

The field construction is parameterized by the concrete knobs
``(sigma, kappa, nu, mu, omega)``.  The power-law relations between the
knobs and a base ``lambda`` appear only in :func:`check_exponents`, which
works in exact rational arithmetic.
"""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from jetflow import bumps
from jetflow.amplitude import AmplitudeSet, regularize
from jetflow.assembly import (
    STRESS_PARTS,
    NSRResidual,
    StressAssembly,
    StressReport,
    check_identity,
    completeness_residual,
    mean_stress_residual,
    sym_outer,
    tensor_norm,
    trapezoid_weights,
    verify_nsr,
)
from jetflow.errors import ConfigError
from jetflow.jets import JetFamily, JetParams
from jetflow.perturbation import Perturbation
from jetflow.spectral import Grid, NormSpec, SymTensorField, VectorField, lp_norm, sym_operator_norm
from jetflow.temporal import build_temporal
from jetflow.timegrid import IntervalSet, fd6, refined_time_grid

logger = logging.getLogger(__name__)

# tolerances of the per-step identity checks
TOL_DIV_FREE = 1e-10
TOL_MEAN_STRESS = 1e-10
TOL_COMPLETENESS = 1e-5
TOL_NSR = 1e-5
TOL_BASELINE = 1e-8


# ---------------------------------------------------------------------------
# parameters and the exponent checker
# ---------------------------------------------------------------------------


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    # decimal literal as typed, so 1.001 is exactly 1001/1000
    return Fraction(repr(float(x))).limit_denominator(10**12)


@dataclass(frozen=True)
class Knobs:
    """Concrete concentration knobs of one step."""

    sigma: int
    kappa: float
    nu: float
    mu: float
    omega: float

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise ConfigError(f"sigma must be a positive integer, got {self.sigma}")
        for name in ("kappa", "nu", "mu", "omega"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "sigma", int(self.sigma))

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "kappa": self.kappa, "nu": self.nu, "mu": self.mu, "omega": self.omega}


@dataclass(frozen=True)
class SchemeParams:
    """Exponents, knobs, smallness target and working interval of a step.

    ``q`` is fixed by ``1/r = 1/2 + 1/q``.  The lambda-ray knobs are
    ``sigma = ceil(lambda^{2 gamma})``, ``kappa = lambda^{16 gamma}``,
    ``nu = lambda^{1 - 8 gamma}``, ``mu = omega = lambda`` and
    :meth:`on_ray` builds them; the concrete knobs used by the numerics
    may be set independently.
    """

    gamma: float = 0.01
    p: float = 1.5
    r: float = 1.001
    knobs: Knobs = Knobs(1, 8.0, 8.0, 16.0, 16.0)
    delta: float = 1e6
    interval: tuple[float, float] = (0.0, 1.0)
    lam: Optional[float] = None

    def __post_init__(self):
        validate_exponents(self.gamma, self.p, self.r)
        a, b = self.interval
        if not (0.0 <= a < b <= 1.0):
            raise ConfigError(f"interval must satisfy 0 <= a < b <= 1, got {self.interval}")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")

    @property
    def q(self) -> float:
        inv = 1.0 / self.r - 0.5
        return math.inf if inv <= 0 else 1.0 / inv

    @property
    def s_p(self) -> float:
        return 1.0 - 40.0 * self.gamma

    @staticmethod
    def ray_knobs(gamma: float, lam: float) -> Knobs:
        return Knobs(
            sigma=math.ceil(lam ** (2 * gamma)),
            kappa=lam ** (16 * gamma),
            nu=lam ** (1 - 8 * gamma),
            mu=lam,
            omega=lam,
        )

    @classmethod
    def on_ray(cls, gamma: float, p: float, r: float, lam: float, **kw) -> "SchemeParams":
        return cls(gamma=gamma, p=p, r=r, knobs=cls.ray_knobs(gamma, lam), lam=lam, **kw)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "p": self.p,
            "r": self.r,
            "q": self.q,
            "s_p": self.s_p,
            "knobs": self.knobs.to_dict(),
            "delta": self.delta,
            "interval": list(self.interval),
            "lambda": self.lam,
        }


def validate_exponents(gamma, p, r) -> None:
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    if not 1 < p < 2:
        raise ConfigError(f"p must lie in the open interval (1, 2), got {p}")
    if not r > 1:
        raise ConfigError(f"r must exceed 1, got {r}")


# lambda-powers of the knobs: sigma, kappa, nu, mu, omega
def _powers(g: Fraction) -> dict[str, Fraction]:
    return {"sigma": 2 * g, "kappa": 16 * g, "nu": 1 - 8 * g, "mu": Fraction(1), "omega": Fraction(1)}


# Each condition is a product of knob powers times (nu mu)^{a - 1/x} with
# x in {p, r}; the acceleration error carries a sum, kept as two monomials.
# entries: (key, label, [monomials]), monomial = (knob exponents, a, which)
_CONDITIONS = (
    ("wp_LinfLp", "(w^(p) in LinfLp)", [({"kappa": Fraction(1, 2)}, Fraction(1, 2), "p")]),
    ("wa_LinfLp", "(w^(a) in LinfLp)",
     [({"omega": -1, "sigma": 1, "kappa": Fraction(1, 2)}, Fraction(1), "p")]),
    ("wa_L2Lq", "(w^(a) in L2Lq)", [({"omega": -1, "sigma": 1}, Fraction(3, 2), "r")]),
    ("wc_L2Lq", "(w^(c) in L2Lq)", [({"nu": 1, "mu": -1}, Fraction(1), "r")]),
    ("lap_wp", "Laplacian error for w^(p)",
     [({"sigma": 1, "kappa": Fraction(-1, 2), "mu": 1}, Fraction(1, 2), "r")]),
    ("lap_wa", "Laplacian error for w^(a)",
     [({"omega": -1, "sigma": 2, "kappa": Fraction(-1, 2), "mu": 1}, Fraction(1), "r")]),
    ("acc_error", "Acceleration error",
     [({"kappa": Fraction(1, 2), "mu": -1}, Fraction(1, 2), "r"),
      ({"omega": 1, "sigma": -1, "nu": 1, "mu": -1}, Fraction(1, 2), "r")]),
    ("osc_error", "Oscillation error for w^(p)", [({"sigma": -1}, Fraction(1), "r")]),
    ("osc_error_a", "Oscillation error for w^(a)",
     [({"omega": -1, "sigma": 1, "kappa": Fraction(1, 2)}, Fraction(1), "r")]),
)

CONDITION_KEYS = tuple(c[0] for c in _CONDITIONS)


@dataclass(frozen=True)
class Condition:
    key: str
    label: str
    exponent: Fraction
    threshold: Fraction
    passed: bool

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "label": self.label,
            "exponent": float(self.exponent),
            "exponent_exact": str(self.exponent),
            "threshold": float(self.threshold),
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ExponentReport:
    gamma: Fraction
    p: Fraction
    r: Fraction
    conditions: tuple[Condition, ...]
    sobolev_exponent: Fraction
    s_p: Fraction

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions) and self.sobolev_exponent < 0

    @property
    def failed(self) -> list[str]:
        out = [c.key for c in self.conditions if not c.passed]
        if not self.sobolev_exponent < 0:
            out.append("sobolev")
        return out

    def __getitem__(self, key: str) -> Condition:
        for c in self.conditions:
            if c.key == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "gamma": float(self.gamma),
            "p": float(self.p),
            "r": float(self.r),
            "conditions": [c.to_dict() for c in self.conditions],
            "sobolev_exponent": float(self.sobolev_exponent),
            "s_p": float(self.s_p),
            "passed": self.passed,
        }

    def table(self) -> str:
        rows = [f"{'condition':<32} {'exponent':>12} {'threshold':>10}  verdict"]
        for c in self.conditions:
            rows.append(
                f"{c.label:<32} {float(c.exponent):>12.6f} {float(c.threshold):>10.4f}  "
                f"{'pass' if c.passed else 'FAIL'}"
            )
        ok = self.sobolev_exponent < 0
        rows.append(
            f"{'W^{s_p,1} exponent':<32} {float(self.sobolev_exponent):>12.6f} {0.0:>10.4f}  "
            f"{'pass' if ok else 'FAIL'}"
        )
        return "\n".join(rows)


def condition_exponents(gamma, p, r) -> dict[str, Fraction]:
    """Exact lambda-exponent of every condition (``r = 1`` allowed)."""
    g, p, r = _frac(gamma), _frac(p), _frac(r)
    pw = _powers(g)
    nm = pw["nu"] + pw["mu"]
    out = {}
    for key, _, monos in _CONDITIONS:
        vals = []
        for knobs, a, which in monos:
            x = p if which == "p" else r
            vals.append(sum((c * pw[k] for k, c in knobs.items()), Fraction(0)) + nm * (a - 1 / x))
        out[key] = max(vals)
    return out


def sobolev_exponent(gamma) -> tuple[Fraction, Fraction]:
    """``(s_p (2 gamma + 1) - 1 + 20 gamma, s_p)`` with ``s_p = 1 - 40 gamma``."""
    g = _frac(gamma)
    s_p = 1 - 40 * g
    return s_p * (2 * g + 1) - 1 + 20 * g, s_p


def check_exponents(gamma, p, r) -> ExponentReport:
    """Compare each condition's lambda-exponent with ``-gamma``.

    Raises:
        ConfigError: ``gamma <= 0``, ``p`` outside ``(1, 2)`` or ``r <= 1``.
    """
    validate_exponents(float(gamma), float(p), float(r))
    g = _frac(gamma)
    exps = condition_exponents(gamma, p, r)
    conds = tuple(
        Condition(key, label, exps[key], -g, exps[key] <= -g) for key, label, _ in _CONDITIONS
    )
    sob, s_p = sobolev_exponent(gamma)
    return ExponentReport(g, _frac(p), _frac(r), conds, sob, s_p)


def numeric_exponents(gamma: float, p: float, r: float, lam: float) -> dict[str, float]:
    """``log_lambda`` of every left-hand side evaluated in floating point at ``lam``.

    The knobs are the exact powers ``lam^{2 gamma}`` etc. (no ceiling), so
    single-monomial conditions reproduce the exact exponent and the
    acceleration error differs by at most ``log 2 / log lam``.
    """
    k = {
        "sigma": lam ** (2 * gamma),
        "kappa": lam ** (16 * gamma),
        "nu": lam ** (1 - 8 * gamma),
        "mu": lam,
        "omega": lam,
    }
    nm = k["nu"] * k["mu"]
    out = {}
    for key, _, monos in _CONDITIONS:
        total = 0.0
        for knobs, a, which in monos:
            x = p if which == "p" else r
            term = nm ** (float(a) - 1.0 / x)
            for name, c in knobs.items():
                term *= k[name] ** float(c)
            total += term
        out[key] = math.log(total) / math.log(lam)
    return out


# ---------------------------------------------------------------------------
# regression helpers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "points": self.n}


def fit_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x``.

    Raises:
        ValueError: fewer than two points or nonpositive data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.shape != y.shape:
        raise ValueError("need at least two matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return SlopeFit(float(slope), float(icpt), r2, int(x.size))


# ---------------------------------------------------------------------------
# universality initializer
# ---------------------------------------------------------------------------


class HeatFlow:
    """``u(t) = exp(-nu t (-Delta)^alpha) u0`` with its Reynolds stress.

    ``R = R(d_t u - Delta u) + u (x) u - |u|^2/2 Id`` and ``p = -|u|^2/2``
    make ``(u, R, p)`` an exact solution of the stressed system.  Every
    mode evolves by its own exponential, so ``d_t u`` is exact.

    Args:
        grid: Grid carrying ``u0``; the quadratic terms need the velocity
            band below ``n/4``.
        u0: Divergence-free, zero-mean raw ``(2, n, n)`` velocity.
        alpha: Dissipation order, at least 3/2.
        viscosity: The coefficient ``nu`` of the semigroup.
        time_origin: The semigroup starts at this time.
    """

    def __init__(self, grid: Grid, u0: np.ndarray, alpha: float = 1.5, viscosity: float = 1.0,
                 *, time_origin: float = 0.0, tol: float = 1e-10):
        if alpha < 1.5:
            raise ValueError(f"alpha = {alpha} < 3/2: the stress of the heat flow need not be integrable")
        if viscosity < 0:
            raise ValueError("viscosity must be nonnegative")
        ops = grid.ops
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (2,) + ops.shape:
            raise ValueError(f"u0 must have shape {(2,) + ops.shape}")
        c = ops.fft(u0)
        scale = max(float(np.abs(c).max()), 1e-300)
        if float(np.abs(c[:, 0, 0]).max()) > tol * scale:
            raise ValueError("u0 must have zero mean")
        if float(np.abs(ops.div_hat(c)).max()) > tol * scale * 2 * np.pi * grid.n:
            raise ValueError("u0 must be divergence-free")
        band = ops.bandwidth(u0, 1e-12)
        if 4 * band >= grid.n:
            logger.warning("velocity band %d aliases the quadratic terms on n = %d", band, grid.n)
        self.grid = grid
        self.ops = ops
        self.alpha = float(alpha)
        self.viscosity = float(viscosity)
        self.time_origin = float(time_origin)
        self._c0 = c
        k2 = 4 * np.pi**2 * (ops.m1**2 + ops.m2**2).astype(float)
        self._rate = self.viscosity * k2**self.alpha

    def _hat(self, t: float) -> np.ndarray:
        return self._c0 * np.exp(-self._rate * (t - self.time_origin))

    def velocity(self, t: float) -> np.ndarray:
        return self.ops.ifft(self._hat(t))

    def velocity_dt(self, t: float) -> np.ndarray:
        return self.ops.ifft(-self._rate * self._hat(t))

    def stress(self, t: float) -> np.ndarray:
        ops = self.ops
        ch = self._hat(t)
        u = ops.ifft(ch)
        lap = ops.laplacian(u)
        lin = ops.antidiv(ops.ifft(-self._rate * ch) - lap)
        half = 0.5 * (u[0] ** 2 + u[1] ** 2)
        quad = np.stack([u[0] * u[0] - half, u[0] * u[1], u[1] * u[1] - half])
        return lin + quad

    def stress_field(self, t: float) -> SymTensorField:
        return SymTensorField(self.grid, self.stress(t), traceless=True)

    def pressure(self, t: float) -> np.ndarray:
        u = self.velocity(t)
        return -0.5 * (u[0] ** 2 + u[1] ** 2)

    def energy(self, t: float) -> float:
        u = self.velocity(t)
        return float(np.mean(u[0] ** 2 + u[1] ** 2))

    def stress_l1_time(self, a: float, b: float, *, panels: int = 24, nodes: int = 8,
                       grading: float = 0.5) -> float:
        """``int_a^b ||R(t)||_1 dt`` with geometric panels toward ``a``."""
        x, w = np.polynomial.legendre.leggauss(nodes)
        edges = [a + (b - a) * grading**j for j in range(panels)][::-1]
        edges = [a] + edges
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            for xi, wi in zip(x, w):
                t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi
                total += 0.5 * (hi - lo) * wi * lp_norm(SymTensorField(self.grid, self.stress(t)), 1.0)
        return total


def div_free_spectrum(grid: Grid, k_max: int, rng: np.random.Generator, *, decay: float = 0.0,
                      k_min: int = 1) -> np.ndarray:
    """Random divergence-free zero-mean velocity with ``|hat u(m)| ~ |m|^{-decay}``.

    Modes with ``k_min <= |m|_inf <= k_max`` are populated with random
    phases.  Returns the raw ``(2, n, n)`` array.
    """
    ops = grid.ops
    if k_max >= grid.n // 2:
        raise ValueError("k_max must stay below the Nyquist frequency")
    m1, m2 = ops.m1.astype(float), ops.m2.astype(float)
    mag = np.hypot(m1, m2)
    band = np.maximum(np.abs(ops.m1), np.abs(ops.m2))
    mask = (band >= k_min) & (band <= k_max)
    phase = rng.uniform(0.0, 2 * np.pi, ops.spec_shape)
    safe = np.where(mag > 0, mag, 1.0)
    amp = np.where(mask, safe ** (-decay), 0.0) * np.exp(1j * phase)
    # stream-function form: u = grad^perp s with |hat u| = |m|^-decay
    s_hat = amp / (2 * np.pi * safe)
    s = ops.ifft(s_hat)
    return ops.perp(s)


def universality_init(grid: Grid, u0: np.ndarray, alpha: float, viscosity: float,
                      times: Sequence[float]) -> tuple[HeatFlow, list[np.ndarray], list[np.ndarray]]:
    """The heat flow and its velocity and stress at ``times``.

    Raises:
        ValueError: ``alpha < 3/2`` or ``u0`` not divergence-free and zero-mean.
    """
    flow = HeatFlow(grid, u0, alpha, viscosity)
    return flow, [flow.velocity(t) for t in times], [flow.stress(t) for t in times]


def baseline_flow(grid: Grid, *, target: float = 0.8, k_max: int = 2, alpha: float = 1.5,
                  viscosity: float = 2e-4, seed: int = 0, time: float = 0.5) -> HeatFlow:
    """Smooth heat flow scaled so that ``max |R(time)|`` equals ``target``.

    The amplitude is found by bisection; ``|R|`` is increasing in it.
    """
    rng = np.random.default_rng(seed)
    shape = div_free_spectrum(grid, k_max, rng)
    shape = shape / float(np.abs(shape).max())

    def peak(amp):
        f = HeatFlow(grid, amp * shape, alpha, viscosity)
        R = f.stress(time)
        return float(np.max(sym_operator_norm(R[0], R[1], R[2])))

    lo, hi = 0.0, 1.0
    while peak(hi) < target:
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if peak(mid) < target:
            lo = mid
        else:
            hi = mid
    return HeatFlow(grid, 0.5 * (lo + hi) * shape, alpha, viscosity)


# ---------------------------------------------------------------------------
# energy correction
# ---------------------------------------------------------------------------


class EnergyProfile:
    """Target energy ``e(t)`` from polynomial coefficients or a sample table.

    Coefficients are in increasing degree.  A table is interpolated by a
    cubic spline.
    """

    def __init__(self, coefficients: Optional[Sequence[float]] = None,
                 table: Optional[tuple[Sequence[float], Sequence[float]]] = None):
        if (coefficients is None) == (table is None):
            raise ValueError("give exactly one of coefficients or table")
        if coefficients is not None:
            self.kind = "polynomial"
            self._f = np.polynomial.Polynomial(np.asarray(coefficients, dtype=float))
            self.spec = {"polynomial": list(map(float, coefficients))}
        else:
            from scipy.interpolate import CubicSpline

            tt, vv = (np.asarray(a, dtype=float) for a in table)
            self.kind = "table"
            self._f = CubicSpline(tt, vv)
            self.spec = {"table": [tt.tolist(), vv.tolist()]}

    def __call__(self, t):
        return self._f(t)

    @classmethod
    def shifted(cls, flow_energy: Callable[[float], float], constant: float) -> Callable[[float], float]:
        return lambda t: flow_energy(t) + constant


def corrector_stream(grid: Grid, mu_c: float, center=(0.5, 0.5), band: Optional[int] = None) -> np.ndarray:
    """Bump stream function ``psi(x) ~ b(mu_c (x1 - c1)) b(mu_c (x2 - c2))``.

    Built from its exact Fourier coefficients on ``|m|_inf <= band`` and
    scaled so that the discrete ``||grad psi||_2`` equals one.
    """
    if mu_c < 2:
        raise ValueError("mu_c must be at least 2 so the bump fits in the unit cell")
    ops = grid.ops
    band = grid.n // 4 if band is None else int(band)
    m = np.arange(-band, band + 1)
    tab = bumps.bump_transform(m / mu_c) / mu_c
    spec = np.zeros(ops.spec_shape, dtype=complex)
    m2 = m[band:]
    coef = tab[:, None] * tab[None, band:]
    coef = coef * np.exp(-2j * np.pi * (m[:, None] * center[0] + m2[None, :] * center[1]))
    spec[(m % grid.n)[:, None], m2[None, :]] = coef
    spec[0, 0] = 0.0
    psi = ops.ifft(spec)
    g = ops.grad(psi)
    return psi / math.sqrt(float(np.mean(g[0] ** 2 + g[1] ** 2)))


class EnergyCorrection:
    """``u -> u + w_bar`` with ``w_bar = rho(t) grad^perp psi``.

    ``rho^2 = (99/100)(e - ||u||^2)`` on the good set within
    ``[t_n, 1]``, zero on ``[0, t_next]``, and a smooth transition in
    between.  Outside the good set the deficit is smoothly floored at
    half its smallest good-set value so that ``rho`` stays smooth.

    Raises:
        ValueError: the deficit is not positive at a good-set sample.
    """

    FACTOR = 0.99

    def __init__(self, flow, energy: Callable[[float], float], good: IntervalSet, t_n: float,
                 t_next: float, mu_c: float, *, center=(0.5, 0.5), samples: int = 65,
                 time_step: float = 1e-4):
        if not 0.0 <= t_next < t_n < 1.0:
            raise ValueError("need 0 <= t_next < t_n < 1")
        self.flow = flow
        self.grid = flow.grid
        self.ops = self.grid.ops
        self.energy = energy
        self.good = good
        self.t_n, self.t_next = float(t_n), float(t_next)
        self.mu_c = float(mu_c)
        self.time_step = float(time_step)
        self.psi = corrector_stream(self.grid, mu_c, center)
        self.stream_grad_perp = self.ops.perp(self.psi)
        lows = []
        for t in np.linspace(self.t_n, 1.0, samples):
            if self.good.contains(t):
                d = self.deficit(t)
                if not d > 0:
                    raise ValueError(f"energy deficit {d:.3e} is not positive at good time {t:.4f}")
                lows.append(d)
        self.floor = 0.5 * min(lows) if lows else 1.0

    def deficit(self, t: float) -> float:
        return float(self.energy(t)) - self.flow.energy(t)

    def _cutoff(self, t: float) -> float:
        return float(bumps.smooth_step((t - self.t_next) / (self.t_n - self.t_next)))

    def rho(self, t: float) -> float:
        z = self._cutoff(t)
        if z == 0.0:
            return 0.0
        d = self.deficit(t)
        return z * math.sqrt(self.FACTOR * float(bumps.smooth_ramp(d, self.floor)))

    def rho_dt(self, t: float) -> float:
        return float(fd6(self.rho, t, self.time_step))

    def w_bar(self, t: float) -> np.ndarray:
        return self.rho(t) * self.stream_grad_perp

    def velocity(self, t: float) -> np.ndarray:
        return self.flow.velocity(t) + self.w_bar(t)

    def cross(self, t: float) -> float:
        """``<u(t), w_bar(t)>``."""
        u = self.flow.velocity(t)
        wb = self.w_bar(t)
        return float(np.mean(u[0] * wb[0] + u[1] * wb[1]))

    def cross_bound(self, t: float) -> float:
        """``rho ||u||_inf ||grad psi||_1``."""
        u = self.flow.velocity(t)
        g = self.stream_grad_perp
        return self.rho(t) * float(np.max(np.hypot(u[0], u[1]))) * float(np.mean(np.hypot(g[0], g[1])))

    def post_deficit(self, t: float) -> float:
        v = self.velocity(t)
        return float(self.energy(t)) - float(np.mean(v[0] ** 2 + v[1] ** 2))

    def stress_delta(self, t: float) -> dict[str, np.ndarray]:
        """Pieces of ``R_bar - R``: linear, drift and self-interaction."""
        ops = self.ops
        u = self.flow.velocity(t)
        wb = self.w_bar(t)
        dwb = self.rho_dt(t) * self.stream_grad_perp

        def tl(a, b):
            s = sym_outer(a, b)
            tr = 0.5 * (s[0] + s[2])
            return np.stack([s[0] - tr, s[1], s[2] - tr])

        return {
            "lap": ops.antidiv(-ops.laplacian(wb)),
            "dt": ops.antidiv(dwb),
            "drift": 2.0 * tl(u, wb),
            "self": tl(wb, wb),
        }

    def stress(self, t: float) -> np.ndarray:
        return self.flow.stress(t) + sum(self.stress_delta(t).values())

    def pressure(self, t: float) -> np.ndarray:
        u = self.flow.velocity(t)
        v = self.velocity(t)
        return self.flow.pressure(t) - 0.5 * ((v[0] ** 2 + v[1] ** 2) - (u[0] ** 2 + u[1] ** 2))


def energy_corrector(flow, energy, good: IntervalSet, t_n: float, t_next: float, mu_c: float,
                     **kw) -> EnergyCorrection:
    return EnergyCorrection(flow, energy, good, t_n, t_next, mu_c, **kw)


def cross_term_rms(u: np.ndarray, grid: Grid, mu_c: float) -> float:
    """Root mean square of ``<u, grad^perp psi(. - y)>`` over all grid shifts ``y``.

    By Parseval this is ``sqrt(sum_m |hat u(m) . hat(grad^perp psi)(m)|^2)``,
    so it is evaluated from the spectra in one pass.
    """
    ops = grid.ops
    g = ops.perp(corrector_stream(grid, mu_c))
    cu = ops.fft(u)
    cg = ops.fft(g)
    corr = cu[0] * np.conj(cg[0]) + cu[1] * np.conj(cg[1])
    w = ops.herm_weight
    return float(math.sqrt(np.sum(w * np.abs(corr) ** 2)))


@dataclass
class Bookkeeping:
    """Exceptional sets of the finished steps and the derived good/bad sets."""

    exceptional: list[IntervalSet] = field(default_factory=list)
    interval: tuple[float, float] = (0.0, 1.0)

    def add(self, E: IntervalSet) -> None:
        self.exceptional.append(E)

    @property
    def bad(self) -> IntervalSet:
        out = IntervalSet()
        for E in self.exceptional:
            out = out.union(E)
        return out.intersect(*self.interval)

    @property
    def good(self) -> IntervalSet:
        return self.bad.complement(*self.interval)

    def to_dict(self) -> dict:
        return {
            "bad": [list(p) for p in self.bad],
            "bad_measure": self.bad.measure(),
            "good_measure": self.good.measure(),
            "steps": [[list(p) for p in E] for E in self.exceptional],
        }


@dataclass(frozen=True)
class Schedule:
    """First entries of the ``delta_n``, ``t_n`` and ``p_n`` schedules."""

    deltas: tuple[float, ...] = (1.0,)
    times: tuple[float, ...] = (0.5,)
    exponents: tuple[float, ...] = (1.5,)

    def __post_init__(self):
        if not (len(self.deltas) == len(self.times) == len(self.exponents)):
            raise ConfigError("schedule lists must have equal lengths")
        if any(b >= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("t_n must be strictly decreasing")

    def step(self, n: int) -> dict:
        return {"delta": self.deltas[n], "t": self.times[n], "p": self.exponents[n]}


# ---------------------------------------------------------------------------
# one iteration step
# ---------------------------------------------------------------------------


@dataclass
class StepOptions:
    coarse: int = 16
    per_component: int = 16
    nsr_step: float = 1e-6
    nsr_extra_steps: tuple[float, ...] = ()
    slow_step: float = 1e-3
    completeness_slices: int = 4
    completeness_step: float = 1e-6
    check: bool = True
    require_exponents: bool = True
    amplitude_band: Optional[int] = None
    norm_oversample: int = 1
    progress: Optional[Callable[[str], None]] = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("progress")
        d["nsr_extra_steps"] = list(self.nsr_extra_steps)
        return d


@dataclass
class StepResult:
    grid: Grid
    params: SchemeParams
    flow: object
    pert: Perturbation
    asm: StressAssembly
    exceptional: IntervalSet
    times: np.ndarray
    report: StressReport
    nsr: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def slice(self, t: float) -> dict:
        hit = self._cache.get(t)
        if hit is None:
            hit = self.asm.slice(t)
            if len(self._cache) > 8:
                self._cache.pop(next(iter(self._cache)))
            self._cache[t] = hit
        return hit

    def velocity(self, t: float) -> np.ndarray:
        return self.flow.velocity(t) + self.pert.raw("w", t)

    def stress(self, t: float) -> np.ndarray:
        return self.slice(t)["R1"]

    def pressure(self, t: float) -> np.ndarray:
        return self.flow.pressure(t) + self.slice(t)["P"]


def _sobolev_sup(grid: Grid, w: np.ndarray, s: float) -> float:
    return lp_norm(VectorField(grid, w), NormSpec(math.inf, s))


def _status(progress, msg):
    logger.info(msg)
    if progress is not None:
        progress(msg)


def run_iteration_step(params: SchemeParams, flow, grid: Grid, options: Optional[StepOptions] = None,
                       energy: Optional[Callable[[float], float]] = None) -> StepResult:
    """Build ``w`` and ``R_1`` for the pair carried by ``flow`` and verify every identity.

    ``flow`` exposes ``velocity``, ``stress`` and ``pressure`` raw-array
    callables and optionally ``velocity_dt``.

    Raises:
        ConfigError: the exponent check fails and ``require_exponents`` is set.
        IdentityCheckError: an identity misses its tolerance (``check`` set).
        AliasingError: the grid cannot carry the requested knobs.
    """
    opt = options or StepOptions()
    t0 = _time.perf_counter()
    exps = check_exponents(params.gamma, params.p, params.r)
    if opt.require_exponents and not exps.passed:
        raise ConfigError(f"exponent conditions fail for (gamma, p, r): {', '.join(exps.failed)}")
    kn = params.knobs
    interval = params.interval
    n = grid.n
    grid.require_band(kn.sigma * kn.mu, "sigma*mu jet bandwidth")
    report = StressReport(parameters={**params.to_dict(), "grid": grid.to_dict(), "options": opt.to_dict()})
    report.exponents = exps.to_dict()

    # baseline
    probe = np.linspace(*interval, 7)[1:-1]
    base = verify_nsr(grid, flow.velocity, flow.stress, flow.pressure, probe, opt.nsr_step,
                      velocity_dt=getattr(flow, "velocity_dt", None))
    report.residuals["baseline_nsr"] = base.relative
    if opt.check:
        check_identity("baseline_nsr", base.relative, TOL_BASELINE)

    # building blocks
    K_a = opt.amplitude_band if opt.amplitude_band is not None else n // 16
    band = (n // 4 - K_a - 1) // kn.sigma
    _status(opt.progress, f"jets: nu={kn.nu:g} mu={kn.mu:g} sigma={kn.sigma} band={band}")
    jets = JetFamily(JetParams(kn.nu, kn.mu), grid, sigma=kn.sigma, band=band)
    samples = np.linspace(*interval, 33)[1:-1]
    reg = regularize(lambda t: SymTensorField(grid, flow.stress(t)), interval, samples=samples,
                     time_step=opt.slow_step)
    amps = AmplitudeSet(reg)
    profiles = build_temporal(kn.kappa, kn.sigma, kn.omega)
    pert = Perturbation(amps, jets, profiles, amplitude_band=K_a)
    asm = StressAssembly(pert, flow.velocity)
    E = pert.exceptional.intersect(*interval)
    report.exceptional_set = {
        "intervals": [list(p) for p in E],
        "components": len(E),
        "measure": E.measure(),
        "measure_bound": 2.0 * len(profiles) / kn.kappa,
    }
    report.extra["jets"] = jets.to_dict()
    report.extra["r_inf"] = reg.r_inf
    report.extra["ratio_max"] = max(reg.ratio_max(float(t)) for t in samples[::4])

    # slices
    steps = (opt.nsr_step,) + tuple(opt.nsr_extra_steps)
    margin = max(4 * max(steps), 4 * opt.slow_step)
    times = refined_time_grid(E, opt.coarse, opt.per_component, interval, margin=margin)
    result = StepResult(grid, params, flow, pert, asm, E, times, report)
    ops = grid.ops
    ngrid = Grid(n, oversample=opt.norm_oversample)
    names = STRESS_PARTS + ("R_osc", "R_lin", "R1")
    per = {name: {"r": [], "p": [], "2": []} for name in names}
    rows = []
    checks = {"div_free": 0.0, "off_E_zero": True, "mean_stress": 0.0}
    inv_delta = 1.0 / params.delta
    off_e = {"sobolev_w": [], "sobolev_wo": [], "energy_delta": [], "times": []}
    w_l2sq, w_sob1, r0_l1 = [], [], []
    nsr = {h: NSRAccumulator() for h in steps}
    _status(opt.progress, f"slices: {len(times)}")
    for idx, t in enumerate(times):
        t = float(t)
        S = asm.slice(t)
        P = pert.parts(t)
        w = P["w"]
        u = flow.velocity(t)
        wn = math.sqrt(float(np.mean(w[0] ** 2 + w[1] ** 2)))
        dn = math.sqrt(float(np.mean(ops.div(w) ** 2)))
        checks["div_free"] = max(checks["div_free"], dn / wn if wn > 0 else dn)
        inside = bool(E.contains(t))
        row = {"t": t, "in_E": int(inside)}
        if not inside:
            zero = all(not np.any(P[key]) for key in ("w_p", "w_c", "w_a"))
            checks["off_E_zero"] = checks["off_E_zero"] and zero
            off_e["times"].append(t)
            off_e["sobolev_w"].append(_sobolev_sup(grid, w, inv_delta))
            off_e["sobolev_wo"].append(_sobolev_sup(grid, P["w_o"], inv_delta))
            v = u + w
            off_e["energy_delta"].append(float(np.mean(v[0] ** 2 + v[1] ** 2) - np.mean(u[0] ** 2 + u[1] ** 2)))
        checks["mean_stress"] = max(checks["mean_stress"], mean_stress_residual(pert, t))
        w_l2sq.append(wn * wn)
        w_sob1.append(lp_norm(VectorField(ngrid, w), NormSpec(1.0, params.s_p)))
        r0_l1.append(lp_norm(SymTensorField(ngrid, flow.stress(t)), 1.0))
        for name in names:
            nr = tensor_norm(ngrid, S[name], params.r)
            per[name]["r"].append(nr)
            per[name]["p"].append(tensor_norm(ngrid, S[name], params.p))
            per[name]["2"].append(tensor_norm(ngrid, S[name], 2.0))
            row[f"{name}_Lr"] = nr
        row["w_L2"] = wn
        # new pair: u + w, R_1, p + P
        u1 = u + w
        rest = {
            "lap": -ops.laplacian(u1),
            "adv": ops.div_sym(sym_outer(u1, u1)),
            "grad_p": ops.grad(flow.pressure(t) + S["P"]),
            "div_R": -ops.div_sym(S["R1"]),
        }
        for h in steps:
            dudt = fd6(result.velocity, t, h)
            nsr[h].add(t, dict(rest, dt=dudt))
        row["nsr_residual"] = nsr[opt.nsr_step].last
        rows.append(row)
        if (idx + 1) % 16 == 0:
            _status(opt.progress, f"  slice {idx + 1}/{len(times)}  t={t:.5f}")
    wts = trapezoid_weights(times, interval)
    comps = {
        name: {
            "L1Lr": float(np.sum(wts * np.array(per[name]["r"]))),
            "LinfLp": float(np.max(per[name]["p"])),
            "L2L2": float(math.sqrt(np.sum(wts * np.array(per[name]["2"]) ** 2))),
        }
        for name in names
    }
    report.components = comps
    report.slices = rows
    checks["off_E_zero"] = bool(checks["off_E_zero"])
    report.checks = checks
    if opt.check:
        check_identity("div_free", checks["div_free"], TOL_DIV_FREE)
        if not checks["off_E_zero"]:
            check_identity("off_E_zero", 1.0, 0.0)
        check_identity("mean_stress", checks["mean_stress"], TOL_MEAN_STRESS)

    # completeness on a few slices inside E
    comp_times = _inside_times(E, opt.completeness_slices)
    comp = [completeness_residual(asm, t, opt.completeness_step)[0] for t in comp_times]
    report.residuals["completeness"] = max(comp) if comp else 0.0
    report.residuals["completeness_times"] = comp_times
    if opt.check:
        check_identity("completeness", report.residuals["completeness"], TOL_COMPLETENESS)

    # end-to-end residual of the new pair
    twts = trapezoid_weights(times)
    by_step = {h: nsr[h].finish(times, twts) for h in steps}
    report.residuals["nsr"] = by_step[opt.nsr_step].relative
    report.residuals["nsr_by_step"] = {repr(h): r.relative for h, r in by_step.items()}
    report.residuals["nsr_terms"] = by_step[opt.nsr_step].term_norms
    result.nsr = by_step
    if opt.check:
        check_identity("nsr", report.residuals["nsr"], TOL_NSR)

    # step conclusions
    w_l2 = math.sqrt(float(np.sum(wts * np.array(w_l2sq))))
    r_l1 = float(np.sum(wts * np.array(r0_l1)))
    r1_l1lr = comps["R1"]["L1Lr"]
    off = {
        "times": off_e["times"],
        "sobolev_order": inv_delta,
        "w_sobolev_max": max(off_e["sobolev_w"], default=0.0),
        "wo_sobolev_max": max(off_e["sobolev_wo"], default=0.0),
        "w_equals_wo": bool(np.array_equal(off_e["sobolev_w"], off_e["sobolev_wo"])),
        "energy_delta_max": max((abs(x) for x in off_e["energy_delta"]), default=0.0),
    }
    report.extra["step"] = {
        "w_L2": w_l2,
        "R_L1": r_l1,
        "M_ratio": w_l2 / r_l1 if r_l1 > 0 else math.inf,
        "R1_L1Lr": r1_l1lr,
        "R1_L1Lr_le_delta": bool(r1_l1lr <= params.delta),
        "E_measure": E.measure(),
        "E_measure_le_delta": bool(E.measure() <= params.delta * (interval[1] - interval[0])),
        "E_measure_profile": [[float(t), E.measure_up_to(float(t))] for t in np.linspace(*interval, 9)],
        "off_E": off,
        "off_E_le_delta": bool(off["w_sobolev_max"] <= params.delta),
        "w_Ws1_L1t": float(np.sum(wts * np.array(w_sob1))),
        "s_p": params.s_p,
        "theta_vanishes_at_ends": bool(reg.theta(interval[0]) == 0.0 and reg.theta(interval[1]) == 0.0),
    }
    report.extra["runtime_s"] = _time.perf_counter() - t0
    return result


class NSRAccumulator:
    """Running space-time sums for the residual of the stressed system."""

    def __init__(self):
        self.res2: list[float] = []
        self.terms: list[dict] = []
        self.last = 0.0

    def add(self, t: float, terms: dict) -> None:
        r = sum(terms.values())
        val = float(np.mean(np.sum(r * r, axis=0)))
        self.res2.append(val)
        self.terms.append({k: float(np.mean(np.sum(v * v, axis=0))) for k, v in terms.items()})
        self.last = math.sqrt(val)

    def finish(self, times, wts) -> NSRResidual:
        res2 = np.asarray(self.res2)
        acc = {k: float(sum(w * d[k] for w, d in zip(wts, self.terms))) for k in self.terms[0]}
        total = math.sqrt(float(np.sum(wts * res2)))
        ref = math.sqrt(max(acc.values()))
        return NSRResidual(
            times=np.asarray(times),
            slice_residual=np.sqrt(res2),
            slice_scale=np.sqrt(np.array([max(d.values()) for d in self.terms])),
            relative=total / ref if ref > 0 else total,
            step=0.0,
            term_norms={k: math.sqrt(v) for k, v in acc.items()},
        )


def _inside_times(E: IntervalSet, count: int) -> list[float]:
    out = []
    pieces = list(E)
    for j in range(count):
        if not pieces:
            break
        a, b = pieces[(j * max(1, len(pieces) // max(count, 1))) % len(pieces)]
        out.append(float(a + (b - a) * (0.3 + 0.4 * j / max(count - 1, 1))))
    return out


def tensor_l2(grid: Grid, values: np.ndarray) -> float:
    return lp_norm(SymTensorField(grid, values), 2.0)


def with_knobs(params: SchemeParams, **kw) -> SchemeParams:
    return replace(params, knobs=replace(params.knobs, **kw))
