"""Geometric decomposition, stress regularization and amplitudes.

Matrices are handled entrywise as ``(r11, r12, r22)`` arrays so that the
same code serves single matrices and whole grids.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Callable, Optional, Sequence

import numpy as np

from jetflow import bumps
from jetflow.errors import BallViolationError
from jetflow.jets import DIRECTIONS
from jetflow.spectral import ScalarField, SymTensorField, c1_norm, lp_norm, sym_operator_norm
from jetflow.timegrid import fd6

BALL_RADIUS = 0.5
POSITIVITY_FLOOR = 1e-8


def _entries(R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    R = np.asarray(R, dtype=float)
    if R.shape[:2] == (2, 2):
        if not np.allclose(R[0, 1], R[1, 0], rtol=0, atol=1e-14):
            raise ValueError("matrix is not symmetric")
        return R[0, 0], R[0, 1], R[1, 1]
    if R.shape[0] == 3:
        return R[0], R[1], R[2]
    raise ValueError(f"expected a 2x2 matrix or (11, 12, 22) entries, got shape {R.shape}")


def gamma_squared(r11, r12, r22) -> np.ndarray:
    """Affine squared amplitudes for the four directions, no checks."""
    return np.stack([r11 - 0.5, r22 - 0.5, r12 + 0.5, 0.5 - r12])


def gamma_decompose(R, *, tol: float = 1e-12) -> np.ndarray:
    """``Gamma_k^2(R)`` for ``k`` in the fixed direction set.

    ``R`` is one matrix or a stack of ``(11, 12, 22)`` entry arrays.  The
    output has the direction axis first and satisfies
    ``sum_k Gamma_k^2 e_k (x) e_k = R``.

    Raises:
        BallViolationError: ``|R - Id| > 1/2`` somewhere, or a coefficient
            below ``-tol``.
    """
    r11, r12, r22 = _entries(R)
    dist = sym_operator_norm(r11 - 1.0, r12, r22 - 1.0)
    if np.any(dist > BALL_RADIUS + tol):
        raise BallViolationError(
            f"matrix outside the ball |R - Id| <= 1/2: distance {float(np.max(dist)):.6g}"
        )
    g2 = gamma_squared(r11, r12, r22)
    if np.any(g2 < -tol):
        raise BallViolationError(f"negative squared amplitude {float(g2.min()):.3e}")
    return g2


def reconstruct(g2: np.ndarray, directions=DIRECTIONS) -> np.ndarray:
    """``sum_k g2_k e_k (x) e_k`` as ``(11, 12, 22)`` entries."""
    out = np.zeros((3,) + np.shape(g2)[1:])
    for c, k in zip(g2, directions):
        e = np.asarray(k, dtype=float) / math.hypot(*k)
        out[0] += c * e[0] * e[0]
        out[1] += c * e[0] * e[1]
        out[2] += c * e[1] * e[1]
    return out


def chi(s):
    """Cutoff on the matrix norm ``s = |x|``: 2 near 0, ``2 s`` for ``s >= 3/2``.

    ``chi(s) = 2 + 2 q(s - 1)`` with ``q`` the smooth convex majorant of
    ``max(0, .)`` on the window ``|s - 1| < 1/2``; hence
    ``chi >= 2 max(1, s)`` everywhere and ``s / chi(s) <= 1/2``.
    """
    return 2.0 + 2.0 * bumps.smooth_ramp(np.asarray(s, dtype=float) - 1.0, 0.5)


def theta_cutoff(t, interval: tuple[float, float], r_inf: float):
    """Time cutoff: 1 at distance ``>= 1/(4 r_inf)`` from the ends of ``interval``, 0 within ``1/(8 r_inf)``."""
    t = np.asarray(t, dtype=float)
    a, b = interval
    d = np.minimum(t - a, b - t)
    if r_inf <= 0:
        return np.where(d > 0, 1.0, 0.0)
    lo = 1.0 / (8.0 * r_inf)
    return bumps.smooth_step((d - lo) / lo)


class RegularizedStress:
    """``rho = chi(R)``, the primitive stresses ``R_k`` and the cutoff ``theta``.

    Args:
        stress: Map from a time to the Reynolds stress at that time.
        interval: Working interval ``I``.
        r_inf: Space-time sup of ``|R|`` used by the cutoff.
        directions: Direction set; must be the fixed four.
        time_step: Step of the sixth-order differences for ``d/dt R_k``.
    """

    def __init__(
        self,
        stress: Callable[[float], SymTensorField],
        interval: tuple[float, float],
        r_inf: float,
        *,
        directions=DIRECTIONS,
        time_step: float = 1e-3,
        cache_size: int = 64,
    ):
        if tuple(map(tuple, directions)) != DIRECTIONS:
            raise ValueError("the affine decomposition is defined for the fixed four directions")
        self.stress = stress
        self.interval = (float(interval[0]), float(interval[1]))
        self.r_inf = float(r_inf)
        self.directions = DIRECTIONS
        self.time_step = float(time_step)
        self._cache: OrderedDict[float, dict] = OrderedDict()
        self._cache_size = cache_size

    def theta(self, t):
        return theta_cutoff(t, self.interval, self.r_inf)

    def state(self, t: float) -> dict:
        """Raw arrays at time ``t``: ``R``, ``rho``, ``g2`` (``Gamma_k^2(Id - R/rho)``), ``theta``."""
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            self._cache.move_to_end(t)
            return hit
        field = self.stress(t)
        R = field.values
        if not np.all(np.isfinite(R)):
            raise ValueError(f"non-finite stress at t = {t}")
        rho = chi(sym_operator_norm(R[0], R[1], R[2]))
        g2 = gamma_squared(1.0 - R[0] / rho, -R[1] / rho, 1.0 - R[2] / rho)
        st = {"R": R, "rho": rho, "g2": g2, "theta": float(self.theta(t)), "grid": field.grid}
        self._cache[t] = st
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return st

    def rho(self, t: float) -> ScalarField:
        st = self.state(t)
        return ScalarField(st["grid"], st["rho"])

    def primitive_raw(self, t: float) -> np.ndarray:
        """``R_k`` entries with shape ``(K, 3, n, n)``."""
        st = self.state(t)
        out = []
        for c, k in zip(st["g2"], self.directions):
            e = np.asarray(k, dtype=float) / math.hypot(*k)
            rc = st["rho"] * c
            out.append(np.stack([rc * e[0] * e[0], rc * e[0] * e[1], rc * e[1] * e[1]]))
        return np.stack(out)

    def primitive_stresses(self, t: float) -> list[SymTensorField]:
        grid = self.state(t)["grid"]
        return [SymTensorField(grid, r) for r in self.primitive_raw(t)]

    def primitive_dt_raw(self, t: float) -> np.ndarray:
        """``d/dt R_k`` by sixth-order central differences."""
        return fd6(self.primitive_raw, t, self.time_step)

    def ratio_max(self, t: float) -> float:
        """``max |R| / rho`` at time ``t``."""
        st = self.state(t)
        R = st["R"]
        return float(np.max(sym_operator_norm(R[0], R[1], R[2]) / st["rho"]))


def regularize(
    stress: Callable[[float], SymTensorField],
    interval: tuple[float, float],
    *,
    samples: Optional[Sequence[float]] = None,
    r_inf: Optional[float] = None,
    time_step: float = 1e-3,
) -> RegularizedStress:
    """Build the regularized stress; ``r_inf`` is measured on ``samples`` if not given."""
    if r_inf is None:
        if samples is None:
            a, b = interval
            samples = np.linspace(a, b, 33)[1:-1]
        r_inf = 0.0
        for t in samples:
            R = stress(float(t)).values
            if not np.all(np.isfinite(R)):
                raise ValueError(f"non-finite stress at t = {t}")
            r_inf = max(r_inf, float(np.max(sym_operator_norm(R[0], R[1], R[2]))))
    return RegularizedStress(stress, interval, r_inf, time_step=time_step)


class AmplitudeSet:
    """``a_k = theta rho^{1/2} Gamma_k(Id - R/rho)`` on demand."""

    def __init__(self, reg: RegularizedStress, floor: float = POSITIVITY_FLOOR):
        self.reg = reg
        self.floor = floor

    def raw(self, t: float) -> np.ndarray:
        st = self.reg.state(t)
        g2 = st["g2"]
        low = float(g2.min())
        if low < self.floor:
            raise BallViolationError(
                f"squared amplitude {low:.3e} below positivity floor {self.floor:.0e} at t = {t}"
            )
        return st["theta"] * np.sqrt(st["rho"]) * np.sqrt(g2)

    def raw_sq(self, t: float) -> np.ndarray:
        st = self.reg.state(t)
        return st["theta"] ** 2 * st["rho"] * st["g2"]

    def fields(self, t: float) -> list[ScalarField]:
        grid = self.reg.state(t)["grid"]
        return [ScalarField(grid, a) for a in self.raw(t)]

    def dt_raw(self, t: float) -> np.ndarray:
        return fd6(self.raw, t, self.reg.time_step)

    def dt_sq_raw(self, t: float) -> np.ndarray:
        return fd6(self.raw_sq, t, self.reg.time_step)

    def norms(self, t: float) -> dict:
        out = {"C0": [], "C1": [], "L2": []}
        for a in self.fields(t):
            out["C0"].append(a.max_abs())
            out["C1"].append(c1_norm(a))
            out["L2"].append(lp_norm(a, 2))
        return out


def build_amplitudes(reg: RegularizedStress) -> AmplitudeSet:
    return AmplitudeSet(reg)
