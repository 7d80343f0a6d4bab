"""Temporal intermittency profiles and accelerating jets.

``G`` is the master profile on ``(0, 1)``; ``g_k(t) = gt_k(sigma t)`` where
``gt_k`` is the 1-periodic extension of ``kappa^{1/2} G(kappa (tau - t_k))``.
Every profile and antiderivative is evaluated in closed form from the
bump tables, so there is no time discretization in the profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from jetflow import bumps
from jetflow.errors import AliasingError, SupportError
from jetflow.jets import JetFamily
from jetflow.spectral import ScalarField, VectorField


def _cg() -> float:
    # int G^2 = c^2 * 2 * (1/8) int b^2 = 1
    return 2.0 / math.sqrt(bumps.bump_sq_integral().total)


def master(t):
    """``G(t) = c_G (b(8t - 2) - b(8t - 6))``."""
    t = np.asarray(t, dtype=float)
    return _cg() * (bumps.bump(8 * t - 2) - bumps.bump(8 * t - 6))


def master_d1(t):
    t = np.asarray(t, dtype=float)
    return 8 * _cg() * (bumps.bump_d1(8 * t - 2) - bumps.bump_d1(8 * t - 6))


def master_d2(t):
    t = np.asarray(t, dtype=float)
    return 64 * _cg() * (bumps.bump_d2(8 * t - 2) - bumps.bump_d2(8 * t - 6))


def master_integral(t):
    """``int_0^t G`` (vanishes for ``t <= 0`` and ``t >= 1``)."""
    t = np.asarray(t, dtype=float)
    prim = bumps.bump_integral()
    return _cg() / 8 * (prim(8 * t - 2) - prim(8 * t - 6))


def master_sq_integral(t):
    """``int_0^t G^2`` (0 for ``t <= 0``, 1 for ``t >= 1``)."""
    t = np.asarray(t, dtype=float)
    prim = bumps.bump_sq_integral()
    return _cg() ** 2 / 8 * (prim(8 * t - 2) + prim(8 * t - 6))


def master_max() -> float:
    return _cg() * math.exp(-1.0)


def default_offsets(count: int) -> tuple[float, ...]:
    """``t_k = (j + 1/2) / count``: centers of equal slots of ``[0, 1)``."""
    return tuple((j + 0.5) / count for j in range(count))


class TemporalProfiles:
    """Closed-form ``g_k``, ``h_k``, ``phi_k`` for one set of knobs.

    Args:
        kappa: Temporal concentration; each ``gt_k`` lives on a window of
            length ``1/kappa`` starting at ``t_k``.
        sigma: Oscillation, a positive integer.
        omega: Acceleration; ``phi_k' = omega g_k``.
        offsets: ``t_k`` in ``[0, 1)``.
        time_resolution: Optional smallest time step available to callers;
            profiles narrower than four steps are rejected.
    """

    def __init__(
        self,
        kappa: float,
        sigma: int,
        omega: float,
        offsets: Sequence[float],
        *,
        time_resolution: Optional[float] = None,
    ):
        if not kappa >= 1:
            raise ValueError(f"kappa must be >= 1, got {kappa}")
        if int(sigma) != sigma or sigma < 1:
            raise ValueError(f"sigma must be a positive integer, got {sigma}")
        if not omega > 0:
            raise ValueError(f"omega must be positive, got {omega}")
        self.kappa = float(kappa)
        self.sigma = int(sigma)
        self.omega = float(omega)
        self.offsets = tuple(float(t) % 1.0 for t in offsets)
        width = 1.0 / self.kappa
        starts = sorted(self.offsets)
        for a, b in zip(starts, starts[1:] + [starts[0] + 1.0]):
            if len(starts) > 1 and b - a < width - 1e-15:
                raise SupportError(
                    f"temporal windows of length {width:g} starting at {a:g} and {b % 1.0:g} overlap"
                )
        if time_resolution is not None and width / self.sigma < 4 * time_resolution:
            raise AliasingError(
                f"kappa*sigma = {self.kappa * self.sigma:g} is too large for time step {time_resolution:g}"
            )

    def __len__(self):
        return len(self.offsets)

    def _phase(self, k: int, t):
        """``kappa * ((sigma t - t_k) mod 1)`` and the number of whole periods."""
        tau = self.sigma * np.asarray(t, dtype=float) - self.offsets[k]
        whole = np.floor(tau)
        return self.kappa * (tau - whole), whole

    def g(self, k: int, t):
        s, _ = self._phase(k, t)
        return math.sqrt(self.kappa) * master(s)

    def dg(self, k: int, t):
        s, _ = self._phase(k, t)
        return self.sigma * self.kappa**1.5 * master_d1(s)

    def d2g(self, k: int, t):
        s, _ = self._phase(k, t)
        return self.sigma**2 * self.kappa**2.5 * master_d2(s)

    def _sq_antideriv(self, k: int, t):
        # antiderivative of gt_k^2 in tau, continuous across periods
        s, whole = self._phase(k, t)
        return whole + master_sq_integral(s)

    def h(self, k: int, t):
        """``h_k(t) = int_0^{sigma t} (gt_k^2 - 1)``."""
        t = np.asarray(t, dtype=float)
        return self._sq_antideriv(k, t) - self._sq_antideriv(k, 0.0) - self.sigma * t

    def phi(self, k: int, t):
        """``phi_k(t) = omega int_0^t g_k``."""
        s, _ = self._phase(k, t)
        s0, _ = self._phase(k, 0.0)
        return self.omega / (self.sigma * math.sqrt(self.kappa)) * (
            master_integral(s) - master_integral(s0)
        )

    def windows(self, k: int) -> list[tuple[float, float]]:
        """Support intervals of ``g_k`` inside ``[0, 1]``."""
        out = []
        for j in range(self.sigma + 1):
            a = (self.offsets[k] + j) / self.sigma
            b = a + 1.0 / (self.kappa * self.sigma)
            a, b = max(a, 0.0), min(b, 1.0)
            if a < b:
                out.append((a, b))
        if self.offsets[k] + 1.0 / self.kappa > 1.0:
            # window wrapping past tau = 1 also covers the start of [0, 1]
            b = (self.offsets[k] + 1.0 / self.kappa - 1.0) / self.sigma
            out.append((0.0, b))
        return sorted(out)

    def active(self, t: float) -> Optional[int]:
        """Index of the only ``g_k`` that is nonzero at ``t``, or ``None``."""
        for k in range(len(self)):
            s, _ = self._phase(k, t)
            if 0.0 < float(s) < 1.0:
                return k
        return None

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "sigma": self.sigma,
            "omega": self.omega,
            "offsets": list(self.offsets),
        }


def build_temporal(
    kappa: float,
    sigma: int,
    omega: float,
    offsets: Optional[Sequence[float]] = None,
    *,
    count: int = 4,
    time_resolution: Optional[float] = None,
) -> TemporalProfiles:
    if offsets is None:
        offsets = default_offsets(count)
    return TemporalProfiles(kappa, sigma, omega, offsets, time_resolution=time_resolution)


def gauss_time_norm(func, pieces: Sequence[tuple[float, float]], p: float, nodes: int = 48) -> float:
    """``(int |func|^p dt)^{1/p}`` by composite Gauss-Legendre over ``pieces``.

    ``func`` maps an array of times to an array of nonnegative values.
    Each piece should be an interval on which the integrand is smooth.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    if np.isinf(p):
        tt = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * x for a, b in pieces])
        return float(np.max(np.abs(func(tt))))
    total = 0.0
    for a, b in pieces:
        tt = 0.5 * (a + b) + 0.5 * (b - a) * x
        total += 0.5 * (b - a) * float(np.sum(w * np.abs(func(tt)) ** p))
    return total ** (1.0 / p)


def smooth_pieces(profiles: TemporalProfiles, k: int, panels: int = 16) -> list[tuple[float, float]]:
    """Panels covering the support of ``g_k`` in ``[0, 1]``, split finely."""
    out = []
    for a, b in profiles.windows(k):
        edges = np.linspace(a, b, panels + 1)
        out.extend(zip(edges[:-1], edges[1:]))
    return out


@dataclass
class AcceleratingJet:
    """Composition of the stationary jets with ``Phi_k = sigma x + phi_k(t) e_k``."""

    jets: JetFamily
    profiles: TemporalProfiles

    def __post_init__(self):
        if self.jets.grid is None:
            raise ValueError("accelerating jets need a grid realization of the family")
        if self.jets.sigma != self.profiles.sigma:
            raise ValueError(
                f"jet family realized for sigma={self.jets.sigma}, profiles use sigma={self.profiles.sigma}"
            )
        if len(self.jets) != len(self.profiles):
            raise ValueError("one temporal profile per jet direction is required")

    def shift(self, k: int, t: float) -> float:
        return float(self.profiles.phi(k, t))

    def raw(self, k: int, t: float, which=("w", "wc", "psi")) -> dict[str, np.ndarray]:
        return self.jets.raw_fields(k, self.shift(k, t), which)

    def evaluate(self, k: int, t: float) -> tuple[VectorField, VectorField, ScalarField]:
        return self.jets.fields(k, self.shift(k, t))


def evaluate_accelerating_jet(
    jets: JetFamily, profiles: TemporalProfiles, k: int, t: float
) -> tuple[VectorField, VectorField, ScalarField]:
    """``(W_k o Phi_k, W_k^c o Phi_k, Psi_k o Phi_k)`` at time ``t``."""
    return AcceleratingJet(jets, profiles).evaluate(k, t)
