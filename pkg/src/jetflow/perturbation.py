"""Velocity perturbation ``w = w_p + w_c + w_o + w_a`` and the exceptional set."""

from __future__ import annotations

from collections import OrderedDict
from typing import Optional

import numpy as np

from jetflow.amplitude import AmplitudeSet
from jetflow.errors import AliasingError
from jetflow.jets import JetFamily
from jetflow.spectral import VectorField
from jetflow.temporal import AcceleratingJet, TemporalProfiles
from jetflow.timegrid import IntervalSet

PIECES = ("w_p", "w_c", "w_o", "w_a")


def build_exceptional_set(profiles: TemporalProfiles, interval: tuple[float, float] = (0.0, 1.0)) -> IntervalSet:
    """Union of ``((t_k + n)/sigma - 1/(kappa sigma), (t_k + n)/sigma + 1/(kappa sigma))`` inside ``interval``.

    The centers are the starts of the temporal windows, so every window of
    every ``g_k`` lies inside the set.
    """
    s, kap = profiles.sigma, profiles.kappa
    half = 1.0 / (kap * s)
    pieces = []
    for tk in profiles.offsets:
        for n in range(-1, s + 1):
            c = (tk + n) / s
            pieces.append((c - half, c + half))
    return IntervalSet(pieces).intersect(*interval)


def oscillation_corrector(reg, profiles: TemporalProfiles, ops, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``(h, w_o)`` at ``t`` with ``w_o = -theta^2 sigma^{-1} P div sum h_k R_k``."""
    h = np.array([float(profiles.h(j, t)) for j in range(len(profiles))])
    theta = reg.state(t)["theta"]
    if theta == 0.0:
        return h, np.zeros((2,) + ops.shape)
    acc = np.tensordot(h, reg.primitive_raw(t), axes=1)
    return h, -(theta**2 / profiles.sigma) * ops.project(ops.div_sym(acc))


class Perturbation:
    """Time-indexed perturbation pieces built from amplitudes, jets and profiles.

    ``parts(t)`` returns raw ``(2, n, n)`` arrays together with the
    intermediate quantities that the stress assembly reuses.
    """

    def __init__(
        self,
        amplitudes: AmplitudeSet,
        jets: JetFamily,
        profiles: TemporalProfiles,
        *,
        amplitude_band: Optional[int] = None,
        cache_size: int = 16,
    ):
        self.amplitudes = amplitudes
        self.reg = amplitudes.reg
        self.jets = jets
        self.profiles = profiles
        self.acc = AcceleratingJet(jets, profiles)
        self.grid = jets.grid
        self.ops = self.grid.ops
        self.sigma = profiles.sigma
        self.omega = profiles.omega
        if amplitude_band is not None:
            total = amplitude_band + self.sigma * jets.band
            if 2 * total >= self.grid.n // 2:
                raise AliasingError(
                    f"grid cannot resolve products: amplitude band {amplitude_band} + "
                    f"sigma*jet band {self.sigma * jets.band} needs n > {4 * total}"
                )
        self.exceptional = build_exceptional_set(profiles)
        self._cache: OrderedDict[float, dict] = OrderedDict()
        self._cache_size = cache_size

    def parts(self, t: float) -> dict:
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            self._cache.move_to_end(t)
            return hit
        ops, sigma, omega = self.ops, self.sigma, self.omega
        st = self.reg.state(t)
        a = self.amplitudes.raw(t)
        zero = np.zeros((2,) + ops.shape)
        out = {"t": t, "a": a, "theta": st["theta"], "k": None}
        k = self.profiles.active(t)
        if k is None:
            out.update(w_p=zero, w_c=zero.copy(), w_a=zero.copy())
        else:
            e = self.jets.e[k][:, None, None]
            g = float(self.profiles.g(k, t))
            jet = self.acc.raw(k, t)
            ak = a[k]
            w_p = (ak * g * jet["w"])[None] * e
            stream = ak * g * jet["psi"]
            w_c = ops.perp(stream) / sigma - w_p
            w_a = -(sigma / omega) * ops.project((ak * ak * g * jet["w"] ** 2)[None] * e)
            out.update(k=k, g=g, jet=jet, stream=stream, w_p=w_p, w_c=w_c, w_a=w_a)
        out["h"], out["w_o"] = oscillation_corrector(self.reg, self.profiles, ops, t)
        out["w"] = out["w_p"] + out["w_c"] + out["w_o"] + out["w_a"]
        self._cache[t] = out
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return out

    def raw(self, piece: str, t: float) -> np.ndarray:
        return self.parts(t)[piece]

    def field(self, piece: str, t: float) -> VectorField:
        return VectorField(self.grid, self.parts(t)[piece])

    def w_p(self, t: float) -> VectorField:
        return self.field("w_p", t)

    def w_c(self, t: float) -> VectorField:
        return self.field("w_c", t)

    def w_o(self, t: float) -> VectorField:
        return self.field("w_o", t)

    def w_a(self, t: float) -> VectorField:
        return self.field("w_a", t)

    def w(self, t: float) -> VectorField:
        return self.field("w", t)


def build_perturbation(amplitudes: AmplitudeSet, jets: JetFamily, profiles: TemporalProfiles, **kw) -> Perturbation:
    return Perturbation(amplitudes, jets, profiles, **kw)


def build_principal(amplitudes, jets, profiles):
    """``t -> w_p(t)``."""
    return build_perturbation(amplitudes, jets, profiles).w_p


def build_corrector(amplitudes, jets, profiles):
    """``t -> w_c(t)``."""
    return build_perturbation(amplitudes, jets, profiles).w_c


def build_temporal_correctors(reg, amplitudes, jets, profiles):
    """``(t -> w_o(t), t -> w_a(t))``; ``reg`` must be the amplitudes' own regularization."""
    if amplitudes.reg is not reg:
        raise ValueError("amplitudes were built from a different regularized stress")
    pert = build_perturbation(amplitudes, jets, profiles)
    return pert.w_o, pert.w_a
