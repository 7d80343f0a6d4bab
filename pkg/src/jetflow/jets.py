"""Stationary jets ``W_k``, correctors ``W_k^c`` and stream functions ``Psi_k``.

Each jet lives in two forms.  The *profile* form evaluates the exact,
compactly supported functions pointwise and is what support and scaling
measurements use.  The *grid* form is the exact Fourier series of the
periodized profile truncated to a band that the grid can carry; it is
what the pseudospectral pipeline multiplies and differentiates.  The
truncation is rescaled so that the discrete mean of ``W_k (x) W_k`` is
exactly ``e_k (x) e_k``; the lost fraction is reported as
``resolution_defect``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from jetflow import bumps
from jetflow.errors import AliasingError, SupportError
from jetflow.spectral import Grid, ScalarField, VectorField

DIRECTIONS: tuple[tuple[int, int], ...] = ((1, 0), (0, 1), (1, 1), (1, -1))
DEFAULT_MU0 = 8.0


def default_centers(count: int) -> tuple[tuple[float, float], ...]:
    """Centers on the 2x2 subgrid ``{1/4, 3/4}^2``."""
    grid = ((0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75))
    if count > len(grid):
        raise SupportError(f"only {len(grid)} separated centers are available, {count} requested")
    return grid[:count]


def unit(k: Sequence[int]) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return k / np.hypot(k[0], k[1])


def perp(e: np.ndarray) -> np.ndarray:
    return np.array([-e[1], e[0]])


@dataclass(frozen=True)
class JetParams:
    """Concentration knobs and geometry of one jet family.

    Args:
        nu: Lateral concentration; the profile across the jet axis has
            width ``1/(mu0 nu)``.
        mu: Longitudinal concentration, ``mu >= nu``.
        mu0: Separation scale; every profile support sits in a ball of
            radius ``1/mu0`` and the centers are ``4/mu0`` apart.
        directions: Integer direction vectors.
        centers: One center per direction; defaults to the 2x2 subgrid.
    """

    nu: float
    mu: float
    mu0: float = DEFAULT_MU0
    directions: tuple[tuple[int, int], ...] = DIRECTIONS
    centers: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if not (self.mu0 > 0 and self.mu0 <= self.nu <= self.mu):
            raise ValueError(
                f"jet parameters need 0 < mu0 <= nu <= mu, got mu0={self.mu0}, nu={self.nu}, mu={self.mu}"
            )
        dirs = tuple(tuple(int(c) for c in k) for k in self.directions)
        if any(k == (0, 0) for k in dirs) or len(set(dirs)) != len(dirs):
            raise ValueError("directions must be distinct nonzero integer vectors")
        object.__setattr__(self, "directions", dirs)
        centers = self.centers if self.centers is not None else default_centers(len(dirs))
        centers = tuple((float(c[0]), float(c[1])) for c in centers)
        if len(centers) != len(dirs):
            raise ValueError("need exactly one center per direction")
        object.__setattr__(self, "centers", centers)
        rad = 2.0 / self.mu0
        for i, p in enumerate(centers):
            if min(p) < rad - 1e-15 or max(p) > 1.0 - rad + 1e-15:
                raise SupportError(f"ball of radius {rad:g} around center {p} leaves the unit cell")
            for q in centers[:i]:
                if math.dist(p, q) < 2 * rad - 1e-15:
                    raise SupportError(f"balls of radius {rad:g} around {q} and {p} overlap")

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "mu": self.mu,
            "mu0": self.mu0,
            "directions": [list(k) for k in self.directions],
            "centers": [list(p) for p in self.centers],
        }


def continuous_constant() -> float:
    """``c_k = (||phi||_2 ||psi'||_2)^{-1}``; independent of ``mu0`` and of ``k``."""
    return 1.0 / math.sqrt(bumps.bump_sq_integral().total * bumps.bump_d1_sq_total())


class JetFamily:
    """Jets for every direction of ``params``.

    Without a grid only the profile form is available.  With a grid, the
    realization for oscillation ``sigma`` keeps base frequencies
    ``|m|_inf <= band``; a shifted, dilated copy is produced by
    :meth:`fields`.
    """

    def __init__(
        self,
        params: JetParams,
        grid: Optional[Grid] = None,
        *,
        sigma: int = 1,
        band: Optional[int] = None,
        normalization: str = "discrete",
    ):
        if normalization not in ("discrete", "continuous"):
            raise ValueError("normalization must be 'discrete' or 'continuous'")
        self.params = params
        self.grid = grid
        self.sigma = int(sigma)
        self.normalization = normalization
        self.c = continuous_constant()
        self.e = [unit(k) for k in params.directions]
        self.e_perp = [perp(e) for e in self.e]
        self.band = None
        self._coef: dict[int, dict[str, np.ndarray]] = {}
        self.scale: list[float] = []
        self.resolution_defect: list[float] = []
        if grid is None:
            return
        if self.sigma < 1:
            raise ValueError("sigma must be a positive integer")
        grid.require_band(self.sigma * params.mu, "sigma*mu jet bandwidth")
        if band is None:
            band = (grid.n // 4) // self.sigma
        band = int(band)
        if band < 1 or self.sigma * band >= grid.n // 2:
            raise AliasingError(f"grid cannot resolve jet band {band} dilated by {self.sigma}")
        self.band = band
        for i in range(len(params.directions)):
            coef = self.spectrum(i, band)
            energy = float(np.sum(np.abs(coef["w"]) ** 2))
            s = 1.0 / math.sqrt(energy) if normalization == "discrete" else 1.0
            self._coef[i] = {key: s * val for key, val in coef.items()}
            self.scale.append(s)
            self.resolution_defect.append(1.0 - energy)

    @property
    def directions(self):
        return self.params.directions

    def __len__(self):
        return len(self.params.directions)

    # profile form -----------------------------------------------------------
    def _local(self, i: int, x1, x2):
        p = self.params.centers[i]
        d1 = (np.asarray(x1, dtype=float) - p[0] + 0.5) % 1.0 - 0.5
        d2 = (np.asarray(x2, dtype=float) - p[1] + 0.5) % 1.0 - 0.5
        e, ep = self.e[i], self.e_perp[i]
        return d1 * e[0] + d2 * e[1], d1 * ep[0] + d2 * ep[1]

    def profile(self, i: int, which: str, x1, x2) -> np.ndarray:
        """Exact profile of ``psi`` (scalar), ``w`` or ``wc`` (2-vectors) at points."""
        nu, mu, mu0 = self.params.nu, self.params.mu, self.params.mu0
        xk, yk = self._local(i, x1, x2)
        amp = self.c * math.sqrt(nu * mu)
        if which == "psi":
            return amp / mu * bumps.bump(mu0 * nu * xk) * bumps.bump(mu0 * mu * yk)
        if which == "w":
            s = -amp * bumps.bump(mu0 * nu * xk) * mu0 * bumps.bump_d1(mu0 * mu * yk)
            return s[None] * self.e[i].reshape(2, *([1] * s.ndim))
        if which == "wc":
            s = amp * nu / mu * mu0 * bumps.bump_d1(mu0 * nu * xk) * bumps.bump(mu0 * mu * yk)
            return s[None] * self.e_perp[i].reshape(2, *([1] * s.ndim))
        raise ValueError(f"unknown jet component {which!r}")

    def support_box(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box ``center +- half`` containing the profile support."""
        nu, mu, mu0 = self.params.nu, self.params.mu, self.params.mu0
        hx, hy = 1.0 / (mu0 * nu), 1.0 / (mu0 * mu)
        e, ep = self.e[i], self.e_perp[i]
        half = np.abs(e) * hx + np.abs(ep) * hy
        return np.asarray(self.params.centers[i]), half

    def quadrature_lattice(self, i: int, points: int = 128):
        """Square lattice covering the support box of jet ``i``.

        The spacing puts ``points`` nodes across the narrower side of the
        support rectangle.  Returns ``(x1, x2, cell_area)``.
        """
        mu, mu0 = self.params.mu, self.params.mu0
        center, half = self.support_box(i)
        h = 2.0 / (mu0 * mu) / points
        k = int(math.ceil(half.max() / h)) + 1
        offs = h * np.arange(-k, k + 1)
        x1, x2 = np.meshgrid(center[0] + offs, center[1] + offs, indexing="ij")
        return x1, x2, h * h

    def profile_norm(self, i: int, which: str, p: float, points: int = 128) -> float:
        """``L^p`` norm of the exact profile on the unit torus.

        Rectangle rule on :meth:`quadrature_lattice`; the integrand vanishes
        outside the lattice.
        """
        x1, x2, area = self.quadrature_lattice(i, points)
        vals = self.profile(i, which, x1, x2)
        mag = np.abs(vals) if vals.ndim == 2 else np.hypot(vals[0], vals[1])
        if np.isinf(p):
            return float(mag.max())
        return float((np.sum(mag**p) * area) ** (1.0 / p))

    # Fourier form -----------------------------------------------------------
    def spectrum(self, i: int, band: int) -> dict[str, np.ndarray]:
        """Exact Fourier coefficients on ``|m|_inf <= band`` (continuous ``c``).

        Returns arrays of shape ``(2 band + 1, 2 band + 1)`` indexed by
        ``m + band`` for ``psi``, and for the scalar amplitudes ``w`` (along
        ``e_k``) and ``wc`` (along ``e_k^perp``).
        """
        nu, mu, mu0 = self.params.nu, self.params.mu, self.params.mu0
        k1, k2 = self.params.directions[i]
        nk = math.hypot(k1, k2)
        m = np.arange(-band, band + 1)
        m1, m2 = m[:, None], m[None, :]
        ja = m1 * k1 + m2 * k2  # |k| (m . e)
        jb = -m1 * k2 + m2 * k1  # |k| (m . e_perp)
        top = int(np.abs(ja).max())
        ints = np.arange(-top, top + 1)
        phi_tab = bumps.bump_transform(ints / (nk * nu * mu0)) / (nu * mu0)
        psi_tab = bumps.bump_transform(ints / (nk * mu * mu0)) / (mu * mu0)
        p = self.params.centers[i]
        phase = np.exp(-2j * np.pi * (m1 * p[0] + m2 * p[1]))
        psi = self.c * math.sqrt(nu * mu) / mu * phase * phi_tab[ja + top] * psi_tab[jb + top]
        a = ja / nk
        b = jb / nk
        return {
            "psi": psi,
            "w": -2j * np.pi * b * psi,
            "wc": 2j * np.pi * a * psi,
        }

    def coefficients(self, i: int) -> dict[str, np.ndarray]:
        if self.grid is None:
            raise ValueError("this family has no grid realization")
        return self._coef[i]

    def _synthesize(self, coef: np.ndarray, shift: float, e: np.ndarray) -> np.ndarray:
        grid, sigma, band = self.grid, self.sigma, self.band
        n = grid.n
        m = np.arange(-band, band + 1)
        half = coef[:, band:]  # m2 >= 0
        if shift:
            ph = np.exp(2j * np.pi * shift * (m[:, None] * e[0] + m[None, band:] * e[1]))
            half = half * ph
        spec = np.zeros((n, n // 2 + 1), dtype=complex)
        rows = (sigma * m) % n
        cols = sigma * m[band:]
        spec[rows[:, None], cols[None, :]] = half
        return sfft.irfft2(spec * (n * n), s=(n, n))

    def raw_fields(self, i: int, shift: float = 0.0, which=("w", "wc", "psi")) -> dict[str, np.ndarray]:
        """Grid samples of ``f(sigma x + shift e_k)`` as scalar amplitudes.

        ``w`` and ``wc`` are the coefficients along ``e_k`` and
        ``e_k^perp``; multiply by the unit vectors for the vector fields.
        """
        coef = self.coefficients(i)
        return {key: self._synthesize(coef[key], shift, self.e[i]) for key in which}

    def fields(self, i: int, shift: float = 0.0) -> tuple[VectorField, VectorField, ScalarField]:
        """``(W_k, W_k^c, Psi_k)`` composed with ``x -> sigma x + shift e_k``."""
        raw = self.raw_fields(i, shift)
        e, ep = self.e[i], self.e_perp[i]
        w = VectorField(self.grid, raw["w"][None] * e[:, None, None])
        wc = VectorField(self.grid, raw["wc"][None] * ep[:, None, None])
        return w, wc, ScalarField(self.grid, raw["psi"])

    def W(self, i: int) -> VectorField:
        return self.fields(i)[0]

    def W_c(self, i: int) -> VectorField:
        return self.fields(i)[1]

    def Psi(self, i: int) -> ScalarField:
        return self.fields(i)[2]

    def mean_tensor(self, i: int) -> np.ndarray:
        """``mean(W_k (x) W_k)`` from the coefficients, as a 2x2 matrix."""
        energy = float(np.sum(np.abs(self.coefficients(i)["w"]) ** 2))
        return energy * np.outer(self.e[i], self.e[i])

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "c_k": self.c,
            "sigma": self.sigma,
            "band": self.band,
            "normalization": self.normalization,
            "scale": list(self.scale),
            "resolution_defect": list(self.resolution_defect),
            "grid": None if self.grid is None else self.grid.to_dict(),
        }


def build_jets(
    params: JetParams,
    grid: Optional[Grid] = None,
    *,
    sigma: int = 1,
    band: Optional[int] = None,
    normalization: str = "discrete",
) -> JetFamily:
    """Construct the jet family; see :class:`JetFamily`."""
    return JetFamily(params, grid, sigma=sigma, band=band, normalization=normalization)


def coefficient_energy(params: JetParams, i: int, band: int, chunk: int = 512) -> float:
    """``sum |hat W_k(m)|^2`` over ``|m|_inf <= band`` with the continuous constant.

    Equals ``||W_k||_2^2`` of the band-limited truncation; tends to 1 as the
    band grows.  Evaluated in row chunks so large bands stay in memory.
    """
    fam = JetFamily(params)
    nu, mu, mu0 = params.nu, params.mu, params.mu0
    k1, k2 = params.directions[i]
    nk = math.hypot(k1, k2)
    top = band * (abs(k1) + abs(k2))
    ints = np.arange(-top, top + 1)
    phi_tab = bumps.bump_transform(ints / (nk * nu * mu0)) / (nu * mu0)
    psi_tab = bumps.bump_transform(ints / (nk * mu * mu0)) / (mu * mu0)
    amp = fam.c * math.sqrt(nu * mu) / mu
    m = np.arange(-band, band + 1)
    total = 0.0
    for s in range(0, m.size, chunk):
        m1 = m[s : s + chunk, None]
        ja = m1 * k1 + m[None, :] * k2
        jb = -m1 * k2 + m[None, :] * k1
        w = 2 * np.pi * (jb / nk) * amp * phi_tab[ja + top] * psi_tab[jb + top]
        total += float(np.sum(w * w))
    return total


def directional_derivative_bound(jets: JetFamily, i: int, r: float, *, points: int = 128) -> float:
    """``||(e_k . grad) Psi_k||_r`` of the exact profile.

    ``(e_k . grad) Psi_k`` is the scalar amplitude of the corrector
    ``W_k^c``, so this is evaluated from that profile.
    """
    return jets.profile_norm(i, "wc", r, points=points)


def gradient_norm(jets: JetFamily, i: int, r: float, *, points: int = 128) -> float:
    """``||grad Psi_k||_r`` of the exact profile (``|grad Psi| = |W + W^c|``)."""
    x1, x2, area = jets.quadrature_lattice(i, points)
    v = jets.profile(i, "w", x1, x2) + jets.profile(i, "wc", x1, x2)
    mag = np.hypot(v[0], v[1])
    if np.isinf(r):
        return float(mag.max())
    return float((np.sum(mag**r) * area) ** (1.0 / r))
