"""Randomized identity suites for the operators and the geometric decomposition."""

from __future__ import annotations

import numpy as np

from jetflow.amplitude import gamma_decompose, reconstruct
from jetflow.spectral import Grid, random_band_limited


def _rel(diff: np.ndarray, ref: np.ndarray) -> float:
    scale = float(np.abs(ref).max())
    err = float(np.abs(diff).max())
    return err / scale if scale > 0 else err


def operator_suite(n: int = 64, count: int = 100, seed: int = 0) -> dict[str, float]:
    """Largest relative residual of each operator identity over ``count`` draws.

    Inputs are random fields with ``|m|_inf <= n/8`` so that every product
    in the bilinear identity stays below the Nyquist frequency.
    """
    grid = Grid(n)
    ops = grid.ops
    rng = np.random.default_rng(seed)
    k = n // 8
    out = {"div_R": 0.0, "R_laplacian": 0.0, "div_B": 0.0, "leray_idempotent": 0.0, "leray_div_free": 0.0}
    for _ in range(count):
        v = random_band_limited(grid, "vector", k, rng).values
        # div R v = v - mean v
        Rv = ops.antidiv(v)
        out["div_R"] = max(out["div_R"], _rel(ops.div_sym(Rv) - (v - v.mean(axis=(1, 2), keepdims=True)), v))
        # R(Delta u) = grad u + grad u^T for divergence-free u
        u = ops.project(v)
        gu = [ops.grad(u[0]), ops.grad(u[1])]  # gu[l][j] = d_j u_l
        sym = np.stack([2 * gu[0][0], gu[1][0] + gu[0][1], 2 * gu[1][1]])
        out["R_laplacian"] = max(out["R_laplacian"], _rel(ops.antidiv(ops.laplacian(u)) - sym, sym))
        # div B(w, A) = w A - mean(w A) for zero-mean A
        A = random_band_limited(grid, "symtensor", k, rng, zero_mean=True).values
        A = A - A.mean(axis=(1, 2), keepdims=True)
        w = random_band_limited(grid, "vector", k, rng).values
        wA = np.stack([w[0] * A[0] + w[1] * A[1], w[0] * A[1] + w[1] * A[2]])
        lhs = ops.div_sym(ops.antidiv_B(w, A))
        out["div_B"] = max(out["div_B"], _rel(lhs - (wA - wA.mean(axis=(1, 2), keepdims=True)), wA))
        # Leray projection is idempotent and lands in divergence-free fields
        pu = ops.project(u)
        out["leray_idempotent"] = max(out["leray_idempotent"], _rel(pu - u, u))
        scale = 2 * np.pi * (n // 2) * float(np.abs(u).max())
        out["leray_div_free"] = max(out["leray_div_free"], float(np.abs(ops.div(u)).max()) / scale)
    return out


def random_ball_matrices(count: int, rng: np.random.Generator, radius: float = 0.5) -> np.ndarray:
    """Symmetric matrices ``Id + M`` with ``|M| <= radius`` as ``(11, 12, 22)`` stacks.

    ``M`` has eigenvalues uniform in ``[-radius, radius]`` and a uniform
    random eigenbasis; the extreme eigenvalues are included sometimes so the
    boundary of the ball is exercised.
    """
    lam = rng.uniform(-radius, radius, size=(count, 2))
    lam[: count // 10, 0] = radius * np.sign(rng.uniform(-1, 1, count // 10))
    ang = rng.uniform(0, np.pi, size=count)
    c, s = np.cos(ang), np.sin(ang)
    m11 = lam[:, 0] * c * c + lam[:, 1] * s * s
    m22 = lam[:, 0] * s * s + lam[:, 1] * c * c
    m12 = (lam[:, 0] - lam[:, 1]) * c * s
    return np.stack([1.0 + m11, m12, 1.0 + m22])


def geometric_suite(count: int = 1000, seed: int = 0) -> dict[str, float]:
    """Reconstruction residual and smallest coefficient on random ball matrices."""
    rng = np.random.default_rng(seed)
    R = random_ball_matrices(count, rng)
    g2 = gamma_decompose(R)
    back = reconstruct(g2)
    return {
        "reconstruction": float(np.abs(back - R).max()),
        "min_coefficient": float(g2.min()),
        "count": count,
    }
