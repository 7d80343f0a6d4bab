"""Interval unions, refined time grids and high-order time differences."""

from __future__ import annotations

import json
from typing import Callable, Iterable, Sequence

import numpy as np

# central difference weights for the first derivative, offsets -3..3
FD6_WEIGHTS = np.array([-1.0 / 60, 3.0 / 20, -3.0 / 4, 0.0, 3.0 / 4, -3.0 / 20, 1.0 / 60])
FD6_OFFSETS = np.arange(-3, 4)


def fd6(func: Callable[[float], object], t: float, h: float):
    """Sixth-order central first derivative of ``func`` at ``t``.

    ``func`` may return scalars, arrays or fields supporting ``+`` and
    scalar ``*``.
    """
    acc = None
    for w, j in zip(FD6_WEIGHTS, FD6_OFFSETS):
        if w == 0.0:
            continue
        term = func(t + j * h) * (w / h)
        acc = term if acc is None else acc + term
    return acc


def fd6_from_samples(samples: Sequence, h: float):
    """Same stencil applied to the seven samples ``f(t + j h)``, ``j = -3..3``."""
    acc = None
    for w, s in zip(FD6_WEIGHTS, samples):
        if w == 0.0:
            continue
        term = s * (w / h)
        acc = term if acc is None else acc + term
    return acc


class IntervalSet:
    """Finite union of open intervals on the real line, kept merged and sorted."""

    def __init__(self, intervals: Iterable[tuple[float, float]] = ()):
        pieces = sorted((float(a), float(b)) for a, b in intervals if b > a)
        merged: list[tuple[float, float]] = []
        for a, b in pieces:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self.intervals = merged

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __repr__(self):
        return f"IntervalSet({self.intervals!r})"

    def intersect(self, a: float, b: float) -> "IntervalSet":
        return IntervalSet((max(x, a), min(y, b)) for x, y in self.intervals)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(list(self.intervals) + list(other.intervals))

    def complement(self, a: float, b: float) -> "IntervalSet":
        """Open intervals of ``(a, b)`` not covered (endpoints of pieces excluded)."""
        out, cur = [], a
        for x, y in self.intersect(a, b):
            if x > cur:
                out.append((cur, x))
            cur = max(cur, y)
        if cur < b:
            out.append((cur, b))
        return IntervalSet(out)

    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def measure_up_to(self, t: float) -> float:
        return self.intersect(-np.inf, t).measure()

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (t > a) & (t < b)
        return out

    def to_json(self) -> str:
        return json.dumps([[a, b] for a, b in self.intervals])

    @classmethod
    def from_json(cls, text: str) -> "IntervalSet":
        return cls(tuple(p) for p in json.loads(text))


def refined_time_grid(
    components: IntervalSet,
    coarse: int = 16,
    per_component: int = 64,
    interval: tuple[float, float] = (0.0, 1.0),
    margin: float = 0.0,
) -> np.ndarray:
    """Coarse uniform nodes on ``interval`` plus ``per_component`` nodes per piece.

    Refined nodes are Chebyshev-like interior points of each piece so that no
    node sits on a piece boundary.  ``margin`` trims nodes closer than that
    to the ends of ``interval`` (room for a difference stencil).
    """
    a, b = interval
    nodes = list(np.linspace(a, b, coarse + 2)[1:-1])
    for x, y in components.intersect(a, b):
        j = np.arange(per_component)
        s = 0.5 - 0.5 * np.cos(np.pi * (j + 0.5) / per_component)
        nodes.extend(x + (y - x) * s)
    nodes = np.unique(np.asarray(nodes))
    return nodes[(nodes > a + margin) & (nodes < b - margin)]
