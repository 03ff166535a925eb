"""Macroscopic density profiles on the unit circle.

A profile is a periodic, piecewise-linear function given by knots
(x_i, value_i) with 0 <= x_i < 1.  Values live in [0, 1]; a profile may be
flagged "interior", meaning eps <= value <= 1 - eps for a stored eps > 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class DensityProfile:
    """Periodic piecewise-linear density on the circle of length 1."""

    xs: np.ndarray          # sorted knot positions in [0, 1)
    values: np.ndarray      # values at the knots, in [0, 1]
    interior_eps: float = 0.0

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vs = np.asarray(self.values, dtype=float)
        if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 1:
            raise ValueError("knot arrays must be 1-d and of equal length >= 1")
        if np.any(np.diff(xs) <= 0) or xs[0] < 0 or xs[-1] >= 1:
            raise ValueError("knots must be strictly increasing in [0, 1)")
        if np.any(vs < -1e-12) or np.any(vs > 1 + 1e-12):
            raise ValueError("profile values must lie in [0, 1]")
        if self.interior_eps > 0:
            lo, hi = self.interior_eps, 1 - self.interior_eps
            if np.any(vs < lo - 1e-12) or np.any(vs > hi + 1e-12):
                raise ValueError("profile not interior at the declared eps")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", np.clip(vs, 0.0, 1.0))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(rho: float, interior_eps: float = 0.0) -> "DensityProfile":
        return DensityProfile(np.array([0.0]), np.array([float(rho)]), interior_eps)

    @staticmethod
    def from_knots(knots: Iterable[tuple[float, float]],
                   interior_eps: float = 0.0) -> "DensityProfile":
        pts = sorted((float(x) % 1.0, float(v)) for x, v in knots)
        xs = np.array([p[0] for p in pts])
        vs = np.array([p[1] for p in pts])
        return DensityProfile(xs, vs, interior_eps)

    @staticmethod
    def from_callable(fn: Callable[[np.ndarray], np.ndarray], m: int = 512,
                      interior_eps: float = 0.0) -> "DensityProfile":
        xs = np.arange(m) / m
        return DensityProfile(xs, np.asarray(fn(xs), dtype=float), interior_eps)

    @staticmethod
    def cosine(mean: float, amplitude: float, k: int = 1, m: int = 512,
               interior_eps: float = 0.0) -> "DensityProfile":
        return DensityProfile.from_callable(
            lambda x: mean + amplitude * np.cos(2 * np.pi * k * x), m, interior_eps)

    # -- evaluation --------------------------------------------------------

    def __call__(self, x) -> np.ndarray:
        """Periodic linear interpolation at x (scalar or array)."""
        x = np.asarray(x, dtype=float) % 1.0
        xs, vs = self.xs, self.values
        if xs.size == 1:
            return np.broadcast_to(vs[0], x.shape).copy() if x.ndim else float(vs[0])
        # wrap by appending the first knot at x+1
        xe = np.concatenate([xs, [xs[0] + 1.0]])
        ve = np.concatenate([vs, [vs[0]]])
        # points below the first knot belong to the wrapped last segment
        xq = np.where(x < xs[0], x + 1.0, x)
        out = np.interp(xq, xe, ve)
        return out if x.ndim else float(out)

    # -- exact integrals of the piecewise-linear interpolant ----------------

    def _segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x0, x1, v0, v1) for each linear segment, covering one period."""
        xs, vs = self.xs, self.values
        if xs.size == 1:
            return (np.array([0.0]), np.array([1.0]), vs.copy(), vs.copy())
        x1 = np.concatenate([xs[1:], [xs[0] + 1.0]])
        v1 = np.concatenate([vs[1:], [vs[0]]])
        return xs.copy(), x1, vs.copy(), v1

    def integrate(self, a: float, b: float) -> float:
        """Exact integral of the profile over [a, b] (b >= a, may wrap)."""
        if b < a:
            raise ValueError("integrate expects b >= a")
        whole, frac = divmod(b - a, 1.0)
        total = whole * self.mass()
        if frac > 0:
            total += self._integrate_within(a % 1.0, frac)
        return total

    def _integrate_within(self, a: float, length: float) -> float:
        x0, x1, v0, v1 = self._segments()
        # unroll the period twice so [a, a+length] with length <= 1 is covered
        x0 = np.concatenate([x0, x0 + 1.0])
        x1 = np.concatenate([x1, x1 + 1.0])
        v0 = np.concatenate([v0, v0])
        v1 = np.concatenate([v1, v1])
        b = a + length
        lo = np.maximum(x0, a)
        hi = np.minimum(x1, b)
        h = np.clip(hi - lo, 0.0, None)
        seg = x1 - x0
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(seg > 0, (v1 - v0) / np.where(seg > 0, seg, 1.0), 0.0)
        vlo = v0 + slope * (lo - x0)
        vhi = v0 + slope * (hi - x0)
        return float(np.sum(0.5 * (vlo + vhi) * h))

    def mass(self) -> float:
        x0, x1, v0, v1 = self._segments()
        return float(np.sum(0.5 * (v0 + v1) * (x1 - x0)))

    # -- lattice projections -------------------------------------------------

    def cell_averages(self, n: int) -> np.ndarray:
        """Per-site success probabilities: n * integral over the width-1/n
        cell centred at each site x = i/n.  Exact for piecewise-linear
        profiles (the integral is split at the knots)."""
        half = 0.5 / n
        out = np.empty(n)
        for i in range(n):
            c = i / n
            out[i] = n * self.integrate(c - half, c + half)
        return np.clip(out, 0.0, 1.0)

    def sample_grid(self, m: int) -> np.ndarray:
        return np.asarray(self(np.arange(m) / m), dtype=float)

    # -- serialization -------------------------------------------------------

    def to_knot_text(self) -> str:
        lines = [f"{x!r} {v!r}" for x, v in zip(self.xs, self.values)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_knot_text(text: str, interior_eps: float = 0.0) -> "DensityProfile":
        knots = []
        for line in text.strip().splitlines():
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            knots.append((float(parts[0]), float(parts[1])))
        return DensityProfile.from_knots(knots, interior_eps)


def tent_average(fn: Callable[[np.ndarray], np.ndarray], n: int,
                 points_per_cell: int = 16) -> np.ndarray:
    """n * integral of fn against each finite element (tent of width 2/n).

    Gauss-Legendre nodes on each half of the tent; exact for smooth fn to
    high order.  Returns an array indexed by site.
    """
    nodes, weights = np.polynomial.legendre.leggauss(points_per_cell)
    sites = np.arange(n) / n
    total = np.zeros(n)
    for lo, hi in ((-1.0 / n, 0.0), (0.0, 1.0 / n)):
        mid, hw = (lo + hi) / 2, (hi - lo) / 2
        ys = sites[:, None] + mid + hw * nodes[None, :]
        tent = 1.0 - n * np.abs(ys - sites[:, None])
        total += hw * np.sum(weights[None, :] * tent * fn(ys % 1.0), axis=1)
    return n * total
