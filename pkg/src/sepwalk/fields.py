"""Empirical measures, space-time path fields and their metrics.

The empirical density of a configuration is the finite-element (tent) field,
which interpolates the occupancies linearly between lattice nodes; it is
continuous, [0,1]-valued and has mass k/n.  Path fields collect per-time
density profiles on a uniform spatial grid together with the walker samples
and the counting measures.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .profiles import DensityProfile


def empirical_density(occupancy: np.ndarray) -> DensityProfile:
    """Finite-element density of a configuration: piecewise linear with node
    value eta(x) at each site x."""
    occ = np.asarray(occupancy, dtype=float)
    n = occ.shape[0]
    return DensityProfile(np.arange(n) / n, occ)


def block_average(profile: DensityProfile, x: float, eps: float) -> float:
    """One-sided block average (1/eps) * integral over (x, x + eps]."""
    if not 0.0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    return profile.integrate(x, x + eps) / eps


@dataclass
class PathField:
    """Space-time density samples on a uniform site grid, with walker path
    samples (lifted, in units of the macroscopic circle) and cumulative jump
    counts on the same time grid."""

    times: np.ndarray            # (M+1,)
    values: np.ndarray           # (M+1, n), densities in [0, 1]
    n: int
    T: float
    walker: Optional[np.ndarray] = None    # (M+1,) lifted positions
    n_plus: Optional[np.ndarray] = None    # (M+1,) cumulative counts
    n_minus: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, self.n):
            raise ValueError("values must have shape (len(times), n)")

    # -- accessors ----------------------------------------------------------

    def profile_at(self, i: int) -> DensityProfile:
        return DensityProfile(np.arange(self.n) / self.n, self.values[i])

    def mass(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def time_index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), self.times.size - 1)

    def density_at(self, t: float, x) -> np.ndarray:
        """Bilinear interpolation: linear in time between recorded profiles,
        periodic piecewise-linear in space."""
        i = self.time_index(t)
        j = min(i + 1, self.times.size - 1)
        if j == i or self.times[j] == self.times[i]:
            lam = 0.0
        else:
            lam = (t - self.times[i]) / (self.times[j] - self.times[i])
        row = (1 - lam) * self.values[i] + lam * self.values[j]
        x = np.asarray(x, dtype=float) % 1.0
        pos = x * self.n
        i0 = np.floor(pos).astype(int) % self.n
        frac = pos - np.floor(pos)
        out = row[i0] * (1 - frac) + row[(i0 + 1) % self.n] * frac
        return out if np.ndim(x) else float(out)

    def walker_at(self, t: float) -> float:
        if self.walker is None:
            raise ValueError("path field carries no walker samples")
        return float(np.interp(t, self.times, self.walker))

    def omega_masses(self) -> tuple[float, float]:
        """Total masses of the counting measures omega_+- on [0, T]."""
        if self.n_plus is None or self.n_minus is None:
            raise ValueError("path field carries no counting processes")
        return (float(self.n_plus[-1]) / self.n, float(self.n_minus[-1]) / self.n)

    def moving_frame(self) -> "PathField":
        """The same field seen from the walker: profiles shifted so the
        walker sits at the origin (walker positions are on the site grid)."""
        if self.walker is None:
            raise ValueError("path field carries no walker samples")
        shifted = np.empty_like(self.values)
        for i, w in enumerate(self.walker):
            site = int(round(w * self.n)) % self.n
            shifted[i] = np.roll(self.values[i], -site)
        return PathField(times=self.times.copy(), values=shifted, n=self.n,
                         T=self.T, walker=self.walker.copy(),
                         n_plus=None if self.n_plus is None else self.n_plus.copy(),
                         n_minus=None if self.n_minus is None else self.n_minus.copy())

    # -- CSV interfaces -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["# n", self.n, "T", repr(self.T), "grid", self.times.size])
        wr.writerow(["t", "x", "value"])
        xs = np.arange(self.n) / self.n
        for i, t in enumerate(self.times):
            for j in range(self.n):
                wr.writerow([repr(float(t)), repr(float(xs[j])),
                             repr(float(self.values[i, j]))])
        return buf.getvalue()

    def walker_csv(self) -> str:
        if self.walker is None or self.n_plus is None:
            raise ValueError("path field carries no walker samples")
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "x_lifted", "n_plus", "n_minus"])
        for i, t in enumerate(self.times):
            wr.writerow([repr(float(t)), repr(float(self.walker[i])),
                         int(self.n_plus[i]), int(self.n_minus[i])])
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "PathField":
        rows = list(csv.reader(io.StringIO(text)))
        head = rows[0]
        n = int(head[1])
        T = float(head[3])
        data = rows[2:]
        times = sorted({float(r[0]) for r in data})
        tindex = {t: i for i, t in enumerate(times)}
        values = np.zeros((len(times), n))
        for r in data:
            t, x, v = float(r[0]), float(r[1]), float(r[2])
            values[tindex[t], int(round(x * n)) % n] = v
        return PathField(times=np.array(times), values=values, n=n, T=T)


def record_path_field(traj, time_grid) -> tuple[PathField, PathField]:
    """Replay a trajectory's event log onto a time grid; returns the fixed
    frame and moving-frame path fields."""
    from . import _kernel

    if traj.events is None:
        raise ValueError("trajectory carries no event log")
    grid = np.asarray(time_grid, dtype=float)
    times, kinds, locs = traj.events
    n = traj.n
    values = np.empty((grid.size, n))
    walker = np.empty(grid.size)
    npl = np.zeros(grid.size, dtype=np.int64)
    nmi = np.zeros(grid.size, dtype=np.int64)
    for i, t in enumerate(grid):
        occ = traj.initial_occ.copy()
        w, k = _kernel.replay_state(occ, n, times, kinds, locs, t)
        values[i] = occ
        walker[i] = w / n
        applied_kinds = kinds[:k]
        npl[i] = int(np.sum(applied_kinds == _kernel.KIND_WALK_PLUS))
        nmi[i] = int(np.sum(applied_kinds == _kernel.KIND_WALK_MINUS))
    pf = PathField(times=grid.copy(), values=values, n=n, T=traj.T,
                   walker=walker, n_plus=npl, n_minus=nmi)
    return pf, pf.moving_frame()


# -- weak-topology metric -------------------------------------------------------


def _fourier_integral(profile: DensityProfile, k: int, kind: str) -> float:
    """Exact integral of cos/sin(2 pi k x) against the piecewise-linear
    density (segment-wise integration by parts)."""
    x0, x1, v0, v1 = profile._segments()
    if k == 0:
        return profile.mass()
    w = 2 * np.pi * k
    seg = x1 - x0
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(seg > 0, (v1 - v0) / np.where(seg > 0, seg, 1.0), 0.0)
    s0, s1 = np.sin(w * x0), np.sin(w * x1)
    c0, c1 = np.cos(w * x0), np.cos(w * x1)
    if kind == "cos":
        vals = (v1 * s1 - v0 * s0) / w + slope * (c1 - c0) / w**2
    else:
        vals = -(v1 * c1 - v0 * c0) / w + slope * (s1 - s0) / w**2
    return float(np.sum(vals))


def weak_distance(mu: DensityProfile, nu: DensityProfile,
                  n_max: int = 32) -> float:
    """Metric for the weak topology: sum over the Fourier dense family
    {1, cos(2 pi k x), sin(2 pi k x)} of 2^{-|N|} min(|int f_N d(mu-nu)|, 1),
    truncated at |N| <= n_max (truncation error <= 2^{1-n_max})."""
    total = min(abs(mu.mass() - nu.mass()), 1.0)
    for k in range(1, n_max + 1):
        wgt = 0.5**k
        for kind in ("cos", "sin"):
            diff = _fourier_integral(mu, k, kind) - _fourier_integral(nu, k, kind)
            total += wgt * min(abs(diff), 1.0)
    return float(total)


# -- energy norm ---------------------------------------------------------------


def energy_norm(field: PathField) -> float:
    """Discrete space-time L2 norm of the spatial gradient: central
    differences in space, trapezoid in time."""
    vals = field.values
    n = field.n
    dx = 1.0 / n
    grad = (np.roll(vals, -1, axis=1) - np.roll(vals, 1, axis=1)) / (2 * dx)
    per_time = np.sum(grad**2, axis=1) * dx
    return float(np.sqrt(np.trapezoid(per_time, field.times)))


# -- mollification and L1 comparison -------------------------------------------


def moving_average(values: np.ndarray, eps: float) -> np.ndarray:
    """Centred moving average of the periodic piecewise-linear field over a
    window of width eps, evaluated exactly at the grid nodes."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if eps <= 0:
        return values.copy()
    dx = 1.0 / n

    def antiderivative(v: np.ndarray, pos: np.ndarray) -> np.ndarray:
        # integral of the pw-linear field from 0 to pos (pos may exceed 1)
        seg = 0.5 * (v + np.roll(v, -1, axis=-1)) * dx
        cum = np.concatenate([np.zeros(v.shape[:-1] + (1,)),
                              np.cumsum(seg, axis=-1)], axis=-1)  # at nodes 0..n
        whole = np.floor(pos)
        frac_pos = pos - whole
        scaled = frac_pos * n
        i0 = np.minimum(np.floor(scaled).astype(int), n - 1)
        lam = scaled - i0
        v0 = v[..., i0]
        v1 = np.roll(v, -1, axis=-1)[..., i0]
        part = (v0 * lam + 0.5 * (v1 - v0) * lam**2) * dx
        return whole * cum[..., -1] + cum[..., i0] + part

    xs = np.arange(n) * dx
    hi = xs + eps / 2 + 1.0  # offset by a full period to keep positions >= 0
    lo = xs - eps / 2 + 1.0
    return (antiderivative(values, hi) - antiderivative(values, lo)) / eps


def l1_distance(values_a: np.ndarray, values_b: np.ndarray) -> float:
    """Exact L1 distance between two periodic piecewise-linear fields on the
    same uniform grid (sign changes are split within segments)."""
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    d0 = a - b
    d1 = np.roll(d0, -1)
    n = d0.shape[0]
    dx = 1.0 / n
    same = d0 * d1 >= 0
    area_same = 0.5 * np.abs(d0 + d1) * dx
    denom = np.where(d0 == d1, 1.0, d0 - d1)
    tstar = np.where(d0 == d1, 0.0, d0 / denom)
    area_split = 0.5 * dx * (np.abs(d0) * tstar + np.abs(d1) * (1 - tstar))
    return float(np.sum(np.where(same, area_same, area_split)))
