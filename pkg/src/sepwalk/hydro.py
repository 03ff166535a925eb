"""Deterministic limits: heat equation, controlled drift-diffusion equation
and the walker characteristic ODE, plus moving-frame transforms.

The controlled equation is du/dt = D Lap u - 2 D d/dx( u(1-u) dH/dx ), the
limit of the exchange dynamics tilted by the exponential martingale of H
(the drift coefficient is twice the quadratic coefficient of the
environment cost functional, which makes tilted paths cost-optimal).  The
walker follows f' = e^{a(t)} v+(u(t,f)) - e^{-a(t)} v-(u(t,f)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import PathField
from .model import LocalRate
from .profiles import DensityProfile
from .tilt import TestFunctionH, TiltParams, TimeFunction


class StabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform periodic space grid with m points and fixed time step."""

    m: int
    dt: float
    T: float
    scheme: str = "semi_implicit"   # or "explicit"

    def __post_init__(self):
        if self.m < 8:
            raise ValueError("need at least 8 spatial points")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")

    @staticmethod
    def make(m: int, T: float, dt: Optional[float] = None,
             scheme: str = "semi_implicit", D: float = 1.0) -> "SpaceTimeGrid":
        dx = 1.0 / m
        if dt is None:
            dt = 0.4 * dx * dx / D if scheme == "explicit" else dx / 8.0
        nt = max(1, int(np.ceil(T / dt)))
        return SpaceTimeGrid(m=m, dt=T / nt, T=T, scheme=scheme)

    @property
    def nt(self) -> int:
        return int(round(self.T / self.dt))

    def validate_stability(self, D: float) -> None:
        if self.scheme == "explicit" and self.dt > 0.5 / (D * self.m**2):
            raise StabilityError(
                f"explicit step dt={self.dt} violates dt <= 1/(2 D m^2)")


@dataclass
class HydroSolution:
    """Controlled-limit solution: density field, walker trajectory and the
    moving-frame field, all on the recorded time grid."""

    u: PathField
    uhat: PathField
    f_times: np.ndarray
    f_values: np.ndarray     # lifted walker positions
    D: float
    clamp_count: int = 0

    def f_at(self, t) -> np.ndarray:
        out = np.interp(t, self.f_times, self.f_values)
        return out if np.ndim(t) else float(out)


def _face_gradients(H: Optional[TestFunctionH], m: int, t: float) -> np.ndarray:
    if H is None:
        return np.zeros(m)
    faces = (np.arange(m) + 0.5) / m
    return np.asarray(H.dx(t, faces), dtype=float)


def _drift_divergence(u: np.ndarray, g: np.ndarray, D: float) -> np.ndarray:
    """-d/dx of the flux 2 D chi(u) dH/dx in conservative form (chi at
    faces by averaging); exact discrete conservation by telescoping."""
    uf = 0.5 * (u + np.roll(u, -1))
    flux = 2.0 * D * uf * (1.0 - uf) * g       # face i+1/2
    m = u.shape[0]
    return -(flux - np.roll(flux, 1)) * m


def _evolve(v0: DensityProfile, H: Optional[TestFunctionH], T: float,
            grid: SpaceTimeGrid, D: float):
    """March the density; returns (times_full, u_store, store_index) where
    u_store holds every recorded level including both endpoints."""
    m = grid.m
    dx = 1.0 / m
    nt = grid.nt
    dt = grid.dt
    grid.validate_stability(D)

    u = v0.sample_grid(m).astype(float)
    drift = H is not None and not H.is_zero()

    if grid.scheme == "explicit":
        lam = None
    else:
        k = np.arange(m // 2 + 1)
        lam = (2.0 * np.cos(2 * np.pi * k / m) - 2.0) / dx**2

    store_every = max(1, nt // 1024)
    stored = [u.copy()]
    stored_idx = [0]

    for step in range(nt):
        t0 = step * dt
        if grid.scheme == "explicit":
            lap = (np.roll(u, -1) - 2 * u + np.roll(u, 1)) / dx**2
            rhs = D * lap
            if drift:
                rhs = rhs + _drift_divergence(u, _face_gradients(H, m, t0), D)
            u = u + dt * rhs
        else:
            theta = 1.0 if step < 2 else 0.5
            uhatf = np.fft.rfft(u)
            half = t0 + 0.5 * dt
            g = _face_gradients(H, m, half) if drift else None
            num = 1.0 + (1.0 - theta) * dt * D * lam
            den = 1.0 - theta * dt * D * lam
            if drift:
                n1 = _drift_divergence(u, g, D)
                u1 = np.fft.irfft((num * uhatf + dt * np.fft.rfft(n1)) / den, m)
                n2 = _drift_divergence(0.5 * (u + u1), g, D)
                u = np.fft.irfft((num * uhatf + dt * np.fft.rfft(n2)) / den, m)
            else:
                u = np.fft.irfft(num * uhatf / den, m)
        if (step + 1) % store_every == 0 or step == nt - 1:
            stored.append(u.copy())
            stored_idx.append(step + 1)

    times = np.array(stored_idx, dtype=float) * dt
    return times, np.array(stored), np.array(stored_idx)


def solve_heat(u0: DensityProfile, T: float, grid: SpaceTimeGrid,
               D: float = 1.0) -> PathField:
    """Heat equation du/dt = D Lap u with periodic second-order differences;
    mass conserved to round-off, values stay within the initial range."""
    times, vals, _ = _evolve(u0, None, T, grid, D)
    return PathField(times=times, values=vals, n=grid.m, T=T)


def solve_perturbed(v0: DensityProfile, tilt: TiltParams, rates: LocalRate,
                    T: float, grid: SpaceTimeGrid, D: float = 1.0) -> HydroSolution:
    """Controlled drift-diffusion limit u_i (independent of the walker tilt)
    plus the walker ODE driven by the density at the moving position
    (RK4; the density argument is linear-in-space interpolation and the ODE
    step equals the PDE step), and the moving-frame field."""
    H = tilt.H if tilt is not None else None
    a = tilt.a_or_zero() if tilt is not None else TimeFunction.zero()
    m = grid.m
    nt = grid.nt
    dt = grid.dt

    times, u_store, store_idx = _evolve(v0, H, T, grid, D)
    vp_poly, vm_poly, _ = rates.velocity_evaluators()

    # dense density levels are re-generated for the ODE by a second pass to
    # avoid storing every step; instead interpolate between stored levels
    # (store_every is 1 unless nt > 1024, keeping the interpolation error at
    # the scheme's own order).
    clamp = 0

    def u_interp(t: float, x: float) -> float:
        nonlocal clamp
        i = min(int(np.searchsorted(times, t, side="right")) - 1, times.size - 1)
        i = max(i, 0)
        j = min(i + 1, times.size - 1)
        lam = 0.0 if j == i or times[j] == times[i] else (t - times[i]) / (times[j] - times[i])
        row = (1 - lam) * u_store[i] + lam * u_store[j]
        pos = (x % 1.0) * m
        i0 = int(np.floor(pos)) % m
        frac = pos - np.floor(pos)
        val = row[i0] * (1 - frac) + row[(i0 + 1) % m] * frac
        if val < 0.0 or val > 1.0:
            clamp += 1
            val = min(max(val, 0.0), 1.0)
        return float(val)

    def velocity(t: float, x: float) -> float:
        rho = u_interp(t, x)
        at = float(a(t))
        return float(np.exp(at) * vp_poly(rho) - np.exp(-at) * vm_poly(rho))

    f_full = np.empty(nt + 1)
    f_full[0] = 0.0
    for step in range(nt):
        t0 = step * dt
        y = f_full[step]
        k1 = velocity(t0, y)
        k2 = velocity(t0 + dt / 2, y + dt * k1 / 2)
        k3 = velocity(t0 + dt / 2, y + dt * k2 / 2)
        k4 = velocity(t0 + dt, y + dt * k3)
        f_full[step + 1] = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6

    f_rec = f_full[store_idx]
    u_field = PathField(times=times, values=u_store, n=m, T=T)

    xs = np.arange(m) / m
    uhat_vals = np.empty_like(u_store)
    for i in range(times.size):
        pos = (xs + f_rec[i]) % 1.0
        scaled = pos * m
        i0 = np.floor(scaled).astype(int) % m
        frac = scaled - np.floor(scaled)
        uhat_vals[i] = (u_store[i, i0] * (1 - frac)
                        + u_store[i, (i0 + 1) % m] * frac)
    uhat_field = PathField(times=times, values=uhat_vals, n=m, T=T,
                           walker=f_rec.copy())

    return HydroSolution(u=u_field, uhat=uhat_field, f_times=times,
                         f_values=f_rec, D=D, clamp_count=clamp)


def evaluate_frame(sol: HydroSolution, t: float, x_query: float) -> float:
    """Moving-frame density value: u(t, x_query + f(t)) via bilinear
    interpolation with periodic wrap of the lifted coordinate."""
    return float(sol.u.density_at(t, (x_query + sol.f_at(t)) % 1.0))
