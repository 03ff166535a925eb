"""Tilt ingredients: smooth time functions, space-time test functions and
the perturbation triple (initial profile, environment tilt, walker tilt).

A test function H(t, x) is represented on a tensor basis: spatial Fourier
modes up to frequency K times time Chebyshev polynomials up to degree p, so
H, dH/dt, dH/dx and the Laplacian are exact linear combinations of basis
derivatives and H is smooth by construction.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .profiles import DensityProfile


class TimeFunction:
    """Polynomial function of time on [0, T] (power basis, ascending)."""

    def __init__(self, coefficients):
        c = np.atleast_1d(np.asarray(coefficients, dtype=float))
        while c.size > 1 and c[-1] == 0.0:
            c = c[:-1]
        self.coefficients = c

    @staticmethod
    def constant(value: float) -> "TimeFunction":
        return TimeFunction([float(value)])

    @staticmethod
    def zero() -> "TimeFunction":
        return TimeFunction([0.0])

    @property
    def is_constant(self) -> bool:
        return self.coefficients.size == 1

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coefficients)

    def derivative(self, t):
        dc = np.polynomial.polynomial.polyder(self.coefficients)
        if dc.size == 0:
            dc = np.zeros(1)
        return np.polynomial.polynomial.polyval(t, dc)

    def bound_abs(self, T: float) -> float:
        """A true upper bound for |a(t)| on [0, T]."""
        return float(sum(abs(c) * T**k for k, c in enumerate(self.coefficients)))

    def is_zero(self) -> bool:
        return bool(np.all(self.coefficients == 0.0))


def _cheb_to_power(cheb_coeffs: np.ndarray, T: float) -> np.ndarray:
    """Power-basis coefficients in t of sum_q c_q T_q(2t/T - 1)."""
    p = np.polynomial.chebyshev.cheb2poly(cheb_coeffs)  # in s = 2t/T - 1
    # substitute s = 2t/T - 1
    out = np.zeros_like(p)
    for k, c in enumerate(p):
        # c * (2t/T - 1)^k expanded
        for j in range(k + 1):
            out[j] += c * _binom(k, j) * (2.0 / T) ** j * (-1.0) ** (k - j)
    return out


def _binom(k: int, j: int) -> float:
    from math import comb

    return float(comb(k, j))


def _fejer_factor(k: int, n: int) -> float:
    """Exact tent-average attenuation of the frequency-k Fourier mode on the
    n-site lattice: n * integral of the mode against a finite element equals
    the mode value times this factor."""
    if k == 0:
        return 1.0
    z = np.pi * k / n
    return float((np.sin(z) / z) ** 2)


class TestFunctionH:
    """H(t, x) = sum_{q,s} theta[q, s] * Cheb_q(t) * mode_s(x).

    Spatial modes are ordered [cos(2pi x), sin(2pi x), ..., cos(2pi K x),
    sin(2pi K x)]; the constant spatial mode is excluded (it never moves the
    environment functional).
    """

    def __init__(self, theta: np.ndarray, T: float, K: Optional[int] = None):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if theta.shape[1] % 2 != 0:
            raise ValueError("theta needs an even number of spatial columns")
        self.theta = theta
        self.T = float(T)
        self.K = K if K is not None else theta.shape[1] // 2
        if 2 * self.K != theta.shape[1]:
            raise ValueError("spatial column count must be 2K")
        self.p = theta.shape[0] - 1
        # per spatial column: time polynomial (power basis) combining theta
        self._tcoef = np.zeros((2 * self.K, self.p + 1))
        for s in range(2 * self.K):
            self._tcoef[s] = _cheb_to_power(theta[:, s], self.T)

    # -- constructors --------------------------------------------------------

    @staticmethod
    def zero(T: float, K: int = 1, p: int = 0) -> "TestFunctionH":
        return TestFunctionH(np.zeros((p + 1, 2 * K)), T, K)

    @staticmethod
    def single_mode(kind: str, k: int, amplitude: float, T: float,
                    time_coeffs=None) -> "TestFunctionH":
        """One spatial mode (kind 'cos' or 'sin', frequency k) with a constant
        (default) or Chebyshev-coefficient time factor."""
        tc = np.atleast_1d(np.asarray(time_coeffs if time_coeffs is not None
                                      else [1.0], dtype=float))
        theta = np.zeros((tc.size, 2 * k))
        col = 2 * (k - 1) + (0 if kind == "cos" else 1)
        theta[:, col] = amplitude * tc
        return TestFunctionH(theta, T, k)

    @staticmethod
    def from_modes(modes, T: float) -> "TestFunctionH":
        """modes: iterable of (kind, k, amplitude[, time_cheb_coeffs])."""
        K = max(m[1] for m in modes)
        p = 0
        for m in modes:
            if len(m) > 3 and m[3] is not None:
                p = max(p, len(np.atleast_1d(m[3])) - 1)
        theta = np.zeros((p + 1, 2 * K))
        for m in modes:
            kind, k, amp = m[0], m[1], m[2]
            tc = np.atleast_1d(np.asarray(m[3], dtype=float)) if len(m) > 3 and m[3] is not None else np.array([1.0])
            col = 2 * (k - 1) + (0 if kind == "cos" else 1)
            theta[: tc.size, col] += amp * tc
        return TestFunctionH(theta, T, K)

    # -- evaluation ----------------------------------------------------------

    def _spatial(self, x: np.ndarray, deriv: int) -> np.ndarray:
        """(2K, ...) array of spatial modes (or derivatives) at x."""
        x = np.asarray(x, dtype=float)
        out = np.empty((2 * self.K,) + x.shape)
        for k in range(1, self.K + 1):
            w = 2 * np.pi * k
            ph = w * x
            if deriv == 0:
                c, s = np.cos(ph), np.sin(ph)
            elif deriv == 1:
                c, s = -w * np.sin(ph), w * np.cos(ph)
            elif deriv == 2:
                c, s = -(w**2) * np.cos(ph), -(w**2) * np.sin(ph)
            else:
                raise ValueError("derivative order must be 0, 1 or 2")
            out[2 * (k - 1)] = c
            out[2 * (k - 1) + 1] = s
        return out

    def _time(self, t: np.ndarray, deriv: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.empty((2 * self.K,) + t.shape)
        for s in range(2 * self.K):
            c = self._tcoef[s]
            if deriv:
                c = np.polynomial.polynomial.polyder(c)
                if c.size == 0:
                    c = np.zeros(1)
            out[s] = np.polynomial.polynomial.polyval(t, c)
        return out

    def _combine(self, t, x, tderiv: int, xderiv: int):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        tv = self._time(t, tderiv)        # (2K,) + t.shape
        sv = self._spatial(x, xderiv)     # (2K,) + x.shape
        if tv.ndim == 1 and sv.ndim == 1:
            return float(np.dot(tv, sv))
        if t.ndim and x.ndim:
            return np.einsum("st,sx->tx", tv.reshape(2 * self.K, -1),
                             sv.reshape(2 * self.K, -1)).reshape(t.shape + x.shape)
        return np.tensordot(tv, sv, axes=(0, 0))

    def value(self, t, x):
        return self._combine(t, x, 0, 0)

    __call__ = value

    def dt(self, t, x):
        return self._combine(t, x, 1, 0)

    def dx(self, t, x):
        return self._combine(t, x, 0, 1)

    def lap(self, t, x):
        return self._combine(t, x, 0, 2)

    @property
    def time_independent(self) -> bool:
        return bool(np.all(self._tcoef[:, 1:] == 0.0)) if self._tcoef.shape[1] > 1 else True

    def is_zero(self) -> bool:
        return bool(np.all(self.theta == 0.0))

    def max_dx_bound(self) -> float:
        """True bound for max_{t,x} |dH/dx| on [0,T] x T (triangle inequality
        over modes with per-mode time bounds)."""
        total = 0.0
        for s in range(2 * self.K):
            k = s // 2 + 1
            tb = sum(abs(c) * self.T**j for j, c in enumerate(self._tcoef[s]))
            total += 2 * np.pi * k * tb
        return float(total)

    # -- lattice tables for the event-driven kernel --------------------------

    def kernel_tables(self, n: int):
        """Per-site tent-averaged mode values, their discrete Laplacian, and
        per-edge discrete gradients, plus time polynomial/antiderivative
        coefficient matrices.  All exact for the Fourier modes."""
        sites = np.arange(n) / n
        B = 2 * self.K
        phi = np.empty((B, n))
        for k in range(1, self.K + 1):
            f = _fejer_factor(k, n)
            phi[2 * (k - 1)] = np.cos(2 * np.pi * k * sites) * f
            phi[2 * (k - 1) + 1] = np.sin(2 * np.pi * k * sites) * f
        nxt = np.roll(phi, -1, axis=1)
        prv = np.roll(phi, 1, axis=1)
        gamma = n * (nxt - phi)               # edge e = (e, e+1)
        d2phi = n * n * (nxt + prv - 2 * phi)
        tcoef = self._tcoef.copy()
        tint = np.zeros((B, tcoef.shape[1] + 1))
        for s in range(B):
            tint[s] = np.polynomial.polynomial.polyint(tcoef[s])
        return phi, d2phi, gamma, tcoef, tint


@dataclass
class TiltParams:
    """Perturbation triple: initial profile, environment test function and
    walker tilt.  None components mean the null choice."""

    v0: Optional[DensityProfile] = None
    H: Optional[TestFunctionH] = None
    a: Optional[TimeFunction] = None

    @property
    def null(self) -> bool:
        return ((self.v0 is None)
                and (self.H is None or self.H.is_zero())
                and (self.a is None or self.a.is_zero()))

    def a_or_zero(self) -> TimeFunction:
        return self.a if self.a is not None else TimeFunction.zero()

    def content_hash(self) -> bytes:
        h = hashlib.sha256()
        if self.v0 is not None:
            h.update(self.v0.xs.tobytes())
            h.update(self.v0.values.tobytes())
        if self.H is not None:
            h.update(self.H.theta.tobytes())
            h.update(np.float64(self.H.T).tobytes())
        if self.a is not None:
            h.update(self.a.coefficients.tobytes())
        return h.digest()[:8]
