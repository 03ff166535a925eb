"""Numerical evaluation of the rate-function objects.

Covers the initial-profile entropy, the environment functional (concave
quadratic in the test function, maximized exactly over a finite basis), the
explicit walker cost in Legendre form with its finiteness tests, the cost
against a fixed walker tilt, the contraction upper bound, and the Orlicz
(Luxemburg) norm utility for the entropy-control diagnostics.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import PathField
from .hydro import HydroSolution, SpaceTimeGrid, solve_perturbed
from .model import LocalRate
from .profiles import DensityProfile
from .tilt import TestFunctionH, TiltParams, TimeFunction

TOL_ZERO = 1e-12


# -- initial entropy ------------------------------------------------------------


def _int_lin_log(a: float, b: float, c: float, d: float) -> float:
    """Exact integral over [0,1] of (a + b t) ln(c + d t), with c + d t >= 0.

    Endpoint zeros of the argument are integrable; an identically zero
    argument against positive weight diverges to -inf.
    """
    if abs(d) < 1e-300:
        w = a + 0.5 * b
        if c <= 0.0:
            if w == 0.0:
                return 0.0
            return -math.inf if w > 0 else math.inf
        return w * math.log(c)

    def F(u: float) -> float:
        if u < 0.0:
            u = 0.0
        A = a - b * c / d
        B = b / d
        if u == 0.0:
            return 0.0
        lu = math.log(u)
        return A * (u * lu - u) + B * (0.5 * u * u * lu - 0.25 * u * u)

    return (F(c + d) - F(c)) / d


def _merged_breakpoints(p: DensityProfile, q: DensityProfile) -> np.ndarray:
    xs = np.unique(np.concatenate([p.xs, q.xs]))
    return xs


def entropy_h(pi0: DensityProfile, u0: DensityProfile) -> float:
    """Relative-entropy cost of observing the initial profile pi0 when the
    particles are prepared on u0:

        int u0 log(u0/pi0) + (1-u0) log((1-u0)/(1-pi0)) dx

    by exact segment-wise integration of the piecewise-linear profiles.
    0 log 0 = 0; the value is +inf when pi0 touches {0,1} on a set of
    positive measure where u0 is interior.
    """
    xs = _merged_breakpoints(pi0, u0)
    xs_ext = np.concatenate([xs, [xs[0] + 1.0]])
    total = 0.0
    for x0, x1 in zip(xs_ext[:-1], xs_ext[1:]):
        h = x1 - x0
        if h <= 0:
            continue
        au, bu = float(u0(x0)), float(u0(x1)) - float(u0(x0))
        ap, bp = float(pi0(x0)), float(pi0(x1)) - float(pi0(x0))
        pieces = (
            _int_lin_log(au, bu, au, bu)
            - _int_lin_log(au, bu, ap, bp)
            + _int_lin_log(1 - au, -bu, 1 - au, -bu)
            - _int_lin_log(1 - au, -bu, 1 - ap, -bp)
        )
        if math.isinf(pieces) or math.isnan(pieces):
            return math.inf
        total += h * pieces
    return max(total, 0.0)


# -- environment functional ------------------------------------------------------


def _grid_quadrature(pi: PathField):
    """Node quadrature: trapezoid weights in time, uniform in space."""
    times = pi.times
    wt = np.zeros_like(times)
    wt[1:] += 0.5 * np.diff(times)
    wt[:-1] += 0.5 * np.diff(times)
    return times, wt, 1.0 / pi.n


def J_functional(H: TestFunctionH, pi: PathField, D: float = 1.0) -> float:
    """Environment cost of the path pi against the test function H:

        pi_T(H_T) - pi_0(H_0) - int pi_t(dH/dt + D Lap H) dt
        - D int int (dH/dx)^2 pi (1 - pi) dx dt
    """
    times, wt, dx = _grid_quadrature(pi)
    xs = np.arange(pi.n) / pi.n
    vals = pi.values
    HT = np.asarray(H.value(times[-1], xs))
    H0 = np.asarray(H.value(times[0], xs))
    boundary = dx * (np.dot(vals[-1], HT) - np.dot(vals[0], H0))
    dtH = np.asarray(H.dt(times, xs))
    lapH = np.asarray(H.lap(times, xs))
    dxH = np.asarray(H.dx(times, xs))
    lin = np.sum(wt[:, None] * vals * (dtH + D * lapH)) * dx
    chi = vals * (1.0 - vals)
    quad = D * np.sum(wt[:, None] * chi * dxH**2) * dx
    return float(boundary - lin - quad)


@dataclass
class IExResult:
    value: float
    h_term: float
    sup_term: float
    theta: np.ndarray            # (p+1, 2K) optimizer coefficients
    min_eigenvalue: float
    basis_K: int
    basis_p: int

    def optimizer(self, T: float) -> TestFunctionH:
        return TestFunctionH(self.theta, T)


def I_ex(pi: PathField, u0: DensityProfile, basis_K: int = 8, basis_p: int = 6,
         D: float = 1.0, rcond: float = 1e-10) -> IExResult:
    """Environment rate function: initial entropy plus the supremum of the
    cost functional over the tensor test-function basis.

    The functional is concave quadratic in the coefficients, J = b.theta -
    theta.A.theta with A positive semi-definite, so the supremum is
    b A^+ b / 4 attained at theta* = A^+ b / 2 (pseudo-inverse on the null
    space).
    """
    times, wt, dx = _grid_quadrature(pi)
    xs = np.arange(pi.n) / pi.n
    T = float(pi.T)
    nb_s = 2 * basis_K
    nb_t = basis_p + 1
    B = nb_s * nb_t

    # spatial mode values and derivatives at the grid nodes
    sval = np.empty((nb_s, pi.n))
    sdx = np.empty((nb_s, pi.n))
    slap = np.empty((nb_s, pi.n))
    for k in range(1, basis_K + 1):
        w = 2 * np.pi * k
        c, s = np.cos(w * xs), np.sin(w * xs)
        sval[2 * (k - 1)], sval[2 * k - 1] = c, s
        sdx[2 * (k - 1)], sdx[2 * k - 1] = -w * s, w * c
        slap[2 * (k - 1)], slap[2 * k - 1] = -w * w * c, -w * w * s

    # Chebyshev time factors and derivatives at the recorded times
    sarg = 2.0 * times / T - 1.0
    tval = np.empty((nb_t, times.size))
    tder = np.empty((nb_t, times.size))
    for q in range(nb_t):
        coef = np.zeros(q + 1)
        coef[q] = 1.0
        tval[q] = np.polynomial.chebyshev.chebval(sarg, coef)
        dcoef = np.polynomial.chebyshev.chebder(coef)
        tder[q] = np.polynomial.chebyshev.chebval(sarg, dcoef) * (2.0 / T)

    vals = pi.values
    chi = vals * (1.0 - vals)
    # linear part: b[(q,s)]
    proj_val = vals @ sval.T * dx       # (M+1, nb_s): pi_t(phi_s)
    proj_lap = vals @ slap.T * dx
    b = np.empty((nb_t, nb_s))
    for q in range(nb_t):
        bounds = tval[q, -1] * proj_val[-1] - tval[q, 0] * proj_val[0]
        integ = np.sum(wt[:, None] * (tder[q][:, None] * proj_val
                                      + D * tval[q][:, None] * proj_lap), axis=0)
        b[q] = bounds - integ
    bvec = b.reshape(B)

    # quadratic part: A[(q,s),(q',s')] = D sum_t wt Tq Tq' G_ss'(t)
    A = np.zeros((B, B))
    for i, t in enumerate(times):
        G = (sdx * (chi[i] * dx)) @ sdx.T          # (nb_s, nb_s)
        TT = np.outer(tval[:, i], tval[:, i])      # (nb_t, nb_t)
        A += D * wt[i] * np.kron(TT, G)

    evals, evecs = np.linalg.eigh(A)
    emax = float(evals[-1]) if B else 0.0
    min_eig = float(evals[0]) if B else 0.0
    if emax > 0 and min_eig < -1e-10 * emax:
        raise ArithmeticError("quadratic form numerically indefinite; "
                              "quadrature failure")
    keep = evals > rcond * max(emax, 1.0)
    inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
    y = evecs.T @ bvec
    sup_term = float(0.25 * np.dot(y, inv * y))
    theta = (evecs @ (inv * y) / 2.0).reshape(nb_t, nb_s)

    h_term = entropy_h(pi.profile_at(0), u0)
    return IExResult(value=h_term + sup_term, h_term=h_term,
                     sup_term=sup_term, theta=theta, min_eigenvalue=min_eig,
                     basis_K=basis_K, basis_p=basis_p)


# -- walker cost -----------------------------------------------------------------


def a_star(xdot: float, vplus: float, vminus: float,
           tol_zero: float = TOL_ZERO) -> float:
    """Optimal pointwise walker tilt; extended-real valued.

    Rates below tol_zero are routed to the degenerate branches as exact
    zeros (the formula's log diverges continuously there).
    """
    if min(vplus, vminus) > tol_zero:
        s = math.sqrt(xdot * xdot + 4.0 * vplus * vminus)
        return math.log((xdot + s) / (2.0 * vplus))
    vp = vplus if vplus > tol_zero else 0.0
    vm = vminus if vminus > tol_zero else 0.0
    if xdot > 0:
        return math.log(xdot / vp) if vp > 0 else math.inf
    if xdot < 0:
        return -math.log(-xdot / vm) if vm > 0 else -math.inf
    if vp > 0:
        return -math.inf
    return math.inf


def a_star_alt(xdot: float, vplus: float, vminus: float) -> float:
    """Second expression of the non-degenerate optimizer (for cross-checks):
    -log((-x' + sqrt(x'^2 + 4 v+ v-)) / (2 v-))."""
    s = math.sqrt(xdot * xdot + 4.0 * vplus * vminus)
    return -math.log((-xdot + s) / (2.0 * vminus))


def pointwise_rw_cost(xdot: float, vplus: float, vminus: float,
                      tol_zero: float = TOL_ZERO) -> float:
    """sup_a { a x' - v+(e^a - 1) - v-(e^{-a} - 1) }, with inf*0 = 0."""
    if min(vplus, vminus) > tol_zero:
        s = math.sqrt(xdot * xdot + 4.0 * vplus * vminus)
        a = math.log((xdot + s) / (2.0 * vplus))
        return a * xdot - s + vplus + vminus
    vp = vplus if vplus > tol_zero else 0.0
    vm = vminus if vminus > tol_zero else 0.0
    if xdot > 0:
        if vp == 0.0:
            return math.inf
        return xdot * math.log(xdot / vp) - xdot + vp + vm
    if xdot < 0:
        if vm == 0.0:
            return math.inf
        return -xdot * math.log(-xdot / vm) + xdot + vp + vm
    return vp + vm


@dataclass
class WalkerPath:
    """Candidate macroscopic walker trajectory: lifted path samples on a time
    grid with x_0 = 0 and central-difference derivative reconstruction."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times/values must be matching 1-d arrays")
        if abs(self.values[0]) > 1e-12:
            raise ValueError("walker paths start at 0")

    @staticmethod
    def from_function(fn, T: float, m: int = 512) -> "WalkerPath":
        ts = np.linspace(0.0, T, m + 1)
        return WalkerPath(ts, np.asarray(fn(ts), dtype=float))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def xdot(self) -> np.ndarray:
        return np.gradient(self.values, self.times)

    def max_jump(self) -> float:
        return float(np.max(np.abs(np.diff(self.values))))

    def is_absolutely_continuous(self, atom_tol: Optional[float] = None) -> bool:
        """Total-variation screening: declared non-absolutely continuous when
        a single grid step moves by more than atom_tol.  The default tolerance
        scales with the grid spacing and the mean speed, so a displacement
        that does not vanish with the recording resolution is an atom; for
        empirical paths pass the lattice threshold (e.g. 3/n) explicitly."""
        steps = np.abs(np.diff(self.values))
        if steps.size == 0:
            return True
        if atom_tol is None:
            tv = float(np.sum(steps))
            span = self.T if self.T > 0 else 1.0
            atom_tol = 10.0 * (span / steps.size) * (1.0 + tv / span) + 1e-12
        return bool(np.max(steps) <= atom_tol)

    def mollified(self, bandwidth: float) -> "WalkerPath":
        """Moving-average smoothing with the given time bandwidth (for raw
        empirical paths before rate evaluation)."""
        dt = float(np.mean(np.diff(self.times)))
        half = max(1, int(round(bandwidth / (2 * dt))))
        kernel = np.ones(2 * half + 1) / (2 * half + 1)
        padded = np.concatenate([np.full(half, self.values[0]),
                                 self.values,
                                 np.full(half, self.values[-1])])
        sm = np.convolve(padded, kernel, mode="valid")
        sm = sm - sm[0]
        return WalkerPath(self.times.copy(), sm)


def _density_at(density, t: float, x: float) -> float:
    if isinstance(density, HydroSolution):
        return float(density.u.density_at(t, x % 1.0))
    if isinstance(density, PathField):
        return float(density.density_at(t, x % 1.0))
    if isinstance(density, DensityProfile):
        return float(density(x % 1.0))
    raise TypeError("unsupported density representation")


@dataclass
class IRwResult:
    value: float
    absolutely_continuous: bool
    finite_xlogx: bool
    finite_plus: bool
    finite_minus: bool
    a_samples: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def flags(self) -> dict:
        return {
            "absolutely_continuous": self.absolutely_continuous,
            "finite_xlogx": self.finite_xlogx,
            "finite_log_vplus": self.finite_plus,
            "finite_log_vminus": self.finite_minus,
        }


def I_rw(x: WalkerPath, density, rates: LocalRate,
         atom_tol: Optional[float] = None) -> IRwResult:
    """Walker cost given the environment density: the time integral of the
    pointwise Legendre cost at the optimal tilt, infinite unless the path is
    absolutely continuous and the three integrability conditions hold
    (|x'| log+ |x'| and (x')^{+-} log+ (1/v^{+-}) integrable)."""
    ac = x.is_absolutely_continuous(atom_tol)
    if not ac:
        return IRwResult(math.inf, False, True, True, True)
    ts = x.times
    xd = x.xdot()
    vp_poly, vm_poly, _ = rates.velocity_evaluators()
    rho = np.array([_density_at(density, t, xv)
                    for t, xv in zip(ts, x.values)])
    vp = np.maximum(vp_poly(rho), 0.0)
    vm = np.maximum(vm_poly(rho), 0.0)

    logp = np.log(np.maximum(np.abs(xd), 1.0))
    fin1 = float(np.trapezoid(np.abs(xd) * logp, ts))
    with np.errstate(divide="ignore"):
        glogp = np.where(vp < 1.0, -np.log(np.maximum(vp, 0.0)), 0.0)
        glogm = np.where(vm < 1.0, -np.log(np.maximum(vm, 0.0)), 0.0)
    pos = np.maximum(xd, 0.0)
    neg = np.maximum(-xd, 0.0)
    int_p = pos * glogp      # inf * 0 handled: glog inf only where v == 0
    int_p[pos == 0.0] = 0.0
    int_m = neg * glogm
    int_m[neg == 0.0] = 0.0
    fin2 = float(np.trapezoid(int_p, ts))
    fin3 = float(np.trapezoid(int_m, ts))

    f_xlogx = math.isfinite(fin1)
    f_plus = math.isfinite(fin2)
    f_minus = math.isfinite(fin3)
    a_samples = np.array([a_star(float(d), float(p), float(m_))
                          for d, p, m_ in zip(xd, vp, vm)])
    if not (f_xlogx and f_plus and f_minus):
        return IRwResult(math.inf, True, f_xlogx, f_plus, f_minus, a_samples)
    costs = np.array([pointwise_rw_cost(float(d), float(p), float(m_))
                      for d, p, m_ in zip(xd, vp, vm)])
    if not np.all(np.isfinite(costs)):
        return IRwResult(math.inf, True, f_xlogx, f_plus, f_minus, a_samples)
    return IRwResult(float(np.trapezoid(costs, ts)), True, True, True, True,
                     a_samples)


def j_functional(a: TimeFunction, density, x: WalkerPath,
                 rates: LocalRate) -> float:
    """Cost against a fixed walker tilt:
    a(T) x_T - int { a'(t) x_t + sum_z v^z(pi_t(x_t)) (e^{z a(t)} - 1) } dt;
    satisfies j <= I_rw for every tilt, with equality at the optimizer."""
    ts = x.times
    vp_poly, vm_poly, _ = rates.velocity_evaluators()
    rho = np.array([_density_at(density, t, xv)
                    for t, xv in zip(ts, x.values)])
    vp = np.maximum(vp_poly(rho), 0.0)
    vm = np.maximum(vm_poly(rho), 0.0)
    at = np.asarray(a(ts), dtype=float)
    apr = np.asarray(a.derivative(ts), dtype=float)
    integrand = apr * x.values + vp * np.expm1(at) + vm * np.expm1(-at)
    return float(at[-1] * x.values[-1] - np.trapezoid(integrand, ts))


# -- contraction -----------------------------------------------------------------


@dataclass
class ContractCandidate:
    label: str
    value: float
    irw: float
    iex: float
    feasible: bool


@dataclass
class ContractResult:
    """Upper bound on the contracted walker rate function (never claimed as
    the exact infimum)."""

    value: float
    best: Optional[str]
    candidates: list[ContractCandidate]
    pi_best: Optional[PathField]


def contract_rate(x: WalkerPath, u0: DensityProfile, rates: LocalRate,
                  rho_grid: Optional[Sequence[float]] = None,
                  include_heat: bool = True,
                  tilt_candidates: Sequence[TiltParams] = (),
                  pde_grid: Optional[SpaceTimeGrid] = None,
                  D: float = 1.0,
                  basis_K: int = 4, basis_p: int = 2) -> ContractResult:
    """Best-effort minimization of I_rw(x | pi) + I_ex(pi) over a control
    family: constant-density environments (cost = initial entropy only),
    the unperturbed limit of u0, and optional controlled candidates; the
    walker tilt is chosen pointwise so the candidate reproduces x wherever
    the velocity range allows it (equivalently, the pointwise cost is
    finite)."""
    T = x.T
    candidates: list[ContractCandidate] = []
    best_val = math.inf
    best_label = None
    best_pi: Optional[PathField] = None

    def consider(label: str, density, iex_value: float,
                 pi_field: Optional[PathField]):
        nonlocal best_val, best_label, best_pi
        res = I_rw(x, density, rates)
        feasible = math.isfinite(res.value)
        total = res.value + iex_value
        candidates.append(ContractCandidate(label, total, res.value,
                                            iex_value, feasible))
        if feasible and total < best_val:
            best_val = total
            best_label = label
            best_pi = pi_field

    if rho_grid is None:
        rho_grid = np.linspace(0.05, 0.95, 19)
    for rho in rho_grid:
        prof = DensityProfile.constant(float(rho))
        iex = entropy_h(prof, u0)
        pf = PathField(times=np.array([0.0, T]),
                       values=np.full((2, 16), float(rho)), n=16, T=T)
        consider(f"const:{float(rho):.6g}", prof, iex, pf)

    if include_heat:
        grid = pde_grid or SpaceTimeGrid.make(128, T, D=D)
        from .hydro import solve_heat

        upath = solve_heat(u0, T, grid, D=D)
        consider("heat(u0)", upath, 0.0, upath)

    for i, tp in enumerate(tilt_candidates):
        grid = pde_grid or SpaceTimeGrid.make(128, T, D=D)
        v0 = tp.v0 if tp.v0 is not None else u0
        sol = solve_perturbed(v0, tp, rates, T, grid, D=D)
        iex_res = I_ex(sol.u, u0, basis_K=basis_K, basis_p=basis_p, D=D)
        consider(f"tilt:{i}", sol, iex_res.value, sol.u)

    if not math.isfinite(best_val):
        return ContractResult(math.inf, None, candidates, None)
    return ContractResult(best_val, best_label, candidates, best_pi)


# -- Orlicz machinery -------------------------------------------------------------


def phi(x) -> np.ndarray:
    """Young function x log(1 + x) (applied to |x|)."""
    ax = np.abs(x)
    return ax * np.log1p(ax)


class _PhiStarTable:
    """Legendre transform of the Young function, tabulated once."""

    def __init__(self):
        xs = np.concatenate([[0.0], np.logspace(-8, 13, 4200)])
        ys = np.log1p(xs) + xs / (1.0 + xs)       # phi'(x)
        vals = xs * ys - phi(xs)
        self.ys = ys
        self.vals = vals

    def __call__(self, y) -> np.ndarray:
        y = np.abs(np.asarray(y, dtype=float))
        out = np.interp(y, self.ys, self.vals)
        # beyond the table the conjugate is effectively e^{y-1}-like; the
        # diagnostics never reach it, but extrapolate monotonically
        big = y > self.ys[-1]
        if np.any(big):
            slope = (self.vals[-1] - self.vals[-2]) / (self.ys[-1] - self.ys[-2])
            out = np.where(big, self.vals[-1] + slope * (y - self.ys[-1]), out)
        return out


_PHI_STAR = None


def phi_star(y) -> np.ndarray:
    global _PHI_STAR
    if _PHI_STAR is None:
        _PHI_STAR = _PhiStarTable()
    return _PHI_STAR(y)


def luxemburg_norm(times: np.ndarray, values: np.ndarray,
                   which: str = "phi", tol: float = 1e-8) -> float:
    """Luxemburg norm inf{ lam > 0 : int Phi(|f|/lam) dt <= 1 } by bisection
    (trapezoid quadrature on the sample grid)."""
    times = np.asarray(times, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if np.all(values == 0.0):
        return 0.0
    fn = phi if which == "phi" else phi_star

    def integral(lam: float) -> float:
        return float(np.trapezoid(fn(values / lam), times))

    hi = float(np.max(values)) * max(times[-1], 1.0) + 1.0
    while integral(hi) > 1.0:
        hi *= 2.0
    lo = hi
    while integral(lo) <= 1.0 and lo > 1e-300:
        lo /= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if integral(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return float(hi)


# -- reporting -------------------------------------------------------------------


@dataclass
class RateBreakdown:
    """All rate-function components for one (path, environment) pair."""

    h_value: float
    J_value: float
    Iex_value: float
    j_value: float
    Irw_value: float
    I_total: float
    theta: Optional[np.ndarray] = None
    a_samples: Optional[np.ndarray] = None
    flags: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            return v

        payload = {
            "h": clean(self.h_value),
            "J": clean(self.J_value),
            "I_ex": clean(self.Iex_value),
            "j": clean(self.j_value),
            "I_rw": clean(self.Irw_value),
            "I_total": clean(self.I_total),
            "theta": None if self.theta is None else [list(map(float, row))
                                                      for row in self.theta],
            "a_samples": None if self.a_samples is None else [
                clean(float(v)) for v in self.a_samples],
            "flags": self.flags,
            "tolerances": self.tolerances,
        }
        return json.dumps(payload, sort_keys=True, indent=2)
