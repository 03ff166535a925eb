"""Exact simulation of the joint environment-walker process.

Each unordered neighbour pair exchanges at rate ex_mult * n^2 (ex_mult is the
diffusion-convention flag, default 1); the walker steps +-1 at rate
n e^{+-a(t)} c^{+-}.  The environment tilt multiplies the exchange rate of a
pair by the exponential of the change it causes in n * pi^n(H_t), which makes
the pathwise product of the accumulated exponential martingales the exact
density of the tilted law against the reference law.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernel
from .model import LocalRate, TorusLattice, evaluate_local_rate
from .rng import RngStream
from .tilt import TestFunctionH, TiltParams, TimeFunction

_DUMP_MAGIC = b"SEPW"
_DUMP_VERSION = 1


@dataclass
class Trajectory:
    """One realization: initial/final states, counting processes and an
    optional sparse event log (times strictly increasing, effective events
    only)."""

    n: int
    T: float
    ex_mult: float
    initial_occ: np.ndarray
    final_occ: np.ndarray
    final_w: int            # lifted walker position in lattice steps
    n_plus: int
    n_minus: int
    events: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None
    seed_key: int = 0
    tilt_hash: bytes = b"\x00" * 8

    @property
    def x_T(self) -> float:
        """Lifted final walker position on the macroscopic circle."""
        return self.final_w / self.n

    def state_at(self, t: float) -> tuple[np.ndarray, int]:
        """(configuration, lifted walker position) at time t, by replay."""
        if not 0 <= t <= self.T:
            raise ValueError("time outside the horizon")
        if self.events is None:
            raise ValueError("trajectory carries no event log")
        occ = self.initial_occ.copy()
        times, kinds, locs = self.events
        w, _ = _kernel.replay_state(occ, self.n, times, kinds, locs, t)
        return occ, int(w)


@dataclass
class TiltAccumulators:
    """Per-replica pathwise pieces of (1/n) log of the tilt martingale."""

    log_init: float = 0.0
    log_ma: float = 0.0
    log_mh: float = 0.0
    quad_error: float = 0.0

    @property
    def log_total(self) -> float:
        return self.log_init + self.log_ma + self.log_mh

    def martingale(self, n: int) -> float:
        """exp(n * (log_init + log_ma + log_mh))."""
        return float(np.exp(n * self.log_total))


_EMPTY_F = np.zeros(0)
_EMPTY_2D = np.zeros((0, 1))


def _tilt_kernel_data(tilt: Optional[TiltParams], n: int, T: float):
    """(a_coef, a_bound, tcoef, tint, phi, d2phi, gamma, time_indep, bH)."""
    a_coef = _EMPTY_F
    a_bound = 0.0
    if tilt is not None and tilt.a is not None and not tilt.a.is_zero():
        a_coef = tilt.a.coefficients
        a_bound = tilt.a.bound_abs(T)
    if tilt is not None and tilt.H is not None and not tilt.H.is_zero():
        phi, d2phi, gamma, tcoef, tint = tilt.H.kernel_tables(n)
        # true bound on |discrete gradient| / n over edges and times
        tmax = np.array([sum(abs(c) * T**j for j, c in enumerate(tc))
                         for tc in tcoef])
        bH = float(np.max(np.abs(gamma).T @ tmax) / n) if gamma.size else 0.0
        time_indep = tilt.H.time_independent
    else:
        phi = d2phi = gamma = np.zeros((0, n))
        tcoef = np.zeros((0, 1))
        tint = np.zeros((0, 2))
        bH = 0.0
        time_indep = True
    return a_coef, a_bound, tcoef, tint, phi, d2phi, gamma, time_indep, bH


def simulate(lattice: TorusLattice, rates: LocalRate, init: np.ndarray,
             tilt: Optional[TiltParams], T: float, stream: RngStream,
             recording: Optional[Sequence[float] | int] = None,
             record_events: bool = False,
             apply_tilt: bool = True,
             accumulate: Optional[bool] = None,
             ex_mult: float = 1.0,
             log_init: float = 0.0,
             quad_tol: Optional[float] = 1e-8):
    """Run one realization on [0, T].

    Returns (Trajectory, TiltAccumulators, PathField).  With apply_tilt=False
    the dynamics stay unperturbed but the martingale accumulators for the
    given (a, H) are still computed along the path.  `recording` is a sorted
    array of times (or a point count for a uniform grid); pass None to record
    endpoints only.  quad_tol bounds the accumulated between-event quadrature
    error estimate per unit time (None disables the check).
    """
    from .fields import PathField

    n = lattice.n
    if T <= 0:
        raise ValueError("horizon must be positive")
    occ = np.ascontiguousarray(np.asarray(init, dtype=np.uint8).copy())
    if occ.shape != (n,):
        raise ValueError("initial configuration has wrong shape")

    if recording is None:
        rec_times = np.array([0.0, T])
    elif isinstance(recording, (int, np.integer)):
        rec_times = np.linspace(0.0, T, int(recording))
    else:
        rec_times = np.asarray(recording, dtype=float)
        if np.any(np.diff(rec_times) < 0) or rec_times.size == 0:
            raise ValueError("recording grid must be sorted and non-empty")
        if rec_times[0] < 0 or rec_times[-1] > T:
            raise ValueError("recording grid must lie within [0, T]")

    null_tilt = tilt is None or tilt.null
    if accumulate is None:
        accumulate = not null_tilt
    if null_tilt:
        accumulate = False
    tilt_dynamics = bool(apply_tilt and not null_tilt)

    (a_coef, a_bound, tcoef, tint, phi, d2phi, gamma,
     time_indep, bH) = _tilt_kernel_data(tilt, n, T)
    dyn_a_bound = a_bound if tilt_dynamics else 0.0
    dyn_bH = bH if tilt_dynamics else 0.0

    cmaxp, cmaxm = rates.max_rates()
    support = np.asarray(rates.support, dtype=np.int64)

    bound_total = (ex_mult * n**3 * np.exp(dyn_bH)
                   + n * (cmaxp + cmaxm) * np.exp(dyn_a_bound))
    seed = np.uint64(stream.kernel_seed())

    nrec = rec_times.size
    rec_occ = np.zeros((nrec, n), dtype=np.uint8)
    rec_w = np.zeros(nrec, dtype=np.int64)
    rec_np = np.zeros(nrec, dtype=np.int64)
    rec_nm = np.zeros(nrec, dtype=np.int64)
    outf = np.zeros(3)
    outi = np.zeros(6, dtype=np.int64)

    ev_cap = 0
    if record_events:
        mean_ev = bound_total * T
        ev_cap = int(mean_ev + 10.0 * np.sqrt(mean_ev + 1.0) + 1024)
    while True:
        ev_time = np.zeros(max(ev_cap, 1))
        ev_kind = np.zeros(max(ev_cap, 1), dtype=np.int64)
        ev_loc = np.zeros(max(ev_cap, 1), dtype=np.int64)
        work = occ.copy()
        _kernel.run_joint(work, n, float(ex_mult), float(T),
                          support, rates.cplus, rates.cminus, cmaxp, cmaxm,
                          seed,
                          tilt_dynamics, bool(accumulate),
                          a_coef, dyn_a_bound,
                          tcoef, tint, phi, d2phi, gamma,
                          time_indep, dyn_bH,
                          rec_times, rec_occ, rec_w, rec_np, rec_nm,
                          ev_cap, ev_time, ev_kind, ev_loc,
                          outf, outi)
        if outi[5] == _kernel.STATUS_LOG_FULL:
            ev_cap = 2 * ev_cap + 1024
            continue
        break

    events = None
    if record_events:
        m = int(outi[4])
        events = (ev_time[:m].copy(), ev_kind[:m].copy(), ev_loc[:m].copy())

    traj = Trajectory(n=n, T=float(T), ex_mult=float(ex_mult),
                      initial_occ=np.asarray(init, dtype=np.uint8).copy(),
                      final_occ=work, final_w=int(outi[0]),
                      n_plus=int(outi[1]), n_minus=int(outi[2]),
                      events=events, seed_key=int(seed),
                      tilt_hash=(tilt.content_hash() if tilt is not None
                                 else b"\x00" * 8))
    acc = TiltAccumulators(log_init=float(log_init), log_ma=float(outf[0]),
                           log_mh=float(outf[1]), quad_error=float(outf[2]))
    if null_tilt:
        acc = TiltAccumulators(0.0, 0.0, 0.0, 0.0)
    if accumulate and quad_tol is not None and acc.quad_error > quad_tol * T:
        raise RuntimeError(
            f"between-event quadrature error estimate {acc.quad_error:.3e} "
            f"exceeds the requested tolerance {quad_tol:g} per unit time")

    pf = PathField(times=rec_times.copy(), values=rec_occ.astype(float),
                   walker=rec_w / n, n_plus=rec_np.copy(), n_minus=rec_nm.copy(),
                   n=n, T=float(T))
    return traj, acc, pf


def environment_view(traj: Trajectory, t: float) -> np.ndarray:
    """Configuration seen from the walker at time t: xi(z) = eta(x_t + z)."""
    occ, w = traj.state_at(t)
    return np.roll(occ, -(w % traj.n))


def martingale_bound_rate(lattice: TorusLattice, rates: LocalRate,
                          tilt: Optional[TiltParams], T: float,
                          ex_mult: float = 1.0) -> float:
    """Documented thinning bound: total candidate rate of the simulator."""
    n = lattice.n
    (a_coef, a_bound, _, _, _, _, _, _, bH) = _tilt_kernel_data(tilt, n, T)
    cmaxp, cmaxm = rates.max_rates()
    return float(ex_mult * n**3 * np.exp(bH)
                 + n * (cmaxp + cmaxm) * np.exp(a_bound))


def recover_walker_counts(traj: Trajectory, rates: LocalRate,
                          stream: RngStream) -> tuple[int, int]:
    """Reconstruct the counting processes (N+, N-) from the shift-labelled
    environment-as-seen-by-the-walker path.

    With at least two particles and two holes every labelled shift is a true
    walker step, and the reconstruction is exact.  With a single particle or
    a single hole, defect exchanges are indistinguishable from shifts, so
    each observed shift of sign z is kept with probability
    c^z(xi; 0) / (n + c^z(xi; 0)).  With no particles or no holes the shifts
    are invisible and (N+, N-) are fresh Poisson counts at rates
    n c^{+-}(flat; 0) T.
    """
    if traj.events is None:
        raise ValueError("trajectory carries no labelled event log")
    n = traj.n
    k = int(traj.initial_occ.sum())
    gen = stream.generator
    if 2 <= k <= n - 2:
        _, kinds, _ = traj.events
        return (int(np.sum(kinds == _kernel.KIND_WALK_PLUS)),
                int(np.sum(kinds == _kernel.KIND_WALK_MINUS)))
    if k == 0 or k == n:
        occ = traj.initial_occ
        cpv, cmv = evaluate_local_rate(rates, occ, 0)
        n_p = int(gen.poisson(n * cpv * traj.T))
        n_m = int(gen.poisson(n * cmv * traj.T))
        return n_p, n_m
    # single particle or single hole
    defect_val = 1 if k == 1 else 0
    occ = traj.initial_occ.copy()
    w = 0
    n_p = n_m = 0
    times, kinds, locs = traj.events
    for i in range(times.shape[0]):
        kind = int(kinds[i])
        if kind == _kernel.KIND_EXCHANGE:
            e = int(locs[i])
            e2 = (e + 1) % n
            if occ[e] == defect_val:
                delta = 1
            else:
                delta = -1
            sigma = -delta
        else:
            sigma = 1 if kind == _kernel.KIND_WALK_PLUS else -1
        xi_site = w % n
        cpv, cmv = evaluate_local_rate(rates, np.roll(occ, -xi_site), 0)
        cz = cpv if sigma == 1 else cmv
        if gen.random() < cz / (n + cz):
            if sigma == 1:
                n_p += 1
            else:
                n_m += 1
        # apply the event
        if kind == _kernel.KIND_EXCHANGE:
            e = int(locs[i])
            e2 = (e + 1) % n
            occ[e], occ[e2] = occ[e2], occ[e]
        else:
            w += 1 if kind == _kernel.KIND_WALK_PLUS else -1
    return n_p, n_m


class LocalFunction:
    """Local observable of the environment seen by the walker, tabulated over
    a finite window (same layout as the rate tables)."""

    def __init__(self, support: Sequence[int], table: Sequence[float]):
        self.support = tuple(int(s) for s in support)
        if len(table) != 1 << len(self.support):
            raise ValueError("table size must be 2^|support|")
        self.table = np.asarray(table, dtype=float)

    @staticmethod
    def from_callable(support: Sequence[int],
                      fn: Callable[[np.ndarray], float]) -> "LocalFunction":
        support = tuple(support)
        k = len(support)
        width = (max(support) - min(support) + 1) if support else 1
        table = np.empty(1 << k)
        for idx in range(1 << k):
            window = np.zeros(width, dtype=np.uint8)
            for i, off in enumerate(support):
                window[off - (min(support) if support else 0)] = (idx >> i) & 1
            table[idx] = float(fn(window))
        return LocalFunction(support, table)

    def grand_canonical_coefficients(self) -> np.ndarray:
        """Polynomial coefficients (ascending) of rho -> E_{nu_rho}[f]."""
        k = len(self.support)
        coef = np.zeros(k + 1)
        for idx in range(1 << k):
            poly = np.array([1.0])
            for i in range(k):
                factor = (np.array([0.0, 1.0]) if (idx >> i) & 1
                          else np.array([1.0, -1.0]))
                poly = np.convolve(poly, factor)
            coef[: poly.size] += self.table[idx] * poly
        return coef


def _tent_block_weights(n: int, eps: float) -> np.ndarray:
    """Exact integrals of the finite elements at offsets 0..ceil(eps n)+1
    over the one-sided block (0, eps] (walker coordinates)."""

    def tent_cdf(y: float, c: float) -> float:
        # integral of (1 - n|u - c|)^+ du over (-inf, y]
        lo, hi = c - 1.0 / n, c + 1.0 / n
        y = min(max(y, lo), hi)
        if y <= c:
            d = y - lo
            return 0.5 * n * d * d
        d = hi - y
        return 1.0 / n - 0.5 * n * d * d

    jmax = int(np.ceil(eps * n)) + 1
    wts = np.empty(jmax + 1)
    for j in range(jmax + 1):
        c = j / n
        wts[j] = tent_cdf(eps, c) - tent_cdf(0.0, c)
    return wts


def replacement_error(traj: Trajectory, f: LocalFunction, eps: float,
                      t: float) -> float:
    """Pathwise integral of f(environment at the walker) minus its
    grand-canonical average evaluated at the one-sided block density of the
    moving-frame empirical field.  Exact: the integrand is constant between
    events."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if traj.events is None:
        raise ValueError("trajectory carries no event log")
    if not 0 <= t <= traj.T:
        raise ValueError("time outside the horizon")
    times, kinds, locs = traj.events
    occ = traj.initial_occ.copy()
    wts = _tent_block_weights(traj.n, eps)
    support = np.asarray(f.support, dtype=np.int64)
    fbar = f.grand_canonical_coefficients()
    return float(_kernel.replay_replacement(
        occ, traj.n, times, kinds, locs,
        support, f.table, fbar, wts, np.int64(0), eps, t))


# -- binary trajectory dump (diagnostics replay only) --------------------------

_HEADER = struct.Struct("<4sHIdQ8sdQ")
_RECORD = struct.Struct("<dbi")


def write_trajectory_dump(traj: Trajectory, path: str) -> None:
    """Delta-encoded event dump.  Layout (little endian): magic 'SEPW',
    version u16, n u32, T f64, seed u64, tilt hash 8 bytes, exchange
    multiplier f64, record count u64; then per record: time delta f64,
    kind i8 (0 exchange, 1 walk+, 2 walk-), location i32 (edge index for
    exchanges, truncated pre-move lifted position for walks)."""
    if traj.events is None:
        raise ValueError("trajectory carries no event log")
    times, kinds, locs = traj.events
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_DUMP_MAGIC, _DUMP_VERSION, traj.n, traj.T,
                              traj.seed_key & (2**64 - 1), traj.tilt_hash,
                              traj.ex_mult, times.shape[0]))
        fh.write(np.asarray(traj.initial_occ, dtype=np.uint8).tobytes())
        prev = 0.0
        for i in range(times.shape[0]):
            fh.write(_RECORD.pack(times[i] - prev, int(kinds[i]), int(locs[i])))
            prev = times[i]


def read_trajectory_dump(path: str) -> Trajectory:
    with open(path, "rb") as fh:
        (magic, version, n, T, seed, tilt_hash, ex_mult,
         count) = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _DUMP_MAGIC or version != _DUMP_VERSION:
            raise ValueError("not a trajectory dump")
        init = np.frombuffer(fh.read(n), dtype=np.uint8).copy()
        times = np.empty(count)
        kinds = np.empty(count, dtype=np.int64)
        locs = np.empty(count, dtype=np.int64)
        tcur = 0.0
        for i in range(count):
            dt, kind, loc = _RECORD.unpack(fh.read(_RECORD.size))
            tcur += dt
            times[i] = tcur
            kinds[i] = kind
            locs[i] = loc
    occ = init.copy()
    w, _ = _kernel.replay_state(occ, n, times, kinds, locs, T)
    n_p = int(np.sum(kinds == _kernel.KIND_WALK_PLUS))
    n_m = int(np.sum(kinds == _kernel.KIND_WALK_MINUS))
    return Trajectory(n=int(n), T=float(T), ex_mult=float(ex_mult),
                      initial_occ=init, final_occ=occ, final_w=int(w),
                      n_plus=n_p, n_minus=n_m,
                      events=(times, kinds, locs), seed_key=int(seed),
                      tilt_hash=tilt_hash)
