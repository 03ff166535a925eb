"""Event-driven jitted kernels for the joint environment-walker process.

The simulator is statistically exact: candidate events are proposed at
constant bound rates and accepted with the exact (possibly time-dependent)
ratio, so no time-stepping bias enters.  The martingale accumulators are
updated exactly at events and by Gauss-Legendre quadrature of the smooth
time factors between events.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# Gauss-Legendre nodes/weights on [0, 1]
_GL4_X = np.array([0.06943184420297371239, 0.33000947820757186760,
                   0.66999052179242813240, 0.93056815579702628761])
_GL4_W = np.array([0.17392742256872692869, 0.32607257743127307131,
                   0.32607257743127307131, 0.17392742256872692869])
_GL2_X = np.array([0.21132486540518711775, 0.78867513459481288225])
_GL2_W = np.array([0.5, 0.5])

STATUS_OK = 0
STATUS_LOG_FULL = 1

KIND_EXCHANGE = 0
KIND_WALK_PLUS = 1
KIND_WALK_MINUS = 2


@njit(inline="always")
def _next_u64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(inline="always")
def _uniform(state):
    state, z = _next_u64(state)
    return state, (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _polyval(coef, t):
    acc = 0.0
    for i in range(coef.shape[0] - 1, -1, -1):
        acc = acc * t + coef[i]
    return acc


@njit(inline="always")
def _psi(u):
    # e^u - u - 1, stable near 0
    return np.expm1(u) - u


@njit(inline="always")
def _window_index(occ, n, site, support):
    idx = 0
    for i in range(support.shape[0]):
        s = (site + support[i]) % n
        idx |= np.int64(occ[s]) << i
    return idx


@njit(inline="always")
def _edge_psi(occ, n, e, gamma_tot):
    e2 = e + 1 if e + 1 < n else 0
    sig = np.int64(occ[e]) - np.int64(occ[e2])
    if sig == 0:
        return 0.0
    return n * _psi(sig * gamma_tot[e] / n)


@njit(cache=True, nogil=True)
def run_joint(occ, n, ex_mult, T,
              support, cp, cm, cmaxp, cmaxm,
              seed,
              tilt_dynamics, accumulate,
              a_coef, a_bound,
              tcoef, tint, phi, d2phi, gamma,
              h_time_indep, bH,
              rec_times, rec_occ, rec_w, rec_np, rec_nm,
              ev_cap, ev_time, ev_kind, ev_loc,
              outf, outi):
    """Simulate the joint process on [0, T] in place.

    occ is modified to the final configuration.  Recording arrays receive the
    state at each requested time.  outf = [log_ma, log_mh, quad_err];
    outi = [w, Nplus, Nminus, n_events, n_logged, status].
    """
    state = seed
    t = 0.0
    w = np.int64(0)
    n_plus = np.int64(0)
    n_minus = np.int64(0)
    n_events = np.int64(0)
    n_logged = np.int64(0)
    status = STATUS_OK

    B = tcoef.shape[0]
    has_a = a_coef.shape[0] > 0
    a_const = a_coef.shape[0] == 1

    # bound rates
    ex_edge_bound = ex_mult * n * n * np.exp(bH)
    ex_total = ex_edge_bound * n
    wp_bound = n * cmaxp * np.exp(a_bound)
    wm_bound = n * cmaxm * np.exp(a_bound)
    R = ex_total + wp_bound + wm_bound

    # accumulator state
    S = np.zeros(B)
    L = np.zeros(B)
    gamma_tot = np.zeros(n)
    psi_sum = 0.0
    log_mh0 = 0.0
    I_a = 0.0
    I_c = 0.0
    I_dh = 0.0
    I_lap = 0.0
    I_psi = 0.0
    quad_err = 0.0
    eap_c = 0.0
    eam_c = 0.0
    if accumulate or (tilt_dynamics and B > 0):
        for e in range(n):
            acc = 0.0
            for b in range(B):
                acc += tcoef[b, 0] * gamma[b, e]
            gamma_tot[e] = acc
    if accumulate:
        for b in range(B):
            sb = 0.0
            lb = 0.0
            for x in range(n):
                if occ[x]:
                    sb += phi[b, x]
                    lb += d2phi[b, x]
            S[b] = sb
            L[b] = lb
            log_mh0 += _polyval(tcoef[b], 0.0) * sb / n
        if B > 0 and h_time_indep:
            for e in range(n):
                psi_sum += _edge_psi(occ, n, e, gamma_tot)
        if has_a and a_const:
            eap_c = np.expm1(a_coef[0])
            eam_c = np.expm1(-a_coef[0])

    n_rec = rec_times.shape[0]
    rec_i = 0

    while True:
        if R > 0.0:
            state, u = _uniform(state)
            dt = -np.log(1.0 - u) / R
        else:
            dt = T - t + 1.0
        t_next = t + dt

        # record grid times passed before the next event
        stop = t_next if t_next < T else T
        while rec_i < n_rec and rec_times[rec_i] <= stop:
            if rec_times[rec_i] < t_next:
                for x in range(n):
                    rec_occ[rec_i, x] = occ[x]
                rec_w[rec_i] = w
                rec_np[rec_i] = n_plus
                rec_nm[rec_i] = n_minus
                rec_i += 1
            else:
                break

        if t_next >= T:
            t_flush = T
        else:
            t_flush = t_next

        if accumulate and t_flush > t:
            d = t_flush - t
            if has_a:
                a0v = _polyval(a_coef, t)
                a1v = _polyval(a_coef, t_flush)
                I_a += (w / n) * (a1v - a0v)
                idx = _window_index(occ, n, w % n, support)
                cpv = cp[idx]
                cmv = cm[idx]
                if a_const:
                    I_c += d * (cpv * eap_c + cmv * eam_c)
                else:
                    s4p = 0.0
                    s4m = 0.0
                    for q in range(4):
                        tq = t + d * _GL4_X[q]
                        aq = _polyval(a_coef, tq)
                        s4p += _GL4_W[q] * np.exp(aq)
                        s4m += _GL4_W[q] * np.exp(-aq)
                    s2p = 0.0
                    s2m = 0.0
                    for q in range(2):
                        tq = t + d * _GL2_X[q]
                        aq = _polyval(a_coef, tq)
                        s2p += _GL2_W[q] * np.exp(aq)
                        s2m += _GL2_W[q] * np.exp(-aq)
                    I_c += d * (cpv * (s4p - 1.0) + cmv * (s4m - 1.0))
                    quad_err += d * (abs(cpv) * abs(s4p - s2p)
                                     + abs(cmv) * abs(s4m - s2m))
            for b in range(B):
                I_dh += (_polyval(tcoef[b], t_flush)
                         - _polyval(tcoef[b], t)) * S[b] / n
                I_lap += (ex_mult / n) * (_polyval(tint[b], t_flush)
                                          - _polyval(tint[b], t)) * L[b]
            if B > 0:
                if h_time_indep:
                    I_psi += ex_mult * psi_sum * d
                else:
                    acc4 = 0.0
                    for q in range(4):
                        tq = t + d * _GL4_X[q]
                        sq = 0.0
                        for e in range(n):
                            e2 = e + 1 if e + 1 < n else 0
                            sig = np.int64(occ[e]) - np.int64(occ[e2])
                            if sig != 0:
                                g = 0.0
                                for b in range(B):
                                    g += _polyval(tcoef[b], tq) * gamma[b, e]
                                sq += n * _psi(sig * g / n)
                        acc4 += _GL4_W[q] * sq
                    I_psi += ex_mult * d * acc4

        if t_next >= T:
            # record any remaining grid times (state is constant up to T)
            while rec_i < n_rec:
                for x in range(n):
                    rec_occ[rec_i, x] = occ[x]
                rec_w[rec_i] = w
                rec_np[rec_i] = n_plus
                rec_nm[rec_i] = n_minus
                rec_i += 1
            break

        t = t_next
        state, u = _uniform(state)
        u *= R
        if u < ex_total:
            e = np.int64(u / ex_edge_bound)
            if e >= n:
                e = n - 1
            e2 = e + 1 if e + 1 < n else 0
            o1 = occ[e]
            o2 = occ[e2]
            if o1 != o2:
                accept = True
                if tilt_dynamics and bH > 0.0:
                    if h_time_indep:
                        g = gamma_tot[e]
                    else:
                        g = 0.0
                        for b in range(B):
                            g += _polyval(tcoef[b], t) * gamma[b, e]
                    sig = np.int64(o1) - np.int64(o2)
                    state, uu = _uniform(state)
                    if uu >= np.exp(sig * g / n - bH):
                        accept = False
                if accept:
                    if accumulate:
                        if B > 0 and h_time_indep:
                            em1 = e - 1 if e >= 1 else n - 1
                            psi_sum -= _edge_psi(occ, n, em1, gamma_tot)
                            psi_sum -= _edge_psi(occ, n, e, gamma_tot)
                            psi_sum -= _edge_psi(occ, n, e2, gamma_tot)
                        d12 = np.int64(o2) - np.int64(o1)
                        for b in range(B):
                            S[b] += d12 * (phi[b, e] - phi[b, e2])
                            L[b] += d12 * (d2phi[b, e] - d2phi[b, e2])
                    occ[e] = o2
                    occ[e2] = o1
                    if accumulate and B > 0 and h_time_indep:
                        em1 = e - 1 if e >= 1 else n - 1
                        psi_sum += _edge_psi(occ, n, em1, gamma_tot)
                        psi_sum += _edge_psi(occ, n, e, gamma_tot)
                        psi_sum += _edge_psi(occ, n, e2, gamma_tot)
                    n_events += 1
                    if ev_cap > 0:
                        if n_logged >= ev_cap:
                            status = STATUS_LOG_FULL
                            break
                        ev_time[n_logged] = t
                        ev_kind[n_logged] = KIND_EXCHANGE
                        ev_loc[n_logged] = e
                        n_logged += 1
        else:
            u -= ex_total
            if u < wp_bound:
                dirn = np.int64(1)
                cmax = cmaxp
            else:
                dirn = np.int64(-1)
                cmax = cmaxm
            idx = _window_index(occ, n, w % n, support)
            cval = cp[idx] if dirn == 1 else cm[idx]
            if cval > 0.0:
                acc_p = cval / cmax
                if tilt_dynamics and has_a:
                    acc_p *= np.exp(dirn * _polyval(a_coef, t) - a_bound)
                elif tilt_dynamics or a_bound > 0.0:
                    acc_p *= np.exp(-a_bound)
                state, uu = _uniform(state)
                if uu < acc_p:
                    w += dirn
                    if dirn == 1:
                        n_plus += 1
                    else:
                        n_minus += 1
                    n_events += 1
                    if ev_cap > 0:
                        if n_logged >= ev_cap:
                            status = STATUS_LOG_FULL
                            break
                        ev_time[n_logged] = t
                        ev_kind[n_logged] = (KIND_WALK_PLUS if dirn == 1
                                             else KIND_WALK_MINUS)
                        ev_loc[n_logged] = w - dirn
                        n_logged += 1

    log_ma = 0.0
    log_mh = 0.0
    if accumulate:
        if has_a:
            log_ma = _polyval(a_coef, T) * (w / n) - I_a - I_c
        log_mh_T = 0.0
        for b in range(B):
            log_mh_T += _polyval(tcoef[b], T) * S[b] / n
        log_mh = log_mh_T - log_mh0 - I_dh - I_lap - I_psi

    outf[0] = log_ma
    outf[1] = log_mh
    outf[2] = quad_err
    outi[0] = w
    outi[1] = n_plus
    outi[2] = n_minus
    outi[3] = n_events
    outi[4] = n_logged
    outi[5] = status


@njit(cache=True, nogil=True)
def replay_state(occ, n, ev_time, ev_kind, ev_loc, upto_t):
    """Apply logged events with time <= upto_t to occ; returns (w, k_applied)."""
    w = np.int64(0)
    k = 0
    for k in range(ev_time.shape[0] + 1):
        if k >= ev_time.shape[0] or ev_time[k] > upto_t:
            return w, k
        kind = ev_kind[k]
        if kind == KIND_EXCHANGE:
            e = ev_loc[k]
            e2 = e + 1 if e + 1 < n else 0
            tmp = occ[e]
            occ[e] = occ[e2]
            occ[e2] = tmp
        elif kind == KIND_WALK_PLUS:
            w += 1
        else:
            w -= 1
    return w, k


@njit(cache=True, nogil=True)
def replay_replacement(occ, n, ev_time, ev_kind, ev_loc,
                       f_support, f_table, fbar_coef,
                       wts, wts_lo, eps, t_max):
    """Integral of f(environment seen by the walker) minus its grand-canonical
    average at the one-sided block density, along a logged trajectory.

    wts[j] is the exact integral of the finite element at relative offset
    wts_lo + j over the block (0, eps] in walker coordinates.
    """
    w = np.int64(0)
    nw = wts.shape[0]

    def _block(occ_, w_):
        s = 0.0
        for j in range(nw):
            s += wts[j] * occ_[(w_ + wts_lo + j) % n]
        return s

    bsum = _block(occ, w)
    total = 0.0
    t_prev = 0.0
    for k in range(ev_time.shape[0] + 1):
        t_ev = ev_time[k] if k < ev_time.shape[0] else t_max
        t_stop = t_ev if t_ev < t_max else t_max
        if t_stop > t_prev:
            idx = _window_index(occ, n, w % n, f_support)
            fval = f_table[idx]
            fbar = _polyval(fbar_coef, bsum / eps)
            total += (t_stop - t_prev) * (fval - fbar)
            t_prev = t_stop
        if k >= ev_time.shape[0] or t_ev > t_max:
            break
        kind = ev_kind[k]
        if kind == KIND_EXCHANGE:
            e = ev_loc[k]
            e2 = e + 1 if e + 1 < n else 0
            o1 = occ[e]
            o2 = occ[e2]
            occ[e] = o2
            occ[e2] = o1
            # update the block sum where the swapped sites fall in the window
            for site, dv in ((e, np.int64(o2) - np.int64(o1)),
                             (e2, np.int64(o1) - np.int64(o2))):
                if dv != 0:
                    j = (site - (w + wts_lo)) % n
                    if j < nw:
                        bsum += dv * wts[j]
        else:
            w += 1 if kind == KIND_WALK_PLUS else -1
            bsum = _block(occ, w)
    return total
