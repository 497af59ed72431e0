"""Jitted inner loops for the Monte Carlo engine.

Randomness comes from eight splitmix64 substreams derived from the master
seed: arrivals, each environment, the four service-indicator families and the
policy randomization. Every stream is advanced exactly once per slot whether
or not its draw is consumed, so two runs with the same seed see the same
primitive sequences regardless of scheme or policy (the common-random-numbers
device used for the throughput comparisons).

Scheme codes: 0 full, 1 state, 2 output, 3 queue, 4 none.
Policy codes: 0 myopic line, 1 control-matrix lookup on belief cells,
2 finite-state controller (cell state evolved by sampled N/S/F rows).
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

N_STREAMS = 8
STREAM_ARRIVAL = 0
STREAM_ENV1 = 1
STREAM_ENV2 = 2
STREAM_SVC = 3  # four families at 3 + 2*(j-1) + i
STREAM_POLICY = 7


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True)
def stream_states(seed):
    """Initial states of the substreams, split off the master seed."""
    states = np.empty(N_STREAMS, dtype=np.uint64)
    s = U64(seed)
    for k in range(N_STREAMS):
        s = s + _GOLDEN
        states[k] = _mix64(s)
    return states


@njit(cache=True, inline="always")
def _u01(states, k):
    states[k] = states[k] + _GOLDEN
    return (_mix64(states[k]) >> U64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _step_env(x, u, p, q):
    if x == 0:
        return 1 if u < p else 0
    return 0 if u < q else 1


@njit(cache=True, inline="always")
def _tau_n(w, p, rho):
    return w * rho + p


@njit(cache=True, inline="always")
def _tau_f(w, p, q, mu0, mu1):
    rbar = 1.0 - ((1.0 - w) * mu0 + w * mu1)
    return ((1.0 - q) * (1.0 - mu1) * w + p * (1.0 - mu0) * (1.0 - w)) / rbar


@njit(cache=True, inline="always")
def _tau_s(w, p, q, mu0, mu1):
    r = (1.0 - w) * mu0 + w * mu1
    return ((1.0 - q) * mu1 * w + p * mu0 * (1.0 - w)) / r


@njit(cache=True, inline="always")
def _tau_c(w, p, q, mu0, mu1, lam):
    if lam <= 0.0:
        return _tau_f(w, p, q, mu0, mu1)
    if lam >= 1.0:
        return _tau_s(w, p, q, mu0, mu1)
    return lam * _tau_s(w, p, q, mu0, mu1) + (1.0 - lam) * _tau_f(w, p, q, mu0, mu1)


@njit(cache=True, inline="always")
def _cell(w, M):
    c = int(np.ceil(M * w))
    if c < 1:
        return 1
    if c > M:
        return M
    return c


@njit(cache=True, inline="always")
def _sample_row(cdf, row, u):
    """First column whose cumulative mass reaches u (1-based cell)."""
    lo, hi = 0, cdf.shape[1] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[row, mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return lo + 1


@njit(cache=True, nogil=True)
def simulate_core(scheme, queueing, horizon, warmup, seed,
                  lam, p1, q1, rho1, mu01, mu11, p2, q2, rho2, mu02, mu12,
                  w1_init, w2_init,
                  policy_kind, slope, intercept, C, Mpol,
                  cdfN1, cdfS1, cdfF1, cdfN2, cdfS2, cdfF2,
                  trace_q, trace_x1, trace_x2, trace_u, trace_e, trace_i,
                  trace_w1, trace_w2, q_samples, q_stride):
    states = stream_states(seed)

    # stationary initial environments, one draw per environment stream
    x1 = 1 if _u01(states, STREAM_ENV1) < w1_init else 0
    x2 = 1 if _u01(states, STREAM_ENV2) < w2_init else 0
    w1 = w1_init
    w2 = w2_init
    psi1 = _cell(w1_init, Mpol) if Mpol > 0 else 1
    psi2 = _cell(w2_init, Mpol) if Mpol > 0 else 1

    Q = 0
    successes = 0
    qsum = 0.0
    counted = 0
    do_trace = trace_q.size > 0

    for t in range(horizon):
        e_draw = _u01(states, STREAM_ARRIVAL)
        E = 1 if e_draw < lam else 0
        x1 = _step_env(x1, _u01(states, STREAM_ENV1), p1, q1)
        x2 = _step_env(x2, _u01(states, STREAM_ENV2), p2, q2)
        u10 = _u01(states, STREAM_SVC + 0)
        u11 = _u01(states, STREAM_SVC + 1)
        u20 = _u01(states, STREAM_SVC + 2)
        u21 = _u01(states, STREAM_SVC + 3)
        i1 = 1 if (u11 < mu11 if x1 == 1 else u10 < mu01) else 0
        i2 = 1 if (u21 < mu12 if x2 == 1 else u20 < mu02) else 0
        ua = _u01(states, STREAM_POLICY)
        ub = _u01(states, STREAM_POLICY)
        uc = _u01(states, STREAM_POLICY)

        # decision from information available before service
        if queueing and Q == 0:
            u = 0
        elif policy_kind == 2:
            u = 2 if ua < C[psi1 - 1, psi2 - 1] else 1
        else:
            if scheme == 0:
                b1 = float(x1)
                b2 = float(x2)
            else:
                b1 = w1
                b2 = w2
            if policy_kind == 0:
                u = 2 if b2 >= slope * b1 + intercept else 1
            else:
                c1 = _cell(b1, Mpol)
                c2 = _cell(b2, Mpol)
                u = 2 if ua < C[c1 - 1, c2 - 1] else 1

        I = i1 if u == 1 else (i2 if u == 2 else 0)
        if t >= warmup:
            successes += I
            qsum += Q
            counted += 1
        if do_trace:
            trace_q[t] = Q
            trace_x1[t] = x1
            trace_x2[t] = x2
            trace_u[t] = u
            trace_e[t] = E
            trace_i[t] = I
            trace_w1[t] = w1
            trace_w2[t] = w2
        if q_stride > 0 and t % q_stride == 0:
            q_samples[t // q_stride] = Q

        # belief / controller-state update from this slot's observation
        if policy_kind == 2:
            if u == 1:
                psi1 = _sample_row(cdfS1 if I == 1 else cdfF1, psi1 - 1, ub)
                psi2 = _sample_row(cdfN2, psi2 - 1, uc)
            elif u == 2:
                psi1 = _sample_row(cdfN1, psi1 - 1, ub)
                psi2 = _sample_row(cdfS2 if I == 1 else cdfF2, psi2 - 1, uc)
            else:
                psi1 = _sample_row(cdfN1, psi1 - 1, ub)
                psi2 = _sample_row(cdfN2, psi2 - 1, uc)
        elif scheme == 1:  # state observation
            if u == 1:
                w1 = _tau_n(float(x1), p1, rho1)
                w2 = _tau_n(w2, p2, rho2)
            elif u == 2:
                w1 = _tau_n(w1, p1, rho1)
                w2 = _tau_n(float(x2), p2, rho2)
            else:
                w1 = _tau_n(w1, p1, rho1)
                w2 = _tau_n(w2, p2, rho2)
        elif scheme == 2:  # output observation
            if u == 1:
                w1 = (_tau_s(w1, p1, q1, mu01, mu11) if I == 1
                      else _tau_f(w1, p1, q1, mu01, mu11))
                w2 = _tau_n(w2, p2, rho2)
            elif u == 2:
                w1 = _tau_n(w1, p1, rho1)
                w2 = (_tau_s(w2, p2, q2, mu02, mu12) if I == 1
                      else _tau_f(w2, p2, q2, mu02, mu12))
            else:
                w1 = _tau_n(w1, p1, rho1)
                w2 = _tau_n(w2, p2, rho2)
        elif scheme == 3:  # queue observation
            d = E - I
            if u == 1:
                if d == 1:
                    w1 = _tau_f(w1, p1, q1, mu01, mu11)
                elif d == -1:
                    w1 = _tau_s(w1, p1, q1, mu01, mu11)
                else:
                    w1 = _tau_c(w1, p1, q1, mu01, mu11, lam)
                w2 = _tau_n(w2, p2, rho2)
            elif u == 2:
                if d == 1:
                    w2 = _tau_f(w2, p2, q2, mu02, mu12)
                elif d == -1:
                    w2 = _tau_s(w2, p2, q2, mu02, mu12)
                else:
                    w2 = _tau_c(w2, p2, q2, mu02, mu12, lam)
                w1 = _tau_n(w1, p1, rho1)
            else:
                w1 = _tau_n(w1, p1, rho1)
                w2 = _tau_n(w2, p2, rho2)
        elif scheme == 4:  # no observation
            w1 = _tau_n(w1, p1, rho1)
            w2 = _tau_n(w2, p2, rho2)
        # scheme 0 (full) keeps no belief state

        if queueing:
            Q = Q + E - I

    if policy_kind == 2 and Mpol > 0:
        w1 = (psi1 - 1.0) / Mpol
        w2 = (psi2 - 1.0) / Mpol
    elif scheme == 0:
        # full observation: the posterior is the observed state itself
        w1 = float(x1)
        w2 = float(x2)
    return successes, counted, qsum, w1, w2, x1, x2, Q
