"""Log-domain lattice recursions over a sparse first-order chain.

A chain over S states is given by its edges: ``in_ptr/in_src/in_logw``
lists the incoming edges of each destination (sources ascending), and
``out_ptr/out_dst/out_logw`` the outgoing edges of each source. Second-order
models reach these kernels through the pair-state reduction.
"""
import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def forward(log_pi, in_ptr, in_src, in_logw, log_b):
    T, S = log_b.shape
    alpha = np.empty((T, S))
    for s in range(S):
        alpha[0, s] = log_pi[s] + log_b[0, s]
    for t in range(1, T):
        for s in range(S):
            lo, hi = in_ptr[s], in_ptr[s + 1]
            m = NEG_INF
            for e in range(lo, hi):
                v = alpha[t - 1, in_src[e]] + in_logw[e]
                if v > m:
                    m = v
            if m == NEG_INF:
                alpha[t, s] = NEG_INF
                continue
            acc = 0.0
            for e in range(lo, hi):
                acc += np.exp(alpha[t - 1, in_src[e]] + in_logw[e] - m)
            alpha[t, s] = m + np.log(acc) + log_b[t, s]
    return alpha


@njit(cache=True)
def backward(log_end, out_ptr, out_dst, out_logw, log_b):
    T, S = log_b.shape
    beta = np.empty((T, S))
    for s in range(S):
        beta[T - 1, s] = log_end[s]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            lo, hi = out_ptr[s], out_ptr[s + 1]
            m = NEG_INF
            for e in range(lo, hi):
                d = out_dst[e]
                v = out_logw[e] + log_b[t + 1, d] + beta[t + 1, d]
                if v > m:
                    m = v
            if m == NEG_INF:
                beta[t, s] = NEG_INF
                continue
            acc = 0.0
            for e in range(lo, hi):
                d = out_dst[e]
                acc += np.exp(out_logw[e] + log_b[t + 1, d] + beta[t + 1, d] - m)
            beta[t, s] = m + np.log(acc)
    return beta


@njit(cache=True)
def log_total(alpha_last, log_end):
    m = NEG_INF
    for s in range(alpha_last.shape[0]):
        v = alpha_last[s] + log_end[s]
        if v > m:
            m = v
    if m == NEG_INF:
        return NEG_INF
    acc = 0.0
    for s in range(alpha_last.shape[0]):
        acc += np.exp(alpha_last[s] + log_end[s] - m)
    return m + np.log(acc)


@njit(cache=True)
def viterbi(log_pi, log_end, in_ptr, in_src, in_logw, log_b):
    """Best path; ties go to the lowest state index."""
    T, S = log_b.shape
    delta = np.empty((T, S))
    psi = np.zeros((T, S), dtype=np.int64)
    for s in range(S):
        delta[0, s] = log_pi[s] + log_b[0, s]
    for t in range(1, T):
        for s in range(S):
            best = NEG_INF
            arg = 0
            for e in range(in_ptr[s], in_ptr[s + 1]):
                v = delta[t - 1, in_src[e]] + in_logw[e]
                if v > best:
                    best = v
                    arg = in_src[e]
            psi[t, s] = arg
            delta[t, s] = best + log_b[t, s]
    path = np.zeros(T, dtype=np.int64)
    best = NEG_INF
    arg = 0
    for s in range(S):
        v = delta[T - 1, s] + log_end[s]
        if v > best:
            best = v
            arg = s
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    return path, best


@njit(cache=True)
def edge_counts(alpha, beta, in_ptr, in_src, in_logw, log_b, log_p):
    """Expected number of traversals of every edge (in-edge order)."""
    T, S = log_b.shape
    counts = np.zeros(in_src.shape[0])
    for t in range(1, T):
        for s in range(S):
            tail = log_b[t, s] + beta[t, s] - log_p
            if tail == NEG_INF:
                continue
            for e in range(in_ptr[s], in_ptr[s + 1]):
                v = alpha[t - 1, in_src[e]] + in_logw[e] + tail
                if v > -745.0:
                    counts[e] += np.exp(v)
    return counts
