"""Sparse first-order chain shared by the circular, pair-state and ergodic models."""
from __future__ import annotations

import logging
import sys

import numpy as np

from . import _kernels
from .gmm import state_log_densities

_log = logging.getLogger(__name__)


class HmmError(ValueError):
    pass


class Chain:
    """Edge lists of a first-order chain over ``n_states`` states.

    ``emission_of[s]`` is the emitting (acoustic) state of chain state ``s``;
    for a plain HMM it is the identity, for the pair-state reduction of a
    second-order model it is the current state of the pair.
    """

    def __init__(self, n_states, src, dst, weights, log_pi, log_end, emission_of):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        with np.errstate(divide="ignore"):
            logw = np.log(np.asarray(weights, dtype=np.float64))
            self.log_pi = np.log(np.asarray(log_pi, dtype=np.float64))
            self.log_end = np.log(np.asarray(log_end, dtype=np.float64))
        self.n_states = n_states
        self.emission_of = np.asarray(emission_of, dtype=np.int64)

        order = np.lexsort((src, dst))
        self.in_src, self.in_dst, self.in_logw = src[order], dst[order], logw[order]
        self.in_ptr = np.searchsorted(self.in_dst, np.arange(n_states + 1)).astype(np.int64)
        order = np.lexsort((dst, src))
        self.out_dst, self.out_logw = dst[order], logw[order]
        self.out_ptr = np.searchsorted(src[order], np.arange(n_states + 1)).astype(np.int64)

    def log_b(self, log_b_state):
        return np.ascontiguousarray(log_b_state[:, self.emission_of])

    def forward(self, log_b):
        return _kernels.forward(self.log_pi, self.in_ptr, self.in_src, self.in_logw, log_b)

    def backward(self, log_b):
        return _kernels.backward(self.log_end, self.out_ptr, self.out_dst, self.out_logw, log_b)

    def log_likelihood(self, log_b):
        alpha = self.forward(log_b)
        return float(_kernels.log_total(alpha[-1], self.log_end))

    def viterbi(self, log_b):
        path, score = _kernels.viterbi(self.log_pi, self.log_end, self.in_ptr, self.in_src,
                                       self.in_logw, log_b)
        return path, float(score)

    def expectations(self, log_b):
        """E-step quantities for one sequence.

        Returns log-likelihood, chain-state posterior at t = 0 (S,), expected
        edge traversals (in-edge order) and chain-state posteriors (T, S).
        """
        alpha = self.forward(log_b)
        beta = self.backward(log_b)
        log_p = float(_kernels.log_total(alpha[-1], self.log_end))
        if not np.isfinite(log_p):
            raise HmmError("sequence has zero likelihood under the model")
        gamma = np.exp(alpha + beta - log_p)
        counts = _kernels.edge_counts(alpha, beta, self.in_ptr, self.in_src, self.in_logw,
                                      log_b, log_p)
        return log_p, gamma[0], counts, gamma


class ConvergenceMonitor:
    """Tracks EM log-likelihoods; converged when the gain drops below ``tol``."""

    def __init__(self, tol=1e-4, n_iter=50, verbose=False):
        self.tol = tol
        self.n_iter = n_iter
        self.verbose = verbose
        self.history = []
        self.iter = 0

    def report(self, log_prob):
        if self.verbose:
            delta = log_prob - self.history[-1] if self.history else np.nan
            print(f"{self.iter + 1:>6d} {log_prob:>18.8f} {delta:>+16.8f}", file=sys.stderr)
        if self.history and log_prob - self.history[-1] < -1e-8 * max(1.0, abs(log_prob)):
            _log.warning("EM log-likelihood decreased: %r -> %r", self.history[-1], log_prob)
        self.history.append(log_prob)
        self.iter += 1

    @property
    def converged(self):
        return (self.iter >= self.n_iter
                or (len(self.history) >= 2 and self.history[-1] - self.history[-2] < self.tol))


def baum_welch(model, sequences, monitor: ConvergenceMonitor, var_floor):
    """Generic EM driver.

    ``model`` provides ``chain()`` and ``reestimated(gamma0, counts, X,
    comp_log, state_post, var_floor)``. The monitor receives the total
    log-likelihood of the model in effect before each M-step; the last
    model is returned once the monitor reports convergence.
    """
    if not sequences:
        raise HmmError("no training sequences")
    X = np.concatenate(sequences)
    while True:
        chain = model.chain()
        total = 0.0
        gamma0 = np.zeros(chain.n_states)
        counts = np.zeros(len(chain.in_src))
        comp_parts, post_parts = [], []
        for seq in sequences:
            log_b_state, comp = state_log_densities(model.emissions, seq)
            ll, g0, c, gamma = chain.expectations(chain.log_b(log_b_state))
            total += ll
            gamma0 += g0
            counts += c
            post_parts.append(_fold(gamma, chain.emission_of, model.n_states))
            comp_parts.append(comp)
        monitor.report(total)
        if monitor.converged:
            return model
        model = model.reestimated(gamma0, counts, X, np.concatenate(comp_parts),
                                  np.concatenate(post_parts), var_floor)


def _fold(gamma, emission_of, n_states):
    out = np.zeros((gamma.shape[0], n_states))
    for s, k in enumerate(emission_of):
        out[:, k] += gamma[:, s]
    return out


def as_sequences(data, min_length=1):
    seqs = []
    for obs in data:
        frames = getattr(obs, "frames", obs)
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[:, None]
        if len(frames) < min_length:
            raise HmmError(f"sequence of length {len(frames)} is shorter than {min_length}")
        seqs.append(frames)
    return seqs


def normalize_rows(counts, previous):
    """Row-normalize counts over the last axis; rows without mass keep ``previous``."""
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(totals > 0, counts / totals, previous)
    return out
