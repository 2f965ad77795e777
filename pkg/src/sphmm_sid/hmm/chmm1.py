"""First-order HMMs with circular (or arbitrary masked) topology."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chain import Chain, ConvergenceMonitor, HmmError, as_sequences, baum_welch, normalize_rows
from .gmm import (VAR_FLOOR, GaussianMixture, gmm_sample, init_mixture, kmeans, reestimate,
                  state_log_densities)


def circular_mask(n: int) -> np.ndarray:
    """Ring adjacency: state i may move to i-1, i or i+1 (mod n)."""
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for d in (-1, 0, 1):
            mask[i, (i + d) % n] = True
    return mask


def placeholder_emissions(n: int, m: int, dim: int):
    """Equal-weight, zero-mean, unit-variance mixtures awaiting data-driven init."""
    return [GaussianMixture(np.full(m, 1.0 / m), np.zeros((m, dim)), np.ones((m, dim)))
            for _ in range(n)]


@dataclass
class Chmm1Model:
    pi: np.ndarray
    trans: np.ndarray
    emissions: list
    mask: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.pi)

    def chain(self) -> Chain:
        src, dst = np.nonzero(self.mask)
        n = self.n_states
        return Chain(n, src, dst, self.trans[src, dst], self.pi, np.ones(n), np.arange(n))

    def reestimated(self, gamma0, counts, X, comp_log, state_post, var_floor):
        chain = self.chain()
        c = np.zeros_like(self.trans)
        c[chain.in_src, chain.in_dst] = counts
        return replace(
            self,
            pi=gamma0 / gamma0.sum(),
            trans=normalize_rows(c, self.trans),
            emissions=reestimate(self.emissions, X, comp_log, state_post, var_floor),
        )


def init_chmm1(n: int, m: int, dim: int, mask=None) -> Chmm1Model:
    """Uniform start: pi = 1/n and equal, symmetric weights on every allowed transition."""
    if mask is None:
        if n < 3:
            raise HmmError("circular topology needs at least 3 states")
        mask = circular_mask(n)
    mask = np.asarray(mask, dtype=bool)
    trans = mask / mask.sum(axis=1, keepdims=True)
    return Chmm1Model(np.full(n, 1.0 / n), trans, placeholder_emissions(n, m, dim), mask)


def init_emissions(model, data, method: str = "segment", seed: int = 0,
                   var_floor=VAR_FLOOR):
    """Data-driven emission means/variances with equal mixture weights.

    ``segment`` splits every sequence into ``n_states`` equal consecutive
    chunks (chunk k feeds state k); ``kmeans`` clusters the pooled frames
    into ``n_states`` groups ordered by their first coordinate.
    """
    seqs = as_sequences(data)
    n = model.n_states
    m = model.emissions[0].n_components
    rng = np.random.default_rng(seed)
    if method == "segment":
        groups = [[] for _ in range(n)]
        for seq in seqs:
            for k, chunk in enumerate(np.array_split(seq, n)):
                if len(chunk):
                    groups[k].append(chunk)
        pooled = np.concatenate(seqs)
        groups = [np.concatenate(g) if g else pooled for g in groups]
    elif method == "kmeans":
        pooled = np.concatenate(seqs)
        centers, labels = kmeans(pooled, n, rng)
        order = np.argsort(centers[:, 0], kind="stable")
        groups = [pooled[labels == c] if np.any(labels == c) else pooled for c in order]
    else:
        raise ValueError(f"unknown emission init method {method!r}")
    return replace(model, emissions=[init_mixture(g, m, rng, var_floor) for g in groups])


def _log_b(model, obs, min_length=1):
    seq = as_sequences([obs], min_length)[0]
    log_b_state, _ = state_log_densities(model.emissions, seq)
    chain = model.chain()
    return chain, chain.log_b(log_b_state)


def forward1(model: Chmm1Model, obs) -> np.ndarray:
    """Log forward lattice, shape (T, N)."""
    chain, log_b = _log_b(model, obs)
    return chain.forward(log_b)


def backward1(model: Chmm1Model, obs) -> np.ndarray:
    chain, log_b = _log_b(model, obs)
    return chain.backward(log_b)


def likelihood1(model: Chmm1Model, obs) -> float:
    """log P(O | model)."""
    chain, log_b = _log_b(model, obs)
    return chain.log_likelihood(log_b)


def viterbi1(model: Chmm1Model, obs):
    chain, log_b = _log_b(model, obs)
    return chain.viterbi(log_b)


def train_chmm1(init: Chmm1Model, data, tol: float = 1e-4, max_iter: int = 50,
                var_floor=VAR_FLOOR, monitor: ConvergenceMonitor = None) -> Chmm1Model:
    """Baum-Welch re-estimation; the transition zero pattern is preserved."""
    if monitor is None:
        monitor = ConvergenceMonitor(tol, max_iter)
    return baum_welch(init, as_sequences(data), monitor, var_floor)


def asymmetry(model: Chmm1Model) -> float:
    """Largest |a_ij - a_ji|; zero right after initialization."""
    return float(np.max(np.abs(model.trans - model.trans.T)))


def sample_chmm1(model: Chmm1Model, length: int, rng: np.random.Generator):
    """Draw (states, observations) of the given length."""
    states = np.empty(length, dtype=np.int64)
    states[0] = rng.choice(model.n_states, p=model.pi)
    for t in range(1, length):
        states[t] = rng.choice(model.n_states, p=model.trans[states[t - 1]])
    obs = np.array([gmm_sample(model.emissions[q], rng) for q in states])
    return states, obs
