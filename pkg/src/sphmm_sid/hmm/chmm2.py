"""Second-order circular HMMs.

The chain over states q_t is second order: ``trans3[i, j, k]`` is the
probability of moving to k given the two previous states (i, j).
Computation runs on the equivalent first-order chain over ordered pairs
(q_{t-1}, q_t), where pair (i, j) may move to (j, k) with weight
``trans3[i, j, k]`` and emits from state k.

At t = 1 the pair is (q_0, q_1): q_0 is a non-emitting start state with a
uniform prior, and ``v[i, k]`` is the probability of q_1 = k given q_0 = i.
The uniform prior enters at the end of the lattice as the terminal
backward value 1/N, so the first forward slice is ``v[i, k] b_k(O_1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chain import Chain, ConvergenceMonitor, HmmError, as_sequences, baum_welch, normalize_rows
from .chmm1 import placeholder_emissions
from .gmm import VAR_FLOOR, gmm_sample, reestimate, state_log_densities


def circular_mask3(n: int) -> np.ndarray:
    """Support of trans3: k in {j-1, j, j+1} (mod n) for every (i, j)."""
    mask = np.zeros((n, n, n), dtype=bool)
    for j in range(n):
        for d in (-1, 0, 1):
            mask[:, j, (j + d) % n] = True
    return mask


@dataclass
class ForwardLattice:
    """alpha[t, j, k] = log P(O_1..O_t, q_{t-1} = j, q_t = k)."""

    alpha: np.ndarray


@dataclass
class BackwardLattice:
    beta: np.ndarray


@dataclass
class Chmm2Model:
    v: np.ndarray
    trans3: np.ndarray
    emissions: list
    mask: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.v)

    def chain(self) -> Chain:
        n = self.n_states
        i, j, k = np.nonzero(self.mask)
        return Chain(n * n, i * n + j, j * n + k, self.trans3[i, j, k], self.v.ravel(),
                     np.full(n * n, 1.0 / n), np.arange(n * n) % n)

    def reestimated(self, gamma0, counts, X, comp_log, state_post, var_floor):
        n = self.n_states
        chain = self.chain()
        c = np.zeros_like(self.trans3)
        src, dst = chain.in_src, chain.in_dst
        c[src // n, src % n, dst % n] = counts
        return replace(
            self,
            v=normalize_rows(gamma0.reshape(n, n), self.v),
            trans3=normalize_rows(c, self.trans3),
            emissions=reestimate(self.emissions, X, comp_log, state_post, var_floor),
        )


def init_chmm2(n: int = 9, m: int = 5, dim: int = 12) -> Chmm2Model:
    """Initial CHMM2: v = 1/n everywhere, 1/3 on each circular successor, mixture weights 1/m.

    Emission means and variances are placeholders until
    :func:`~sphmm_sid.hmm.chmm1.init_emissions` sets them from data.
    """
    if n < 3:
        raise HmmError("circular neighbourhood undefined for fewer than 3 states")
    mask = circular_mask3(n)
    return Chmm2Model(np.full((n, n), 1.0 / n), np.where(mask, 1.0 / 3.0, 0.0),
                      placeholder_emissions(n, m, dim), mask)


def _prepare(model, obs):
    seq = as_sequences([obs])[0]
    if len(seq) < 2:
        raise HmmError("sequence too short for second-order model")
    log_b_state, _ = state_log_densities(model.emissions, seq)
    chain = model.chain()
    return chain, chain.log_b(log_b_state)


def forward2(model: Chmm2Model, obs) -> ForwardLattice:
    chain, log_b = _prepare(model, obs)
    n = model.n_states
    return ForwardLattice(chain.forward(log_b).reshape(-1, n, n))


def backward2(model: Chmm2Model, obs) -> BackwardLattice:
    chain, log_b = _prepare(model, obs)
    n = model.n_states
    return BackwardLattice(chain.backward(log_b).reshape(-1, n, n))


def likelihood2(model: Chmm2Model, obs) -> float:
    """log P(O | model): log-sum-exp of the last forward slice weighted by the 1/N terminal."""
    chain, log_b = _prepare(model, obs)
    return chain.log_likelihood(log_b)


def viterbi2(model: Chmm2Model, obs):
    """Most likely state sequence q_1..q_T and its joint log-probability."""
    chain, log_b = _prepare(model, obs)
    pairs, score = chain.viterbi(log_b)
    return pairs % model.n_states, score


def train_chmm2(init: Chmm2Model, data, tol: float = 1e-4, max_iter: int = 50,
                var_floor=VAR_FLOOR, monitor: ConvergenceMonitor = None) -> Chmm2Model:
    """EM on the pair-state chain, projected back onto (v, trans3, emissions).

    The zero pattern of ``trans3`` and the per-(i, j) normalization are
    preserved by construction.
    """
    if monitor is None:
        monitor = ConvergenceMonitor(tol, max_iter)
    seqs = as_sequences(data, min_length=2)
    return baum_welch(init, seqs, monitor, var_floor)


def sample_chmm2(model: Chmm2Model, length: int, rng: np.random.Generator):
    """Draw (states q_1..q_T, observations); q_0 is drawn uniformly and not returned."""
    n = model.n_states
    q = np.empty(length + 1, dtype=np.int64)
    q[0] = rng.integers(n)
    q[1] = rng.choice(n, p=model.v[q[0]])
    for t in range(2, length + 1):
        q[t] = rng.choice(n, p=model.trans3[q[t - 2], q[t - 1]])
    obs = np.array([gmm_sample(model.emissions[k], rng) for k in q[1:]])
    return q[1:], obs
