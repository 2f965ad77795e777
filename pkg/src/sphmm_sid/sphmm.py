"""Suprasegmental layer on top of the acoustic CHMM2.

Acoustic states are grouped into supra-states. A Viterbi alignment of the
utterance is cut into runs of constant supra-state, each run becomes one
prosodic observation (F0, energy, duration), and a 3-state ergodic HMM is
trained on those variable-rate observations. Acoustic and prosodic
log-likelihoods are combined with a fixed weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .frontend import ObservationSequence, ProsodyTrack
from .hmm.chain import ConvergenceMonitor
from .hmm.chmm1 import Chmm1Model, init_chmm1, likelihood1, train_chmm1
from .hmm.chmm2 import Chmm2Model, viterbi2
from .hmm.gmm import VAR_FLOOR, init_mixture

DEFAULT_ALPHA = 0.5
SUPRA_TRANS_FLOOR = 1e-2


class SupraError(ValueError):
    pass


@dataclass(frozen=True)
class SupraMapping:
    """Partition of the acoustic states into supra-states.

    ``groups[p]`` is the set of acoustic state ids summarized by supra-state
    ``p`` (0-based on both levels).
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(frozenset(int(q) for q in g) for g in self.groups)
        members = sorted(q for g in groups for q in g)
        if not groups or any(not g for g in groups):
            raise SupraError("every supra-state needs at least one acoustic state")
        if members != list(range(len(members))):
            raise SupraError("supra groups must partition the acoustic states 0..N-1")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def contiguous(cls, n_states: int = 9, n_supra: int = 3) -> "SupraMapping":
        if n_states % n_supra:
            raise SupraError(f"{n_states} states do not split evenly into {n_supra} groups")
        size = n_states // n_supra
        return cls(tuple(range(p * size, (p + 1) * size) for p in range(n_supra)))

    @property
    def n_states(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def n_supra(self) -> int:
        return len(self.groups)

    def supra_of(self) -> np.ndarray:
        lut = np.empty(self.n_states, dtype=np.int64)
        for p, g in enumerate(self.groups):
            lut[list(g)] = p
        return lut


@dataclass(frozen=True)
class ProsodicVector:
    f0_hz: float
    log_energy: float
    duration_frames: int
    supra_state: int = -1


@dataclass
class SupraModel:
    """Ergodic first-order HMM over prosodic observations.

    ``normalize`` selects utterance-relative features (see
    :func:`prosodic_observations`).
    """

    base: Chmm1Model
    normalize: bool = True

    @property
    def supra_trans(self) -> np.ndarray:
        return self.base.trans

    @property
    def n_states(self) -> int:
        return self.base.n_states


@dataclass(frozen=True)
class FusionWeight:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise SupraError(f"fusion weight must lie in [0, 1], got {self.alpha}")


def segment_path(path, mapping: SupraMapping, prosody: ProsodyTrack):
    """Cut an acoustic state path into runs of constant supra-state."""
    path = np.asarray(path, dtype=np.int64)
    if len(path) != len(prosody):
        raise SupraError(f"path has {len(path)} frames but prosody has {len(prosody)}")
    supra = mapping.supra_of()[path]
    cuts = np.flatnonzero(np.diff(supra)) + 1
    bounds = np.concatenate([[0], cuts, [len(supra)]])
    segments = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        f0 = prosody.f0_hz[lo:hi]
        voiced = f0[f0 > 0]
        segments.append(ProsodicVector(
            f0_hz=float(voiced.mean()) if len(voiced) else 0.0,
            log_energy=float(np.mean(prosody.log_energy[lo:hi])),
            duration_frames=int(hi - lo),
            supra_state=int(supra[lo]),
        ))
    return segments


def align_to_supra(model: Chmm2Model, mapping: SupraMapping, obs: ObservationSequence,
                   prosody: ProsodyTrack):
    """Prosodic segments from the Viterbi alignment of ``obs`` under ``model``."""
    if len(obs) != len(prosody):
        raise SupraError(f"observation length {len(obs)} != prosody length {len(prosody)}")
    if mapping.n_states != model.n_states:
        raise SupraError("mapping does not cover the model's states")
    path, _ = viterbi2(model, obs)
    return segment_path(path, mapping, prosody)


def prosodic_observations(segments, normalize: bool = True) -> np.ndarray:
    """Feature matrix (S, 3) for a segment sequence.

    Raw features are (F0 in Hz, log energy, duration in frames). Normalized
    features are (log F0 minus the utterance mean over voiced segments,
    log energy minus the utterance mean, log duration); unvoiced segments
    get a relative log F0 of 0.
    """
    if not segments:
        raise SupraError("empty segment sequence")
    f0 = np.array([s.f0_hz for s in segments], dtype=np.float64)
    energy = np.array([s.log_energy for s in segments], dtype=np.float64)
    dur = np.array([s.duration_frames for s in segments], dtype=np.float64)
    if not normalize:
        return np.column_stack([f0, energy, dur])
    voiced = f0 > 0
    rel_f0 = np.zeros_like(f0)
    if voiced.any():
        log_f0 = np.log(f0[voiced])
        rel_f0[voiced] = log_f0 - log_f0.mean()
    return np.column_stack([rel_f0, energy - energy.mean(), np.log(dur)])


def train_supra(segment_seqs, m: int = 10, seed: int = 0, n_supra: int = 3,
                normalize: bool = True, rel_var_floor: float = 0.3, tol: float = 1e-4,
                max_iter: int = 50, monitor: ConvergenceMonitor = None) -> SupraModel:
    """Fit the ergodic supra model by Baum-Welch.

    All transitions start at 1/n_supra. Each state's mixture starts from the
    segments the alignment labelled with that supra-state. Variances are
    floored at ``rel_var_floor`` times the pooled per-dimension variance.
    """
    segment_seqs = [list(s) for s in segment_seqs]
    if not segment_seqs or any(not s for s in segment_seqs):
        raise SupraError("train_supra needs at least one non-empty segment sequence")
    feats = [prosodic_observations(s, normalize) for s in segment_seqs]
    pooled = np.concatenate(feats)
    labels = np.array([seg.supra_state for s in segment_seqs for seg in s])
    var_floor = np.maximum(rel_var_floor * pooled.var(axis=0), VAR_FLOOR)
    rng = np.random.default_rng(seed)
    emissions = []
    for p in range(n_supra):
        members = pooled[labels == p]
        emissions.append(init_mixture(members if len(members) else pooled, m, rng, var_floor))
    base = replace(init_chmm1(n_supra, m, pooled.shape[1],
                              mask=np.ones((n_supra, n_supra), dtype=bool)),
                   emissions=emissions)
    if monitor is None:
        monitor = ConvergenceMonitor(tol, max_iter)
    base = train_chmm1(base, feats, var_floor=var_floor, monitor=monitor)
    # keep the chain strictly ergodic
    trans = np.maximum(base.trans, SUPRA_TRANS_FLOOR)
    trans /= trans.sum(axis=1, keepdims=True)
    return SupraModel(replace(base, trans=trans), normalize)


def supra_log_likelihood(model: SupraModel, segments) -> float:
    return likelihood1(model.base, prosodic_observations(segments, model.normalize))


def fuse_scores(acoustic_ll: float, supra_ll: float, w=DEFAULT_ALPHA) -> float:
    """(1 - alpha) * acoustic + alpha * supra."""
    alpha = w.alpha if isinstance(w, FusionWeight) else FusionWeight(float(w)).alpha
    if not (math.isfinite(acoustic_ll) and math.isfinite(supra_ll)):
        raise SupraError("fusion inputs must be finite")
    return (1.0 - alpha) * acoustic_ll + alpha * supra_ll
