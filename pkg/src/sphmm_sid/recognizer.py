"""Closed-set, text-dependent speaker identification.

One CHMM2 and one supra model per (speaker, sentence) are trained on the
neutral training session. A test utterance of sentence s is scored only
against the models of sentence s, and the highest scoring speaker wins;
ties go to the lowest speaker id.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .frontend import analyze
from .hmm.chain import ConvergenceMonitor, HmmError
from .hmm.chmm1 import init_emissions
from .hmm.chmm2 import Chmm2Model, init_chmm2, likelihood2, train_chmm2
from .sphmm import (DEFAULT_ALPHA, FusionWeight, SupraError, SupraMapping, SupraModel,
                    align_to_supra, supra_log_likelihood, train_supra)

_log = logging.getLogger(__name__)

MODELS = ("chmm2", "sphmm")


class RecognizerError(ValueError):
    pass


@dataclass
class ModelConfig:
    n_states: int = 9
    mixtures_acoustic: int = 5
    mixtures_supra: int = 10
    n_supra: int = 3
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    max_iter: int = 50
    tol: float = 1e-4
    emission_init: str = "segment"
    normalize_prosody: bool = True
    supra_rel_var_floor: float = 0.3

    def __post_init__(self):
        FusionWeight(self.alpha)

    def mapping(self) -> SupraMapping:
        return SupraMapping.contiguous(self.n_states, self.n_supra)


@dataclass
class SpeakerModel:
    """Model bundle for one (speaker, sentence)."""

    speaker: int
    sentence: int
    chmm2: Chmm2Model
    supra: SupraModel
    mapping: SupraMapping
    gender: str = ""
    train_log_likelihood: float = float("nan")


@dataclass
class SpeakerRegistry:
    entries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def add(self, bundle: SpeakerModel):
        key = (bundle.speaker, bundle.sentence)
        if key in self.entries:
            _log.warning("re-enrolling speaker %d sentence %d; previous bundle replaced", *key)
        self.entries[key] = bundle

    def speakers(self, sentence=None):
        return sorted({spk for spk, sent in self.entries if sentence is None or sent == sentence})

    @property
    def speaker_count(self) -> int:
        return len(self.speakers())

    def sentences(self):
        return sorted({sent for _, sent in self.entries})

    def genders(self):
        return {b.speaker: b.gender for b in self.entries.values()}

    def models_for(self, sentence):
        speakers = self.speakers(sentence)
        if not speakers:
            raise RecognizerError(f"sentence {sentence} is not enrolled")
        return speakers, [self.entries[(spk, sentence)] for spk in speakers]


def model_seed(master_seed: int, speaker: int, sentence: int) -> int:
    return int(np.random.SeedSequence([master_seed, speaker, sentence]).generate_state(1)[0])


def train_bundle(speaker, sentence, utterances, config: ModelConfig, gender=""):
    """Train the acoustic model, align, then train the supra model on the alignments."""
    utterances = list(utterances)
    if not utterances:
        raise RecognizerError(f"speaker {speaker} sentence {sentence}: no usable utterances")
    obs_list = [obs for obs, _ in utterances]
    dim = obs_list[0].dim
    seed = model_seed(config.seed, speaker, sentence)
    model = init_chmm2(config.n_states, config.mixtures_acoustic, dim)
    model = init_emissions(model, obs_list, config.emission_init, seed)
    monitor = ConvergenceMonitor(config.tol, config.max_iter)
    model = train_chmm2(model, obs_list, monitor=monitor)
    mapping = config.mapping()
    segments = [align_to_supra(model, mapping, obs, pros) for obs, pros in utterances]
    supra = train_supra(segments, m=config.mixtures_supra, seed=seed, n_supra=config.n_supra,
                        normalize=config.normalize_prosody,
                        rel_var_floor=config.supra_rel_var_floor, tol=config.tol,
                        max_iter=config.max_iter)
    return SpeakerModel(speaker, sentence, model, supra, mapping, gender, monitor.history[-1])


def enroll(registry: SpeakerRegistry, speaker: int, sentence: int, utterances,
           config: ModelConfig = None, gender: str = "") -> SpeakerRegistry:
    """Train and store the bundle for (speaker, sentence).

    ``utterances`` is a sequence of (ObservationSequence, ProsodyTrack)
    pairs from the neutral training session.
    """
    config = config or ModelConfig()
    registry.add(train_bundle(speaker, sentence, utterances, config, gender))
    return registry


def argmax_speaker(speakers, scores):
    """Highest score wins; ties go to the lowest speaker id."""
    scores = np.asarray(scores, dtype=np.float64)
    best = int(np.argmax(scores))
    if np.count_nonzero(scores == scores[best]) > 1:
        _log.info("tie between speakers %s; choosing %d",
                  [speakers[i] for i in np.flatnonzero(scores == scores[best])], speakers[best])
    return speakers[best]


def fused_scores(acoustic, supra, alpha=DEFAULT_ALPHA):
    """Weighted log-domain fusion; speakers without a supra score are excluded (-inf)."""
    alpha = FusionWeight(alpha).alpha
    acoustic = np.asarray(acoustic, dtype=np.float64)
    supra = np.asarray(supra, dtype=np.float64)
    ok = np.isfinite(supra)
    out = np.full(acoustic.shape, -np.inf)
    out[ok] = (1.0 - alpha) * acoustic[ok] + alpha * supra[ok]
    return out


def acoustic_scores(registry, sentence, obs):
    speakers, bundles = registry.models_for(sentence)
    return speakers, np.array([likelihood2(b.chmm2, obs) for b in bundles])


def score_utterance(registry, sentence, obs, prosody):
    """Acoustic and supra log-likelihoods against every speaker of ``sentence``.

    The supra segments are cut from each candidate's own acoustic alignment.
    A speaker whose alignment fails gets a NaN supra score.
    """
    speakers, bundles = registry.models_for(sentence)
    acoustic = np.empty(len(bundles))
    supra = np.empty(len(bundles))
    for n, b in enumerate(bundles):
        acoustic[n] = likelihood2(b.chmm2, obs)
        try:
            segments = align_to_supra(b.chmm2, b.mapping, obs, prosody)
            supra[n] = supra_log_likelihood(b.supra, segments)
        except (SupraError, HmmError) as exc:
            _log.warning("speaker %d excluded from supra scoring: %s", b.speaker, exc)
            supra[n] = np.nan
    return speakers, acoustic, supra


def identify_chmm2(registry: SpeakerRegistry, sentence: int, obs):
    """V* = argmax_v log P(O | CHMM2 of v)."""
    speakers, scores = acoustic_scores(registry, sentence, obs)
    return argmax_speaker(speakers, scores), scores


def identify_sphmm(registry: SpeakerRegistry, sentence: int, obs, prosody,
                   alpha: float = DEFAULT_ALPHA):
    """V* = argmax_v of the fused acoustic and supra log-likelihoods."""
    speakers, acoustic, supra = score_utterance(registry, sentence, obs, prosody)
    fused = fused_scores(acoustic, supra, alpha)
    return argmax_speaker(speakers, fused), fused


@dataclass
class EvaluationReport:
    """Confusion matrices per (model, condition) plus per-utterance decisions.

    Rows of a confusion matrix are true speakers, columns decided speakers,
    both in ``speakers`` order.
    """

    speakers: list
    genders: dict
    alpha: float
    confusion: dict
    decisions: list

    def conditions(self):
        return sorted({c for m in self.confusion.values() for c in m})

    def counts(self, model, condition, gender=None):
        cm = self.confusion[model][condition]
        rows = [i for i, s in enumerate(self.speakers)
                if gender is None or self.genders.get(s) == gender]
        correct = int(sum(cm[i, i] for i in rows))
        total = int(sum(cm[i].sum() for i in rows))
        return correct, total

    def accuracy(self, model, condition, gender=None) -> float:
        correct, total = self.counts(model, condition, gender)
        return 100.0 * correct / total if total else float("nan")

    @property
    def n_utterances(self) -> int:
        return len(self.decisions)

    def to_dict(self):
        conds = self.conditions()
        genders = sorted(set(self.genders.values()))
        return {
            "format_version": 1,
            "alpha": self.alpha,
            "speakers": list(self.speakers),
            "genders": {str(k): v for k, v in sorted(self.genders.items())},
            "n_utterances": self.n_utterances,
            "accuracy": {
                m: {c: {"average": self.accuracy(m, c),
                        **{g: self.accuracy(m, c, g) for g in genders}} for c in conds}
                for m in self.confusion},
            "confusion": {m: {c: self.confusion[m][c].tolist() for c in conds}
                          for m in self.confusion},
            "decisions": self.decisions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_text(self) -> str:
        conds = self.conditions()
        genders = sorted(set(self.genders.values()), reverse=True)
        header = "{:<10}".format("") + "".join(f"{c + ' (%)':>16}" for c in conds)
        lines = []
        for m in self.confusion:
            lines.append(f"Identification accuracy with {m.upper()}")
            lines.append(header)
            for g in genders + [None]:
                label = g.capitalize() if g else "Average"
                lines.append(f"{label:<10}" + "".join(
                    f"{self.accuracy(m, c, g):>16.1f}" for c in conds))
            lines.append("")
        lines.append("Models")
        lines.append(header)
        for m in self.confusion:
            lines.append(f"{m.upper():<10}" + "".join(
                f"{self.accuracy(m, c):>16.1f}" for c in conds))
        lines.append("")
        lines.append(f"utterances: {self.n_utterances}   alpha: {self.alpha}")
        return "\n".join(lines) + "\n"


def evaluate(registry: SpeakerRegistry, test_items, alpha: float = DEFAULT_ALPHA,
             models=MODELS) -> EvaluationReport:
    """Run both identifiers over ``(record, obs, prosody)`` test items."""
    alpha = FusionWeight(alpha).alpha
    speakers = registry.speakers()
    index = {s: i for i, s in enumerate(speakers)}
    confusion = {m: {} for m in models}
    decisions = []
    for rec, obs, prosody in test_items:
        if rec.speaker_id not in index:
            raise RecognizerError(f"test speaker {rec.speaker_id} is not enrolled (closed set)")
        cand, acoustic, supra = score_utterance(registry, rec.sentence_id, obs, prosody)
        decided = {"chmm2": argmax_speaker(cand, acoustic),
                   "sphmm": argmax_speaker(cand, fused_scores(acoustic, supra, alpha))}
        for m in models:
            cm = confusion[m].setdefault(
                rec.condition, np.zeros((len(speakers), len(speakers)), dtype=np.int64))
            cm[index[rec.speaker_id], index[decided[m]]] += 1
        decisions.append({"path": rec.path, "speaker": rec.speaker_id,
                          "sentence": rec.sentence_id, "condition": rec.condition,
                          **{m: decided[m] for m in models}})
    if not decisions:
        raise RecognizerError("empty test set")
    return EvaluationReport(speakers, registry.genders(), alpha, confusion, decisions)


def load_utterance(manifest, record, voicing_threshold: float = 0.3):
    """Observation sequence and frame-aligned prosody for one manifest record."""
    from .corpus import read_wav

    return analyze(read_wav(manifest.resolve(record)), voicing_threshold)


def enroll_manifest(manifest, config: ModelConfig = None, registry=None, progress=None):
    """Train a bundle for every (speaker, sentence) with training utterances."""
    config = config or ModelConfig()
    registry = registry if registry is not None else SpeakerRegistry()
    genders = manifest.genders()
    train = manifest.select(session="train")
    if not train:
        raise RecognizerError("manifest has no training utterances")
    keys = sorted({(r.speaker_id, r.sentence_id) for r in train})
    for spk, sent in keys:
        recs = sorted((r for r in train if r.speaker_id == spk and r.sentence_id == sent),
                      key=lambda r: r.repetition)
        utterances = [load_utterance(manifest, r) for r in recs]
        enroll(registry, spk, sent, utterances, config, genders[spk])
        if progress:
            progress(registry.entries[(spk, sent)])
    return registry


def iter_test_items(manifest, session="test"):
    for rec in manifest.select(session=session):
        obs, prosody = load_utterance(manifest, rec)
        yield rec, obs, prosody


def run_synthetic_protocol(work_dir, n_speakers: int = 30, sentences: int = 8,
                           config: ModelConfig = None, separation: float = 1.0,
                           models=MODELS):
    """Synthesize, enroll and evaluate one seeded corpus.

    Returns (manifest, registry, report). The corpus seed is ``config.seed``.
    """
    from .corpus import synth_corpus

    config = config or ModelConfig()
    manifest = synth_corpus(work_dir, n_speakers, sentences, config.seed, separation)
    registry = enroll_manifest(manifest, config)
    report = evaluate(registry, iter_test_items(manifest), config.alpha, models)
    return manifest, registry, report
