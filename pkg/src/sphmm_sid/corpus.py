"""Corpus ingestion and the seeded synthetic speech corpus.

The synthetic corpus follows the enrollment protocol: every speaker reads
every sentence 5 times in a neutral training session and 4 times in a
test session under each of the neutral and shouted conditions.
"""
from __future__ import annotations

import csv
import logging
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .frontend import SAMPLE_RATE, AudioBuffer, FrontendError

_log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_FIELDS = ("path", "speaker_id", "gender", "sentence_id", "session", "condition",
                   "repetition")
TRAIN_REPS = 5
TEST_REPS = 4
CONDITIONS = ("neutral", "shouted")
GENDERS = ("male", "female")


class CorpusError(ValueError):
    pass


# --------------------------------------------------------------------------- WAV I/O

def read_wav(path) -> AudioBuffer:
    """Read a 16-bit mono PCM WAV file at 12 kHz into [-1, 1] samples."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise FrontendError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise FrontendError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        if wf.getframerate() != SAMPLE_RATE:
            raise FrontendError(f"{path}: sample rate {wf.getframerate()} Hz, expected {SAMPLE_RATE}")
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return AudioBuffer(pcm / 32768.0, SAMPLE_RATE)


def to_pcm16(samples) -> np.ndarray:
    return np.round(np.clip(samples, -1.0, 32767 / 32768) * 32768.0).astype("<i2")


def write_wav(path, audio: AudioBuffer):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate_hz)
        wf.writeframes(to_pcm16(audio.samples).tobytes())


# --------------------------------------------------------------------------- manifest

@dataclass(frozen=True)
class UtteranceRecord:
    path: str
    speaker_id: int
    gender: str
    sentence_id: int
    session: str
    condition: str
    repetition: int

    @property
    def key(self):
        return (self.speaker_id, self.sentence_id, self.session, self.condition, self.repetition)


@dataclass
class CorpusManifest:
    records: list
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def select(self, **criteria):
        return [r for r in self.records
                if all(getattr(r, k) == v for k, v in criteria.items())]

    @property
    def speakers(self):
        return sorted({r.speaker_id for r in self.records})

    @property
    def sentences(self):
        return sorted({r.sentence_id for r in self.records})

    def genders(self):
        return {r.speaker_id: r.gender for r in self.records}

    def resolve(self, record: UtteranceRecord) -> Path:
        return self.root / record.path


def _parse_record(row, lineno):
    try:
        rec = UtteranceRecord(
            path=row["path"],
            speaker_id=int(row["speaker_id"]),
            gender=row["gender"],
            sentence_id=int(row["sentence_id"]),
            session=row["session"],
            condition=row["condition"],
            repetition=int(row["repetition"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"line {lineno}: malformed record ({exc})") from None
    if rec.gender not in GENDERS:
        raise CorpusError(f"line {lineno}: unknown gender {rec.gender!r}")
    if rec.session not in ("train", "test"):
        raise CorpusError(f"line {lineno}: unknown session {rec.session!r}")
    if rec.condition not in CONDITIONS:
        raise CorpusError(f"line {lineno}: unknown condition {rec.condition!r}")
    if rec.session == "train" and rec.condition != "neutral":
        raise CorpusError(f"line {lineno}: training utterances must be neutral")
    limit = TRAIN_REPS if rec.session == "train" else TEST_REPS
    if not 1 <= rec.repetition <= limit:
        raise CorpusError(
            f"line {lineno}: {rec.session} repetition {rec.repetition} outside 1..{limit}")
    if not 1 <= rec.sentence_id <= 8 or rec.speaker_id < 1:
        raise CorpusError(f"line {lineno}: speaker/sentence id out of range")
    return rec


def validate_manifest(records):
    """Check key uniqueness, gender consistency and per-(speaker, sentence) split counts."""
    seen = {}
    genders = {}
    for lineno, rec in records:
        if rec.key in seen:
            raise CorpusError(f"line {lineno}: duplicate of line {seen[rec.key]} {rec.key}")
        seen[rec.key] = lineno
        if genders.setdefault(rec.speaker_id, rec.gender) != rec.gender:
            raise CorpusError(f"line {lineno}: speaker {rec.speaker_id} changes gender")
    counts = {}
    for _, rec in records:
        slot = counts.setdefault((rec.speaker_id, rec.sentence_id), {})
        slot[(rec.session, rec.condition)] = slot.get((rec.session, rec.condition), 0) + 1
    for (spk, sent), slot in sorted(counts.items()):
        n_train = slot.get(("train", "neutral"), 0)
        if n_train not in (0, TRAIN_REPS):
            raise CorpusError(
                f"speaker {spk} sentence {sent}: {n_train} training utterances, expected {TRAIN_REPS}")
        for cond in CONDITIONS:
            n_test = slot.get(("test", cond), 0)
            if n_test not in (0, TEST_REPS):
                raise CorpusError(f"speaker {spk} sentence {sent}: {n_test} {cond} test "
                                  f"utterances, expected {TEST_REPS}")


def load_manifest(path) -> CorpusManifest:
    """Parse and validate a tab-separated manifest; paths resolve relative to its directory."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None:
            raise CorpusError(f"{path}: empty manifest")
        if tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise CorpusError(f"{path}: line 1: header must be {' '.join(MANIFEST_FIELDS)}")
        numbered = [(i, _parse_record(row, i)) for i, row in enumerate(reader, start=2)]
    if not numbered:
        raise CorpusError(f"{path}: manifest has no records")
    validate_manifest(numbered)
    return CorpusManifest([r for _, r in numbered], path.parent)


def write_manifest(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in records:
            writer.writerow([r.path, r.speaker_id, r.gender, r.sentence_id, r.session,
                             r.condition, r.repetition])


# --------------------------------------------------------------------------- synthesis

# (voiced, base duration ms, formant frequencies Hz, bandwidths Hz)
PHONES = {
    "i": (True, 110, (280, 2250, 2900, 3700, 4600), (60, 90, 150, 200, 250)),
    "e": (True, 110, (450, 1950, 2600, 3600, 4500), (70, 100, 150, 200, 250)),
    "a": (True, 130, (750, 1250, 2550, 3500, 4500), (90, 110, 150, 200, 250)),
    "o": (True, 120, (500, 850, 2500, 3500, 4400), (80, 90, 150, 200, 250)),
    "u": (True, 110, (320, 800, 2300, 3400, 4400), (60, 80, 150, 200, 250)),
    "@": (True, 80, (520, 1500, 2500, 3500, 4500), (80, 100, 150, 200, 250)),
    "I": (True, 90, (400, 2000, 2550, 3600, 4500), (70, 100, 150, 200, 250)),
    "V": (True, 100, (620, 1200, 2550, 3500, 4500), (80, 100, 150, 200, 250)),
    "m": (True, 70, (250, 1100, 2200, 3300, 4300), (60, 200, 250, 300, 300)),
    "n": (True, 70, (260, 1500, 2500, 3400, 4400), (60, 200, 250, 300, 300)),
    "l": (True, 70, (350, 1050, 2700, 3500, 4500), (70, 120, 200, 250, 300)),
    "w": (True, 60, (300, 650, 2200, 3300, 4300), (70, 90, 200, 250, 300)),
    "s": (False, 100, (1800, 3900, 4700, 5200, 5600), (300, 400, 400, 500, 500)),
    "f": (False, 90, (1500, 2800, 3800, 4700, 5500), (500, 600, 600, 600, 600)),
    "h": (False, 60, (600, 1500, 2500, 3500, 4500), (300, 300, 300, 400, 400)),
    "t": (False, 50, (1600, 3300, 4200, 4900, 5500), (400, 400, 500, 500, 500)),
}

# toy phone strings for the eight enrollment sentences
SENTENCES = {
    1: "hiwVtsfaIfteIs@wit",
    2: "@sVnIsaInIn",
    3: "@wel@Isfe@",
    4: "@stut@ntsst@ihat",
    5: "@sIst@ntf@s@s@lutInfo@moun",
    6: "iun@fasItiofsatia",
    7: "Ilet@Ilon@mfiut@iIf@tm@nt",
    8: "hihastusVns@ntutot@s",
}


def sentence_phones(sentence_id: int):
    return list(SENTENCES[sentence_id])


@dataclass(frozen=True)
class ShoutTransform:
    f0_factor: float = 1.5
    gain_db: float = 10.0
    tilt_reduction: float = 0.05
    tempo: float = 0.85


@dataclass
class SynthSpeakerProfile:
    """Deterministic voice of one synthetic speaker.

    ``formant_scale`` is a vocal-tract length factor applied to every phone,
    ``formant_offsets`` per-phone idiosyncratic deviations (relative), and
    the ``style_*`` tables the speaker's habitual pitch, energy and
    duration pattern per phone.
    """

    seed: int
    gender: str
    base_f0_hz: float
    formant_scale: float
    bandwidth_scale: float
    formant_offsets: dict
    glottal_pole: float
    energy_db: float
    tempo: float
    style_pitch_st: dict
    style_energy_db: dict
    style_duration: dict

    @classmethod
    def generate(cls, seed: int, gender: str, separation: float = 1.0) -> "SynthSpeakerProfile":
        rng = np.random.default_rng(seed)
        if gender == "male":
            f0 = rng.uniform(90, 150)
            scale = rng.uniform(0.88, 1.02)
        else:
            f0 = rng.uniform(170, 250)
            scale = rng.uniform(1.04, 1.18)
        phones = sorted(PHONES)
        return cls(
            seed=seed,
            gender=gender,
            base_f0_hz=float(f0),
            formant_scale=float(scale),
            bandwidth_scale=float(rng.uniform(0.8, 1.3)),
            formant_offsets={p: rng.normal(0.0, 0.04 * separation, 5) for p in phones},
            glottal_pole=float(rng.uniform(0.88, 0.97)),
            energy_db=float(rng.uniform(-34.0, -28.0)),
            tempo=float(rng.uniform(0.9, 1.1)),
            style_pitch_st={p: float(rng.normal(0.0, 1.5 * separation)) for p in phones},
            style_energy_db={p: float(rng.normal(0.0, 2.0 * separation)) for p in phones},
            style_duration={p: float(np.exp(rng.normal(0.0, 0.15 * separation)))
                            for p in phones},
        )

    def formants(self, phone):
        freqs = np.array(PHONES[phone][2], dtype=np.float64)
        bws = np.array(PHONES[phone][3], dtype=np.float64)
        freqs = freqs * self.formant_scale * (1.0 + self.formant_offsets[phone])
        freqs = np.clip(freqs, 150.0, 0.45 * SAMPLE_RATE)
        return freqs, bws * self.bandwidth_scale


def _all_pole(freqs, bws, sr=SAMPLE_RATE):
    """Denominator of a cascade of 2-pole resonators; all poles inside the unit circle."""
    a = np.array([1.0])
    for f, bw in zip(freqs, bws):
        r = np.exp(-np.pi * bw / sr)
        a = np.convolve(a, [1.0, -2.0 * r * np.cos(2 * np.pi * f / sr), r * r])
    return a


def _pulse_train(f0_track, rng, jitter=0.01):
    """Unit impulses at glottal closure instants following a per-sample F0 track."""
    out = np.zeros(len(f0_track))
    phase = rng.uniform(0, 1)
    period_scale = 1.0
    for n, f0 in enumerate(f0_track):
        phase += f0 * period_scale / SAMPLE_RATE
        if phase >= 1.0:
            phase -= 1.0
            out[n] = 1.0
            period_scale = 1.0 + rng.normal(0.0, jitter)
    return out


def synth_utterance(profile: SynthSpeakerProfile, sentence_id: int, condition: str = "neutral",
                    repetition_seed: int = 0, shout: ShoutTransform = ShoutTransform()
                    ) -> AudioBuffer:
    """Source-filter rendering of one sentence by one speaker.

    Random draws depend only on (profile, sentence, repetition seed), so the
    neutral and shouted renderings of the same seed differ only by the
    shout transform.
    """
    if condition not in CONDITIONS:
        raise CorpusError(f"unknown condition {condition!r}")
    shouted = condition == "shouted"
    rng = np.random.default_rng([profile.seed, sentence_id, repetition_seed])
    phones = sentence_phones(sentence_id)
    n_ph = len(phones)
    dur_jitter = rng.normal(0.0, 0.05, n_ph)
    pitch_jitter = rng.normal(0.0, 0.3, n_ph)
    energy_jitter = rng.normal(0.0, 0.5, n_ph)
    formant_jitter = rng.normal(0.0, 0.01, (n_ph, 5))
    noise_seed = int(rng.integers(2**31))
    noise_rng = np.random.default_rng(noise_seed)

    tempo = profile.tempo * (shout.tempo if shouted else 1.0)
    f0_factor = shout.f0_factor if shouted else 1.0
    gain_db = shout.gain_db if shouted else 0.0
    pole = profile.glottal_pole - (shout.tilt_reduction if shouted else 0.0)

    lengths = []
    targets = []
    for idx, ph in enumerate(phones):
        base_ms = PHONES[ph][1] * profile.style_duration[ph] * (1.0 + dur_jitter[idx])
        lengths.append(max(int(round(base_ms * tempo * SAMPLE_RATE / 1000.0)), 24))
        decl = -1.5 * idx / max(n_ph - 1, 1)
        st = profile.style_pitch_st[ph] + decl + pitch_jitter[idx]
        targets.append(profile.base_f0_hz * 2.0 ** (st / 12.0) * f0_factor)

    # per-sample F0 glides linearly between phone targets
    centers = np.cumsum(lengths) - np.array(lengths) / 2.0
    f0_track = np.interp(np.arange(sum(lengths)), centers, targets)
    pulses = _pulse_train(f0_track, noise_rng)
    glottal = lfilter([1.0], [1.0, -2 * pole, pole * pole], pulses)

    out = []
    zi = np.zeros(10)
    start = 0
    for idx, ph in enumerate(phones):
        n = lengths[idx]
        voiced = PHONES[ph][0]
        if voiced:
            src = glottal[start:start + n] + 0.02 * noise_rng.standard_normal(n)
        else:
            src = noise_rng.standard_normal(n)
        freqs, bws = profile.formants(ph)
        a = _all_pole(freqs * (1.0 + formant_jitter[idx]), bws)
        seg, zi = lfilter([1.0], a, src, zi=zi)
        level_db = (profile.energy_db + profile.style_energy_db[ph] + energy_jitter[idx]
                    + gain_db)
        rms = np.sqrt(np.mean(seg * seg)) + 1e-12
        gain = 10.0 ** (level_db / 20.0) / rms
        out.append(seg * gain)
        zi = zi * gain
        start += n
    samples = np.concatenate(out)
    samples += 10.0 ** (-70.0 / 20.0) * noise_rng.standard_normal(len(samples))
    return AudioBuffer(np.clip(samples, -1.0, 1.0), SAMPLE_RATE)


def speaker_genders(n_speakers: int):
    """First half male, second half female (15/15 for 30 speakers)."""
    n_male = (n_speakers + 1) // 2
    return {s: ("male" if s <= n_male else "female") for s in range(1, n_speakers + 1)}


def speaker_profiles(n_speakers: int, seed: int, separation: float = 1.0):
    genders = speaker_genders(n_speakers)
    seeds = np.random.SeedSequence(seed).generate_state(n_speakers, dtype=np.uint32)
    return {s: SynthSpeakerProfile.generate(int(seeds[s - 1]), genders[s], separation)
            for s in genders}


def protocol_records(n_speakers: int = 30, n_sentences: int = 8):
    """Records of the full protocol, in a fixed order, with relative wav paths."""
    genders = speaker_genders(n_speakers)
    records = []
    for spk in range(1, n_speakers + 1):
        for sent in range(1, n_sentences + 1):
            slots = [("train", "neutral", TRAIN_REPS)]
            slots += [("test", cond, TEST_REPS) for cond in CONDITIONS]
            for session, cond, reps in slots:
                for rep in range(1, reps + 1):
                    name = f"s{spk:02d}/s{spk:02d}_t{sent}_{session}_{cond}_{rep}.wav"
                    records.append(UtteranceRecord(name, spk, genders[spk], sent, session,
                                                   cond, rep))
    return records


def repetition_seed(record: UtteranceRecord) -> int:
    # test repetitions are offset so no test rendering reuses a training seed
    return record.repetition + (0 if record.session == "train" else 100)


def synth_corpus(out_dir, n_speakers: int = 30, sentences: int = 8, seed: int = 0,
                 separation: float = 1.0, shout: ShoutTransform = ShoutTransform()
                 ) -> CorpusManifest:
    """Render the protocol corpus to ``out_dir`` and write ``manifest.tsv``."""
    if not 1 <= sentences <= len(SENTENCES):
        raise CorpusError(f"sentences must be in 1..{len(SENTENCES)}")
    out_dir = Path(out_dir)
    profiles = speaker_profiles(n_speakers, seed, separation)
    records = protocol_records(n_speakers, sentences)
    for rec in records:
        path = out_dir / rec.path
        path.parent.mkdir(parents=True, exist_ok=True)
        audio = synth_utterance(profiles[rec.speaker_id], rec.sentence_id, rec.condition,
                                repetition_seed(rec), shout)
        write_wav(path, audio)
    write_manifest(out_dir / MANIFEST_NAME, records)
    _log.info("wrote %d utterances to %s", len(records), out_dir)
    return load_manifest(out_dir / MANIFEST_NAME)
