"""LPCC and prosody frontend.

Audio is cut into 30 ms Hamming-windowed frames every 5 ms, each frame is
reduced to 12 linear prediction coefficients by the autocorrelation method
and converted to 12 cepstral coefficients. A parallel pitch/energy track is
computed on the same frame grid for the suprasegmental layer.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 12000
WINDOW_SEC = 0.030
HOP_SEC = 0.005
LPC_ORDER = 12
ENERGY_EPS = 1e-10

FEATURE_MAGIC = b"LPCC"
FEATURE_VERSION = 1


class FrontendError(ValueError):
    """Raised when audio cannot be turned into features."""


class SilentFrameError(FrontendError):
    pass


class UnstableFrameError(FrontendError):
    pass


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise FrontendError("audio must be mono (1-d samples)")
        if not np.all(np.isfinite(samples)):
            raise FrontendError("audio contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise FrontendError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass
class ObservationSequence:
    """T x 12 LPCC observations for one utterance.

    ``frame_index`` records which analysis frames survived, so prosody can
    be re-aligned; ``n_dropped`` counts silent or unstable frames.
    """

    frames: np.ndarray
    frame_index: np.ndarray = None
    n_dropped: int = 0

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.frame_index is None:
            self.frame_index = np.arange(len(self.frames))
        self.frame_index = np.asarray(self.frame_index, dtype=np.int64)
        if len(self.frames) < 1:
            raise FrontendError("observation sequence must have at least one frame")

    def __len__(self):
        return len(self.frames)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class ProsodyTrack:
    """Per-frame fundamental frequency (0 when unvoiced) and natural-log energy."""

    f0_hz: np.ndarray
    log_energy: np.ndarray

    def __len__(self):
        return len(self.f0_hz)

    def select(self, index) -> "ProsodyTrack":
        return ProsodyTrack(self.f0_hz[index], self.log_energy[index])


def window_length(sample_rate_hz: int) -> int:
    return int(round(WINDOW_SEC * sample_rate_hz))


def hop_length(sample_rate_hz: int) -> int:
    return int(round(HOP_SEC * sample_rate_hz))


def num_frames(n_samples: int, sample_rate_hz: int = SAMPLE_RATE) -> int:
    win, hop = window_length(sample_rate_hz), hop_length(sample_rate_hz)
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def hamming(length: int) -> np.ndarray:
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2 * np.pi * n / (length - 1))


def _check_rate(audio: AudioBuffer):
    if audio.sample_rate_hz != SAMPLE_RATE:
        raise FrontendError(
            f"sample rate {audio.sample_rate_hz} Hz not supported, expected {SAMPLE_RATE} Hz")


def frame_signal(audio: AudioBuffer, windowed: bool = True) -> np.ndarray:
    """Split audio into overlapping frames, one per row.

    Frame ``i`` starts at sample ``i * hop``; a trailing partial window is
    dropped. With ``windowed`` the Hamming window is applied.
    """
    win = window_length(audio.sample_rate_hz)
    hop = hop_length(audio.sample_rate_hz)
    if len(audio) < win:
        raise FrontendError("utterance too short")
    frames = np.lib.stride_tricks.sliding_window_view(audio.samples, win)[::hop]
    if windowed:
        return frames * hamming(win)
    return frames.copy()


def frame_starts(audio: AudioBuffer) -> np.ndarray:
    return np.arange(num_frames(len(audio), audio.sample_rate_hz)) * hop_length(audio.sample_rate_hz)


def autocorrelate(frame: np.ndarray, max_lag: int = LPC_ORDER) -> np.ndarray:
    """Biased autocorrelation r[k] = sum_n x[n] x[n+k] for k = 0..max_lag."""
    frame = np.asarray(frame, dtype=np.float64)
    if max_lag >= len(frame):
        raise FrontendError("max_lag must be smaller than the frame length")
    return np.array([np.dot(frame[:len(frame) - k], frame[k:]) for k in range(max_lag + 1)])


def levinson_durbin(r: np.ndarray, order: int = LPC_ORDER):
    """Solve the LPC normal equations by the Levinson-Durbin recursion.

    The predictor polynomial is ``A(z) = 1 + sum_i a_i z^-i``, i.e. the
    returned ``lpc`` satisfies ``R a = -r[1:order+1]`` with ``R`` the
    Toeplitz matrix of ``r[0:order]``.

    Returns
    -------
    lpc : ndarray, shape (order,)
    gain : float
        Square root of the final prediction error power.

    Raises
    ------
    SilentFrameError
        If ``r[0] <= 0``.
    UnstableFrameError
        If a reflection coefficient reaches magnitude 1.
    """
    r = np.asarray(r, dtype=np.float64)
    if not r[0] > 0:
        raise SilentFrameError("silent frame")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        if not abs(k) < 1.0:
            raise UnstableFrameError("unstable frame")
        a[1:i] = a[1:i] + k * a[i - 1:0:-1]
        a[i] = k
        err *= 1.0 - k * k
    return a[1:], float(np.sqrt(err))


def lpc_to_lpcc(lpc: np.ndarray, order: int = LPC_ORDER) -> np.ndarray:
    """Cepstrum c_1..c_order of the all-pole model 1/A(z)."""
    a = np.zeros(order + 1)
    lpc = np.asarray(lpc, dtype=np.float64)
    n_lpc = min(len(lpc), order)
    a[1:n_lpc + 1] = lpc[:n_lpc]
    c = np.zeros(order + 1)
    for n in range(1, order + 1):
        k = np.arange(1, n)
        c[n] = -a[n] - np.sum(k * c[k] * a[n - k]) / n
    return c[1:]


def extract_features(audio: AudioBuffer) -> ObservationSequence:
    """LPCC observation sequence; silent and unstable frames are dropped."""
    _check_rate(audio)
    frames = frame_signal(audio)
    rows, kept = [], []
    for idx, frame in enumerate(frames):
        try:
            lpc, _ = levinson_durbin(autocorrelate(frame), LPC_ORDER)
        except FrontendError:
            continue
        rows.append(lpc_to_lpcc(lpc, LPC_ORDER))
        kept.append(idx)
    if not rows:
        raise FrontendError("no usable frames")
    return ObservationSequence(np.array(rows), np.array(kept), len(frames) - len(kept))


def _pitch_from_acf(acf: np.ndarray, sample_rate_hz: int, f0_min: float, f0_max: float,
                    threshold: float) -> float:
    if acf[0] <= 0:
        return 0.0
    lag_lo = int(np.ceil(sample_rate_hz / f0_max))
    lag_hi = int(np.floor(sample_rate_hz / f0_min))
    nacf = acf / acf[0]
    lag = lag_lo + int(np.argmax(nacf[lag_lo:lag_hi + 1]))
    if nacf[lag] < threshold:
        return 0.0
    shift = 0.0
    if lag_lo < lag < lag_hi:
        # parabolic refinement of the peak position
        y0, y1, y2 = nacf[lag - 1], nacf[lag], nacf[lag + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            shift = 0.5 * (y0 - y2) / denom
    f0 = sample_rate_hz / (lag + shift)
    return float(np.clip(f0, f0_min, f0_max))


def extract_prosody(audio: AudioBuffer, voicing_threshold: float = 0.3,
                    f0_min: float = 50.0, f0_max: float = 500.0) -> ProsodyTrack:
    """Per-frame F0 and log energy on the 30 ms / 5 ms grid.

    F0 is the autocorrelation peak in the lag range [sr/f0_max, sr/f0_min]
    of the unwindowed frame; frames whose normalized peak is below
    ``voicing_threshold`` are unvoiced (F0 = 0). Log energy is
    ``ln(r[0] + 1e-10)``.
    """
    _check_rate(audio)
    frames = frame_signal(audio, windowed=False)
    sr = audio.sample_rate_hz
    max_lag = int(np.floor(sr / f0_min)) + 1
    n_fft = 1 << int(np.ceil(np.log2(2 * frames.shape[1])))
    spec = np.fft.rfft(frames, n_fft, axis=1)
    acfs = np.fft.irfft(spec * np.conj(spec), n_fft, axis=1)[:, :max_lag + 1]
    # the FFT route leaves rounding noise where the exact value is zero
    r0 = np.einsum("ij,ij->i", frames, frames)
    acfs[:, 0] = r0
    f0 = np.array([
        _pitch_from_acf(acf, sr, f0_min, f0_max, voicing_threshold) if e > 0 else 0.0
        for acf, e in zip(acfs, r0)])
    return ProsodyTrack(f0, np.log(r0 + ENERGY_EPS))


def analyze(audio: AudioBuffer, voicing_threshold: float = 0.3):
    """LPCC observations plus the prosody track restricted to the kept frames."""
    obs = extract_features(audio)
    prosody = extract_prosody(audio, voicing_threshold=voicing_threshold)
    return obs, prosody.select(obs.frame_index)


def write_features(path, obs: ObservationSequence):
    """Write LPCC frames as a versioned little-endian float64 container."""
    frames = np.ascontiguousarray(obs.frames, dtype="<f8")
    header = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, *frames.shape)
    Path(path).write_bytes(header + frames.tobytes())


def read_features(path) -> ObservationSequence:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FrontendError(f"{path}: not a feature file")
    version, n_frames, dim = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise FrontendError(f"{path}: unsupported feature format version {version}")
    frames = np.frombuffer(raw[16:], dtype="<f8")
    if frames.size != n_frames * dim:
        raise FrontendError(f"{path}: truncated feature file")
    return ObservationSequence(frames.reshape(n_frames, dim).astype(np.float64))
