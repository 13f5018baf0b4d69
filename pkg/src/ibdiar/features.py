"""Acoustic front end: WAV input, MFCC extraction, feature files, speech masks.

Frame ``i`` of a feature matrix is anchored at ``i * frame_shift_s`` and, for
timeline purposes (masks, hypotheses, scoring), represents the interval
``[i * shift, (i + 1) * shift)``.
"""

from __future__ import annotations

import os
import struct
import wave
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.fft

from .annotation import merge_intervals, read_rttm
from .exceptions import FeatureFileError, ParameterError

FEATURE_MAGIC = b"IBFEAT"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<6sHIIdd")

LOG_FLOOR = 1e-10


class FeatureKind(str, Enum):
    MFCC = "MFCC"
    LATENT = "LATENT"
    FUSED_POSTERIOR = "FUSED-POSTERIOR"


@dataclass(frozen=True)
class Recording:
    id: str
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ParameterError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray
    frame_shift_s: float = 0.010
    frame_length_s: float = 0.025
    kind: FeatureKind = FeatureKind.MFCC

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ParameterError(f"feature matrix must be T x D with T, D >= 1, got {f.shape}")
        if not np.all(np.isfinite(f)):
            r, c = np.argwhere(~np.isfinite(f))[0]
            raise ParameterError(f"non-finite value at ({r},{c})")
        if self.frame_shift_s <= 0:
            raise ParameterError("frame shift must be positive")
        object.__setattr__(self, "frames", f)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames * self.frame_shift_s


@dataclass(frozen=True)
class SpeechMask:
    intervals: list = field(default_factory=list)

    def __post_init__(self):
        ivs = [(float(s), float(e)) for s, e in self.intervals]
        for s, e in ivs:
            if not s < e:
                raise ParameterError(f"speech interval ({s}, {e}) is empty")
        for (_, e0), (s1, _) in zip(ivs, ivs[1:]):
            if s1 < e0:
                raise ParameterError("speech intervals must be sorted and non-overlapping")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def full(cls, duration_s: float) -> "SpeechMask":
        return cls([(0.0, float(duration_s))])

    @classmethod
    def from_reference(cls, ref) -> "SpeechMask":
        return cls(ref.speech_intervals())

    @property
    def total_s(self) -> float:
        return sum(e - s for s, e in self.intervals)


@dataclass(frozen=True)
class MfccConfig:
    """MFCC front-end settings.

    Defaults: 19 cepstra (c1-c19, c0 dropped) from 26 HTK-mel filters,
    25 ms Hamming window, 10 ms shift, pre-emphasis 0.97.
    """

    num_coeffs: int = 19
    num_filters: int = 26
    shift_s: float = 0.010
    window_s: float = 0.025
    preemphasis: float = 0.97
    include_c0: bool = False
    fmin_hz: float = 0.0
    fmax_hz: float | None = None
    log_floor: float = LOG_FLOOR


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_filters, nfft, sample_rate, fmin=0.0, fmax=None):
    """Triangular HTK-mel filters sampled at the rFFT bin frequencies.

    Returns an array of shape ``(num_filters, nfft // 2 + 1)``.
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_filters + 2))
    bins = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins - lo) / (mid - lo)
    down = (hi - bins) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def num_frames_for(num_samples: int, win: int, hop: int) -> int:
    if num_samples < win:
        return 0
    return (num_samples - win) // hop + 1


def extract_mfcc(rec: Recording, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    sr = rec.sample_rate_hz
    if sr <= 0:
        raise ParameterError("sample rate must be positive")
    if cfg.shift_s <= 0 or cfg.window_s <= 0:
        raise ParameterError("window and shift must be positive")
    max_coeffs = cfg.num_filters - (0 if cfg.include_c0 else 1)
    if not 1 <= cfg.num_coeffs <= max_coeffs:
        raise ParameterError(f"num_coeffs must be in [1, {max_coeffs}]")
    win = int(round(cfg.window_s * sr))
    hop = int(round(cfg.shift_s * sr))
    x = np.asarray(rec.samples, dtype=np.float64)
    n_frames = num_frames_for(x.size, win, hop)
    if n_frames < 1:
        raise ParameterError("recording too short")

    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - cfg.preemphasis * x[:-1]

    frames = np.lib.stride_tricks.sliding_window_view(y, win)[::hop][:n_frames]
    nfft = 1 << (win - 1).bit_length()
    spec = np.fft.rfft(frames * np.hamming(win), n=nfft, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    fb = mel_filterbank(cfg.num_filters, nfft, sr, cfg.fmin_hz, cfg.fmax_hz)
    log_e = np.log(np.maximum(power @ fb.T, cfg.log_floor))
    cep = scipy.fft.dct(log_e, type=2, norm="ortho", axis=1)
    first = 0 if cfg.include_c0 else 1
    cep = cep[:, first:first + cfg.num_coeffs]
    return FeatureMatrix(cep, frame_shift_s=hop / sr, frame_length_s=win / sr,
                         kind=FeatureKind.MFCC)


def read_wav(path: str | os.PathLike, recording_id: str | None = None) -> Recording:
    """Read a 16-bit PCM mono WAV file; samples are scaled to [-1, 1)."""
    with wave.open(os.fspath(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ParameterError(f"{path}: only 16-bit PCM is supported")
        if wf.getnchannels() != 1:
            raise ParameterError(f"{path}: only mono audio is supported")
        sr = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    rid = recording_id or os.path.splitext(os.path.basename(path))[0]
    return Recording(rid, samples, sr)


def write_wav(path: str | os.PathLike, rec: Recording) -> None:
    pcm = np.clip(np.round(np.asarray(rec.samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rec.sample_rate_hz)
        wf.writeframes(pcm.tobytes())


def save_features(path: str | os.PathLike, feat: FeatureMatrix) -> None:
    """Write ``feat`` in the binary feature format.

    Layout (little endian): magic ``IBFEAT``, uint16 version, uint32 rows,
    uint32 cols, float64 frame shift, float64 frame length, then
    rows * cols float32 values in row-major order.
    """
    t, d = feat.frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, t, d,
                              feat.frame_shift_s, feat.frame_length_s))
        fh.write(feat.frames.astype("<f4").tobytes())


def _validated(values: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FeatureFileError(f"non-finite value at ({r},{c})")
    return values


def load_features(path: str | os.PathLike) -> FeatureMatrix:
    """Load a feature file (binary format, or CSV when the suffix is .csv)."""
    if os.fspath(path).endswith(".csv"):
        return load_features_csv(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob:
        raise FeatureFileError("empty feature file")
    if len(blob) < _HEADER.size:
        raise FeatureFileError("malformed header")
    magic, version, t, d, shift, length = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC or version != FEATURE_VERSION:
        raise FeatureFileError("malformed header")
    body = blob[_HEADER.size:]
    if t < 1 or d < 1 or len(body) != 4 * t * d:
        raise FeatureFileError(
            f"dimension mismatch: header declares {t}x{d}, payload has {len(body) // 4} values")
    if not shift > 0:
        raise FeatureFileError("malformed header: frame shift must be positive")
    values = np.frombuffer(body, dtype="<f4").reshape(t, d).astype(np.float64)
    return FeatureMatrix(_validated(values), frame_shift_s=shift,
                         frame_length_s=length)


def load_features_csv(path, frame_shift_s=0.010, frame_length_s=0.025) -> FeatureMatrix:
    """Import comma-separated rows of floats (one frame per line, '#' comments)."""
    with open(path) as fh:
        text = fh.read()
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise FeatureFileError("empty feature file")
    try:
        values = [[float(v) for v in ln.split(",")] for ln in rows]
    except ValueError as exc:
        raise FeatureFileError(f"malformed CSV: {exc}") from None
    if len({len(r) for r in values}) != 1:
        raise FeatureFileError("dimension mismatch: ragged CSV rows")
    return FeatureMatrix(_validated(np.array(values)), frame_shift_s, frame_length_s)


def read_speech_mask(path: str | os.PathLike, recording_id: str | None = None) -> SpeechMask:
    """Read a mask from RTTM (union of turns) or a two-column start,end CSV."""
    p = os.fspath(path)
    if p.endswith(".rttm"):
        anns = read_rttm(p)
        if recording_id is not None and recording_id in anns:
            ivs = anns[recording_id].speech_intervals()
        else:
            ivs = merge_intervals(iv for a in anns.values() for iv in a.speech_intervals())
        return SpeechMask(ivs)
    ivs = []
    with open(p) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            s, e = ln.split(",")[:2]
            ivs.append((float(s), float(e)))
    return SpeechMask(merge_intervals(ivs))


def frame_times(num_frames: int, frame_shift_s: float) -> np.ndarray:
    """Centres of the nominal frame intervals ``[i*shift, (i+1)*shift)``."""
    return (np.arange(num_frames) + 0.5) * frame_shift_s


def apply_speech_mask(feat: FeatureMatrix, mask: SpeechMask):
    """Keep frames whose centre falls inside a speech interval.

    Returns the reduced matrix and the index map from retained rows to rows
    of ``feat``.
    """
    centres = frame_times(feat.num_frames, feat.frame_shift_s)
    keep = np.zeros(feat.num_frames, dtype=bool)
    for s, e in mask.intervals:
        keep |= (centres >= s) & (centres < e)
    index = np.flatnonzero(keep)
    if index.size == 0:
        raise ParameterError("no speech frames")
    return replace(feat, frames=feat.frames[index]), index
