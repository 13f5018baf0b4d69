"""Synthetic multi-speaker recordings with exact diarization truth.

Two fidelity levels are available:

``features``
    Frames are drawn directly in a 19-dimensional feature space.  Speech is
    a sequence of short sub-states ("phones") drawn from an inventory
    shared by all speakers; a speaker adds its own offset to every phone.
    Frame noise follows an AR(1) process so that neighbouring frames are
    correlated.  The shared phone structure gives segments within-speaker
    variability, as real speech has.
``audio``
    16 kHz audio of noise-excited resonators.  Each speaker has its own
    set of formant frequencies, so the MFCC front end must recover the
    speaker identity.

``separation`` scales how far apart the speakers are; 0 makes every speaker
identically distributed.  Feature-level speaker means are equidistant, so
no pair of speakers is accidentally closer than the rest.  ``phone_spread`` scales the phone inventory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .annotation import ReferenceAnnotation, Turn, write_rttm
from .corpus import Corpus, RecordingInput, write_manifest
from .exceptions import ParameterError
from .features import FeatureKind, FeatureMatrix, Recording, SpeechMask, save_features, write_wav


@dataclass(frozen=True)
class SynthSpec:
    num_speakers: int = 2
    total_duration_s: float = 60.0
    turn_min_s: float = 4.0
    turn_max_s: float = 12.0
    silence_prob: float = 0.2
    silence_min_s: float = 0.3
    silence_max_s: float = 1.0
    separation: float = 6.0
    n_phones: int = 12
    phone_spread: float = 3.0
    phone_dwell_s: tuple = (0.2, 1.0)
    kind: str = "features"
    dim: int = 19
    temporal_corr: float = 0.5
    frame_shift_s: float = 0.010
    sample_rate_hz: int = 16000
    rng_seed: int = 0
    recording_id: str = "synth"

    def __post_init__(self):
        if self.num_speakers < 1:
            raise ParameterError("need at least one speaker")
        if self.total_duration_s <= 0 or self.turn_min_s <= 0 or self.turn_max_s < self.turn_min_s:
            raise ParameterError("durations must be positive and turn_min <= turn_max")
        if self.kind not in ("features", "audio"):
            raise ParameterError(f"unknown synthetic kind {self.kind!r}")
        if self.separation < 0 or self.phone_spread < 0:
            raise ParameterError("separation and phone spread must be non-negative")
        if self.n_phones < 1:
            raise ParameterError("need at least one phone")
        lo, hi = self.phone_dwell_s
        if not 0 < lo <= hi:
            raise ParameterError("phone dwell range must satisfy 0 < min <= max")


def _schedule(spec: SynthSpec, rng: np.random.Generator):
    """Speaker turns in whole frames: list of (start_frame, end_frame, speaker)."""
    shift = spec.frame_shift_s
    total = int(round(spec.total_duration_s / shift))
    tmin = max(1, int(round(spec.turn_min_s / shift)))
    tmax = max(tmin, int(round(spec.turn_max_s / shift)))
    if spec.num_speakers == 1:
        # no turn-taking: one speaker talks throughout
        return total, [(0, total, 0)]
    order = list(rng.permutation(spec.num_speakers))
    turns, t, prev = [], 0, None
    while t < total:
        if turns and rng.random() < spec.silence_prob:
            t += int(round(rng.uniform(spec.silence_min_s, spec.silence_max_s) / shift))
            if t >= total:
                break
        if order:
            spk = int(order.pop(0))
        else:
            choices = [s for s in range(spec.num_speakers) if s != prev]
            spk = int(rng.choice(choices))
        n = int(rng.integers(tmin, tmax + 1))
        end = min(total, t + n)
        if turns and end - t < tmin // 2 and turns[-1][1] == t and turns[-1][2] == spk:
            turns[-1] = (turns[-1][0], end, spk)
        else:
            turns.append((t, end, spk))
        prev, t = spk, end
    # a short tail is folded into the previous turn when contiguous
    if len(turns) > 1 and turns[-1][1] - turns[-1][0] < tmin // 2 and turns[-2][1] == turns[-1][0]:
        s, e, _ = turns.pop()
        turns[-1] = (turns[-1][0], e, turns[-1][2])
    return total, turns


def _ar_noise(rng, n, dim, rho):
    """Unit-variance stationary AR(1) noise, shape (n, dim)."""
    eps = rng.standard_normal((n, dim))
    if rho == 0:
        return eps
    scale = np.sqrt(1.0 - rho * rho)
    zi = ((1.0 - scale) * eps[0])[None, :]
    return lfilter([scale], [1.0, -rho], eps, axis=0, zi=zi)[0]


def _speaker_means(rng, n, d, separation):
    """Vertices of a randomly rotated regular simplex, pairwise distance ``separation * sqrt(2)``.

    More speakers than dimensions fall back to independent Gaussian means
    with the same expected pairwise distance.
    """
    if n > d:
        return rng.standard_normal((n, d)) * separation / np.sqrt(d)
    q, _ = np.linalg.qr(rng.standard_normal((d, n)))
    return (np.eye(n) - 1.0 / n) @ q.T * separation


def _feature_frames(spec, rng, total, turns):
    d = spec.dim
    means = _speaker_means(rng, spec.num_speakers, d, spec.separation)
    phones = rng.standard_normal((spec.n_phones, d)) * spec.phone_spread / np.sqrt(d)
    frames = 0.3 * rng.standard_normal((total, d)) - 3.0
    noise = _ar_noise(rng, total, d, spec.temporal_corr)
    lo, hi = spec.phone_dwell_s
    for a, b, s in turns:
        t = a
        while t < b:
            m = rng.integers(spec.n_phones)
            end = min(b, t + max(1, int(rng.uniform(lo, hi) / spec.frame_shift_s)))
            frames[t:end] = phones[m] + means[s] + noise[t:end]
            t = end
    return FeatureMatrix(frames, spec.frame_shift_s, 0.025, FeatureKind.MFCC)


def _resonator(freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    return [1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r]


def _audio_samples(spec, rng, turns):
    sr = spec.sample_rate_hz
    spf = int(round(spec.frame_shift_s * sr))
    n_samples = int(round(spec.total_duration_s * sr))
    base = np.array([500.0, 1500.0, 2500.0])
    offsets = rng.uniform(-1.0, 1.0, size=(spec.num_speakers, 3)) * 120.0 * spec.separation
    formants = np.clip(base + offsets, 150.0, 0.45 * sr)
    gains = rng.uniform(0.6, 1.0, size=(spec.num_speakers, 3))
    out = 1e-4 * rng.standard_normal(n_samples)
    for a, b, s in turns:
        lo, hi = a * spf, min(n_samples, b * spf)
        exc = rng.standard_normal(hi - lo)
        sig = np.zeros(hi - lo)
        for f, g in zip(formants[s], gains[s]):
            num, den = _resonator(f, 80.0, sr)
            sig += g * lfilter(num, den, exc)
        out[lo:hi] = 0.2 * sig / (np.std(sig) + 1e-12)
    return Recording(spec.recording_id, np.clip(out, -0.99, 0.99), sr)


def generate(spec: SynthSpec) -> RecordingInput:
    """Sample one recording; its reference and speech mask match the generation exactly."""
    rng = np.random.default_rng(spec.rng_seed)
    total, turns = _schedule(spec, rng)
    shift = spec.frame_shift_s
    ref = ReferenceAnnotation(spec.recording_id, [
        Turn(round(a * shift, 6), round(b * shift, 6), f"S{s}") for a, b, s in turns])
    mask = SpeechMask(ref.speech_intervals())
    if spec.kind == "features":
        feats = _feature_frames(spec, rng, total, turns)
        return RecordingInput(spec.recording_id, features=feats, mask=mask, reference=ref)
    rec = _audio_samples(spec, rng, turns)
    return RecordingInput(spec.recording_id, recording=rec, mask=mask, reference=ref)


def well_separated(**overrides) -> SynthSpec:
    """Spec with little within-speaker variability relative to speaker contrast."""
    return SynthSpec(**{"phone_spread": 2.0, "n_phones": 6, **overrides})


def make_corpus(n_recordings: int, base: SynthSpec = SynthSpec(), name: str = "synth",
                speaker_range: tuple[int, int] | None = None, seed: int = 0) -> Corpus:
    """Independent recordings ``<name>-000``, ``<name>-001`` ... with distinct seeds.

    ``speaker_range`` draws each recording's speaker count uniformly from the
    inclusive range; otherwise every recording uses ``base.num_speakers``.
    """
    rng = np.random.default_rng(seed)
    recs = []
    for k in range(n_recordings):
        n_spk = base.num_speakers if speaker_range is None else int(
            rng.integers(speaker_range[0], speaker_range[1] + 1))
        spec = replace(base, num_speakers=n_spk, rng_seed=int(rng.integers(2**31)),
                       recording_id=f"{name}-{k:03d}")
        recs.append(generate(spec))
    return Corpus(name, recs)


def write_corpus(directory: str | os.PathLike, corpus: Corpus) -> str:
    """Write WAV or feature files, RTTMs and a JSON manifest; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for rec in corpus:
        item = {"id": rec.id}
        if rec.recording is not None:
            write_wav(os.path.join(directory, f"{rec.id}.wav"), rec.recording)
            item["audio"] = f"{rec.id}.wav"
        else:
            save_features(os.path.join(directory, f"{rec.id}.feat"), rec.features)
            item["features"] = f"{rec.id}.feat"
        if rec.reference is not None:
            write_rttm(os.path.join(directory, f"{rec.id}.rttm"), rec.reference)
            item["reference"] = f"{rec.id}.rttm"
        entries.append(item)
    path = os.path.join(directory, "manifest.json")
    write_manifest(path, corpus.name, entries)
    return path
