"""Speaker/diarization error rates and real-time-factor bookkeeping.

Scoring is frame based at 10 ms resolution.  Frames whose centre lies
within ``collar_s`` of any reference turn boundary are not scored.  A frame
with ``n`` reference speakers needs ``n`` correctly mapped hypothesis
speakers; the cluster-to-speaker map is the one-to-one assignment that
maximises scored overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import ParameterError


@dataclass(frozen=True)
class ScoreBreakdown:
    ser_pct: float
    ms_pct: float
    fa_pct: float
    der_pct: float
    speaker_count_error: int
    mapping: dict = field(default_factory=dict)
    scored_s: float = 0.0
    missed_s: float = 0.0
    false_alarm_s: float = 0.0
    confusion_s: float = 0.0

    @property
    def error_s(self) -> float:
        return self.missed_s + self.false_alarm_s + self.confusion_s

    def to_dict(self) -> dict:
        return {
            "ser_pct": self.ser_pct, "ms_pct": self.ms_pct, "fa_pct": self.fa_pct,
            "der_pct": self.der_pct, "speaker_count_error": self.speaker_count_error,
            "mapping": dict(self.mapping), "scored_s": self.scored_s,
            "missed_s": self.missed_s, "false_alarm_s": self.false_alarm_s,
            "confusion_s": self.confusion_s,
        }


def _activity(turns, speakers, n_frames, res):
    col = {s: i for i, s in enumerate(speakers)}
    act = np.zeros((n_frames, len(speakers)), dtype=bool)
    for t in turns:
        # frames whose centre (k + 0.5) * res lies in [start, end)
        lo = max(0, math.ceil(t.start / res - 0.5 - 1e-9))
        hi = min(n_frames, math.ceil(t.end / res - 0.5 - 1e-9))
        act[lo:hi, col[t.speaker]] = True
    return act


def collar_mask(ref_turns, n_frames, res, collar_s) -> np.ndarray:
    """True for frames excluded by the forgiveness collar."""
    excluded = np.zeros(n_frames, dtype=bool)
    if collar_s <= 0:
        return excluded
    centres = (np.arange(n_frames) + 0.5) * res
    for t in ref_turns:
        for b in (t.start, t.end):
            lo = np.searchsorted(centres, b - collar_s, side="right")
            hi = np.searchsorted(centres, b + collar_s, side="left")
            excluded[lo:hi] = True
    return excluded


def score(hyp, ref, collar_s: float = 0.25, resolution_s: float = 0.01) -> ScoreBreakdown:
    if not ref.turns:
        raise ParameterError("empty reference")
    if collar_s < 0:
        raise ParameterError("collar must be non-negative")
    end = max([t.end for t in ref.turns] + [t.end for t in hyp.turns])
    n = int(math.ceil(end / resolution_s - 1e-9)) + 1
    ref_spk = sorted({t.speaker for t in ref.turns})
    hyp_spk = sorted({t.speaker for t in hyp.turns})
    r = _activity(ref.turns, ref_spk, n, resolution_s)
    h = _activity(hyp.turns, hyp_spk, n, resolution_s)
    keep = ~collar_mask(ref.turns, n, resolution_s, collar_s)
    r, h = r[keep], h[keep]
    n_ref = r.sum(axis=1)
    n_hyp = h.sum(axis=1)
    total = int(n_ref.sum())
    if total == 0:
        raise ParameterError("no scorable reference speech outside the collar")

    overlap = r.T.astype(np.int64) @ h.astype(np.int64)
    mapping = {}
    correct = 0
    if hyp_spk:
        rows, cols = linear_sum_assignment(-overlap)
        for ri, ci in zip(rows, cols):
            if overlap[ri, ci] > 0:
                mapping[hyp_spk[ci]] = ref_spk[ri]
                correct += int(overlap[ri, ci])
    missed = int(np.maximum(n_ref - n_hyp, 0).sum())
    fa = int(np.maximum(n_hyp - n_ref, 0).sum())
    conf = int(np.minimum(n_ref, n_hyp).sum()) - correct

    ms_pct = 100.0 * missed / total
    fa_pct = 100.0 * fa / total
    ser_pct = 100.0 * conf / total
    return ScoreBreakdown(
        ser_pct=ser_pct, ms_pct=ms_pct, fa_pct=fa_pct, der_pct=ms_pct + fa_pct + ser_pct,
        speaker_count_error=abs(len(hyp_spk) - len(ref_spk)), mapping=mapping,
        scored_s=total * resolution_s, missed_s=missed * resolution_s,
        false_alarm_s=fa * resolution_s, confusion_s=conf * resolution_s,
    )


def speaker_count_error(hyp, ref) -> int:
    return abs(len({t.speaker for t in hyp.turns}) - len({t.speaker for t in ref.turns}))


def pooled_error_rates(scores) -> dict:
    """Time-weighted SER/DER over several scored recordings."""
    scored = sum(s.scored_s for s in scores)
    if scored <= 0:
        raise ParameterError("nothing scored")
    ms = 100.0 * sum(s.missed_s for s in scores) / scored
    fa = 100.0 * sum(s.false_alarm_s for s in scores) / scored
    ser = 100.0 * sum(s.confusion_s for s in scores) / scored
    return {"ser_pct": ser, "ms_pct": ms, "fa_pct": fa, "der_pct": ms + fa + ser}


@dataclass(frozen=True)
class RtfBreakdown:
    stages: dict
    total: float
    duration_s: float

    def to_dict(self) -> dict:
        return {"stages": dict(self.stages), "total": self.total, "duration_s": self.duration_s}


def measure_rtf(stage_times: dict, duration_s: float) -> RtfBreakdown:
    """Real-time factor per stage and in total (processing time / audio duration)."""
    if duration_s <= 0:
        raise ParameterError("duration must be positive")
    stages = {k: v / duration_s for k, v in stage_times.items()}
    return RtfBreakdown(stages, sum(stage_times.values()) / duration_s, duration_s)


def summarize_runs(runs) -> dict:
    """Mean and standard deviation of RTFs over repeated runs of one system.

    Returns ``{"total": {"mean", "std"}, "stages": {name: {"mean", "std"}}}``.
    """
    runs = list(runs)
    if not runs:
        raise ParameterError("no runs to summarise")
    totals = np.array([r.total for r in runs])
    names = sorted({k for r in runs for k in r.stages})
    stages = {}
    for k in names:
        vals = np.array([r.stages.get(k, 0.0) for r in runs])
        stages[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return {"total": {"mean": float(totals.mean()), "std": float(totals.std())},
            "stages": stages, "runs": len(runs)}


def relative_improvement(baseline_rtf: float, new_rtf: float) -> float:
    """Relative RTF reduction in percent, e.g. 0.257 -> 0.172 gives 33.07."""
    if baseline_rtf <= 0:
        raise ParameterError("baseline RTF must be positive")
    return 100.0 * (baseline_rtf - new_rtf) / baseline_rtf
