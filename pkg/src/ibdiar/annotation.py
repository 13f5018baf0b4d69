"""Time-interval annotations and RTTM input/output.

Both hypotheses and references are lists of :class:`Turn` objects on a
common timeline measured in seconds.  RTTM files use the standard 9+ field
``SPEAKER`` layout::

    SPEAKER <file> <chan> <start> <dur> <NA> <NA> <speaker> <NA> <NA>
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ParameterError


@dataclass(frozen=True, order=True)
class Turn:
    start: float
    end: float
    speaker: str

    def __post_init__(self):
        if not self.start < self.end:
            raise ParameterError(f"turn start {self.start} must precede end {self.end}")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class DiarizationHypothesis:
    """Ordered, labeled time intervals covering the speech of one recording."""

    recording_id: str
    turns: list[Turn] = field(default_factory=list)

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker for t in self.turns})

    @property
    def num_speakers(self) -> int:
        return len(self.speakers)

    @classmethod
    def from_frame_labels(cls, recording_id, labels, frame_index, frame_shift_s,
                          prefix="spk"):
        """Collapse per-frame labels into turns on the original timeline.

        ``frame_index[k]`` is the position of retained frame ``k`` in the
        unmasked feature matrix; frame ``i`` spans
        ``[i * shift, (i + 1) * shift)``.  Runs are broken both at label
        changes and at gaps in ``frame_index``.
        """
        labels = np.asarray(labels)
        frame_index = np.asarray(frame_index)
        if labels.shape != frame_index.shape:
            raise ParameterError("labels and frame index differ in length")
        turns = []
        if labels.size == 0:
            return cls(recording_id, turns)
        brk = np.flatnonzero((np.diff(labels) != 0) | (np.diff(frame_index) != 1)) + 1
        starts = np.concatenate([[0], brk])
        ends = np.concatenate([brk, [labels.size]])
        for a, b in zip(starts, ends):
            turns.append(Turn(round(float(frame_index[a] * frame_shift_s), 6),
                              round(float((frame_index[b - 1] + 1) * frame_shift_s), 6),
                              f"{prefix}{int(labels[a])}"))
        return cls(recording_id, turns)


@dataclass
class ReferenceAnnotation:
    """Ground-truth speaker turns; turns of different speakers may overlap."""

    recording_id: str
    turns: list[Turn] = field(default_factory=list)

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker for t in self.turns})

    def speech_intervals(self) -> list[tuple[float, float]]:
        """Union of all turns as sorted, non-overlapping intervals."""
        return merge_intervals((t.start, t.end) for t in self.turns)


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def read_rttm(path: str | os.PathLike) -> dict[str, ReferenceAnnotation]:
    """Parse an RTTM file into one annotation per file id."""
    out: dict[str, ReferenceAnnotation] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if fields[0] != "SPEAKER":
                continue
            if len(fields) < 8:
                raise ParameterError(f"{path}:{lineno}: malformed RTTM line")
            rec, start, dur, spk = fields[1], float(fields[3]), float(fields[4]), fields[7]
            if dur <= 0:
                continue
            out.setdefault(rec, ReferenceAnnotation(rec)).turns.append(
                Turn(start, start + dur, spk))
    for ann in out.values():
        ann.turns.sort()
    return out


def format_rttm(recording_id: str, turns: Sequence[Turn]) -> str:
    lines = [
        f"SPEAKER {recording_id} 1 {t.start:.3f} {t.duration:.3f} <NA> <NA> {t.speaker} <NA> <NA>\n"
        for t in turns
    ]
    return "".join(lines)


def write_rttm(path: str | os.PathLike, annotations) -> None:
    """Write one or several hypotheses/references to an RTTM file."""
    if isinstance(annotations, (DiarizationHypothesis, ReferenceAnnotation)):
        annotations = [annotations]
    with open(path, "w") as fh:
        for ann in annotations:
            fh.write(format_rttm(ann.recording_id, ann.turns))
