"""Recording bundles and corpus manifests.

A manifest is JSON::

    {"schema": "ibdiar.manifest/1", "dataset": "<name>",
     "recordings": [{"id": "...", "audio": "a.wav" | "features": "a.feat",
                     "reference": "a.rttm", "mask": "a_mask.csv"}, ...]}

or line-oriented text with ``<id> <audio-or-feature-path> [<rttm>]`` per
line.  Relative paths resolve against the manifest's directory.  Without a
mask the speech regions are taken from the reference, and without either
the whole recording is treated as speech.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .annotation import ReferenceAnnotation, read_rttm
from .exceptions import ParameterError
from .features import FeatureMatrix, Recording, SpeechMask, load_features, read_speech_mask, read_wav

MANIFEST_SCHEMA = "ibdiar.manifest/1"


@dataclass
class RecordingInput:
    id: str
    features: FeatureMatrix | None = None
    recording: Recording | None = None
    mask: SpeechMask | None = None
    reference: ReferenceAnnotation | None = None

    def __post_init__(self):
        if self.features is None and self.recording is None:
            raise ParameterError(f"{self.id}: need audio or features")

    @property
    def duration_s(self) -> float:
        if self.recording is not None:
            return self.recording.duration_s
        return self.features.duration_s

    def speech_mask(self) -> SpeechMask:
        if self.mask is not None:
            return self.mask
        if self.reference is not None:
            return SpeechMask.from_reference(self.reference)
        return SpeechMask.full(self.duration_s)


@dataclass
class Corpus:
    name: str
    recordings: list

    def __iter__(self):
        return iter(self.recordings)

    def __len__(self):
        return len(self.recordings)

    def ordered(self, order: str = "listed"):
        """Recordings in processing order: ``listed``, ``sorted`` or ``shuffle:<seed>``."""
        recs = list(self.recordings)
        if order == "listed":
            return recs
        if order == "sorted":
            return sorted(recs, key=lambda r: r.id)
        if order.startswith("shuffle:"):
            try:
                seed = int(order.split(":", 1)[1])
            except ValueError:
                raise ParameterError(f"bad order spec {order!r}") from None
            perm = np.random.default_rng(seed).permutation(len(recs))
            return [recs[i] for i in perm]
        raise ParameterError(f"bad order spec {order!r}")


def load_input(rec_id, path, reference=None, mask=None) -> RecordingInput:
    """Load one recording from a WAV or feature file, plus optional RTTM/mask."""
    feats = rec = None
    if str(path).lower().endswith(".wav"):
        rec = read_wav(path, rec_id)
    else:
        feats = load_features(path)
    ref = None
    if reference:
        anns = read_rttm(reference)
        ref = anns.get(rec_id) or (next(iter(anns.values())) if len(anns) == 1 else None)
        if ref is None:
            raise ParameterError(f"{reference}: no turns for recording {rec_id}")
        ref = ReferenceAnnotation(rec_id, ref.turns)
    m = read_speech_mask(mask, rec_id) if mask else None
    return RecordingInput(rec_id, features=feats, recording=rec, mask=m, reference=ref)


def read_manifest(path: str | os.PathLike) -> Corpus:
    base = os.path.dirname(os.path.abspath(path))

    def res(p):
        return None if p is None else (p if os.path.isabs(p) else os.path.join(base, p))

    with open(path) as fh:
        text = fh.read()
    entries = []
    name = os.path.splitext(os.path.basename(path))[0]
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        if doc.get("schema", MANIFEST_SCHEMA) != MANIFEST_SCHEMA:
            raise ParameterError(f"unsupported manifest schema {doc.get('schema')!r}")
        name = doc.get("dataset", name)
        for item in doc["recordings"]:
            src = item.get("audio") or item.get("features")
            if src is None:
                raise ParameterError(f"manifest entry {item.get('id')!r} lacks audio/features")
            entries.append((item["id"], res(src), res(item.get("reference")), res(item.get("mask"))))
    else:
        for ln in text.splitlines():
            parts = ln.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) < 2:
                raise ParameterError(f"manifest line needs id and path: {ln!r}")
            entries.append((parts[0], res(parts[1]), res(parts[2]) if len(parts) > 2 else None, None))
    if not entries:
        raise ParameterError("manifest lists no recordings")
    return Corpus(name, [load_input(*e) for e in entries])


def write_manifest(path, dataset, entries) -> None:
    """``entries``: dicts with id, audio|features, reference (paths as given)."""
    with open(path, "w") as fh:
        json.dump({"schema": MANIFEST_SCHEMA, "dataset": dataset, "recordings": list(entries)}, fh, indent=2)
