import json

import numpy as np
import pytest

from ibdiar.annotation import (
    DiarizationHypothesis,
    ReferenceAnnotation,
    Turn,
    merge_intervals,
    read_rttm,
    write_rttm,
)
from ibdiar.corpus import Corpus, RecordingInput, read_manifest
from ibdiar.exceptions import ParameterError
from ibdiar.features import FeatureMatrix, save_features


def test_turn_validation():
    with pytest.raises(ParameterError):
        Turn(1.0, 1.0, "A")


def test_frame_labels_to_turns():
    labels = np.array([0, 0, 1, 1, 1, 0])
    index = np.array([0, 1, 2, 3, 10, 11])
    hyp = DiarizationHypothesis.from_frame_labels("r", labels, index, 0.01)
    assert [(t.start, t.end, t.speaker) for t in hyp.turns] == [
        (0.0, 0.02, "spk0"), (0.02, 0.04, "spk1"), (0.1, 0.11, "spk1"), (0.11, 0.12, "spk0")]
    assert hyp.num_speakers == 2


def test_rttm_roundtrip(tmp_path):
    ref = ReferenceAnnotation("meet", [Turn(0.0, 1.5, "A"), Turn(1.2, 3.0, "B")])
    hyp = DiarizationHypothesis("other", [Turn(0.5, 0.75, "x")])
    write_rttm(tmp_path / "a.rttm", [ref, hyp])
    back = read_rttm(tmp_path / "a.rttm")
    assert set(back) == {"meet", "other"}
    assert back["meet"].turns == ref.turns
    line = (tmp_path / "a.rttm").read_text().splitlines()[0]
    assert line == "SPEAKER meet 1 0.000 1.500 <NA> <NA> A <NA> <NA>"


def test_rttm_malformed(tmp_path):
    (tmp_path / "b.rttm").write_text("SPEAKER x 1 0.0\n")
    with pytest.raises(ParameterError):
        read_rttm(tmp_path / "b.rttm")


def test_merge_intervals():
    assert merge_intervals([(3, 4), (0, 1), (0.5, 2), (2, 2.5)]) == [(0, 2.5), (3, 4)]


def test_speech_mask_fallbacks():
    feats = FeatureMatrix(np.zeros((300, 2)))
    assert RecordingInput("a", features=feats).speech_mask().intervals == [(0.0, 3.0)]
    ref = ReferenceAnnotation("a", [Turn(0.5, 1.0, "A"), Turn(0.8, 2.0, "B")])
    assert RecordingInput("a", features=feats, reference=ref).speech_mask().intervals == [(0.5, 2.0)]
    with pytest.raises(ParameterError):
        RecordingInput("a")


def test_corpus_ordering():
    feats = FeatureMatrix(np.zeros((10, 2)))
    c = Corpus("c", [RecordingInput(i, features=feats) for i in ("b", "a", "c")])
    assert [r.id for r in c.ordered()] == ["b", "a", "c"]
    assert [r.id for r in c.ordered("sorted")] == ["a", "b", "c"]
    a, b = c.ordered("shuffle:4"), c.ordered("shuffle:4")
    assert [r.id for r in a] == [r.id for r in b]
    assert sorted(r.id for r in a) == ["a", "b", "c"]
    with pytest.raises(ParameterError):
        c.ordered("random")


def test_manifest_formats(tmp_path):
    save_features(tmp_path / "x.feat", FeatureMatrix(np.ones((50, 3))))
    write_rttm(tmp_path / "x.rttm", ReferenceAnnotation("x", [Turn(0, 0.5, "A")]))
    (tmp_path / "m.json").write_text(json.dumps({
        "schema": "ibdiar.manifest/1", "dataset": "d",
        "recordings": [{"id": "x", "features": "x.feat", "reference": "x.rttm"}]}))
    c = read_manifest(tmp_path / "m.json")
    assert c.name == "d" and c.recordings[0].reference.turns == [Turn(0, 0.5, "A")]
    (tmp_path / "m.txt").write_text("# comment\nx x.feat\n")
    c2 = read_manifest(tmp_path / "m.txt")
    assert c2.recordings[0].features.num_frames == 50
    (tmp_path / "e.txt").write_text("\n")
    with pytest.raises(ParameterError):
        read_manifest(tmp_path / "e.txt")
