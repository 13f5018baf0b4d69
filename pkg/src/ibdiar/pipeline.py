"""End-to-end diarization systems.

``ib``
    MFCC -> uniform segments -> GMM relevance posteriors -> agglomerative IB
    -> KL-HMM realignment.
``tpib``
    ``ib`` first pass, then a freshly initialised network trained on the
    first-pass labels; its whitened latent features get their own GMM, the
    two posterior streams are fused and a second IB pass plus realignment
    produces the output.
``tpib-itl``
    As ``tpib`` but the network is carried across recordings: the first
    recording trains a seed network, every later recording fine-tunes the
    current checkpoint (hidden layers transferred, output layer re-drawn)
    and commits the result.
``tpib-itl-frozen``
    Incremental transfer over a development corpus only; each test
    recording then fine-tunes from the same frozen checkpoint.

All randomness is derived from ``PipelineConfig.seed`` and the recording id,
so results do not depend on processing order except through the transfer
store.
"""

from __future__ import annotations

import logging
import time
import zlib
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from enum import Enum

import numpy as np

from .annotation import DiarizationHypothesis
from .corpus import RecordingInput
from .exceptions import DiarizationError, ParameterError
from .features import MfccConfig, apply_speech_mask, extract_mfcc
from .fusion import StreamWeights, fit_pca_whiten, fuse_posteriors, sweep_weights
from .ib import agglomerate, init_clusters
from .klhmm import RealignConfig, realign_iterate
from .network import NetworkSpec, SgdConfig, TrainBatchSet, fine_tune, forward, train, xavier_init
from .relevance import EmConfig, average_over_segments, fit_gmm, frame_posteriors, uniform_segment
from .scoring import measure_rtf, pooled_error_rates, score
from .transfer import TransferState

log = logging.getLogger(__name__)

STAGES = (
    "feature_extraction",
    "ib_first_pass",
    "realign_first_pass",
    "ann_training",
    "latent_extraction",
    "ib_second_pass",
    "realign_second_pass",
)
# module breakdown reported per system (orthogonalisation is folded into
# latent_extraction and is negligible)
FIGURE_STAGES = ("ib_first_pass", "realign_first_pass", "ann_training", "ib_second_pass",
                 "realign_second_pass")


class System(str, Enum):
    IB = "ib"
    TPIB = "tpib"
    TPIB_ITL = "tpib-itl"
    TPIB_ITL_FROZEN = "tpib-itl-frozen"


# best (spectral, latent) pairs reported for each two-pass system
DEFAULT_WEIGHTS = {
    System.TPIB: StreamWeights(0.8, 0.2),
    System.TPIB_ITL: StreamWeights(0.1, 0.9),
    System.TPIB_ITL_FROZEN: StreamWeights(0.1, 0.9),
}


@dataclass(frozen=True)
class PipelineConfig:
    system: System = System.IB
    nmi_threshold: float = 0.4
    beta: float = 10.0
    seg_len_s: float = 2.5
    max_components: int = 50
    fusion_weights: StreamWeights | None = None
    sweep_step: float | None = None
    collar_s: float = 0.25
    seed: int = 0
    standardize_inputs: bool = True
    boundary_exclusion_s: float = 0.0
    bypass_latent: bool = False
    hidden1: int = 30
    hidden2: int = 16
    mfcc: MfccConfig = MfccConfig()
    em: EmConfig = EmConfig(max_iter=30, tol=1e-5, init="segments")
    realign: RealignConfig = RealignConfig()
    train: SgdConfig = SgdConfig(max_epochs=200)
    finetune: SgdConfig = SgdConfig(max_epochs=50)

    @property
    def weights(self) -> StreamWeights:
        """Fusion weights in force: explicit, else the per-system default."""
        if self.fusion_weights is not None:
            return self.fusion_weights
        return DEFAULT_WEIGHTS.get(self.system, StreamWeights(1.0, 0.0))

    def to_dict(self) -> dict:
        return _plain(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return _from_plain(cls, d)


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    return obj


_NESTED = {"mfcc": MfccConfig, "em": EmConfig, "realign": RealignConfig, "train": SgdConfig,
           "finetune": SgdConfig, "fusion_weights": StreamWeights}


def _from_plain(cls, d):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ParameterError(f"unknown configuration keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        if cls is PipelineConfig and k in _NESTED and isinstance(v, dict):
            sub = _NESTED[k]
            base = getattr(PipelineConfig(), k)
            merged = {**(_plain(base) if base is not None else {}), **v}
            sub_known = {f.name for f in fields(sub)}
            bad = set(merged) - sub_known
            if bad:
                raise ParameterError(f"unknown keys in {k}: {sorted(bad)}")
            kwargs[k] = sub(**merged)
        elif k == "system":
            kwargs[k] = System(v)
        else:
            kwargs[k] = v
    return cls(**kwargs)


@dataclass
class RunEntry:
    recording_id: str
    system: str
    hypothesis: DiarizationHypothesis
    stage_times: dict
    total_time_s: float
    duration_s: float
    n_clusters_first_pass: int = 0
    fallback: bool = False
    ann_epochs: int = 0
    checkpoint_id: str | None = None
    phase: str = "test"
    score: object = None
    hypotheses_by_weight: dict = field(default_factory=dict)
    scores_by_weight: dict = field(default_factory=dict)

    @property
    def rtf(self):
        return measure_rtf(self.stage_times, self.duration_s)

    def to_dict(self) -> dict:
        d = {
            "recording_id": self.recording_id, "system": self.system, "phase": self.phase,
            "duration_s": self.duration_s, "total_time_s": self.total_time_s,
            "stage_times": dict(self.stage_times), "rtf": self.rtf.to_dict(),
            "n_clusters": self.hypothesis.num_speakers,
            "n_clusters_first_pass": self.n_clusters_first_pass,
            "fallback": self.fallback, "ann_epochs": self.ann_epochs,
            "checkpoint_id": self.checkpoint_id,
        }
        if self.score is not None:
            d["score"] = self.score.to_dict()
        if self.scores_by_weight:
            d["ser_by_weight"] = {k: v.ser_pct for k, v in self.scores_by_weight.items()}
        return d


@dataclass
class RunReport:
    system: str
    entries: list = field(default_factory=list)
    state: TransferState | None = None
    failures: list = field(default_factory=list)

    def scored(self, phase: str | None = None):
        return [e for e in self.entries if e.score is not None and (phase is None or e.phase == phase)]

    @property
    def mean_ser_pct(self) -> float | None:
        s = self.scored()
        return float(np.mean([e.score.ser_pct for e in s])) if s else None

    @property
    def pooled_ser_pct(self) -> float | None:
        s = self.scored()
        return pooled_error_rates([e.score for e in s])["ser_pct"] if s else None

    def stage_rtf(self) -> dict:
        """Corpus-level RTF per stage: summed stage time over summed duration."""
        dur = sum(e.duration_s for e in self.entries)
        out = {k: sum(e.stage_times.get(k, 0.0) for e in self.entries) / dur for k in STAGES}
        return out

    @property
    def rtf(self) -> float:
        return sum(e.total_time_s for e in self.entries) / sum(e.duration_s for e in self.entries)

    def mean_stage_time(self, stage: str, skip_first: bool = False) -> float:
        es = self.entries[1:] if skip_first else self.entries
        return float(np.mean([e.stage_times.get(stage, 0.0) for e in es]))

    def to_dict(self) -> dict:
        d = {
            "schema": "ibdiar.run-report/1",
            "system": self.system,
            "failures": [{"recording_id": r, "error": m} for r, m in self.failures],
            "recordings": [e.to_dict() for e in self.entries],
            "aggregate": {
                "rtf": self.rtf, "stage_rtf": self.stage_rtf(),
                "mean_ser_pct": self.mean_ser_pct, "pooled_ser_pct": self.pooled_ser_pct,
                "mean_speaker_count_error": (
                    float(np.mean([e.score.speaker_count_error for e in self.scored()]))
                    if self.scored() else None),
            },
        }
        if self.state is not None:
            d["transfer_history"] = [asdict(h) for h in self.state.history]
        return d


class _Stopwatch:
    def __init__(self):
        self.times = {k: 0.0 for k in STAGES}
        self.t0 = time.perf_counter()
        self.total = None

    @contextmanager
    def stage(self, name):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.times[name] += time.perf_counter() - t

    def stop(self):
        self.total = time.perf_counter() - self.t0
        return self.total


def recording_seed(base: int, recording_id: str, purpose: str) -> int:
    """Stable 32-bit seed for one recording and one use."""
    key = zlib.crc32(f"{recording_id}\0{purpose}".encode())
    return int(np.random.SeedSequence([base, key]).generate_state(1)[0])


@dataclass
class _FirstPass:
    inp: RecordingInput
    frames: np.ndarray
    index: np.ndarray
    frame_shift_s: float
    segments: object
    n_components: int
    p_spec: np.ndarray
    labels: np.ndarray
    hypothesis: DiarizationHypothesis
    n_clusters: int


def _cluster_and_realign(frame_post, segs, cfg: PipelineConfig):
    seg_post = average_over_segments(frame_post, segs)
    state = init_clusters(seg_post, segs.priors, cfg.beta)
    result = agglomerate(state, cfg.nmi_threshold)
    return result, segs.frame_labels(result.labels)


def _first_pass(inp: RecordingInput, cfg: PipelineConfig, sw: _Stopwatch) -> _FirstPass:
    with sw.stage("feature_extraction"):
        feats = inp.features if inp.features is not None else extract_mfcc(inp.recording, cfg.mfcc)
        masked, index = apply_speech_mask(feats, inp.speech_mask())
    with sw.stage("ib_first_pass"):
        segs = uniform_segment(masked, cfg.seg_len_s)
        k = min(segs.n_segments, cfg.max_components)
        em = replace(cfg.em, seed=recording_seed(cfg.seed, inp.id, "gmm"))
        gmm = fit_gmm(masked, k, em, segs).gmm
        p_spec = frame_posteriors(gmm, masked)
        result, seg_frame_labels = _cluster_and_realign(p_spec, segs, cfg)
    with sw.stage("realign_first_pass"):
        labels = realign_iterate(seg_frame_labels, p_spec, cfg.realign).labels
        hyp = DiarizationHypothesis.from_frame_labels(inp.id, labels, index, feats.frame_shift_s)
    return _FirstPass(inp, masked.frames, index, feats.frame_shift_s, segs, k, p_spec, labels, hyp,
                      result.n_clusters)


def _training_set(fp: _FirstPass, cfg: PipelineConfig):
    x = fp.frames
    if cfg.standardize_inputs:
        x = (x - x.mean(axis=0)) / np.maximum(x.std(axis=0), 1e-8)
    ids, y = np.unique(fp.labels, return_inverse=True)
    keep = np.ones(y.size, dtype=bool)
    if cfg.boundary_exclusion_s > 0:
        r = int(round(cfg.boundary_exclusion_s / fp.frame_shift_s))
        for b in np.flatnonzero(np.diff(y) != 0) + 1:
            keep[max(0, b - r):b + r] = False
    return x, TrainBatchSet(x[keep], y[keep], ids.size)


def _latent_posteriors(fp: _FirstPass, ckpt, x, cfg: PipelineConfig) -> np.ndarray:
    latent, _ = forward(ckpt, x)
    whitened = fit_pca_whiten(latent).transform(latent)
    em = replace(cfg.em, seed=recording_seed(cfg.seed, fp.inp.id, "latent-gmm"))
    gmm = fit_gmm(whitened, fp.n_components, em, fp.segments).gmm
    return frame_posteriors(gmm, whitened)


def _second_pass(fp: _FirstPass, p_lat, weights: StreamWeights, cfg: PipelineConfig,
                 sw: _Stopwatch | None = None):
    sw = sw or _Stopwatch()
    with sw.stage("ib_second_pass"):
        fused = fuse_posteriors(fp.p_spec, p_lat, weights)
        _, seg_frame_labels = _cluster_and_realign(fused, fp.segments, cfg)
    with sw.stage("realign_second_pass"):
        labels = realign_iterate(seg_frame_labels, fused, cfg.realign).labels
        return DiarizationHypothesis.from_frame_labels(fp.inp.id, labels, fp.index, fp.frame_shift_s)


def _finish(inp, system, sw, hyp, cfg, **kw) -> RunEntry:
    total = sw.stop()
    entry = RunEntry(inp.id, system, hyp, dict(sw.times), total, inp.duration_s, **kw)
    if inp.reference is not None:
        entry.score = score(hyp, inp.reference, cfg.collar_s)
    return entry


def run_ib(inp: RecordingInput, cfg: PipelineConfig = PipelineConfig()):
    sw = _Stopwatch()
    fp = _first_pass(inp, cfg, sw)
    entry = _finish(inp, System.IB.value, sw, fp.hypothesis, cfg, n_clusters_first_pass=fp.n_clusters)
    return fp.hypothesis, entry


def _two_pass_tail(fp, ckpt, x, cfg, sw, system, **kw):
    """Latent extraction, fusion and second pass, then timing/scoring."""
    if ckpt is None:
        p_lat = fp.p_spec
    else:
        with sw.stage("latent_extraction"):
            p_lat = _latent_posteriors(fp, ckpt, x, cfg)
    hyp = _second_pass(fp, p_lat, cfg.weights, cfg, sw)
    entry = _finish(fp.inp, system, sw, hyp, cfg, n_clusters_first_pass=fp.n_clusters, **kw)
    if cfg.sweep_step:
        for w in sweep_weights(cfg.sweep_step):
            h = hyp if w == cfg.weights else _second_pass(fp, p_lat, w, cfg)
            entry.hypotheses_by_weight[str(w)] = h
            if fp.inp.reference is not None:
                entry.scores_by_weight[str(w)] = score(h, fp.inp.reference, cfg.collar_s)
    return hyp, entry


def _fallback(fp, sw, cfg, system, **kw):
    log.warning("%s: first pass found a single cluster; emitting first-pass output", fp.inp.id)
    entry = _finish(fp.inp, system, sw, fp.hypothesis, cfg, n_clusters_first_pass=fp.n_clusters,
                    fallback=True, **kw)
    if cfg.sweep_step:
        for w in sweep_weights(cfg.sweep_step):
            entry.hypotheses_by_weight[str(w)] = fp.hypothesis
            if entry.score is not None:
                entry.scores_by_weight[str(w)] = entry.score
    return fp.hypothesis, entry


def _net_spec(x, n_classes, cfg):
    return NetworkSpec(x.shape[1], cfg.hidden1, cfg.hidden2, n_classes)


def run_tpib(inp: RecordingInput, cfg: PipelineConfig = PipelineConfig()):
    sw = _Stopwatch()
    fp = _first_pass(inp, cfg, sw)
    if cfg.bypass_latent:
        return _two_pass_tail(fp, None, None, cfg, sw, System.TPIB.value)
    if np.unique(fp.labels).size < 2:
        return _fallback(fp, sw, cfg, System.TPIB.value)
    with sw.stage("ann_training"):
        x, data = _training_set(fp, cfg)
        init = xavier_init(_net_spec(x, data.n_classes, cfg), recording_seed(cfg.seed, inp.id, "xavier"))
        tcfg = replace(cfg.train, seed=recording_seed(cfg.seed, inp.id, "sgd"))
        ckpt, losses = train(init, data, tcfg)
    return _two_pass_tail(fp, ckpt, x, cfg, sw, System.TPIB.value, ann_epochs=len(losses),
                          checkpoint_id=ckpt.id)


def _itl_one(inp, state: TransferState, cfg: PipelineConfig, system: str, phase: str):
    sw = _Stopwatch()
    fp = _first_pass(inp, cfg, sw)
    if np.unique(fp.labels).size < 2:
        return _fallback(fp, sw, cfg, system, phase=phase)
    with sw.stage("ann_training"):
        x, data = _training_set(fp, cfg)
        if state.empty:
            tcfg = replace(cfg.train, seed=recording_seed(cfg.seed, inp.id, "sgd"))
            ckpt, losses = state.bootstrap_seed(
                inp.id, data, tcfg, _net_spec(x, data.n_classes, cfg),
                init_seed=recording_seed(cfg.seed, inp.id, "xavier"))
        else:
            fcfg = replace(cfg.finetune, seed=recording_seed(cfg.seed, inp.id, "sgd"))
            ckpt, losses = fine_tune(state.checkout(), data.n_classes, data, fcfg,
                                     init_seed=recording_seed(cfg.seed, inp.id, "xavier"))
            state.commit(ckpt, inp.id, epochs=len(losses))
    return _two_pass_tail(fp, ckpt, x, cfg, sw, system, ann_epochs=len(losses),
                          checkpoint_id=ckpt.id, phase=phase)


def run_tpib_itl(corpus, state: TransferState | None = None, cfg: PipelineConfig = PipelineConfig(),
                 freeze_after: int | None = None):
    """Process ``corpus`` in order with incremental transfer.

    ``freeze_after=n`` freezes the store once ``n`` recordings have been
    processed.  A recording whose pipeline raises is reported with no
    commit and the batch continues.
    """
    state = TransferState() if state is None else state
    report = RunReport(System.TPIB_ITL.value, state=state)
    hyps = []
    for n, inp in enumerate(corpus):
        if freeze_after is not None and n == freeze_after:
            state.freeze()
        phase = "dev" if freeze_after is not None and n < freeze_after else "test"
        current, n_hist = state.current, len(state.history)
        try:
            hyp, entry = _itl_one(inp, state, cfg, report.system, phase)
        except DiarizationError as exc:
            log.error("%s failed, transfer store left unchanged: %s", inp.id, exc)
            state.current, state.history[:] = current, state.history[:n_hist]
            report.failures.append((inp.id, str(exc)))
            continue
        hyps.append(hyp)
        report.entries.append(entry)
    return hyps, report


def run_tpib_itl_frozen(dev_corpus, test_corpus, cfg: PipelineConfig = PipelineConfig(),
                        state: TransferState | None = None):
    """Incremental transfer over ``dev_corpus``, then frozen fine-tuning per test recording.

    Returns hypotheses for the test recordings; the report holds dev and
    test entries, distinguished by ``phase``.
    """
    dev, test = list(dev_corpus), list(test_corpus)
    if not dev or not test:
        raise ParameterError("frozen mode needs non-empty dev and test corpora")
    hyps, report = run_tpib_itl(dev + test, state, cfg, freeze_after=len(dev))
    report.system = System.TPIB_ITL_FROZEN.value
    for e in report.entries:
        e.system = report.system
    return hyps[len(dev):], report


def run_system(corpus, cfg: PipelineConfig, state: TransferState | None = None, dev_corpus=None):
    """Dispatch a whole corpus to the configured system; returns ``(hypotheses, report)``."""
    recs = list(corpus)
    if cfg.system in (System.IB, System.TPIB):
        fn = run_ib if cfg.system is System.IB else run_tpib
        report = RunReport(cfg.system.value)
        hyps = []
        for inp in recs:
            try:
                hyp, entry = fn(inp, cfg)
            except DiarizationError as exc:
                log.error("%s failed: %s", inp.id, exc)
                report.failures.append((inp.id, str(exc)))
                continue
            hyps.append(hyp)
            report.entries.append(entry)
        return hyps, report
    if cfg.system is System.TPIB_ITL:
        return run_tpib_itl(recs, state, cfg)
    if dev_corpus is None:
        raise ParameterError("frozen mode needs a development corpus")
    return run_tpib_itl_frozen(dev_corpus, recs, cfg, state)
