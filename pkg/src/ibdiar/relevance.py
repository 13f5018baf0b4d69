"""Relevance-variable model: a diagonal GMM fitted per recording.

The GMM components play the role of the relevance variables Y for IB
clustering.  Segment and frame posteriors over these components are the
inputs to clustering and realignment.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import container
from .exceptions import ParameterError
from .features import FeatureMatrix

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Gmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if w.ndim != 1 or m.shape != v.shape or m.shape[0] != w.size:
            raise ParameterError("inconsistent GMM parameter shapes")
        if np.any(v <= 0):
            raise ParameterError("GMM variances must be positive")
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ParameterError("GMM weights must lie on the simplex")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_likelihood(self, x: np.ndarray) -> np.ndarray:
        """log w_k + log N(x_t; mu_k, diag var_k), shape (T, K)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ParameterError(f"expected frames of dimension {self.dim}, got shape {x.shape}")
        prec = 1.0 / self.variances
        quad = (x * x) @ prec.T - 2.0 * x @ (self.means * prec).T
        quad += np.sum(self.means ** 2 * prec, axis=1)
        log_norm = -0.5 * (self.dim * _LOG_2PI + np.sum(np.log(self.variances), axis=1))
        return np.log(self.weights) + log_norm - 0.5 * quad

    def save(self, path: str | os.PathLike) -> None:
        arrays = {"weights": self.weights, "means": self.means, "variances": self.variances}
        with open(path, "wb") as fh:
            fh.write(container.dumps(b"GMM ", arrays, {"K": self.n_components, "D": self.dim}))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Gmm":
        with open(path, "rb") as fh:
            arrays, _ = container.loads(fh.read(), b"GMM ")
        return cls(arrays["weights"], arrays["means"], arrays["variances"])


@dataclass(frozen=True)
class SegmentSet:
    """Contiguous segments ``[start, end)`` over masked frames, with priors p(x)."""

    bounds: np.ndarray
    priors: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.bounds)

    def frame_labels(self, seg_labels) -> np.ndarray:
        """Expand one label per segment to one label per frame."""
        seg_labels = np.asarray(seg_labels)
        lengths = self.bounds[:, 1] - self.bounds[:, 0]
        return np.repeat(seg_labels, lengths)

    def groups(self, n_groups: int) -> list[np.ndarray]:
        """Split segment indices into ``n_groups`` contiguous, near-equal groups."""
        return np.array_split(np.arange(self.n_segments), n_groups)


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 100
    tol: float = 1e-6
    var_floor: float = 1e-4
    weight_floor: float = 1e-6
    seed: int = 0
    init: str = "kmeans++"


@dataclass
class GmmFit:
    gmm: Gmm
    log_likelihood: list = field(default_factory=list)
    n_iter: int = 0
    reseeded: int = 0


def uniform_segment(feat: FeatureMatrix, seg_len_s: float = 2.5) -> SegmentSet:
    """Cut the (masked) frame sequence into uniform segments.

    A trailing remainder shorter than half a segment is merged into the last
    full segment.
    """
    if seg_len_s <= 0:
        raise ParameterError("segment length must be positive")
    n = feat.num_frames
    seg = max(1, int(round(seg_len_s / feat.frame_shift_s)))
    starts = list(range(0, n, seg))
    if len(starts) > 1 and n - starts[-1] < seg / 2:
        starts.pop()
    ends = starts[1:] + [n]
    if len(starts) < 2:
        raise ParameterError("too few segments to cluster")
    bounds = np.column_stack([starts, ends]).astype(np.int64)
    lengths = (bounds[:, 1] - bounds[:, 0]).astype(np.float64)
    return SegmentSet(bounds, lengths / lengths.sum())


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centres = [x[rng.integers(x.shape[0])]]
    d2 = np.sum((x - centres[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(x.shape[0], p=d2 / total)
        else:
            idx = rng.integers(x.shape[0])
        centres.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centres)


def _segment_init(x, k, segments, var_floor):
    means, variances = [], []
    for grp in segments.groups(k):
        lo, hi = segments.bounds[grp[0], 0], segments.bounds[grp[-1], 1]
        chunk = x[lo:hi]
        means.append(chunk.mean(axis=0))
        variances.append(np.maximum(chunk.var(axis=0), var_floor))
    return np.array(means), np.array(variances)


def fit_gmm(feat: FeatureMatrix | np.ndarray, n_components: int, cfg: EmConfig = EmConfig(),
            segments: SegmentSet | None = None) -> GmmFit:
    """Fit a diagonal-covariance GMM by EM.

    With ``cfg.init == "segments"`` component ``k`` is initialised from a
    contiguous group of segments (one segment per component when
    ``n_components`` equals the segment count).  This ties component indices
    to time positions, so two GMMs fitted on parallel streams with this
    initialisation share the meaning of their component indices.
    """
    x = feat.frames if isinstance(feat, FeatureMatrix) else np.asarray(feat, dtype=np.float64)
    t, d = x.shape
    k = int(n_components)
    if k < 1:
        raise ParameterError("need at least one component")
    if k > t:
        raise ParameterError(f"more components ({k}) than frames ({t})")
    rng = np.random.default_rng(cfg.seed)
    global_var = np.maximum(x.var(axis=0), cfg.var_floor)

    if k == 1:
        gmm = Gmm(np.ones(1), x.mean(axis=0, keepdims=True), global_var[None, :])
        ll = float(np.mean(logsumexp(gmm.component_log_likelihood(x), axis=1)))
        return GmmFit(gmm, [ll], 0)

    if cfg.init == "segments":
        if segments is None or segments.n_segments < k:
            raise ParameterError("segment initialisation needs at least K segments")
        means, variances = _segment_init(x, k, segments, cfg.var_floor)
    elif cfg.init == "kmeans++":
        means = _kmeanspp(x, k, rng)
        variances = np.tile(global_var, (k, 1))
    else:
        raise ParameterError(f"unknown init {cfg.init!r}")
    weights = np.full(k, 1.0 / k)

    history: list[float] = []
    reseeded = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        lik = Gmm(weights, means, variances).component_log_likelihood(x)
        frame_ll = logsumexp(lik, axis=1)
        history.append(float(np.mean(frame_ll)))
        if len(history) > 1 and abs(history[-1] - history[-2]) < cfg.tol:
            break
        resp = np.exp(lik - frame_ll[:, None])
        nk = resp.sum(axis=0)
        dead = nk / t < cfg.weight_floor
        if dead.any():
            # steal the worst-explained frames for starved components
            worst = np.argsort(frame_ll)[: int(dead.sum())]
            for comp, frame in zip(np.flatnonzero(dead), worst):
                log.info("re-seeding GMM component %d at frame %d", comp, frame)
                resp[:, comp] = 0.0
                resp[frame, :] = 0.0
                resp[frame, comp] = 1.0
            reseeded += int(dead.sum())
            nk = resp.sum(axis=0)
        weights = nk / t
        weights /= weights.sum()
        means = (resp.T @ x) / nk[:, None]
        variances = np.maximum((resp.T @ (x * x)) / nk[:, None] - means ** 2, cfg.var_floor)
    gmm = Gmm(weights, means, variances)
    return GmmFit(gmm, history, it, reseeded)


def frame_posteriors(gmm: Gmm, feat: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Per-frame component posteriors p(y | f_t), shape (T, K)."""
    x = feat.frames if isinstance(feat, FeatureMatrix) else feat
    lik = gmm.component_log_likelihood(x)
    return np.exp(lik - logsumexp(lik, axis=1, keepdims=True))


def average_over_segments(frame_post: np.ndarray, segs: SegmentSet) -> np.ndarray:
    """Row i = normalised mean of the frame posteriors inside segment i."""
    rows = np.array([frame_post[a:b].mean(axis=0) for a, b in segs.bounds])
    return rows / rows.sum(axis=1, keepdims=True)


def segment_posteriors(gmm: Gmm, feat: FeatureMatrix, segs: SegmentSet) -> np.ndarray:
    if segs.bounds[-1, 1] > feat.num_frames:
        raise ParameterError("segments extend past the feature matrix")
    return average_over_segments(frame_posteriors(gmm, feat), segs)
