"""KL-HMM realignment of cluster boundaries at frame level.

Each cluster becomes an HMM state holding a multinomial ``q_s`` over the
relevance variables.  Frame ``t`` with posterior ``p_t`` scores
``-KL(p_t || q_s)`` in state ``s``.  A minimum-duration topology forces every
run (except a run clipped by the end of the stream) to last at least
``min_duration_frames`` frames; it is decoded as a duration-constrained
Viterbi recursion that is equivalent to expanding each state into a chain of
``min_duration_frames`` tied sub-states.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .annotation import DiarizationHypothesis
from .exceptions import ParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RealignConfig:
    min_duration_frames: int = 250
    iterations: int = 3
    self_loop_logprob: float = 0.0
    switch_logprob: float = 0.0
    dist_floor: float = 1e-8


@dataclass(frozen=True)
class KlHmm:
    state_ids: np.ndarray
    state_dists: np.ndarray
    min_duration_frames: int = 250
    self_loop_logprob: float = 0.0
    switch_logprob: float = 0.0

    def __post_init__(self):
        if self.min_duration_frames < 1:
            raise ParameterError("minimum duration must be at least one frame")
        if self.state_dists.shape[0] != len(self.state_ids):
            raise ParameterError("one distribution per state required")

    @property
    def n_states(self) -> int:
        return len(self.state_ids)


@dataclass(frozen=True)
class FrameAlignment:
    labels: np.ndarray
    iterations: int = 0

    def to_hypothesis(self, recording_id, frame_index, frame_shift_s) -> DiarizationHypothesis:
        return DiarizationHypothesis.from_frame_labels(
            recording_id, self.labels, frame_index, frame_shift_s)


def kl_divergence(p, q) -> np.ndarray:
    """KL(p || q) along the last axis, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return t.sum(axis=-1)


def build_klhmm(labels, frame_post, cfg: RealignConfig = RealignConfig(), states=None) -> KlHmm:
    """State distributions are the normalised mean frame posterior per cluster.

    ``states`` optionally lists the cluster ids expected to be present;
    ids without frames are dropped with a warning.
    """
    labels = np.asarray(labels)
    frame_post = np.asarray(frame_post, dtype=np.float64)
    if labels.shape[0] != frame_post.shape[0]:
        raise ParameterError("labels and frame posteriors differ in length")
    present = np.unique(labels)
    if states is None:
        states = present
    ids, dists = [], []
    for s in states:
        sel = labels == s
        if not sel.any():
            log.warning("cluster %s has no frames; dropping its state", s)
            continue
        q = frame_post[sel].mean(axis=0)
        ids.append(s)
        dists.append(q / q.sum())
    if not ids:
        raise ParameterError("hypothesis has no non-empty clusters")
    return KlHmm(np.array(ids), np.array(dists), cfg.min_duration_frames,
                 cfg.self_loop_logprob, cfg.switch_logprob)


def emission_scores(hmm: KlHmm, frame_post, floor: float = 1e-8) -> np.ndarray:
    """-KL(p_t || q_s) for every frame and state, shape (T, S)."""
    p = np.asarray(frame_post, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != hmm.state_dists.shape[1]:
        raise ParameterError("frame posteriors do not match the HMM distributions")
    if np.any(p.sum(axis=1) <= 0):
        raise ParameterError("all-zero posterior row")
    q = np.maximum(hmm.state_dists, floor)
    q = q / q.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0).sum(axis=1)
    return p @ np.log(q).T - plogp[:, None]


def alignment_score(hmm: KlHmm, frame_post, state_path, floor: float = 1e-8) -> float:
    """Score of a given state-index path; ``-inf`` if it violates the topology."""
    path = np.asarray(state_path)
    e = emission_scores(hmm, frame_post, floor)
    t = path.size
    total = float(e[np.arange(t), path].sum())
    d = hmm.min_duration_frames
    brk = np.flatnonzero(np.diff(path) != 0) + 1
    starts = np.concatenate([[0], brk])
    ends = np.concatenate([brk, [t]])
    for k, (a, b) in enumerate(zip(starts, ends)):
        run = b - a
        last = k == len(starts) - 1
        if run < d and not last:
            return -np.inf
        total += max(0, run - d) * hmm.self_loop_logprob
    total += (len(starts) - 1) * hmm.switch_logprob
    return total


def viterbi_states(hmm: KlHmm, frame_post, floor: float = 1e-8) -> tuple[np.ndarray, float]:
    """Best state-index path and its score under the min-duration topology."""
    e = emission_scores(hmm, frame_post, floor)
    t_len, n_s = e.shape
    d = hmm.min_duration_frames
    loop, switch = hmm.self_loop_logprob, hmm.switch_logprob
    csum = np.vstack([np.zeros((1, n_s)), np.cumsum(e, axis=0)])

    full = np.full((t_len, n_s), -np.inf)     # run ending at t has length >= d
    entry = np.full((t_len, n_s), -np.inf)    # best score just before a run starts at t
    stay = np.zeros((t_len, n_s), dtype=bool)
    came_from = np.zeros((t_len, n_s), dtype=np.int64)
    entry[0] = 0.0
    others = ~np.eye(n_s, dtype=bool)

    for t in range(t_len):
        if t > 0:
            prev = full[t - 1]
            if n_s > 1:
                cand = np.where(others, prev[None, :], -np.inf)
                came_from[t] = np.argmax(cand, axis=1)
                entry[t] = cand[np.arange(n_s), came_from[t]] + switch
        t0 = t - d + 1
        if t0 < 0:
            continue
        enter = entry[t0] + csum[t + 1] - csum[t0]
        if t > 0:
            keep = full[t - 1] + loop + e[t]
            stay[t] = keep >= enter
            full[t] = np.where(stay[t], keep, enter)
        else:
            full[t] = enter

    # best ending: a complete run, or a final run shorter than d
    best_score, best_state, best_start = -np.inf, 0, None
    for s in range(n_s):
        if full[-1, s] > best_score:
            best_score, best_state, best_start = full[-1, s], s, None
    for t0 in range(max(0, t_len - d + 1), t_len):
        clipped = entry[t0] + csum[t_len] - csum[t0]
        for s in range(n_s):
            if clipped[s] > best_score:
                best_score, best_state, best_start = clipped[s], s, t0

    path = np.empty(t_len, dtype=np.int64)
    s = best_state
    if best_start is not None:
        path[best_start:] = s
        run_start = best_start
    else:
        run_start = _trace_full_run(path, stay, t_len - 1, s, d)
    while run_start > 0:
        s = came_from[run_start, s]
        run_start = _trace_full_run(path, stay, run_start - 1, s, d)
    return path, float(best_score)


def _trace_full_run(path, stay, t, s, d) -> int:
    """Label the run of state ``s`` ending at ``t``; return where it starts."""
    while stay[t, s]:
        path[t] = s
        t -= 1
    t0 = t - d + 1
    path[t0:t + 1] = s
    return t0


def viterbi_realign(hmm: KlHmm, frame_post, floor: float = 1e-8) -> FrameAlignment:
    path, _ = viterbi_states(hmm, frame_post, floor)
    return FrameAlignment(hmm.state_ids[path])


def realign_iterate(labels, frame_post, cfg: RealignConfig = RealignConfig()) -> FrameAlignment:
    """Alternate state re-estimation and Viterbi until labels stop changing."""
    current = np.asarray(labels).copy()
    done = 0
    for done in range(1, cfg.iterations + 1):
        hmm = build_klhmm(current, frame_post, cfg)
        new = viterbi_realign(hmm, frame_post, cfg.dist_floor).labels
        if np.array_equal(new, current):
            break
        current = new
    return FrameAlignment(current, done)
