"""Agglomerative Information Bottleneck clustering.

Segments X with priors p(x) and relevance conditionals p(y|x) are merged
greedily.  Each merge removes the pair whose merge causes the smallest loss
in the objective

    F = I(Y, C) - (1 / beta) * I(C, X)

and clustering stops once the normalised mutual information
I(Y, C) / I(X, Y) would fall below a threshold.  All logs are natural.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

_STOCH_TOL = 1e-9


def _check_simplex(p: np.ndarray, what: str) -> None:
    if np.any(p < -_STOCH_TOL) or abs(p.sum() - 1.0) > _STOCH_TOL:
        raise ParameterError(f"{what} is not a probability vector")


def _check_stochastic(m: np.ndarray, what: str) -> None:
    if m.ndim != 2 or np.any(m < -_STOCH_TOL) or np.any(np.abs(m.sum(axis=1) - 1.0) > _STOCH_TOL):
        raise ParameterError(f"{what} is not row-stochastic")


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def mutual_information(cond, prior) -> float:
    """I = sum_x p(x) sum_y p(y|x) log(p(y|x) / p(y)), with 0 log 0 = 0."""
    cond = np.asarray(cond, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    _check_stochastic(cond, "conditional")
    _check_simplex(prior, "prior")
    if cond.shape[0] != prior.size:
        raise ParameterError("conditional and prior sizes differ")
    marg = prior @ cond
    joint = prior[:, None] * cond
    nz = joint > 0
    ratio = np.where(nz, cond, 1.0) / np.where(nz, marg[None, :], 1.0)
    return max(0.0, float(np.sum(joint[nz] * np.log(ratio[nz]))))


def _js(pi1, p, pi2, q):
    """Weighted Jensen-Shannon divergence of rows ``p`` and ``q`` (broadcasts)."""
    m = pi1[..., None] * p + pi2[..., None] * q
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(p > 0, p * np.log(p / m), 0.0)
        tq = np.where(q > 0, q * np.log(q / m), 0.0)
    return pi1 * tp.sum(axis=-1) + pi2 * tq.sum(axis=-1)


def _h2(pi1, pi2):
    with np.errstate(divide="ignore", invalid="ignore"):
        return -(np.where(pi1 > 0, pi1 * np.log(pi1), 0.0) + np.where(pi2 > 0, pi2 * np.log(pi2), 0.0))


@dataclass
class MergeRecord:
    step: int
    merged_pair: tuple
    delta_F: float
    nmi_after: float


@dataclass
class ClusterState:
    """Live agglomerative state.

    Cluster ``c`` is identified by the lowest segment index it contains; a
    merged cluster keeps the smaller of the two ids.
    """

    assignments: np.ndarray
    p_c: np.ndarray
    p_y_given_c: np.ndarray
    alive: np.ndarray
    I_YC: float
    I_CX: float
    I_XY: float
    beta: float
    p_x: np.ndarray = field(repr=False, default=None)
    p_y_given_x: np.ndarray = field(repr=False, default=None)

    @property
    def n_clusters(self) -> int:
        return int(self.alive.sum())

    @property
    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    @property
    def nmi(self) -> float:
        return self.I_YC / self.I_XY if self.I_XY > 0 else 1.0

    @property
    def objective(self) -> float:
        return self.I_YC - self.I_CX / self.beta

    def copy(self) -> "ClusterState":
        return ClusterState(self.assignments.copy(), self.p_c.copy(), self.p_y_given_c.copy(),
                            self.alive.copy(), self.I_YC, self.I_CX, self.I_XY, self.beta,
                            self.p_x, self.p_y_given_x)

    def labels(self) -> np.ndarray:
        """Assignments relabelled 0..C-1 in order of first appearance."""
        _, first, inv = np.unique(self.assignments, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return order[inv]


def init_clusters(post, priors, beta: float = 10.0) -> ClusterState:
    post = np.asarray(post, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    _check_stochastic(post, "posterior matrix")
    _check_simplex(priors, "segment priors")
    n = post.shape[0]
    if n < 2:
        raise ParameterError("need at least two segments to cluster")
    if priors.size != n:
        raise ParameterError("priors and posteriors differ in length")
    if beta <= 0:
        raise ParameterError("beta must be positive")
    i_xy = mutual_information(post, priors)
    return ClusterState(
        assignments=np.arange(n),
        p_c=priors.copy(),
        p_y_given_c=post.copy(),
        alive=np.ones(n, dtype=bool),
        I_YC=i_xy,
        I_CX=entropy(priors),
        I_XY=i_xy,
        beta=float(beta),
        p_x=priors,
        p_y_given_x=post,
    )


def _pair_terms(state: ClusterState, i, j):
    i, j = min(i, j), max(i, j)
    pi, pj = state.p_c[i], state.p_c[j]
    tot = pi + pj
    w1, w2 = pi / tot, pj / tot
    d_yc = tot * _js(w1, state.p_y_given_c[i], w2, state.p_y_given_c[j])
    d_cx = tot * _h2(w1, w2)
    return d_yc, d_cx


def merge_cost(state: ClusterState, i: int, j: int) -> float:
    """Loss in F from merging clusters ``i`` and ``j``.

    Closed form: (p_i + p_j) * [JS_pi(p(y|i), p(y|j)) - H(pi) / beta], where
    pi = (p_i, p_j) / (p_i + p_j).  H(pi) is the JS divergence of the
    disjoint p(x|c) distributions, i.e. the drop in I(C, X).
    """
    if i == j:
        raise ParameterError("cannot merge a cluster with itself")
    for c in (i, j):
        if not (0 <= c < state.alive.size and state.alive[c]):
            raise ParameterError(f"cluster {c} is not live")
    d_yc, d_cx = _pair_terms(state, i, j)
    return float(d_yc - d_cx / state.beta)


def _row_costs(state: ClusterState, i: int, others: np.ndarray):
    pi = state.p_c[i]
    pj = state.p_c[others]
    tot = pi + pj
    w1, w2 = pi / tot, pj / tot
    d_yc = tot * _js(w1, state.p_y_given_c[i][None, :], w2, state.p_y_given_c[others])
    d_cx = tot * _h2(w1, w2)
    return d_yc, d_cx


def apply_merge(state: ClusterState, i: int, j: int) -> tuple[float, float]:
    """Merge ``j`` into ``i`` in place (ids ordered so the survivor is the smaller).

    Returns the drops (dI_YC, dI_CX).
    """
    i, j = min(i, j), max(i, j)
    d_yc, d_cx = _pair_terms(state, i, j)
    pi, pj = state.p_c[i], state.p_c[j]
    tot = pi + pj
    state.p_y_given_c[i] = (pi * state.p_y_given_c[i] + pj * state.p_y_given_c[j]) / tot
    state.p_c[i] = tot
    state.p_c[j] = 0.0
    state.alive[j] = False
    state.assignments[state.assignments == j] = i
    state.I_YC = max(0.0, state.I_YC - float(d_yc))
    state.I_CX = max(0.0, state.I_CX - float(d_cx))
    return float(d_yc), float(d_cx)


def recompute_information(state: ClusterState) -> tuple[float, float]:
    """I(Y, C) and I(C, X) recomputed from the segment-level inputs."""
    ids = state.live_ids
    p_c = np.array([state.p_x[state.assignments == c].sum() for c in ids])
    cond = np.array([
        state.p_x[state.assignments == c] @ state.p_y_given_x[state.assignments == c] for c in ids
    ]) / p_c[:, None]
    return mutual_information(cond, p_c), entropy(p_c)


def objective_from_scratch(post, priors, assignments, beta) -> float:
    """F for a hard partition of the segments, computed directly."""
    post = np.asarray(post, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    assignments = np.asarray(assignments)
    ids = np.unique(assignments)
    p_c = np.array([priors[assignments == c].sum() for c in ids])
    cond = np.array([priors[assignments == c] @ post[assignments == c] for c in ids]) / p_c[:, None]
    return mutual_information(cond, p_c) - entropy(p_c) / beta


@dataclass
class AgglomerationResult:
    state: ClusterState
    records: list
    n_segments: int

    @property
    def labels(self) -> np.ndarray:
        return self.state.labels()

    @property
    def n_clusters(self) -> int:
        return self.state.n_clusters


def agglomerate(state: ClusterState, nmi_threshold: float = 0.4) -> AgglomerationResult:
    """Greedy agglomeration with NMI stopping.

    The minimum-cost pair is merged at every step; equal costs are broken
    towards the lexicographically smallest ``(i, j)``.  Merging continues
    past the stopping point down to one cluster so that the returned
    trajectory is complete; the returned state is the partition in force
    when the next merge would have driven NMI below ``nmi_threshold``.
    """
    if not 0.0 < nmi_threshold <= 1.0:
        raise ParameterError("NMI threshold must lie in (0, 1]")
    work = state.copy()
    work.p_y_given_c = work.p_y_given_c.copy()
    n = work.alive.size
    cost = np.full((n, n), np.inf)
    ids = work.live_ids
    for a in ids:
        later = ids[ids > a]
        if later.size:
            d_yc, d_cx = _row_costs(work, a, later)
            cost[a, later] = d_yc - d_cx / work.beta

    records: list[MergeRecord] = []
    stopped: ClusterState | None = None
    step = 0
    while work.n_clusters > 1:
        flat = int(np.argmin(cost))
        i, j = divmod(flat, n)
        d_yc, d_cx = _pair_terms(work, i, j)
        nmi_after = max(0.0, work.I_YC - d_yc) / work.I_XY if work.I_XY > 0 else 1.0
        if stopped is None and nmi_after < nmi_threshold:
            stopped = work.copy()
        delta_f = float(cost[i, j])
        apply_merge(work, i, j)
        step += 1
        records.append(MergeRecord(step, (int(i), int(j)), delta_f, float(work.nmi)))
        cost[j, :] = np.inf
        cost[:, j] = np.inf
        live = work.live_ids
        lo, hi = live[live < i], live[live > i]
        if lo.size:
            d_yc, d_cx = _row_costs(work, i, lo)
            cost[lo, i] = d_yc - d_cx / work.beta
        if hi.size:
            d_yc, d_cx = _row_costs(work, i, hi)
            cost[i, hi] = d_yc - d_cx / work.beta
    if stopped is None:
        stopped = work
    return AgglomerationResult(stopped, records, n)


def estimated_num_speakers(records, threshold: float = 0.4, n_segments: int | None = None) -> int:
    """Cluster count at the NMI stop of a complete merge trajectory."""
    n = len(records) + 1 if n_segments is None else n_segments
    merges = 0
    for rec in records:
        if rec.nmi_after < threshold:
            break
        merges += 1
    return n - merges


def write_trajectory_csv(path: str | os.PathLike, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "cluster_i", "cluster_j", "delta_F", "nmi"])
        for r in records:
            w.writerow([r.step, r.merged_pair[0], r.merged_pair[1], repr(r.delta_F), repr(r.nmi_after)])
