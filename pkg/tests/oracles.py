"""Independent reference implementations shared by the unit and acceptance tests.

They favour obviousness over speed: explicit loops, long doubles, exhaustive
search.
"""

import itertools
import math

import numpy as np

from ibdiar.annotation import Turn
from ibdiar.ib import objective_from_scratch


def brute_mi(cond, prior):
    """Double loop in long double, no vectorisation."""
    cond = np.asarray(cond, dtype=np.longdouble)
    prior = np.asarray(prior, dtype=np.longdouble)
    marg = [sum(prior[x] * cond[x, y] for x in range(len(prior))) for y in range(cond.shape[1])]
    total = np.longdouble(0)
    for x in range(len(prior)):
        for y in range(cond.shape[1]):
            if prior[x] * cond[x, y] > 0:
                total += prior[x] * cond[x, y] * np.log(cond[x, y] / marg[y])
    return float(total)


def random_problem(rng, n=6, k=4, sparse=False):
    post = rng.dirichlet(np.ones(k) * 0.7, size=n)
    if sparse:
        post[rng.random(post.shape) < 0.3] = 0.0
        post[:, 0] += 1e-3
        post /= post.sum(axis=1, keepdims=True)
    priors = rng.dirichlet(np.ones(n) * 3)
    return post, priors


def exhaustive_greedy_check(post, priors, records, beta=10.0):
    """Replay a merge trajectory and confirm each step is the cheapest pair.

    Every candidate is re-scored from scratch; returns the largest deviation
    between the recorded cost and the exhaustive minimum.
    """
    n = len(priors)
    assign = np.arange(n)
    worst = 0.0
    for rec in records:
        f0 = objective_from_scratch(post, priors, assign, beta)
        best = math.inf
        for i, j in itertools.combinations(np.unique(assign), 2):
            a = assign.copy()
            a[a == j] = i
            best = min(best, f0 - objective_from_scratch(post, priors, a, beta))
        worst = max(worst, abs(rec.delta_F - best))
        i, j = rec.merged_pair
        assign[assign == j] = i
    return worst


def brute_force_der(hyp, ref, collar, res=0.01):
    """Frame loop over every one-to-one hypothesis-to-reference map."""
    end = max(t.end for t in ref.turns + hyp.turns)
    n = int(np.ceil(end / res)) + 1
    bounds = [b for t in ref.turns for b in (t.start, t.end)]
    ref_spk = sorted({t.speaker for t in ref.turns})
    hyp_spk = sorted({t.speaker for t in hyp.turns})
    frames = []
    for k in range(n):
        c = (k + 0.5) * res
        if any(abs(c - b) < collar for b in bounds):
            continue
        r = {t.speaker for t in ref.turns if t.start <= c < t.end}
        h = {t.speaker for t in hyp.turns if t.start <= c < t.end}
        frames.append((r, h))
    total = sum(len(r) for r, _ in frames)
    best = None
    k = min(len(ref_spk), len(hyp_spk))
    for hs in itertools.permutations(hyp_spk, k):
        for rs in itertools.combinations(ref_spk, k):
            for rperm in itertools.permutations(rs):
                m = dict(zip(hs, rperm))
                err = 0
                for r, h in frames:
                    correct = len(r & {m[x] for x in h if x in m})
                    err += max(len(r), len(h)) - correct
                best = err if best is None else min(best, err)
    if best is None:
        best = sum(max(len(r), len(h)) for r, h in frames)
    return 100.0 * best / total


def random_turns(rng, speakers, duration, overlap=False):
    turns, t = [], 0.0
    while t < duration:
        d = rng.uniform(0.3, 3.0)
        spk = speakers[rng.integers(len(speakers))]
        if rng.random() < 0.15:
            t += rng.uniform(0.1, 1.0)
        else:
            turns.append(Turn(round(t, 2), round(min(t + d, duration), 2), spk))
            if overlap and rng.random() < 0.2:
                other = speakers[rng.integers(len(speakers))]
                if other != spk:
                    turns.append(Turn(round(t + d / 3, 2), round(t + d / 2 + 0.1, 2), other))
            t += d
    return [x for x in turns if x.start < x.end]
