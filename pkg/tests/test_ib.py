import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibdiar.exceptions import ParameterError
from ibdiar.ib import (
    agglomerate,
    apply_merge,
    estimated_num_speakers,
    init_clusters,
    merge_cost,
    mutual_information,
    objective_from_scratch,
    recompute_information,
    write_trajectory_csv,
)

from oracles import brute_mi, exhaustive_greedy_check, random_problem


def test_mi_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(10):
        post, priors = random_problem(rng, sparse=True)
        assert abs(mutual_information(post, priors) - brute_mi(post, priors)) < 1e-12


def test_mi_identity_channel_is_entropy():
    p = np.array([0.2, 0.3, 0.5])
    assert mutual_information(np.eye(3), p) == pytest.approx(-np.sum(p * np.log(p)), abs=1e-12)
    assert mutual_information(np.tile([0.1, 0.9], (3, 1)), p) == 0.0


def test_mi_rejects_non_stochastic():
    with pytest.raises(ParameterError):
        mutual_information(np.array([[0.5, 0.6]]), np.array([1.0]))


def test_merge_cost_matches_objective_difference():
    rng = np.random.default_rng(1)
    for _ in range(10):
        post, priors = random_problem(rng, sparse=True)
        state = init_clusters(post, priors, beta=10)
        f0 = objective_from_scratch(post, priors, np.arange(6), 10)
        for i, j in itertools.combinations(range(6), 2):
            a = np.arange(6)
            a[j] = i
            f1 = objective_from_scratch(post, priors, a, 10)
            assert abs(merge_cost(state, i, j) - (f0 - f1)) < 1e-10


def test_merge_cost_symmetric_exactly():
    post, priors = random_problem(np.random.default_rng(2))
    state = init_clusters(post, priors)
    for i, j in itertools.combinations(range(6), 2):
        assert merge_cost(state, i, j) == merge_cost(state, j, i)


def test_incremental_bookkeeping_matches_recompute():
    rng = np.random.default_rng(3)
    post, priors = random_problem(rng, n=10)
    state = init_clusters(post, priors)
    for i, j in [(0, 3), (0, 5), (2, 9), (1, 4), (0, 2)]:
        apply_merge(state, i, j)
        i_yc, i_cx = recompute_information(state)
        assert abs(state.I_YC - i_yc) < 1e-10
        assert abs(state.I_CX - i_cx) < 1e-10
        np.testing.assert_allclose(state.p_c.sum(), 1.0)


def test_greedy_step_is_minimum_over_all_pairs():
    rng = np.random.default_rng(4)
    post, priors = random_problem(rng, n=7)
    result = agglomerate(init_clusters(post, priors), nmi_threshold=1e-9)
    assert len(result.records) == 6
    assert exhaustive_greedy_check(post, priors, result.records) < 1e-10


def test_tie_break_is_lexicographic():
    post = np.array([[1.0, 0.0]] * 4)
    result = agglomerate(init_clusters(post, np.full(4, 0.25)), nmi_threshold=1e-9)
    assert result.records[0].merged_pair == (0, 1)


def test_two_distinct_groups():
    post = np.array([[0.9, 0.1]] * 5 + [[0.1, 0.9]] * 5)
    result = agglomerate(init_clusters(post, np.full(10, 0.1)), nmi_threshold=0.4)
    assert result.n_clusters == 2
    assert result.labels.tolist() == [0] * 5 + [1] * 5
    assert estimated_num_speakers(result.records, 0.4) == 2


def test_identical_segments_merge_to_one_cluster():
    post = np.tile([0.3, 0.7], (8, 1))
    result = agglomerate(init_clusters(post, np.full(8, 1 / 8)), nmi_threshold=0.4)
    assert result.n_clusters == 1


def test_threshold_one_keeps_everything_distinct():
    post = np.eye(4)
    result = agglomerate(init_clusters(post, np.full(4, 0.25)), nmi_threshold=1.0)
    assert result.n_clusters == 4


def test_threshold_validation():
    state = init_clusters(np.eye(2), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        agglomerate(state, 0.0)
    with pytest.raises(ParameterError):
        merge_cost(state, 1, 1)


def test_trajectory_csv(tmp_path):
    result = agglomerate(init_clusters(np.eye(3), np.full(3, 1 / 3)))
    write_trajectory_csv(tmp_path / "t.csv", result.records)
    lines = (tmp_path / "t.csv").read_text().strip().splitlines()
    assert lines[0] == "step,cluster_i,cluster_j,delta_F,nmi"
    assert len(lines) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 9), st.integers(2, 6))
def test_trajectory_invariants(seed, n, k):
    rng = np.random.default_rng(seed)
    post, priors = random_problem(rng, n=n, k=k)
    result = agglomerate(init_clusters(post, priors), nmi_threshold=0.4)
    nmis = [r.nmi_after for r in result.records]
    # I(Y, C) can only fall when clusters are merged
    assert all(b <= a + 1e-12 for a, b in zip(nmis, nmis[1:]))
    assert all(0.0 <= v <= 1.0 + 1e-12 for v in nmis)
    assert len(result.records) == n - 1
    assert result.state.nmi >= 0.4 - 1e-12 or result.n_clusters == n
    np.testing.assert_allclose(result.state.p_c[result.state.alive].sum(), 1.0)
