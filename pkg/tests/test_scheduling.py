import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csilab.families import grouping
from csilab.features import build_dft_codebook
from csilab.scheduling import (ConflictGraph, DegenerateApsWarning, EmptyGroupError, GroupAssignment, GroupingConfig,
                               aps_overlap, build_conflict_graph, evaluate_grouping_experiment, greedy_color,
                               normalize_channels, overlap_matrix, sum_rate)
from csilab.tasks.aps import ApsConfig


def test_overlap_examples():
    a = np.array([1.0, 2.0, 0.5])
    assert aps_overlap(a, a) == pytest.approx(1.0)
    assert aps_overlap([1, 0, 0], [0, 0, 3]) == 0.0
    assert aps_overlap([1, 1, 0, 0], [0, 1, 1, 0]) == pytest.approx(0.5)
    with pytest.warns(DegenerateApsWarning):
        assert aps_overlap([0, 0], [1, 1]) == 0.0
    with pytest.raises(ValueError):
        aps_overlap([1, 2], [1, 2, 3])


def test_overlap_matrix_matches_pairwise(rng):
    s = rng.random((5, 12))
    s[2] = 0
    m = overlap_matrix(s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateApsWarning)
        for i in range(5):
            for j in range(5):
                if i != j:
                    assert m[i, j] == pytest.approx(aps_overlap(s[i], s[j]), abs=1e-12)


def test_conflict_graph_examples():
    spectra = np.abs(np.random.default_rng(0).random((4, 8))) + 0.1
    assert build_conflict_graph(spectra, 1.0).edges == set()
    assert len(build_conflict_graph(spectra, 0.0).edges) == 6
    # overlaps a-b 0.2, a-c 0.6, b-c 0.9
    a = [1.0, 0.0, 0.0]
    b = [0.2, 0.975, math.sqrt(1 - 0.04 - 0.975 ** 2)]
    c = [0.6, 0.8, 0.0]
    g = build_conflict_graph([a, b, c], 0.5, ids=["a", "b", "c"])
    assert g.overlaps[frozenset("ab")] == pytest.approx(0.2)
    assert g.overlaps[frozenset("bc")] == pytest.approx(0.9)
    assert g.edges == {frozenset("ac"), frozenset("bc")}
    with pytest.raises(ValueError):
        build_conflict_graph([a, b], 1.5)
    with pytest.raises(ValueError):
        build_conflict_graph([a, b], 0.5, ids=["x", "x"])


def test_greedy_color_examples():
    assert greedy_color(ConflictGraph(list(range(5)))).num_groups == 1
    k4 = ConflictGraph(list(range(4)), {frozenset((i, j)) for i in range(4) for j in range(i + 1, 4)})
    assert greedy_color(k4).num_groups == 4
    path = ConflictGraph(["a", "b", "c"], {frozenset("ab"), frozenset("bc")})
    col = greedy_color(path)
    assert col.num_groups == 2
    assert col.groups["b"] == 0 and col.groups["a"] == col.groups["c"] == 1
    assert greedy_color(ConflictGraph([])).num_groups == 0


def random_graph(seed, n=None, p=None):
    r = np.random.default_rng(seed)
    n = n or int(r.integers(1, 25))
    p = r.uniform(0, 1) if p is None else p
    edges = {frozenset((i, j)) for i in range(n) for j in range(i + 1, n) if r.random() < p}
    return ConflictGraph(list(range(n)), edges)


def is_proper(graph, assignment):
    return all(assignment.groups[u] != assignment.groups[v] for u, v in map(tuple, graph.edges))


@given(st.integers(0, 2 ** 32 - 1))
def test_greedy_color_proper_and_bounded(seed):
    g = random_graph(seed)
    col = greedy_color(g)
    assert set(col.groups) == set(g.vertices)
    assert is_proper(g, col)
    assert sorted(set(col.groups.values())) == list(range(col.num_groups))
    max_deg = max((g.degree(v) for v in g.vertices), default=0)
    assert col.num_groups <= max_deg + 1


def test_sum_rate_examples():
    assert sum_rate([[0.1, 0.0]], [[0]], [[1.0, 0.0]], 1.0, 1.0, 0.2) == 0.0
    h = np.array([[2.0, 0.0], [0.0, 3.0j]])
    w = np.eye(2)
    expect = math.log2(1 + 0.5 * 4 / 0.1) + math.log2(1 + 0.5 * 9 / 0.1)
    assert sum_rate(h, [[0, 1]], w, 1.0, 0.1, 0.2) == pytest.approx(expect, rel=1e-12)
    gains = np.array([4.0, 9.0])
    expect = sum(math.log2(1 + g / 0.1) for g in gains) / 2
    assert sum_rate(h, [[0], [1]], w, 1.0, 0.1, 0.2) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(EmptyGroupError):
        sum_rate(h, [[0, 1], []], w, 1.0, 0.1, 0.2)
    with pytest.raises(EmptyGroupError):
        sum_rate(h, [], w, 1.0, 0.1, 0.2)


def test_sum_rate_interference():
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    sinr = 0.5 * 0.5 / (0.5 * 0.5 + 0.1)
    assert sum_rate(h, [[0, 1]], w, 1.0, 0.1, 0.0) == pytest.approx(2 * math.log2(1 + sinr))


def test_sum_rate_accepts_assignment():
    h = np.eye(3, dtype=complex)
    a = GroupAssignment({0: 0, 1: 1, 2: 0})
    assert sum_rate(h, a, np.eye(3), 1.0, 0.1, 0.2) == sum_rate(h, [[0, 2], [1]], np.eye(3), 1.0, 0.1, 0.2)


def _random_setup(seed):
    r = np.random.default_rng(seed)
    u = int(r.integers(1, 7))
    h = r.standard_normal((u, 4)) + 1j * r.standard_normal((u, 4))
    w = build_dft_codebook(4).codewords[r.integers(0, 4, u)]
    labels = r.integers(0, 3, u)
    groups = [list(np.flatnonzero(labels == g)) for g in np.unique(labels)]
    return r, h, w, groups


@given(st.integers(0, 2 ** 32 - 1))
def test_sum_rate_relabel_invariant(seed):
    r, h, w, groups = _random_setup(seed)
    base = sum_rate(h, groups, w, 1.0, 0.2, 0.2)
    perm = r.permutation(len(h))
    inv = np.argsort(perm)
    relabelled = [[int(inv[i]) for i in g] for g in groups][::-1]
    assert sum_rate(h[perm], relabelled, w[perm], 1.0, 0.2, 0.2) == pytest.approx(base, rel=1e-12, abs=1e-15)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 5), st.floats(0, 5))
def test_sum_rate_monotone_threshold(seed, t1, t2):
    _, h, w, groups = _random_setup(seed)
    lo, hi = sorted((t1, t2))
    assert sum_rate(h, groups, w, 1.0, 0.2, hi) <= sum_rate(h, groups, w, 1.0, 0.2, lo)


@given(st.integers(0, 2 ** 32 - 1))
def test_tau_zero_is_orthogonal(seed):
    r = np.random.default_rng(seed)
    u = int(r.integers(1, 8))
    spectra = r.random((u, 16)) + 1e-3
    h = r.standard_normal((u, 4)) + 1j * r.standard_normal((u, 4))
    w = build_dft_codebook(4).codewords[r.integers(0, 4, u)]
    groups = greedy_color(build_conflict_graph(spectra, 0.0))
    assert groups.num_groups == u
    assert sum_rate(h, groups, w, 1.0, 0.1, 0.2) == sum_rate(h, [[i] for i in range(u)], w, 1.0, 0.1, 0.2)


def test_normalize_channels(rng):
    h = 1e-5 * (rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8)))
    assert np.mean(np.abs(normalize_channels(h)) ** 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        normalize_channels(np.zeros(4))


def _gcfg(**kw):
    base = dict(aps=ApsConfig(grouping(), snapshots=2), sinr_min=0.2, user_counts=(8,), scenes_per_count=20,
                modes=("true-aps", "all-at-once", "orthogonal"))
    base.update(kw)
    return GroupingConfig(**base)


def test_single_user_baselines_coincide():
    rep = evaluate_grouping_experiment(_gcfg(user_counts=(1,), modes=("all-at-once", "orthogonal")), 0)
    np.testing.assert_array_equal(rep.per_scene[(1, "all-at-once", None)], rep.per_scene[(1, "orthogonal", None)])


def test_grouping_beats_baselines_on_separable_scenes():
    rep = evaluate_grouping_experiment(_gcfg(scenes_per_count=30), 1)
    g = rep.lookup(8, "true-aps", 0.3).mean_sum_rate
    assert g >= rep.lookup(8, "all-at-once").mean_sum_rate
    assert g >= rep.lookup(8, "orthogonal").mean_sum_rate


def test_grouping_deterministic_and_validated():
    a = evaluate_grouping_experiment(_gcfg(scenes_per_count=4), 3)
    b = evaluate_grouping_experiment(_gcfg(scenes_per_count=4), 3)
    assert a.rows == b.rows
    with pytest.raises(ValueError):
        evaluate_grouping_experiment(_gcfg(modes=("inferred-aps",)), 0)
    with pytest.raises(ValueError):
        _gcfg(sinr_min=-0.1)
    with pytest.raises(ValueError):
        _gcfg(modes=("greedy",))
    with pytest.raises(KeyError):
        a.lookup(16, "true-aps", 0.3)
