import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrperc.clusters import forest_from_edges, window_stats
from lrperc.errors import DomainError, ResourceError
from lrperc.oracle import (TinyGraph, atlas_graphs, cluster_labels, disjoint_occurrence,
                           disjoint_occurrence_exact, enumerate_measure, event_from_predicate,
                           exact_tables, is_increasing, maxcluster_tail_exact, probability,
                           random_graphs, random_increasing_event, rooted_tail_exact, run_suite,
                           verify_bk, verify_hyperscaling_bounds, verify_max_tail_iteration,
                           verify_max_tightness)


def path(n, p=0.5, window=None):
    return TinyGraph(n, [(i, i + 1) for i in range(n - 1)], p, window)


def minimal_elements(event):
    ups = [m for m in range(event.size) if event[m]]
    return [m for m in ups if not any(o != m and (o & m) == o for o in ups)]


def box_by_minimal_witnesses(a, b):
    """A∘B for increasing events: some minimal witnesses of A and B are disjoint and open."""
    ma, mb = minimal_elements(a), minimal_elements(b)
    out = np.zeros(a.size, dtype=bool)
    for w in range(a.size):
        out[w] = any((x & y) == 0 and (x | y) & ~w == 0 for x in ma for y in mb)
    return out


class TestEnumeration:
    def test_single_and_double_edge(self):
        assert enumerate_measure(TinyGraph(2, [(0, 1)], 0.5)).tolist() == [0.5, 0.5]
        assert enumerate_measure(TinyGraph(3, [(0, 1), (1, 2)], 0.5)).tolist() == [0.25] * 4

    def test_normalization(self):
        for g in random_graphs(100, seed=3):
            assert enumerate_measure(g).sum() == pytest.approx(1.0, abs=1e-12)

    def test_guards(self):
        with pytest.raises(ResourceError):
            TinyGraph(8, list(itertools.combinations(range(6), 2)), 0.5)
        with pytest.raises(DomainError):
            TinyGraph(3, [(0, 1), (1, 0)], 0.5)
        with pytest.raises(DomainError):
            TinyGraph(3, [(0, 1)], 1.5)

    def test_labels_agree_with_engine(self):
        for g in random_graphs(30, seed=9):
            lab = cluster_labels(g)
            t = exact_tables(g)
            for mask in range(2 ** g.m):
                on = np.array([e for i, e in enumerate(g.edges) if mask >> i & 1], dtype=np.int64).reshape(-1, 2)
                f = forest_from_edges(g.n, on)
                pairs = set(zip(lab[mask].tolist(), f.parent.tolist()))
                assert len(pairs) == len(set(lab[mask].tolist())) == len(set(f.parent.tolist()))
                s = window_stats(f, g.window)
                assert s.max_in_window == t.kmax[mask]
                assert np.array_equal(s.intersections, t.rooted[mask, list(g.window)])


class TestTails:
    def test_single_edge(self):
        assert maxcluster_tail_exact(TinyGraph(2, [(0, 1)], 0.5), 2) == 0.5

    def test_path6(self):
        g = path(6)
        assert maxcluster_tail_exact(g, 6) == pytest.approx(1 / 32)
        assert maxcluster_tail_exact(g, 2) == pytest.approx(31 / 32)

    def test_path3_typical_max(self):
        t = exact_tables(path(3))
        assert t.tail_max(2) == pytest.approx(0.75)
        assert t.tail_max(3) == pytest.approx(0.25)
        assert t.typical_max() == 3

    def test_rooted_tail_window(self):
        g = path(3, window=[0, 2])
        assert rooted_tail_exact(g, 0, 2) == pytest.approx(0.25)
        assert rooted_tail_exact(g, 1, 1) == pytest.approx(0.75)


class TestDisjointOccurrence:
    def test_single_event(self):
        g = path(4, 0.3)
        ev = random_increasing_event(g.m, np.random.default_rng(1))
        assert disjoint_occurrence_exact(g, [ev]) == pytest.approx(probability(g, ev))

    def test_edge_twice(self):
        g = TinyGraph(2, [(0, 1)], 0.5)
        A = event_from_predicate(g, lambda m: m & 1)
        assert disjoint_occurrence_exact(g, [A, A]) == 0.0

    def test_rejects_decreasing(self):
        g = TinyGraph(2, [(0, 1)], 0.5)
        with pytest.raises(DomainError):
            disjoint_occurrence(event_from_predicate(g, lambda m: m == 0))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_matches_minimal_witness_search(self, m, seed):
        rng = np.random.default_rng(seed)
        a = random_increasing_event(m, rng)
        b = random_increasing_event(m, rng)
        assert is_increasing(a) and is_increasing(b)
        assert np.array_equal(disjoint_occurrence(a, b), box_by_minimal_witnesses(a, b))

    def test_associative_and_commutative(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            a, b, c = (random_increasing_event(7, rng) for _ in range(3))
            left = disjoint_occurrence(disjoint_occurrence(a, b), c)
            assert np.array_equal(left, disjoint_occurrence(a, disjoint_occurrence(b, c)))
            assert np.array_equal(disjoint_occurrence(a, b), disjoint_occurrence(b, a))

    def test_bk_on_random_graphs(self):
        rng = np.random.default_rng(8)
        for g in random_graphs(200, seed=8):
            if g.m > 11:
                continue
            evs = [random_increasing_event(g.m, rng) for _ in range(2)]
            assert verify_bk(g, evs) == []


class TestMaxTail:
    def test_path6_lambda2(self):
        g = path(6)
        assert verify_max_tail_iteration(g, [2], [1]) == []
        t = exact_tables(g)
        assert t.tail_max(6) <= t.tail_max(2) ** 2

    def test_lambda_one_trivial(self):
        for g in atlas_graphs(4):
            t = exact_tables(g)
            assert t.tail_max(1) == 1.0
            assert verify_max_tail_iteration(g, [1], [1]) == []

    def test_k_zero_form_is_false(self):
        # with k = 0 the exponent 3^-1 + 1 exceeds one, so any 0 < P < 1 breaks it
        t = exact_tables(path(3))
        p = t.tail_max(2)
        assert 0 < p < 1 and p > p ** (4 / 3)

    def test_small_atlas_with_witnesses(self):
        counter = [0]
        for g in atlas_graphs(5):
            if g.m > 5:
                continue
            for p in (0.1, 0.5, 0.9):
                gg = g.with_p(p)
                assert verify_max_tail_iteration(gg, witnesses=True, disjoint=True, counter=counter) == []
        assert counter[0] > 0


class TestTightness:
    def test_beta_zero(self):
        g = path(5, 0.0)
        t = exact_tables(g)
        assert t.typical_max() == 2
        assert t.tail_max(4) == 0.0
        assert verify_max_tightness(g) == []

    def test_eps_one(self):
        assert verify_max_tightness(path(4), factors=(1,), eps=[1.0]) == []

    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            verify_max_tightness(path(3), factors=(0.5,))
        with pytest.raises(DomainError):
            verify_max_tightness(path(3), eps=[0.0])


class TestHyperscaling:
    def test_theta_zero(self):
        for g in (path(5), TinyGraph(4, list(itertools.combinations(range(4), 2)), 0.7)):
            t = exact_tables(g)
            M = t.typical_max()
            for u in range(g.n):
                assert sum(t.connection(u, v) for v in g.window) <= 18 * math.e * M
            assert verify_hyperscaling_bounds(g, 0.0) == []

    def test_beta_zero(self):
        g = path(5, 0.0)
        t = exact_tables(g)
        assert sum(t.connection(0, v) for v in g.window) == 1.0
        assert verify_hyperscaling_bounds(g, 0.4) == []

    def test_theta_range(self):
        with pytest.raises(DomainError):
            verify_hyperscaling_bounds(path(3), 1.0)


def test_small_suite_is_clean():
    report = run_suite(random_graphs(25, seed=11), bk_events=2)
    assert report.ok, report.violations[:3]
    assert report.checks > 1000
