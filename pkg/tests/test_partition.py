import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrperc.errors import DomainError
from lrperc.partition import PartitionResult, partition_k, split_two, verify_partition


def path(n):
    return [(i, i + 1) for i in range(n - 1)]


def verts(edges):
    return {x for e in edges for x in e}


def connected(edges):
    return bool(edges) and nx.is_connected(nx.Graph(list(edges)))


def valid_bipartitions(tree, A, hi=2 / 3):
    """All splits of the edge set into two connected pieces with both counts in [|A|/3, hi|A|]."""
    n = len(A)
    out = []
    for r in range(1, len(tree)):
        for left in itertools.combinations(tree, r):
            right = [e for e in tree if e not in left]
            if not (connected(left) and connected(right)):
                continue
            c1, c2 = len(verts(left) & A), len(verts(right) & A)
            if 3 * c1 >= n and 3 * c2 >= n and c1 <= hi * n and c2 <= hi * n:
                out.append((sorted(left), sorted(right)))
    return out


def random_tree(rng, n):
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


@st.composite
def trees_with_A(draw):
    n = draw(st.integers(3, 60))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    perm = draw(st.permutations(range(n)))
    edges = [(perm[p], perm[i]) for i, p in zip(range(1, n), parents)]
    A = draw(st.sets(st.integers(0, n - 1), min_size=3, max_size=n))
    return edges, A


class TestSplitTwo:
    def test_path3(self):
        e1, e2 = split_two(path(3), {0, 1, 2})
        assert (e1, e2) == ([(0, 1)], [(1, 2)])

    def test_star(self):
        star = [(0, 1), (0, 2), (0, 3)]
        e1, e2 = split_two(star, {1, 2, 3})
        counts = sorted(len(verts(p) & {1, 2, 3}) for p in (e1, e2))
        assert counts == [1, 2]
        assert (e1, e2) in valid_bipartitions(star, {1, 2, 3})

    def test_path9_sparse_A(self):
        A = {0, 4, 8}
        e1, e2 = split_two(path(9), A)
        assert {len(verts(e1) & A), len(verts(e2) & A)} <= {1, 2}
        assert (e1, e2) in valid_bipartitions(path(9), A)

    def test_path4_has_no_two_sided_split(self):
        # every connected bipartition of a 4-path puts 3 of 4 vertices on one side
        A = {0, 1, 2, 3}
        assert valid_bipartitions(path(4), A) == []
        e1, e2 = split_two(path(4), A)
        assert len(verts(e1) & A) == 2 and len(verts(e2) & A) == 3
        assert verts(e1) & verts(e2) & A

    @pytest.mark.parametrize("tree,A", [(path(5), {0, 1}), (path(3), {0, 5, 1}),
                                        ([(0, 1), (2, 3)], {0, 1, 2}), ([(0, 1), (1, 2), (0, 2)], {0, 1, 2})])
    def test_errors(self, tree, A):
        with pytest.raises(DomainError):
            split_two(tree, A)

    @settings(max_examples=300, deadline=None)
    @given(trees_with_A())
    def test_properties(self, data):
        tree, A = data
        e1, e2 = split_two(tree, A)
        n = len(A)
        assert sorted(e1 + e2) == sorted(tuple(sorted(e)) for e in tree)
        assert connected(e1) and connected(e2)
        c1, c2 = len(verts(e1) & A), len(verts(e2) & A)
        assert n < 3 * c1 <= 2 * n
        assert 3 * c2 >= n
        if 3 * c2 > 2 * n:
            # only possible when the shared cut vertex is counted on both sides
            assert verts(e1) & verts(e2) & A

    def test_matches_a_valid_split_when_one_exists(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            n = int(rng.integers(3, 9))
            tree = [tuple(sorted(e)) for e in random_tree(rng, n)]
            A = set(rng.choice(n, size=int(rng.integers(3, n + 1)), replace=False).tolist())
            valid = valid_bipartitions(tree, A)
            out = split_two(tree, A)
            c2 = len(verts(out[1]) & A)
            if 3 * c2 <= 2 * len(A):
                assert out in valid or out[::-1] in valid


class TestPartitionK:
    def test_path9_k2(self):
        res = partition_k(path(9), range(9), 2)
        assert res.m == 8
        assert res.counts == [2] * 8
        assert verify_partition(path(9), range(9), 2, res)

    def test_trivial_window(self):
        # |A| = 3^k: every piece count must lie in [1, 3)
        g = nx.gnm_random_graph(15, 30, seed=3)
        while not nx.is_connected(g):
            g = nx.gnm_random_graph(15, 30, seed=4)
        A = list(range(9))
        res = partition_k(g.edges, A, 2)
        assert all(1 <= c < 3 for c in res.counts)
        assert verify_partition(g.edges, A, 2, res)

    def test_errors(self):
        with pytest.raises(DomainError):
            partition_k(path(9), range(8), 2)
        with pytest.raises(DomainError):
            partition_k([(0, 1), (1, 2), (3, 4)], range(5), 1)
        with pytest.raises(DomainError):
            partition_k(path(9), range(9), 0)

    @settings(max_examples=200, deadline=None)
    @given(trees_with_A(), st.integers(1, 4))
    def test_random_trees(self, data, k):
        tree, A = data
        if len(A) < 3 ** k:
            k = 1
        res = partition_k(tree, A, k)
        report = verify_partition(tree, A, k, res)
        assert report, report.violations
        assert res.m >= 3 ** (k - 1) + 1

    @settings(max_examples=100, deadline=None)
    @given(st.integers(4, 40), st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_random_connected_graphs(self, n, seed, k):
        rng = np.random.default_rng(seed)
        edges = set(tuple(sorted(e)) for e in random_tree(rng, n))
        for _ in range(int(rng.integers(0, 2 * n))):
            a, b = rng.integers(0, n, size=2)
            if a != b:
                edges.add((int(min(a, b)), int(max(a, b))))
        A = set(rng.choice(n, size=int(rng.integers(3, n + 1)), replace=False).tolist())
        while len(A) < 3 ** k:
            k -= 1
        res = partition_k(edges, A, k)
        report = verify_partition(edges, A, k, res)
        assert report, report.violations
        assert set(map(tuple, res.tree_edges)) <= edges


class TestVerifyPartition:
    def test_shared_edge(self):
        res = partition_k(path(9), range(9), 2)
        res.pieces[1] = res.pieces[1] + [res.pieces[0][0]]
        names = {v[0] for v in verify_partition(path(9), range(9), 2, res).violations}
        assert "disjointness" in names

    def test_strict_upper_bound(self):
        # path of 7, A = all, k = 1: a piece with count 7 = 3^0 |A| sits on the boundary
        bad = PartitionResult([path(7)], [set(range(7))], [7], 1, 7)
        names = {v[0] for v in verify_partition(path(7), range(7), 1, bad).violations}
        assert "balance upper bound is strict" in names
        assert "piece count" in names

    def test_disconnected_piece_and_coverage(self):
        bad = PartitionResult([[(0, 1), (2, 3)], [(1, 2)]], [], [], 1, 4)
        names = {v[0] for v in verify_partition(path(5), range(5), 1, bad).violations}
        assert {"connectivity", "coverage"} <= names

    def test_foreign_edge_and_lower_bound(self):
        bad = PartitionResult([[(5, 6)], path(5)], [], [], 2, 5)
        names = {v[0] for v in verify_partition(path(5), range(5), 2, bad).violations}
        assert {"membership", "balance lower bound"} <= names
