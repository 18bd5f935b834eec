import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrperc.clusters import build_clusters, forest_from_edges
from lrperc.ensemble import Ensemble
from lrperc.errors import DomainError, InsufficientDataError
from lrperc.ghost import (GhostParams, GoodWeight, TorusModel, explore_cluster, fluctuation,
                          fluctuation_graph, ghost_hit_probability, measured_prefactor,
                          sample_ghost_field, touching_total, touching_weight, two_arm_indicator,
                          two_arm_profile, two_ghost_audit)
from lrperc.kernel import Kernel, TorusBox
from lrperc.sampler import sample_configuration

KERNEL = Kernel(1, 0.5).normalized()


def all_pairs(box):
    a, b = np.triu_indices(box.N, 1)
    return np.stack([a, b], axis=1)


def diff_ids(box, pairs):
    c = box.coords(pairs[:, 1]) - box.coords(pairs[:, 0])
    return box.ids(c % box.L)


def direct_fluctuation(cfg, model, v):
    """Sum over every touching edge of the box, from the definition."""
    box = cfg.box
    f = build_clusters(cfg)
    pairs = all_pairs(box)
    t = diff_ids(box, pairs)
    open_set = set(map(tuple, cfg.edges.tolist()))
    is_open = np.array([tuple(e) in open_set for e in pairs.tolist()])
    K = f.members(v)
    val = fluctuation_graph(pairs, model.p_table[t], model.w_table[t], is_open, K)
    touching = np.isin(pairs, K).any(axis=1)
    return val, float(model.w_table[t][touching].sum())


class TestWeights:
    def test_normalized_per_vertex(self):
        for box in (TorusBox(1, 16), TorusBox(2, 8)):
            w = GoodWeight.from_kernel(Kernel(box.d, 1.0), box)
            assert w.table().sum() == pytest.approx(1.0, abs=1e-14)
            assert w.table()[0] == 0
            nn = GoodWeight.nearest_neighbour(box)
            assert np.count_nonzero(nn.table()) == 2 * box.d
            assert nn.table().sum() == pytest.approx(1.0)

    def test_invalid(self):
        box = TorusBox(1, 8)
        with pytest.raises(DomainError):
            GoodWeight(box, -np.ones(4))
        with pytest.raises(DomainError):
            GoodWeight(box, np.zeros(4))
        with pytest.raises(DomainError):
            GoodWeight.from_kernel(KERNEL, TorusBox(1, 8, "free"))
        with pytest.raises(DomainError):
            GhostParams(GoodWeight.nearest_neighbour(box), 0.0)

    def test_displacement_roundtrip(self):
        box = TorusBox(2, 6)
        w = GoodWeight.from_kernel(Kernel(2, 1.0), box)
        assert np.allclose(GoodWeight.from_displacements(box, w.table()).values, w.values)

    def test_green_field_hit_probability(self):
        # edges touching one vertex carry total weight exactly 1
        box = TorusBox(1, 16)
        params = GhostParams(GoodWeight.from_kernel(KERNEL, box), 0.7)
        n = 4000
        hits = 0
        for r in range(n):
            g = sample_ghost_field(params, 3, r)
            hits += bool(np.any(g == 5))
        p = float(ghost_hit_probability(1.0, 0.7))
        assert p == pytest.approx(1 - math.exp(-0.7))
        assert abs(hits / n - p) < 4 * math.sqrt(p * (1 - p) / n)


class TestTwoArm:
    def test_examples(self):
        box = TorusBox(1, 8)
        empty = forest_from_edges(box, np.empty((0, 2), dtype=np.int64))
        assert all(two_arm_indicator(empty, (x, y), 1) for x in range(8) for y in range(x + 1, 8))
        assert not two_arm_indicator(empty, (0, 3), 2)
        f = forest_from_edges(box, np.array([[0, 1], [1, 2], [4, 5]]))
        assert not two_arm_indicator(f, (0, 2), 1)
        assert two_arm_indicator(f, (2, 4), 2)
        assert not two_arm_indicator(f, (2, 4), 3)

    @pytest.mark.parametrize("box", [TorusBox(1, 64), TorusBox(2, 8)])
    def test_profile_matches_brute_force(self, box):
        k = Kernel(box.d, 0.5).normalized()
        for r in range(3):
            f = build_clusters(sample_configuration(box, k, 1.0, 6, r))
            for n in (1, 2, 4):
                mask = f.vertex_sizes >= n
                prof = two_arm_profile(f, mask)
                brute = np.zeros(box.N)
                for x in range(box.N):
                    for t in range(1, box.N):
                        y = box.ids(box.coords(x) + box.coords(t))
                        brute[t] += two_arm_indicator(f, (x, y), n)
                assert np.array_equal(prof, brute)

    def test_touching_weight_brute_force(self):
        box = TorusBox(1, 32)
        cfg = sample_configuration(box, KERNEL, 1.2, 4)
        f = build_clusters(cfg)
        w = GoodWeight.from_kernel(KERNEL, box)
        got = touching_weight(f, w.table())
        pairs = all_pairs(box)
        wt = w.table()[diff_ids(box, pairs)]
        for v in range(box.N):
            touching = np.isin(pairs, f.members(v)).any(axis=1)
            assert got[v] == pytest.approx(wt[touching].sum(), abs=1e-12)


class TestFluctuation:
    def test_single_edge(self):
        e = [(0, 1)]
        assert fluctuation_graph(e, [0.5], [1.0], [False], [0]) == pytest.approx(1.0)
        assert fluctuation_graph(e, [0.5], [1.0], [True], [0, 1]) == pytest.approx(-1.0)

    def test_degenerate_probability(self):
        with pytest.raises(DomainError):
            fluctuation_graph([(0, 1)], [1.0], [1.0], [True], [0, 1])
        with pytest.raises(DomainError):
            TorusModel.build(KERNEL, 0.0, GoodWeight.from_kernel(KERNEL, TorusBox(1, 8)))

    @pytest.mark.parametrize("box,beta", [(TorusBox(1, 32), 1.0), (TorusBox(1, 16), 2.5),
                                          (TorusBox(2, 4), 0.8), (TorusBox(2, 6), 1.5)])
    def test_closed_form_and_exploration_match_definition(self, box, beta):
        k = Kernel(box.d, 0.5).normalized()
        model = TorusModel.build(k, beta, GoodWeight.from_kernel(k, box))
        for r in range(6):
            cfg = sample_configuration(box, k, beta, 12, r)
            f = build_clusters(cfg)
            closed = fluctuation(f, cfg.edges, model, np.arange(box.N))
            qtot = touching_total(f, model, np.arange(box.N))
            for v in f.roots:
                direct, wE = direct_fluctuation(cfg, model, v)
                tr = explore_cluster(cfg, int(v), model)
                assert closed[v] == pytest.approx(direct, abs=1e-9)
                assert tr.Z_T == pytest.approx(direct, abs=1e-9)
                assert tr.Q_T == pytest.approx(wE, abs=1e-9)
                assert qtot[v] == pytest.approx(wE, abs=1e-9)

    def test_isolated_vertex(self):
        box = TorusBox(1, 16)
        model = TorusModel.build(KERNEL, 0.05, GoodWeight.from_kernel(KERNEL, box))
        cfg = sample_configuration(box, KERNEL, 0.05, 0)
        f = build_clusters(cfg)
        v = int(np.flatnonzero(f.vertex_sizes == 1)[0])
        tr = explore_cluster(cfg, v, model)
        assert tr.T == box.N - 1
        assert not tr.status.any()
        assert tr.Q_T == pytest.approx(1.0)
        r = model.r_table
        assert tr.Z_T == pytest.approx(float(np.sum(np.sqrt(model.w_table) * r)))

    def test_spanning_cluster_has_no_boundary(self):
        box, k = TorusBox(1, 8), Kernel(1, 0.5)
        model = TorusModel.build(k, 20.0, GoodWeight.from_kernel(k, box))
        cfg = sample_configuration(box, k, 20.0, 1)
        assert build_clusters(cfg).largest == box.N
        tr = explore_cluster(cfg, 0, model)
        assert tr.T == box.N * (box.N - 1) // 2
        assert tr.Z_T <= 0

    def test_trace_invariants_and_order(self):
        box = TorusBox(1, 128)
        model = TorusModel.build(KERNEL, 1.3, GoodWeight.from_kernel(KERNEL, box))
        cfg = sample_configuration(box, KERNEL, 1.3, 2)
        tr = explore_cluster(cfg, 7, model)
        assert np.all(np.diff(tr.Q) >= 0)
        assert tr.Z[0] == 0 and tr.Q[0] == 0
        canon = {tuple(sorted(e)) for e in tr.edges.tolist()}
        assert len(canon) == tr.T
        open_set = set(map(tuple, cfg.edges.tolist()))
        assert all((tuple(sorted(e)) in open_set) == s for e, s in zip(tr.edges.tolist(), tr.status))
        with pytest.raises(DomainError):
            explore_cluster(cfg, box.N, model)

    def test_martingale_mean_zero(self):
        box = TorusBox(1, 512)
        beta = 1.0
        model = TorusModel.build(KERNEL, beta, GoodWeight.from_kernel(KERNEL, box))
        z = []
        for r in range(300):
            cfg = sample_configuration(box, KERNEL, beta, 77, r)
            z.append(explore_cluster(cfg, 0, model, keep_trace=False).Z_T)
        z = np.array(z)
        assert abs(z.mean()) < 4 * z.std(ddof=1) / math.sqrt(len(z))


@pytest.fixture(scope="module")
def ensemble():
    return Ensemble(TorusBox(1, 1024), KERNEL, 1.2, 5, 100)


class TestAudit:
    def test_needs_replicas(self):
        with pytest.raises(InsufficientDataError):
            two_ghost_audit(Ensemble(TorusBox(1, 64), KERNEL, 1.0, 0, 99), [4])

    def test_beta_zero(self):
        ens = Ensemble(TorusBox(1, 64), KERNEL, 0.0, 0, 100)
        for variant in ("improved", "weighted"):
            for a in two_ghost_audit(ens, [2, 4], variant):
                assert a.lhs == 0 and a.passed and a.margin == math.inf

    def test_n_above_volume(self, ensemble):
        for a in two_ghost_audit(ensemble, [2000], "improved"):
            assert a.lhs == 0

    @pytest.mark.parametrize("variant", ["improved", "weighted"])
    def test_nonincreasing_and_passing(self, ensemble, variant):
        res = two_ghost_audit(ensemble, [16, 64, 256], variant)
        lhs = [a.lhs for a in res]
        assert lhs[0] > 0
        assert all(x >= y for x, y in zip(lhs, lhs[1:]))
        assert all(a.passed and a.margin >= 1 for a in res)
        assert res[0].theta == pytest.approx(0.2)

    def test_optimized_weight_passes(self, ensemble):
        assert all(a.passed for a in two_ghost_audit(ensemble, [16, 64], "weighted", weight="optimized"))

    def test_kernel_variant(self, ensemble):
        res = two_ghost_audit(ensemble, [4, 16, 64], "kernel")
        assert all(a.passed for a in res)
        assert all(x.lhs >= y.lhs for x, y in zip(res, res[1:]))
        assert res[0].rhs == pytest.approx(21.0)

    def test_unknown_variant(self, ensemble):
        with pytest.raises(DomainError):
            two_ghost_audit(ensemble, [4], "other")


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 0.49))
def test_measured_prefactor_is_minimal(tail, theta):
    tail = np.sort(np.array(tail))[::-1]
    A = measured_prefactor(tail, theta)
    n = np.arange(1, len(tail) + 1)
    assert np.all(tail <= A * n ** -theta * (1 + 1e-12))
    assert np.any(np.isclose(tail, A * n ** -theta))
