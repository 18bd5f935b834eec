import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrperc.clusters import build_clusters, forest_from_edges, window_stats
from lrperc.ensemble import Ensemble
from lrperc.errors import DomainError, InsufficientDataError, SearchError
from lrperc.estimators import (FitResult, beta_c_search, bisect_crossing, bootstrap_ci, bound_audit,
                               crossing_fraction, exponent_fit, fit_window, m_typical_estimate,
                               records_from_matrix, replica_thresholds, susceptibility_scan,
                               tail_estimate, tail_row, two_point_avg_estimate, two_point_row,
                               typical_max_from_samples, window_normalizer)
from lrperc.kernel import Kernel, TorusBox, class_weights, displacement_classes, edge_probability
from lrperc.oracle import TinyGraph, exact_tables
from lrperc.sampler import sample_configuration, sample_naive

KERNEL = Kernel(1, 0.5).normalized()
SATURATED = Kernel.table(1, [1, 32], [1e3, 1e3])


def torus_tiny_graph(box, k, beta):
    c = displacement_classes(box)
    edges, p = [], []
    for ci in range(len(c)):
        for j in range(int(c.mult[ci])):
            edges.append(c.edge(ci, j))
            p.append(edge_probability(k, beta, c.reps[ci]))
    return TinyGraph(box.N, edges, p)


class TestTail:
    def test_beta_zero_and_n_one(self):
        recs = tail_estimate(Ensemble(TorusBox(1, 64), KERNEL, 0.0, 0, 50), [1, 2, 5])
        assert [r.estimate for r in recs] == [1.0, 0.0, 0.0]
        assert all(r.ci_lo <= r.estimate <= r.ci_hi for r in recs)
        assert recs[1].params["n"] == 2 and recs[1].n_samples == 50

    def test_errors(self):
        ens = Ensemble(TorusBox(1, 64), KERNEL, 1.0, 0, 49)
        with pytest.raises(InsufficientDataError):
            tail_estimate(ens, [2])
        with pytest.raises(DomainError):
            tail_estimate(Ensemble(TorusBox(1, 64), KERNEL, 1.0, 0, 50), [])

    def test_isolation_probability(self):
        # P(|K_0| >= 2) = 1 - exp(-beta * sum_x J(x)) on the torus
        box, k, beta = TorusBox(1, 64), Kernel(1, 0.5), 0.3
        c = displacement_classes(box)
        exact = -math.expm1(-beta * float(np.dot(c.oriented_degree, class_weights(k, c))))
        M = np.array([tail_row(build_clusters(sample_naive(box, k, beta, 1, r)), [2]) for r in range(300)])
        rec = tail_estimate(M, [2])[0]
        assert abs(rec.estimate - exact) < 3 * rec.stderr

    def test_small_torus_against_enumeration(self):
        box, k, beta = TorusBox(1, 4), Kernel(1, 0.5), 0.3
        t = exact_tables(torus_tiny_graph(box, k, beta))
        ns = [1, 2, 3, 4]
        exact = [t.tail_rooted(0, n) for n in ns]
        ens = Ensemble(box, k, beta, 2, 4000)
        for rec, e in zip(tail_estimate(ens, ns), exact):
            assert abs(rec.estimate - e) <= 3 * rec.stderr + 1e-12

    def test_nonincreasing(self):
        recs = tail_estimate(Ensemble(TorusBox(1, 1024), KERNEL, 1.2, 3, 50), np.arange(1, 200))
        est = [r.estimate for r in recs]
        assert all(a >= b for a, b in zip(est, est[1:]))


class TestTwoPoint:
    def test_beta_zero(self):
        recs = two_point_avg_estimate(Ensemble(TorusBox(2, 16), Kernel(2, 1.0), 0.0, 0, 5), [0, 1, 3])
        assert [r.estimate for r in recs] == pytest.approx([1.0, 1 / 9, 1 / 49])

    def test_full_graph(self):
        recs = two_point_avg_estimate(Ensemble(TorusBox(1, 32), SATURATED, 10.0, 0, 3), [1, 5, 15])
        assert [r.estimate for r in recs] == pytest.approx([1.0, 1.0, 1.0])

    def test_free_box_whole_volume(self):
        box = TorusBox(1, 128, "free")
        for r in range(5):
            f = build_clusters(sample_configuration(box, KERNEL, 1.3, 9, r))
            s = f.sizes.astype(float)
            assert two_point_row(f, [box.L - 1])[0] == pytest.approx((s ** 2).sum() / box.N ** 2)

    def test_normalizer(self):
        assert window_normalizer(TorusBox(2, 8), 1) == 64 * 9
        assert window_normalizer(TorusBox(1, 4, "free"), 1) == 4 + 3 + 3


class TestTypicalMax:
    def test_beta_zero(self):
        assert m_typical_estimate(Ensemble(TorusBox(1, 32), KERNEL, 0.0, 0, 100)) == 2

    def test_saturated(self):
        assert m_typical_estimate(Ensemble(TorusBox(1, 32), SATURATED, 10.0, 0, 100)) == 33

    def test_needs_replicas(self):
        with pytest.raises(InsufficientDataError):
            m_typical_estimate(Ensemble(TorusBox(1, 32), KERNEL, 1.0, 0, 99))

    def test_matches_exact_typical_max(self):
        box, k, beta = TorusBox(1, 4), Kernel(1, 0.5), 0.3
        exact = exact_tables(torus_tiny_graph(box, k, beta)).typical_max()
        win = np.arange(box.N)
        samples = [window_stats(build_clusters(sample_naive(box, k, beta, 5, r)), win).max_in_window
                   for r in range(100_000)]
        assert m_typical_estimate(np.array(samples)) == exact == 3

    def test_definition_on_samples(self):
        # P(>=1) = 1, P(>=2) = 0.4 > 1/e, P(>=3) = 0.3 <= 1/e
        assert typical_max_from_samples([1] * 6 + [3] * 3 + [2]) == 3
        assert typical_max_from_samples([5] * 100) == 6


class TestBootstrap:
    def test_coverage(self):
        rng = np.random.default_rng(0)
        hits = 0
        for trial in range(200):
            x = rng.exponential(2.0, size=(80, 1))
            lo, hi = bootstrap_ci(x, 0.95, 500, seed=trial)
            hits += lo[0] <= 2.0 <= hi[0]
        assert hits >= 180

    def test_records_contain_estimate(self):
        M = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        for rec in records_from_matrix("q", M, [1, 2], {"L": 8}):
            assert rec.ci_lo <= rec.estimate <= rec.ci_hi
            assert rec.n_samples == 3


class TestFits:
    def test_exact_power_law(self):
        x = np.arange(10, 200, dtype=float)
        f = exponent_fit(x, 3 * x ** -0.3)
        assert f.exponent == pytest.approx(0.3, abs=1e-6)
        assert f.intercept == pytest.approx(math.log(3), abs=1e-6)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(1)
        x = np.logspace(1, 3, 40)
        f = exponent_fit(x, x ** -0.3 * (1 + 0.01 * rng.standard_normal(x.size)))
        assert f.ci_lo <= 0.3 <= f.ci_hi
        assert f.ci_hi - f.ci_lo < 0.05

    def test_constant(self):
        assert exponent_fit(np.arange(1, 10), np.full(9, 0.5)).exponent == pytest.approx(0.0, abs=1e-12)

    def test_replica_bootstrap(self):
        rng = np.random.default_rng(2)
        x = np.arange(10, 50, dtype=float)
        R = x ** -0.5 * rng.exponential(1.0, size=(400, x.size))
        f = exponent_fit(x, R.mean(axis=0), replicas=R)
        assert f.method == "replica-bootstrap"
        assert f.ci_lo - 0.05 <= 0.5 <= f.ci_hi + 0.05

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            exponent_fit([1, 2, 3], [1, 1, 1])
        with pytest.raises(DomainError):
            exponent_fit([1, 2, 3, 4], [1, 0.5, 0, 0.1])

    def test_window(self):
        lo, hi = fit_window(2 ** 14)
        assert lo == 10 and hi == pytest.approx(2 ** (14 * 0.8) / 10)
        f = exponent_fit(np.arange(1, 100), np.arange(1, 100) ** -0.5, (10, 20))
        assert f.n_points == 11 and f.window == (10, 20)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 2.0), st.floats(0.1, 10.0))
    def test_recovers_any_exponent(self, theta, c):
        x = np.arange(5, 60, dtype=float)
        assert exponent_fit(x, c * x ** -theta).exponent == pytest.approx(theta, abs=1e-8)


class TestBoundAudit:
    def _fit(self, v):
        return FitResult(v, 0.0, v - 0.01, v + 0.01, (10, 100), 20, "test")

    def test_reference_values(self):
        a = bound_audit(1, 0.5, self._fit(0.31), self._fit(0.40))
        rows = {r.name: r for r in a.rows}
        assert rows["tail_exponent"].bound == pytest.approx(0.2)
        assert rows["two_point_decay"].bound == pytest.approx(1 / 3)
        assert rows["tail_exponent"].predicted == pytest.approx(1 / 3)
        assert a.passed

    def test_fabricated_failure(self):
        a = bound_audit(1, 0.5, 0.1, 0.4)
        assert not a.passed
        assert not {r.name: r for r in a.rows}["tail_exponent"].passed

    def test_missing_fit(self):
        with pytest.raises(DomainError):
            bound_audit(1, 0.5, None, 0.4)


class TestBetaC:
    def test_thresholds_are_exact(self):
        box = TorusBox(1, 512)
        thr = box.N ** 0.75
        ts = replica_thresholds(box, KERNEL, 3, 8, 4.0, thr)
        for r, t in enumerate(ts):
            if not np.isfinite(t):
                continue
            above = build_clusters(sample_configuration(box, KERNEL, t * (1 + 1e-9), 3, r))
            below = build_clusters(sample_configuration(box, KERNEL, t * (1 - 1e-9), 3, r))
            assert above.largest >= thr > below.largest

    def test_crossing_fraction_monotone(self):
        ts = replica_thresholds(TorusBox(1, 256), KERNEL, 1, 50, 4.0, 256 ** 0.75)
        d = [crossing_fraction(ts, b) for b in np.linspace(0, 4, 41)]
        assert all(a <= b for a, b in zip(d, d[1:]))

    def test_bisection(self):
        ts = np.array([1.0, 2.0, 3.0, 4.0])
        assert bisect_crossing(ts, 0.0, 10.0) == pytest.approx(2.0, rel=1e-6)
        with pytest.raises(SearchError):
            bisect_crossing(ts, 0.0, 1.5)
        with pytest.raises(SearchError):
            bisect_crossing(ts, 2.5, 10.0)

    def test_search_small_sizes(self):
        res = beta_c_search(Kernel(1, 0.5), [256, 512, 1024], n_replicas=100, seed=4)
        assert res.beta_hat > 0.5
        assert len(res.crossings) == 3
        assert all(c.ci_lo <= c.beta <= c.ci_hi for c in res.crossings)
        assert res.to_dict()["beta_hat"] == res.beta_hat

    def test_search_errors(self):
        with pytest.raises(DomainError):
            beta_c_search(Kernel(1, 0.5), [256])
        with pytest.raises(SearchError):
            beta_c_search(Kernel(1, 0.5), [256, 512], n_replicas=50, beta_hi=0.3)

    def test_susceptibility_scan(self):
        betas = np.linspace(0.5, 2.5, 9)
        chi, peak = susceptibility_scan(TorusBox(1, 512), KERNEL, betas, 20)
        assert chi.shape == betas.shape and peak in betas
        assert 0.5 < peak < 2.5
