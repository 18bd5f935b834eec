"""Good weights, ghost fields, two-arm events and the exploration martingale.

Everything here is for translation-invariant models on a torus, where a
weight or probability is a function of the displacement class. For an edge
``e`` with probability ``p`` and weight ``w`` write ``r = sqrt(p / (1 - p))``.
The w-fluctuation of a cluster ``K`` sums ``sqrt(w) * r`` over closed edges
touching ``K`` and subtracts ``sqrt(w) / r`` over its open edges; it is the
terminal value of a martingale obtained by querying touching edges one at a
time, whose quadratic variation ends at ``w(E(K))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .clusters import ClusterForest
from .errors import DomainError, InsufficientDataError
from .kernel import (Kernel, TorusBox, DisplacementClasses, class_probabilities,
                     class_weights, displacement_classes, exponent_bounds)
from .rng import derive_key, stream_key, uniform_open

MIN_AUDIT_REPLICAS = 100


def _require_torus(box: TorusBox):
    if not box.is_torus:
        raise DomainError("translation-invariant weights need a torus")


def class_index_table(classes: DisplacementClasses) -> np.ndarray:
    """Class of every torus displacement id ``t`` (``-1`` for ``t = 0``)."""
    box = classes.box
    _require_torus(box)
    out = np.full(box.N, -1, dtype=np.int64)
    pos = box.ids(classes.reps % box.L)
    neg = box.ids((-classes.reps) % box.L)
    out[pos] = np.arange(len(classes))
    out[neg] = np.arange(len(classes))
    return out


def per_displacement(classes: DisplacementClasses, values) -> np.ndarray:
    """Expand per-class values to all ``N`` displacement ids (zero at ``t = 0``)."""
    idx = class_index_table(classes)
    out = np.zeros(idx.size)
    out[idx >= 0] = np.asarray(values, dtype=float)[idx[idx >= 0]]
    return out


@dataclass(frozen=True)
class GoodWeight:
    """Translation-invariant weights with ``sum_c w_c * deg_c = 1``.

    ``deg_c`` is the number of oriented edges at a vertex in class ``c``,
    so the weights of the oriented edges leaving any vertex sum to one.
    """

    box: TorusBox
    values: np.ndarray

    def __post_init__(self):
        _require_torus(self.box)
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0):
            raise DomainError("weights must be nonnegative")
        deg = displacement_classes(self.box).oriented_degree
        if v.shape != deg.shape:
            raise DomainError("one weight per displacement class is required")
        total = float(np.dot(v, deg))
        if not total > 0:
            raise DomainError("weights must not vanish identically")
        object.__setattr__(self, "values", v / total)

    @classmethod
    def from_kernel(cls, kernel: Kernel, box: TorusBox, periodized: bool = False):
        """Weights proportional to ``J`` (the default)."""
        return cls(box, class_weights(kernel, displacement_classes(box), periodized))

    @classmethod
    def nearest_neighbour(cls, box: TorusBox):
        classes = displacement_classes(box)
        return cls(box, (np.abs(classes.reps).sum(axis=1) == 1).astype(float))

    @classmethod
    def from_displacements(cls, box: TorusBox, table):
        """Weights from a per-displacement-id table (must be symmetric)."""
        classes = displacement_classes(box)
        return cls(box, np.asarray(table, dtype=float)[box.ids(classes.reps % box.L)])

    def table(self) -> np.ndarray:
        return per_displacement(displacement_classes(self.box), self.values)

    def total(self, edge_classes) -> float:
        return float(self.values[np.asarray(edge_classes)].sum())


@dataclass(frozen=True)
class GhostParams:
    weight: GoodWeight
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("ghost intensity h must be positive")


def ghost_hit_probability(weight_total, h: float):
    """Chance that a set of total weight ``w(A)`` contains a green edge: ``1 - exp(-h w(A))``."""
    return -np.expm1(-h * np.asarray(weight_total, dtype=float))


def sample_ghost_field(params: GhostParams, seed: int, replica_index: int = 0) -> np.ndarray:
    """Explicit green edges (canonical pairs); a test oracle for small boxes only."""
    box = params.weight.box
    if box.N > 4096:
        raise DomainError("explicit ghost sampling is limited to N <= 4096")
    q = -np.expm1(-params.h * params.weight.table())
    key = np.uint64(derive_key(stream_key(seed, replica_index), np.uint64(0x6057)))
    return _green_pairs(key, q, box.L, box.d)


@njit(cache=True)
def _green_pairs(key, q, L, d):
    N = L ** d
    out = []
    for a in range(N):
        for b in range(a + 1, N):
            t = 0
            ra = a
            rb = b
            mul = 1
            for i in range(d):
                t += ((rb % L - ra % L) % L) * mul
                ra //= L
                rb //= L
                mul *= L
            if uniform_open(key, np.uint64(a * N + b)) < q[t]:
                out.append((a, b))
    res = np.empty((len(out), 2), dtype=np.int64)
    for i in range(len(out)):
        res[i, 0] = out[i][0]
        res[i, 1] = out[i][1]
    return res


# ---------------------------------------------------------------------------
# two-arm events

def two_arm_indicator(forest: ClusterForest, e, n: int) -> bool:
    """Endpoints of ``e`` in distinct clusters, each with at least ``n`` vertices."""
    x, y = int(e[0]), int(e[1])
    if forest.connected(x, y):
        return False
    return bool(forest.cluster_size_of(x) >= n and forest.cluster_size_of(y) >= n)


@njit(cache=True)
def _diff_id(x, y, L, d):
    t = 0
    mul = 1
    for i in range(d):
        t += ((y % L - x % L) % L) * mul
        x //= L
        y //= L
        mul *= L
    return t


@njit(cache=True)
def _same_cluster_counts(members, starts, L, d, N):
    """Ordered same-cluster pair counts by displacement id, summed over the given clusters."""
    out = np.zeros(N, dtype=np.int64)
    for k in range(starts.size - 1):
        a, b = starts[k], starts[k + 1]
        for i in range(a, b):
            for j in range(a, b):
                if i != j:
                    out[_diff_id(members[i], members[j], L, d)] += 1
    return out


@njit(cache=True)
def _cluster_pair_sums(members, starts, table, L, d):
    """Per cluster: sum of ``table[y - x]`` over ordered pairs ``x != y``."""
    out = np.zeros(starts.size - 1)
    for k in range(starts.size - 1):
        a, b = starts[k], starts[k + 1]
        s = 0.0
        for i in range(a, b):
            for j in range(i + 1, b):
                s += table[_diff_id(members[i], members[j], L, d)]
                s += table[_diff_id(members[j], members[i], L, d)]
        out[k] = s
    return out


def _autocorr(mask, box):
    """``C[t] = sum_x mask[x] mask[x + t]`` by FFT, indexed by displacement id."""
    shape = (box.L,) * box.d
    f = np.fft.rfftn(mask.reshape(shape).astype(float))
    c = np.fft.irfftn(f.conj() * f, s=shape, axes=tuple(range(box.d)))
    return np.rint(c).reshape(-1)


def _fft_is_cheaper(size, box):
    return size * size > 8 * box.N * max(1.0, math.log2(box.N))


def _grouped(forest, roots):
    """Member lists of the given clusters as a flat array plus offsets."""
    keep = np.isin(forest.parent, roots)
    verts = np.flatnonzero(keep)
    order = np.argsort(forest.parent[verts], kind="stable")
    verts = verts[order]
    labels = forest.parent[verts]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(labels)) + 1, [verts.size]])
    return verts.astype(np.int64), starts.astype(np.int64), labels[starts[:-1]]


def same_cluster_displacements(forest: ClusterForest, roots) -> np.ndarray:
    """Ordered pairs ``(x, x + t)``, ``x != x + t``, within the listed clusters, per ``t``."""
    box = forest.box
    roots = np.asarray(roots, dtype=np.int64)
    out = np.zeros(box.N)
    if roots.size == 0:
        return out
    sizes = forest.root_size[roots]
    big = _fft_is_cheaper(sizes, box)
    for r in roots[big]:
        c = _autocorr(forest.parent == r, box)
        c[0] = 0
        out += c
    small = roots[~big]
    if small.size:
        members, starts, _ = _grouped(forest, small)
        out += _same_cluster_counts(members, starts, box.L, box.d, box.N)
    return out


def cluster_pair_sums(forest: ClusterForest, table, roots=None) -> tuple[np.ndarray, np.ndarray]:
    """``(roots, sums)`` with ``sums[k] = sum_{x != y in K} table[y - x]`` over ordered pairs."""
    box = forest.box
    table = np.asarray(table, dtype=float)
    roots = forest.roots if roots is None else np.asarray(roots, dtype=np.int64)
    sums = np.zeros(roots.size)
    if roots.size == 0:
        return roots, sums
    sizes = forest.root_size[roots]
    big = _fft_is_cheaper(sizes, box)
    for k in np.flatnonzero(big):
        c = _autocorr(forest.parent == roots[k], box)
        c[0] = 0
        sums[k] = float(np.dot(c, table))
    small = np.flatnonzero(~big & (sizes > 1))
    if small.size:
        members, starts, labels = _grouped(forest, roots[small])
        vals = _cluster_pair_sums(members, starts, table, box.L, box.d)
        pos = {int(r): i for i, r in enumerate(labels)}
        for k in small:
            sums[k] = vals[pos[int(roots[k])]]
    return roots, sums


def two_arm_profile(forest: ClusterForest, mask) -> np.ndarray:
    """Per displacement ``t``: number of ``x`` with ``mask[x]``, ``mask[x+t]`` and ``x`` not connected to ``x+t``."""
    mask = np.asarray(mask, dtype=bool)
    total = _autocorr(mask, forest.box)
    roots = np.unique(forest.parent[mask])
    total -= same_cluster_displacements(forest, roots)
    total[0] = 0
    return total


def touching_weight(forest: ClusterForest, table) -> np.ndarray:
    """Per vertex: total ``table`` weight of edges touching its cluster.

    ``table`` is indexed by displacement id; the weight of ``E(K)`` is
    ``|K| * sum_t table[t] - (1/2) * sum over ordered pairs in K``.
    """
    table = np.asarray(table, dtype=float)
    row = table.sum()
    roots, sums = cluster_pair_sums(forest, table)
    per_root = np.zeros(forest.N)
    per_root[roots] = forest.root_size[roots] * row - 0.5 * sums
    return per_root[forest.parent]


# ---------------------------------------------------------------------------
# fluctuation and exploration

def _check_open_interval(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("touching edges need probabilities strictly between 0 and 1")
    return p


def fluctuation_graph(edges, p, w, is_open, K) -> float:
    """w-fluctuation of ``K`` on an explicit finite graph.

    ``edges`` lists all potential edges with probabilities ``p``, weights
    ``w`` and open flags ``is_open``; ``K`` is a vertex set whose subgraph
    consists of the open edges with both endpoints in ``K``.
    """
    edges = np.asarray(edges).reshape(-1, 2)
    K = np.asarray(sorted(set(np.atleast_1d(K).tolist())))
    inK = np.isin(edges, K)
    touching = inK.any(axis=1)
    inside_open = inK.all(axis=1) & np.asarray(is_open, dtype=bool)
    p = np.asarray(p, dtype=float)
    pt = _check_open_interval(p[touching])
    r = np.sqrt(pt / (1 - pt))
    sw = np.sqrt(np.asarray(w, dtype=float)[touching])
    op = inside_open[touching]
    return float(np.sum(np.where(op, -sw / r, sw * r)))


@dataclass
class TorusModel:
    """Per-displacement probabilities and weights for fluctuation computations."""

    box: TorusBox
    p_table: np.ndarray
    w_table: np.ndarray

    @classmethod
    def build(cls, kernel: Kernel, beta: float, weight: GoodWeight, periodized: bool = False):
        box = weight.box
        classes = displacement_classes(box)
        p = class_probabilities(kernel, beta, classes, periodized)
        _check_open_interval(p)
        return cls(box, per_displacement(classes, p), weight.table())

    @property
    def r_table(self):
        out = np.zeros_like(self.p_table)
        nz = self.p_table > 0
        out[nz] = np.sqrt(self.p_table[nz] / (1 - self.p_table[nz]))
        return out


def _open_edges_by_root(forest, edges):
    return forest.parent[np.asarray(edges)[:, 0]] if len(edges) else np.zeros(0, dtype=np.int64)


def fluctuation(forest: ClusterForest, edges, model: TorusModel, vertices=None) -> np.ndarray:
    """Closed-form ``h_{p,w}(K_v)`` for each ``v`` in ``vertices`` (default: every root).

    ``edges`` are the configuration's open edges.
    """
    box = forest.box
    _require_torus(box)
    r = model.r_table
    sw = np.sqrt(model.w_table)
    g = sw * r
    G = g.sum()
    roots = forest.roots if vertices is None else np.unique(forest.parent[np.asarray(vertices)])
    roots, pair_g = cluster_pair_sums(forest, g, roots)
    out = forest.root_size[roots] * G - 0.5 * pair_g
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        t = np.array([_diff_id(a, b, box.L, box.d) for a, b in edges]) if box.d > 1 else (edges[:, 1] - edges[:, 0]) % box.L
        corr = sw[t] * (r[t] + 1.0 / r[t])
        lab = forest.parent[edges[:, 0]]
        per_root = np.bincount(lab, weights=corr, minlength=forest.N)
        out -= per_root[roots]
    if vertices is None:
        return out
    lookup = np.zeros(forest.N)
    lookup[roots] = out
    return lookup[forest.parent[np.asarray(vertices)]]


def touching_total(forest: ClusterForest, model: TorusModel, vertices) -> np.ndarray:
    """``w(E(K_v))`` for each ``v`` in ``vertices``."""
    roots = np.unique(forest.parent[np.asarray(vertices)])
    roots, pair_w = cluster_pair_sums(forest, model.w_table, roots)
    vals = forest.root_size[roots] * model.w_table.sum() - 0.5 * pair_w
    lookup = np.zeros(forest.N)
    lookup[roots] = vals
    return lookup[forest.parent[np.asarray(vertices)]]


@dataclass
class ExplorationTrace:
    """Edges queried while exploring one cluster, with martingale values.

    ``Z[i]`` and ``Q[i]`` are the values after ``i`` queries, so ``Z[0] = Q[0] = 0``.
    """

    edges: np.ndarray
    status: np.ndarray
    Z: np.ndarray
    Q: np.ndarray

    @property
    def T(self) -> int:
        return int(self.edges.shape[0])

    @property
    def Z_T(self) -> float:
        return float(self.Z[-1])

    @property
    def Q_T(self) -> float:
        return float(self.Q[-1])


@njit(cache=True)
def _explore(v, indptr, nbrs, p_table, w_table, L, d, N, keep_trace):
    processed = np.zeros(N, dtype=np.bool_)
    queued = np.zeros(N, dtype=np.bool_)
    queue = np.empty(N, dtype=np.int64)
    head = 0
    tail = 0
    queue[tail] = v
    tail += 1
    queued[v] = True
    cap = 1024 if keep_trace else 1
    qe = np.empty((cap, 2), dtype=np.int64)
    qs = np.empty(cap, dtype=np.bool_)
    zs = np.empty(cap + 1)
    qs_w = np.empty(cap + 1)
    zs[0] = 0.0
    qs_w[0] = 0.0
    z = 0.0
    q = 0.0
    T = 0
    while head < tail:
        x = queue[head]
        head += 1
        lo = indptr[x]
        hi = indptr[x + 1]
        k = lo
        for y in range(N):
            if y == x or processed[y]:
                continue
            while k < hi and nbrs[k] < y:
                k += 1
            is_open = k < hi and nbrs[k] == y
            t = _diff_id(x, y, L, d)
            p = p_table[t]
            w = w_table[t]
            rt = math.sqrt(p / (1.0 - p))
            if is_open:
                z -= math.sqrt(w) / rt
                if not queued[y]:
                    queued[y] = True
                    queue[tail] = y
                    tail += 1
            else:
                z += math.sqrt(w) * rt
            q += w
            if keep_trace:
                if T + 1 >= cap:
                    cap *= 2
                    qe2 = np.empty((cap, 2), dtype=np.int64)
                    qs2 = np.empty(cap, dtype=np.bool_)
                    z2 = np.empty(cap + 1)
                    q2 = np.empty(cap + 1)
                    qe2[:T] = qe[:T]
                    qs2[:T] = qs[:T]
                    z2[:T + 1] = zs[:T + 1]
                    q2[:T + 1] = qs_w[:T + 1]
                    qe, qs, zs, qs_w = qe2, qs2, z2, q2
                qe[T, 0] = min(x, y)
                qe[T, 1] = max(x, y)
                qs[T] = is_open
                zs[T + 1] = z
                qs_w[T + 1] = q
            T += 1
        processed[x] = True
    if not keep_trace:
        zs = np.array([0.0, z])
        qs_w = np.array([0.0, q])
        return qe[:0], qs[:0], zs, qs_w, T
    return qe[:T], qs[:T], zs[:T + 1], qs_w[:T + 1], T


def _csr(N, edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    both = np.concatenate([edges, edges[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    indptr = np.zeros(N + 1, dtype=np.int64)
    np.add.at(indptr, both[:, 0] + 1, 1)
    return np.cumsum(indptr), both[:, 1].copy()


def explore_cluster(cfg, v: int, model: TorusModel, keep_trace: bool = True) -> ExplorationTrace:
    """Query every edge touching ``K_v`` once, in breadth-first vertex order.

    Vertices leave the queue in discovery order; at each one the not yet
    queried edges are taken in increasing partner id.
    """
    box = cfg.box
    _require_torus(box)
    if not 0 <= v < box.N:
        raise DomainError("start vertex outside the box")
    _check_open_interval(model.p_table[1:])
    indptr, nbrs = _csr(box.N, cfg.edges)
    qe, qs, zs, qw, T = _explore(int(v), indptr, nbrs, model.p_table, model.w_table,
                                 box.L, box.d, box.N, keep_trace)
    if not keep_trace:
        return ExplorationTrace(np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=bool), zs, qw)
    return ExplorationTrace(qe, qs, zs, qw)


# ---------------------------------------------------------------------------
# two-ghost audits

@dataclass(frozen=True)
class TwoGhostAudit:
    variant: str
    n: float
    lhs: float
    rhs: float
    A: float | None
    theta: float | None
    replicas: int

    @property
    def margin(self) -> float:
        return math.inf if self.lhs == 0 else self.rhs / self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def to_dict(self) -> dict:
        return {"variant": self.variant, "n": self.n, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "A": self.A, "theta": self.theta,
                "replicas": self.replicas, "pass": self.passed}


def measured_prefactor(tail: np.ndarray, theta: float) -> float:
    """Smallest ``A`` with ``tail[n-1] <= A n^-theta`` for all tabulated ``n``."""
    tail = np.asarray(tail, dtype=float)
    n = np.arange(1, tail.size + 1)
    return float(np.max(tail * n ** theta))


def _check_ensemble(ensemble):
    if ensemble.n_replicas < MIN_AUDIT_REPLICAS:
        raise InsufficientDataError(
            f"two-ghost audits need at least {MIN_AUDIT_REPLICAS} replicas, got {ensemble.n_replicas}")
    _require_torus(ensemble.box)


def _tables(ensemble):
    classes = displacement_classes(ensemble.box)
    J = class_weights(ensemble.kernel, classes, ensemble.periodized)
    p = class_probabilities(ensemble.kernel, ensemble.beta, classes, ensemble.periodized)
    odds = np.expm1(ensemble.beta * J)  # p / (1 - p)
    return per_displacement(classes, J), per_displacement(classes, p), per_displacement(classes, odds)


def two_ghost_audit(ensemble, ns, variant: str = "improved", *, theta: float | None = None,
                    A: float | None = None, weight: GoodWeight | None = None) -> list[TwoGhostAudit]:
    """Audit the two-ghost inequality on an ensemble, one result per ``n`` (or ``lambda``).

    ``improved``: ``sum_t (p_t/(1-p_t)) P(S'_t,n)^2 <= 10000 A^2 / ((1-2 theta)^2 n^(1+2 theta))``.
    ``weighted``: ``sum_t sqrt(w_t p_t/(1-p_t)) P(S'_t,n) <= 95 A n^(-(1+2 theta)/2) / (1-2 theta)``
    for a good weight (default proportional to ``J``; ``weight="optimized"`` uses the
    ensemble-optimal weight).
    ``kernel``: ``sum_t sqrt(J_t (e^(beta J_t) - 1)) P(S_t,lambda) <= 42 / sqrt(lambda)``, where
    clusters must touch ``J``-weight at least ``lambda``.

    ``theta`` defaults to ``(d - alpha)/(2d + alpha)`` and ``A`` to the smallest
    prefactor consistent with the ensemble's vertex-averaged tail.
    """
    _check_ensemble(ensemble)
    box = ensemble.box
    ns = [float(x) for x in np.atleast_1d(ns)]
    J_t, p_t, odds_t = _tables(ensemble)
    R = ensemble.n_replicas
    if variant in ("improved", "weighted"):
        if theta is None:
            theta = exponent_bounds(box.d, ensemble.kernel.alpha).theta
        if not 0 <= theta < 0.5:
            raise DomainError("theta must lie in [0, 1/2)")
        tail_sum = np.zeros(box.N)
        prob = np.zeros((len(ns), box.N))
        for f in ensemble.forests():
            sizes = f.vertex_sizes
            tail_sum += np.bincount(sizes, minlength=box.N + 1)[::-1].cumsum()[::-1][1:]
            for i, n in enumerate(ns):
                mask = sizes >= n
                if mask.any():
                    prob[i] += two_arm_profile(f, mask)
        tail = tail_sum / (R * box.N)
        prob /= R * box.N
        if A is None:
            A = measured_prefactor(tail, theta)
        out = []
        for i, n in enumerate(ns):
            if variant == "improved":
                lhs = float(np.sum(odds_t * prob[i] ** 2))
                rhs = 10000 * A ** 2 / ((1 - 2 * theta) ** 2 * n ** (1 + 2 * theta))
            else:
                if weight == "optimized":
                    a = odds_t * prob[i] ** 2
                    wt = a / a.sum() if a.sum() > 0 else GoodWeight.from_kernel(ensemble.kernel, box).table()
                else:
                    wt = (weight or GoodWeight.from_kernel(ensemble.kernel, box, ensemble.periodized)).table()
                lhs = float(np.sum(np.sqrt(wt * odds_t) * prob[i]))
                rhs = 95 * A / (1 - 2 * theta) * n ** (-(1 + 2 * theta) / 2)
            out.append(TwoGhostAudit(variant, n, lhs, rhs, A, theta, R))
        return out
    if variant == "kernel":
        prob = np.zeros((len(ns), box.N))
        for f in ensemble.forests():
            wt = touching_weight(f, J_t)
            for i, lam in enumerate(ns):
                mask = wt >= lam
                if mask.any():
                    prob[i] += two_arm_profile(f, mask)
        prob /= R * box.N
        coef = np.sqrt(J_t * odds_t)
        return [TwoGhostAudit(variant, lam, float(np.sum(coef * prob[i])), 42 / math.sqrt(lam),
                              None, None, R) for i, lam in enumerate(ns)]
    raise DomainError(f"unknown audit variant {variant!r}")
