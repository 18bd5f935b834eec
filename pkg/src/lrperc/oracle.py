"""Exact answers on tiny graphs by enumerating every edge configuration.

Configurations are bitmasks: bit ``i`` set means edge ``i`` is open. An
event is a boolean array of length ``2^|E|`` indexed by mask. Increasing
events compose under disjoint occurrence by a subset convolution: ``A ∘ B``
holds at ``ω`` iff some ``W ⊆ ω`` has ``W ∈ A`` and ``ω \\ W ∈ B``.

The ``verify_*`` functions check the maximum-cluster inequalities exactly
and return lists of violation records (empty when everything holds).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gamma

from .errors import DomainError, ResourceError
from .partition import partition_k

MAX_EDGES = 14
MAX_VERTICES = 12
TOL = 1e-9


@dataclass
class TinyGraph:
    """Simple graph on ``0..n-1`` with per-edge probabilities and a window."""

    n: int
    edges: list
    p: np.ndarray
    window: tuple = None
    name: str = ""

    def __post_init__(self):
        self.edges = [tuple(sorted((int(a), int(b)))) for a, b in self.edges]
        if len(set(self.edges)) != len(self.edges) or any(a == b for a, b in self.edges):
            raise DomainError("tiny graphs must be simple")
        if any(not (0 <= a < self.n and 0 <= b < self.n) for a, b in self.edges):
            raise DomainError("edge endpoint outside the vertex range")
        if self.n > MAX_VERTICES:
            raise ResourceError(f"at most {MAX_VERTICES} vertices")
        if len(self.edges) > MAX_EDGES:
            raise ResourceError(f"exact enumeration is limited to {MAX_EDGES} edges")
        p = np.broadcast_to(np.asarray(self.p, dtype=float), (len(self.edges),)).copy()
        if np.any((p < 0) | (p > 1)):
            raise DomainError("edge probabilities must lie in [0, 1]")
        self.p = p
        self.window = tuple(range(self.n)) if self.window is None else tuple(sorted(set(self.window)))
        if not self.window:
            raise DomainError("window must be nonempty")

    @property
    def m(self) -> int:
        return len(self.edges)

    def with_p(self, p) -> "TinyGraph":
        return TinyGraph(self.n, self.edges, p, self.window, self.name)

    def with_window(self, window) -> "TinyGraph":
        return TinyGraph(self.n, self.edges, self.p, window, self.name)

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "edges": self.edges,
                "p": [round(float(x), 12) for x in self.p], "window": list(self.window)}


# ---------------------------------------------------------------------------
# enumeration

def _bits(m):
    masks = np.arange(2 ** m, dtype=np.int64)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(bool)


def enumerate_measure(g: TinyGraph) -> np.ndarray:
    """Probability of every configuration mask."""
    bits = _bits(g.m)
    return np.prod(np.where(bits, g.p, 1 - g.p), axis=1) if g.m else np.ones(1)


def cluster_labels(g: TinyGraph) -> np.ndarray:
    """``labels[mask, v]``: smallest vertex in the cluster of ``v`` under ``mask``."""
    bits = _bits(g.m)
    lab = np.tile(np.arange(g.n), (bits.shape[0], 1))
    changed = True
    while changed:
        changed = False
        for i, (a, b) in enumerate(g.edges):
            on = bits[:, i]
            lo = np.minimum(lab[:, a], lab[:, b])
            upd = on & ((lab[:, a] != lo) | (lab[:, b] != lo))
            if upd.any():
                changed = True
                lab[upd, a] = lo[upd]
                lab[upd, b] = lo[upd]
        # propagate labels to fixed point through already-labelled vertices
        root = lab
        new = np.take_along_axis(root, root, axis=1)
        if np.any(new != lab):
            lab = new
            changed = True
    return lab


@dataclass
class ExactTables:
    """Per-configuration observables of one tiny graph."""

    graph: TinyGraph
    prob: np.ndarray
    labels: np.ndarray
    kmax: np.ndarray
    rooted: np.ndarray = field(repr=False)  # rooted[mask, u] = |K_u ∩ Λ|

    def tail_max(self, lam) -> float:
        return float(self.prob[self.kmax >= lam].sum())

    def tail_rooted(self, u, lam) -> float:
        return float(self.prob[self.rooted[:, u] >= lam].sum())

    def typical_max(self) -> int:
        """``min{n >= 0 : P(|K_max(Λ)| >= n) <= 1/e}``."""
        n = 0
        while self.tail_max(n) > math.exp(-1):
            n += 1
        return n

    def connection(self, u, v) -> float:
        return float(self.prob[self.labels[:, u] == self.labels[:, v]].sum())


def exact_tables(g: TinyGraph) -> ExactTables:
    prob = enumerate_measure(g)
    lab = cluster_labels(g)
    win = np.asarray(g.window)
    lw = lab[:, win]
    rooted = (lab[:, :, None] == lw[:, None, :]).sum(axis=2)
    kmax = rooted[:, win].max(axis=1)
    return ExactTables(g, prob, lab, kmax, rooted)


def maxcluster_tail_exact(g: TinyGraph, lam) -> float:
    return exact_tables(g).tail_max(lam)


def rooted_tail_exact(g: TinyGraph, u: int, lam) -> float:
    return exact_tables(g).tail_rooted(u, lam)


# ---------------------------------------------------------------------------
# events and disjoint occurrence

def event_from_predicate(g: TinyGraph, pred) -> np.ndarray:
    """Event array from ``pred(mask) -> bool``."""
    return np.fromiter((bool(pred(m)) for m in range(2 ** g.m)), dtype=bool, count=2 ** g.m)


def is_increasing(event) -> bool:
    event = np.asarray(event, dtype=bool)
    m = int(round(math.log2(event.size)))
    masks = np.arange(event.size)
    for i in range(m):
        lo = masks[(masks >> i) & 1 == 0]
        if np.any(event[lo] & ~event[lo | (1 << i)]):
            return False
    return True


@njit(cache=True)
def _box(a, b):
    size = a.size
    out = np.zeros(size, dtype=np.bool_)
    for w in range(size):
        # enumerate submasks s of w, including 0 and w itself
        s = w
        while True:
            if a[s] and b[w ^ s]:
                out[w] = True
                break
            if s == 0:
                break
            s = (s - 1) & w
    return out


def disjoint_occurrence(*events) -> np.ndarray:
    """Event ``A_1 ∘ ... ∘ A_k`` for increasing events given as mask-indexed arrays."""
    if not events:
        raise DomainError("need at least one event")
    arrs = [np.asarray(e, dtype=bool) for e in events]
    for e in arrs:
        if e.size != arrs[0].size:
            raise DomainError("events live on different configuration spaces")
        if not is_increasing(e):
            raise DomainError("disjoint occurrence is only implemented for increasing events")
    out = arrs[0]
    for e in arrs[1:]:
        out = _box(out, e)
    return out


def disjoint_occurrence_exact(g: TinyGraph, events) -> float:
    prob = enumerate_measure(g)
    return float(prob[disjoint_occurrence(*events)].sum())


def probability(g: TinyGraph, event) -> float:
    return float(enumerate_measure(g)[np.asarray(event, dtype=bool)].sum())


def random_increasing_event(m: int, rng: np.random.Generator, n_generators: int | None = None) -> np.ndarray:
    """Up-closure of a few random masks."""
    size = 2 ** m
    k = n_generators or int(rng.integers(1, 4))
    gens = rng.integers(0, size, size=k)
    masks = np.arange(size)
    ev = np.zeros(size, dtype=bool)
    for gm in gens:
        ev |= (masks & gm) == gm
    return ev


# ---------------------------------------------------------------------------
# inequality checks

def _violation(g, check, lhs, rhs, **params):
    return {"graph": g.name, "check": check, "lhs": float(lhs), "rhs": float(rhs),
            "params": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                       for k, v in params.items()}}


def _record(out, g, check, lhs, rhs, counter=None, **params):
    if counter is not None:
        counter[0] += 1
    if lhs > rhs + TOL:
        out.append(_violation(g, check, lhs, rhs, **params))


def verify_bk(g: TinyGraph, events, counter=None) -> list:
    """``P(A_1 ∘ ... ∘ A_k) <= prod P(A_i)``."""
    prob = enumerate_measure(g)
    lhs = float(prob[disjoint_occurrence(*events)].sum())
    rhs = float(np.prod([prob[np.asarray(e)].sum() for e in events]))
    out = []
    _record(out, g, "bk", lhs, rhs, counter, k=len(events))
    return out


def verify_max_tail_iteration(g: TinyGraph, lambdas=None, ks=None, *, witnesses=True,
                              disjoint=False, tables=None, counter=None) -> list:
    """Check ``P(K_max >= 3^k λ) <= P(K_max >= λ)^(3^(k-1)+1)`` and its rooted analogue.

    Only ``k >= 1`` is checked (see notes: with ``k = 0`` the exponent is 4/3
    and the inequality fails whenever ``0 < P < 1``). With ``witnesses``,
    every configuration in the left event is given explicit disjoint
    witnesses via :func:`~lrperc.partition.partition_k`. With ``disjoint``,
    the intermediate disjoint-occurrence probability is computed too.
    """
    t = tables or exact_tables(g)
    nW = len(g.window)
    lambdas = lambdas if lambdas is not None else list(range(1, nW + 1)) + [1.5]
    out = []
    for lam in lambdas:
        if lam < 1:
            continue
        ks_here = ks if ks is not None else [k for k in range(1, 4) if 3 ** k * lam <= nW]
        for k in ks_here:
            if k < 1:
                continue
            reps = 3 ** (k - 1)
            p_lam = t.tail_max(lam)
            lhs = t.tail_max(3 ** k * lam)
            _record(out, g, "max_tail_unrooted", lhs, p_lam ** (reps + 1), counter, lam=lam, k=k)
            for u in range(g.n):
                lhs_u = t.tail_rooted(u, 3 ** k * lam)
                rhs_u = p_lam ** reps * t.tail_rooted(u, lam)
                _record(out, g, "max_tail_rooted", lhs_u, rhs_u, counter, lam=lam, k=k, u=u)
            if disjoint:
                big = t.kmax >= lam
                box = disjoint_occurrence(*([big] * (reps + 1)))
                left = t.kmax >= 3 ** k * lam
                _record(out, g, "max_tail_inclusion", float(t.prob[left & ~box].sum()), 0.0,
                        counter, lam=lam, k=k)
                _record(out, g, "max_tail_bk", float(t.prob[box].sum()), p_lam ** (reps + 1),
                        counter, lam=lam, k=k)
            if witnesses:
                out.extend(_witness_check(g, t, lam, k, counter))
    return out


def _witness_check(g, t, lam, k, counter=None):
    """Explicit disjoint witnesses for every configuration with ``K_max >= 3^k λ``."""
    out = []
    win = set(g.window)
    edges = g.edges
    need = 3 ** (k - 1) + 1
    for mask in np.flatnonzero(t.kmax >= 3 ** k * lam):
        lab = t.labels[mask]
        # the cluster realising the maximum in the window
        counts = {}
        for v in g.window:
            counts[lab[v]] = counts.get(lab[v], 0) + 1
        root = max(counts, key=lambda r: (counts[r], -r))
        open_in = [i for i, (a, b) in enumerate(edges) if (mask >> i) & 1 and lab[a] == root]
        A = [v for v in range(g.n) if lab[v] == root and v in win]
        res = partition_k([edges[i] for i in open_in], A, k)
        index = {edges[i]: i for i in open_in}
        piece_masks = [sum(1 << index[tuple(sorted(e))] for e in piece) for piece in res.pieces]
        ok = res.m >= need and all(t.kmax[pm] >= lam for pm in piece_masks)
        acc = 0
        for pm in piece_masks:
            ok &= (acc & pm) == 0 and (pm & ~mask) == 0
            acc |= pm
        # rooted: the piece containing each vertex u of the cluster witnesses |K_u ∩ Λ| >= λ
        for u in range(g.n):
            if lab[u] != root:
                continue
            if not any(t.rooted[pm, u] >= lam for pm in piece_masks
                       if any(u in e for e in (edges[i] for i in range(g.m) if (pm >> i) & 1))):
                ok = False
        if counter is not None:
            counter[0] += 1
        if not ok:
            out.append(_violation(g, "witness_construction", 1.0, 0.0, lam=lam, k=k, mask=int(mask)))
    return out


def verify_max_tightness(g: TinyGraph, factors=(1, 2, 4, 8), eps=None, *, tables=None,
                         counter=None) -> list:
    """Check the tightness bounds for ``|K_max(Λ)|`` around its typical value ``M``."""
    t = tables or exact_tables(g)
    eps = eps if eps is not None else [round(0.1 * i, 10) for i in range(1, 11)]
    M = t.typical_max()
    out = []
    for a in factors:
        if a < 1:
            raise DomainError("factor must be at least 1")
        bound = math.exp(-a / 9)
        _record(out, g, "max_large", t.tail_max(a * M), bound, counter, factor=a, M=M)
        for u in range(g.n):
            rhs = math.e * t.tail_rooted(u, M) * bound
            _record(out, g, "max_large_rooted", t.tail_rooted(u, a * M), rhs, counter,
                    factor=a, M=M, u=u)
    for e in eps:
        if not 0 < e <= 1:
            raise DomainError("epsilon must lie in (0, 1]")
        lhs = float(t.prob[t.kmax < e * M].sum())
        _record(out, g, "max_small", lhs, 27 * e, counter, eps=e, M=M)
    return out


def minimal_prefactor(t: ExactTables, u: int, theta: float) -> float:
    """Smallest ``A`` with ``P(|K_u ∩ Λ| >= n) <= A n^-theta`` for every ``n >= 1``."""
    n = np.arange(1, len(t.graph.window) + 1)
    tails = np.array([t.tail_rooted(u, k) for k in n])
    return float(np.max(tails * n ** theta))


def verify_hyperscaling_bounds(g: TinyGraph, theta: float, *, tables=None, counter=None) -> list:
    """Explicit intermediate bounds behind the hyperscaling inequality.

    For each ``u``: ``sum_{v in Λ} P(u <-> v) <= 18 e Γ(1-θ) A_u M^(1-θ)`` and the
    pointwise tail ``P(|K_u ∩ Λ| >= n) <= e A_u (18/n)^θ exp(-n / (18 M))``.
    Globally: ``M^(1+θ) <= 72 e^2 Γ(1-θ) A |Λ|`` with ``A = max_u A_u`` over ``u ∈ Λ``.
    """
    if not 0 <= theta < 1:
        raise DomainError("theta must lie in [0, 1)")
    t = tables or exact_tables(g)
    M = t.typical_max()
    G = gamma(1 - theta)
    win = g.window
    out = []
    A_all = []
    for u in range(g.n):
        A = minimal_prefactor(t, u, theta)
        if u in win:
            A_all.append(A)
        lhs = sum(t.connection(u, v) for v in win)
        _record(out, g, "two_point_sum", lhs, 18 * math.e * G * A * M ** (1 - theta), counter,
                theta=theta, u=u, M=M, A=A)
        for n in range(1, len(win) + 1):
            rhs = math.e * A * (18 / n) ** theta * math.exp(-n / (18 * M))
            _record(out, g, "rooted_tail_decay", t.tail_rooted(u, n), rhs, counter,
                    theta=theta, u=u, n=n, M=M)
    A = max(A_all)
    _record(out, g, "typical_max_growth", M ** (1 + theta),
            72 * math.e ** 2 * G * A * len(win), counter, theta=theta, M=M, A=A)
    return out


# ---------------------------------------------------------------------------
# corpus

P_GRID = tuple(round(0.1 * i, 10) for i in range(1, 10))


def atlas_graphs(max_vertices: int = 5) -> list[TinyGraph]:
    """All connected simple graphs on 2..max_vertices vertices (up to isomorphism)."""
    import networkx as nx
    from networkx.generators.atlas import graph_atlas_g

    out = []
    for i, G in enumerate(graph_atlas_g()):
        n = G.number_of_nodes()
        if n < 2 or n > max_vertices or not nx.is_connected(G):
            continue
        out.append(TinyGraph(n, sorted(G.edges()), 0.5, name=f"atlas{i}"))
    return out


def random_graphs(count: int = 200, max_vertices: int = 7, max_edges: int = MAX_EDGES,
                  seed: int = 0) -> list[TinyGraph]:
    """Random connected graphs with heterogeneous probabilities from the 0.1 grid."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, max_vertices + 1))
        # random spanning tree plus extra edges
        edges = {tuple(sorted((int(rng.integers(0, v)), v))) for v in range(1, n)}
        extra = int(rng.integers(0, max_edges - len(edges) + 1))
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in edges]
        rng.shuffle(pairs)
        edges |= set(pairs[:extra])
        edges = sorted(edges)[:max_edges] if len(edges) > max_edges else sorted(edges)
        p = rng.choice(P_GRID, size=len(edges))
        k = int(rng.integers(1, n + 1))
        window = sorted(rng.choice(n, size=k, replace=False).tolist())
        g = TinyGraph(n, edges, p, window, name=f"random{len(out)}")
        out.append(g)
    return out


def corpus(max_vertices: int = 5, n_random: int = 200, seed: int = 0):
    """Atlas graphs on the uniform p grid (whole window), then the random graphs."""
    items = []
    for g in atlas_graphs(max_vertices):
        for p in P_GRID:
            items.append(TinyGraph(g.n, g.edges, p, None, f"{g.name}/p{p}"))
    items.extend(random_graphs(n_random, seed=seed))
    return items


@dataclass
class SuiteReport:
    checks: int
    violations: list
    graphs: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return f"{len(self.violations)} violations / {self.checks} checks over {self.graphs} graphs"


def run_suite(items=None, thetas=(0.0, 0.2, 0.4), bk_events: int = 3, seed: int = 0,
              disjoint_max_edges: int = 10) -> SuiteReport:
    """Every exact check over the corpus; collects violation records."""
    items = corpus() if items is None else items
    rng = np.random.default_rng(seed)
    counter = [0]
    out = []
    for g in items:
        t = exact_tables(g)
        out += verify_max_tail_iteration(g, tables=t, counter=counter,
                                         disjoint=g.m <= disjoint_max_edges)
        out += verify_max_tightness(g, tables=t, counter=counter)
        for th in thetas:
            out += verify_hyperscaling_bounds(g, th, tables=t, counter=counter)
        for _ in range(bk_events):
            k = int(rng.integers(2, 4))
            evs = [random_increasing_event(g.m, rng) for _ in range(k)]
            out += verify_bk(g, evs, counter=counter)
    return SuiteReport(counter[0], out, len(items))
