"""Connected components of sampled configurations and window observables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DomainError
from .kernel import TorusBox


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _union_all(N, edges):
    parent = np.arange(N)
    size = np.ones(N, dtype=np.int64)
    for i in range(edges.shape[0]):
        a = _find(parent, edges[i, 0])
        b = _find(parent, edges[i, 1])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    for x in range(N):
        parent[x] = _find(parent, x)
    return parent, size


@dataclass
class ClusterForest:
    """Union-find forest over the ``N`` vertices of a box.

    After construction every vertex points directly at its root, so
    ``parent`` doubles as a cluster label array.
    """

    box: TorusBox
    parent: np.ndarray
    root_size: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return int(self.parent.size)

    def find(self, x) -> np.ndarray:
        return self.parent[np.asarray(x)]

    def connected(self, x, y) -> bool:
        return bool(self.parent[x] == self.parent[y])

    @property
    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.parent == np.arange(self.N))

    @property
    def sizes(self) -> np.ndarray:
        """Cluster sizes, one per cluster, in increasing root-id order."""
        return self.root_size[self.roots]

    def cluster_size_of(self, x) -> np.ndarray:
        """``|K_x|`` for each vertex in ``x``."""
        return self.root_size[self.parent[np.asarray(x)]]

    @property
    def vertex_sizes(self) -> np.ndarray:
        return self.root_size[self.parent]

    @property
    def largest(self) -> int:
        return int(self.root_size[self.roots].max())

    def members(self, x) -> np.ndarray:
        return np.flatnonzero(self.parent == self.parent[x])


def build_clusters(cfg) -> ClusterForest:
    """Forest of a :class:`~lrperc.sampler.Configuration`."""
    return forest_from_edges(cfg.box, cfg.edges)


def forest_from_edges(box: TorusBox | int, edges) -> ClusterForest:
    if isinstance(box, (int, np.integer)):
        N = int(box)
        box = None
    else:
        N = box.N
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= N):
        raise DomainError("edge endpoint outside the vertex range")
    parent, size = _union_all(N, edges)
    return ClusterForest(box, parent, size)


# ---------------------------------------------------------------------------
# windows

def centered_window(box: TorusBox, r: int, center=None) -> np.ndarray:
    """Vertex ids of ``center + [-r, r]^d`` (torus-wrapped, or clipped on a free box)."""
    if r < 0:
        raise DomainError("window radius must be nonnegative")
    if box.is_torus and 2 * r + 1 > box.L:
        raise DomainError(f"window of radius {r} does not fit in a torus of side {box.L}")
    c = np.zeros(box.d, dtype=np.int64) if center is None else np.asarray(box.coords(center))
    offs = np.stack(np.meshgrid(*[np.arange(-r, r + 1)] * box.d, indexing="ij"), axis=-1).reshape(-1, box.d)
    pts = c + offs
    if not box.is_torus:
        pts = pts[np.all((pts >= 0) & (pts < box.L), axis=1)]
    return np.unique(box.ids(pts))


def corner_window(box: TorusBox, side: int) -> np.ndarray:
    """Vertex ids of ``[0, side)^d``."""
    if not 1 <= side <= box.L:
        raise DomainError(f"window side must lie in [1, {box.L}]")
    pts = np.stack(np.meshgrid(*[np.arange(side)] * box.d, indexing="ij"), axis=-1).reshape(-1, box.d)
    return box.ids(pts)


@dataclass(frozen=True)
class ClusterStats:
    """Window observables of one configuration.

    ``intersections[i]`` is ``|K_v ∩ Λ|`` for ``v = window[i]``;
    ``histogram[s]`` counts clusters meeting the window in exactly ``s`` sites.
    """

    window: np.ndarray
    max_in_window: int
    origin_cluster_size: int
    intersections: np.ndarray
    histogram: np.ndarray


def window_stats(forest: ClusterForest, window, origin: int = 0) -> ClusterStats:
    window = np.unique(np.asarray(window, dtype=np.int64))
    if window.size == 0:
        raise DomainError("window must be nonempty")
    if window[0] < 0 or window[-1] >= forest.N:
        raise DomainError("window lies outside the box")
    labels = forest.parent[window]
    uniq, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    return ClusterStats(
        window=window,
        max_in_window=int(counts.max()),
        origin_cluster_size=int(forest.cluster_size_of(origin)),
        intersections=counts[inv],
        histogram=np.bincount(counts),
    )


# ---------------------------------------------------------------------------
# two-point sums

def two_point_window_sum(forest: ClusterForest, r: int) -> int:
    """``sum_v |K_v ∩ (v + Λ_r)|`` over all vertices ``v``."""
    return int(two_point_profile(forest, r)[r])


def two_point_profile(forest: ClusterForest, rmax: int, method: str = "auto") -> np.ndarray:
    """Cumulative two-point sums ``S(r) = sum_v |K_v ∩ (v + Λ_r)|`` for ``r = 0..rmax``.

    ``method="offsets"`` scans every offset in ``Λ_rmax`` (cost ``N (2 rmax + 1)^d``);
    ``method="pairs"`` histograms sup-norm distances between same-cluster
    pairs (cost ``sum_K |K|^2``). ``auto`` picks the cheaper one.
    """
    box = forest.box
    if box is None:
        raise DomainError("two-point sums need the box geometry")
    if rmax < 0:
        raise DomainError("radius must be nonnegative")
    if box.is_torus and 2 * rmax + 1 > box.L:
        raise DomainError(f"window of radius {rmax} exceeds the torus of side {box.L}")
    if method == "auto":
        cost_off = box.N * float(2 * rmax + 1) ** box.d
        cost_pairs = float(np.sum(forest.sizes.astype(float) ** 2))
        method = "pairs" if cost_pairs < cost_off else "offsets"
    if method == "offsets":
        per_shell = _offset_shells(forest.parent, box.L, box.d, rmax, box.is_torus)
    elif method == "pairs":
        order = np.argsort(forest.parent, kind="stable")
        per_shell = _pair_shells(forest.parent[order], order, box.L, box.d, rmax, box.is_torus)
    else:
        raise DomainError(f"unknown method {method!r}")
    return np.cumsum(per_shell)


@njit(cache=True)
def _decode(x, L, d, out):
    for i in range(d - 1, -1, -1):
        out[i] = x % L
        x //= L


@njit(cache=True)
def _offset_shells(labels, L, d, rmax, torus):
    N = labels.size
    shells = np.zeros(rmax + 1, dtype=np.int64)
    width = 2 * rmax + 1
    n_off = width ** d
    off = np.empty(d, dtype=np.int64)
    xc = np.empty(d, dtype=np.int64)
    for t in range(n_off):
        q = t
        dist = 0
        for i in range(d - 1, -1, -1):
            off[i] = q % width - rmax
            q //= width
            a = abs(off[i])
            if a > dist:
                dist = a
        cnt = 0
        for x in range(N):
            _decode(x, L, d, xc)
            y = 0
            ok = True
            for i in range(d):
                c = xc[i] + off[i]
                if torus:
                    c %= L
                elif c < 0 or c >= L:
                    ok = False
                    break
                y = y * L + c
            if ok and labels[y] == labels[x]:
                cnt += 1
        shells[dist] += cnt
    return shells


@njit(cache=True)
def _pair_shells(sorted_labels, order, L, d, rmax, torus):
    n = sorted_labels.size
    shells = np.zeros(rmax + 1, dtype=np.int64)
    xa = np.empty(d, dtype=np.int64)
    xb = np.empty(d, dtype=np.int64)
    start = 0
    while start < n:
        stop = start
        while stop < n and sorted_labels[stop] == sorted_labels[start]:
            stop += 1
        shells[0] += stop - start
        for i in range(start, stop):
            _decode(order[i], L, d, xa)
            for j in range(i + 1, stop):
                _decode(order[j], L, d, xb)
                dist = 0
                for k in range(d):
                    a = abs(xa[k] - xb[k])
                    if torus and L - a < a:
                        a = L - a
                    if a > dist:
                        dist = a
                if dist <= rmax:
                    shells[dist] += 2
        start = stop
    return shells


# ---------------------------------------------------------------------------
# scalar observables

def size_tail(forest_or_sizes, ns) -> np.ndarray:
    """Vertex-averaged ``P(|K_v| >= n)`` for each ``n`` in ``ns``."""
    sizes = forest_or_sizes.sizes if isinstance(forest_or_sizes, ClusterForest) else np.asarray(forest_or_sizes)
    N = sizes.sum()
    ns = np.atleast_1d(np.asarray(ns))
    srt = np.sort(sizes)
    csum = np.concatenate([[0], np.cumsum(srt[::-1])])[::-1]  # csum[i] = sum of srt[i:]
    idx = np.searchsorted(srt, ns, side="left")
    return csum[idx] / N


def susceptibility_without_largest(sizes) -> float:
    """``(sum s^2 - s_max^2) / N``: mean cluster size with the giant removed."""
    s = np.asarray(sizes, dtype=float)
    return float((np.sum(s * s) - s.max() ** 2) / s.sum())


@njit(cache=True)
def crossing_parameter(N, edges, activation, threshold):
    """Smallest activation value at which the largest cluster reaches ``threshold``.

    Edges are inserted in increasing ``activation`` order (Newman-Ziff sweep);
    returns ``inf`` if the threshold is never reached.
    """
    if threshold <= 1:
        return 0.0
    order = np.argsort(activation, kind="mergesort")
    parent = np.arange(N)
    size = np.ones(N, dtype=np.int64)
    for t in range(order.size):
        i = order[t]
        a = _find(parent, edges[i, 0])
        b = _find(parent, edges[i, 1])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        if size[a] >= threshold:
            return activation[i]
    return np.inf
