"""Percolation configurations on a torus or free box.

Edges are grouped into displacement classes; within a class every edge has
the same inclusion probability ``p``, so only the open ones need visiting.

Two class samplers are provided:

``coupled`` (default)
    Each edge carries a uniform ``U_e`` that is a fixed function of
    ``(seed, replica, class, position)``; the edge is open iff ``U_e < p``.
    The uniforms of a class are generated lazily as a binary tree of
    subtree minima, and the descent only enters subtrees whose minimum is
    below ``p``. Cost is ``O(k log m)`` for ``k`` open edges of ``m``, and
    configurations at ``beta < beta'`` are nested (monotone coupling).

``geometric``
    Classic skip sampling: gaps between open edges are ``Geometric(p)``,
    drawn from a per-class counter stream. Direct per-edge Bernoulli draws
    take over once ``p > 0.5``. Not monotone across ``beta``.

``sample_naive`` draws one Bernoulli per vertex pair and serves as the
reference implementation for small boxes.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DomainError, ResourceError
from .kernel import (Kernel, TorusBox, DisplacementClasses, class_probabilities,
                     displacement_classes, kernel_values)
from .rng import derive_key, stream_key, uniform_open

DEFAULT_EDGE_CAP = 200_000_000
DENSE_THRESHOLD = 0.5
NAIVE_MAX_VERTICES = 2 ** 12

_TAG_COUPLED = np.uint64(0xC0)
_TAG_GEOMETRIC = np.uint64(0x6E0)
_TAG_NAIVE = np.uint64(0x9A1)


@dataclass
class Configuration:
    """Open edges of one sampled graph; each edge stored once as ``(u, v)``, ``u < v``."""

    box: TorusBox
    kernel: Kernel
    beta: float
    edges: np.ndarray
    seed: int
    replica_index: int = 0
    method: str = "coupled"
    uniforms: np.ndarray | None = field(default=None, repr=False)
    edge_class: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def kernel_id(self) -> str:
        blob = json.dumps(self.kernel.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.edges, dtype="<u8").tobytes()

    def header(self) -> dict:
        return {
            "format": "lrperc-edges/1",
            "box": self.box.to_dict(),
            "kernel": self.kernel.to_dict(),
            "kernel_id": self.kernel_id,
            "beta": self.beta,
            "seed": self.seed,
            "replica_index": self.replica_index,
            "method": self.method,
            "n_edges": self.n_edges,
            "dtype": "<u8",
        }


@functools.lru_cache(maxsize=32)
def _classes(box: TorusBox) -> DisplacementClasses:
    return displacement_classes(box)


def replica_key(seed: int, replica_index: int) -> np.uint64:
    return stream_key(seed, replica_index)


def sample_configuration(box: TorusBox, kernel: Kernel, beta: float, seed: int,
                         replica_index: int = 0, *, method: str = "coupled",
                         periodized: bool = False, edge_cap: int = DEFAULT_EDGE_CAP,
                         keep_uniforms: bool = False) -> Configuration:
    """Sample one configuration; the random stream is ``(seed, replica_index)``.

    With ``keep_uniforms`` (coupled method only) the per-edge uniforms and
    class indices are returned too, which lets callers recover each open
    edge's activation parameter ``-log(1 - U_e) / J_e``.
    """
    if beta < 0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    if kernel.d != box.d:
        raise DomainError("kernel and box dimensions differ")
    classes = _classes(box)
    p = class_probabilities(kernel, beta, classes, periodized)
    key = replica_key(seed, replica_index)
    expected = float(np.dot(classes.mult, p))
    if expected > edge_cap:
        raise ResourceError(f"expected {expected:.3g} open edges exceeds the cap {edge_cap}")
    start_cap = int(min(edge_cap, expected + 8 * math.sqrt(expected) + 64))
    if method == "coupled":
        edges, unif, cls, n, overflow = _sample_coupled(
            np.uint64(derive_key(key, _TAG_COUPLED)), classes.reps, classes.lo, classes.ext,
            classes.mult, p, box.L, start_cap, edge_cap)
    elif method == "geometric":
        edges, unif, cls, n, overflow = _sample_geometric(
            np.uint64(derive_key(key, _TAG_GEOMETRIC)), classes.reps, classes.lo, classes.ext,
            classes.mult, p, box.L, start_cap, edge_cap)
    else:
        raise DomainError(f"unknown sampling method {method!r}")
    if overflow:
        raise ResourceError(f"open edge count exceeds the cap {edge_cap}")
    cfg = Configuration(box, kernel, float(beta), edges[:n].copy(), int(seed),
                        int(replica_index), method)
    if keep_uniforms and method == "coupled":
        cfg.uniforms = unif[:n].copy()
        cfg.edge_class = cls[:n].copy()
    return cfg


def sample_naive(box: TorusBox, kernel: Kernel, beta: float, seed: int,
                 replica_index: int = 0, *, periodized: bool = False) -> Configuration:
    """One independent Bernoulli draw per vertex pair; ``N <= 4096`` only."""
    if beta < 0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    if box.N > NAIVE_MAX_VERTICES:
        raise ResourceError(f"naive sampler is limited to {NAIVE_MAX_VERTICES} vertices")
    table, offset = _displacement_probability_table(box, kernel, beta, periodized)
    key = np.uint64(derive_key(replica_key(seed, replica_index), _TAG_NAIVE))
    edges = _sample_pairs(key, table, offset, box.L, box.d, box.is_torus)
    return Configuration(box, kernel, float(beta), edges, int(seed), int(replica_index), "naive")


def _displacement_probability_table(box, kernel, beta, periodized):
    """``p`` for every raw coordinate difference, indexed mixed-radix with ``offset``."""
    L, d = box.L, box.d
    if box.is_torus:
        diffs = np.stack(np.unravel_index(np.arange(box.N), (L,) * d), axis=-1)
        offset = 0
        width = L
    else:
        width = 2 * L - 1
        diffs = np.stack(np.unravel_index(np.arange(width ** d), (width,) * d), axis=-1) - (L - 1)
        offset = L - 1
    table = np.zeros(len(diffs))
    nz = np.any(diffs != 0, axis=1)
    v = box.minimal_image(diffs[nz]) if box.is_torus else diffs[nz]
    if periodized and box.is_torus:
        from .kernel import _cube_points
        J = sum(kernel_values(kernel, v + L * z) for z in _cube_points(d, 2))
    else:
        J = kernel_values(kernel, v)
    table[nz] = -np.expm1(-beta * J)
    return table, offset


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True)
def _edge_ids(c, j, reps, lo, ext, L):
    d = reps.shape[1]
    rem = j
    a = 0
    b = 0
    # mixed-radix decode, first axis most significant
    xs = np.empty(d, dtype=np.int64)
    for i in range(d - 1, -1, -1):
        e = ext[c, i]
        xs[i] = lo[c, i] + rem % e
        rem //= e
    for i in range(d):
        x = xs[i]
        y = (x + reps[c, i]) % L
        a = a * L + x
        b = b * L + y
    if a < b:
        return a, b
    return b, a


@njit(cache=True)
def _grow(edges, unif, cls, n, cap):
    new_cap = min(max(2 * edges.shape[0], 64), cap)
    e2 = np.empty((new_cap, 2), dtype=np.int64)
    u2 = np.empty(new_cap)
    c2 = np.empty(new_cap, dtype=np.int64)
    e2[:n] = edges[:n]
    u2[:n] = unif[:n]
    c2[:n] = cls[:n]
    return e2, u2, c2


@njit(cache=True)
def _sample_coupled(key, reps, lo, ext, mult, p, L, start_cap, cap):
    edges = np.empty((max(start_cap, 1), 2), dtype=np.int64)
    unif = np.empty(max(start_cap, 1))
    cls = np.empty(max(start_cap, 1), dtype=np.int64)
    n = 0
    s_node = np.empty(256, dtype=np.int64)
    s_a = np.empty(256, dtype=np.int64)
    s_b = np.empty(256, dtype=np.int64)
    s_mu = np.empty(256)
    s_arg = np.empty(256, dtype=np.int64)
    for c in range(mult.shape[0]):
        pc = p[c]
        if pc <= 0.0:
            continue
        m = mult[c]
        kc = derive_key(key, np.uint64(c + 1))
        full = pc >= 1.0
        # root: minimum of m uniforms and its position
        v = uniform_open(kc, np.uint64(2))
        mu = -math.expm1(math.log(v) / m)
        arg = min(np.int64(uniform_open(kc, np.uint64(3)) * m), m - 1)
        top = 0
        s_node[0] = 1
        s_a[0] = 0
        s_b[0] = m
        s_mu[0] = mu
        s_arg[0] = arg
        top = 1
        while top > 0:
            top -= 1
            node = s_node[top]
            a = s_a[top]
            b = s_b[top]
            mu = s_mu[top]
            arg = s_arg[top]
            if not (mu < pc or full):
                continue
            if b - a == 1:
                if n >= edges.shape[0]:
                    if edges.shape[0] >= cap:
                        return edges, unif, cls, n, True
                    edges, unif, cls = _grow(edges, unif, cls, n, cap)
                u, w = _edge_ids(c, a, reps, lo, ext, L)
                edges[n, 0] = u
                edges[n, 1] = w
                unif[n] = mu
                cls[n] = c
                n += 1
                continue
            mid = (a + b) // 2
            # the child without the parent's argmin gets a fresh conditional minimum
            if arg < mid:
                o_node = 2 * node + 1
                o_a = mid
                o_b = b
                k_node = 2 * node
                k_a = a
                k_b = mid
            else:
                o_node = 2 * node
                o_a = a
                o_b = mid
                k_node = 2 * node + 1
                k_a = mid
                k_b = b
            cnt = o_b - o_a
            v = uniform_open(kc, np.uint64(2 * o_node))
            o_mu = mu + (1.0 - mu) * (-math.expm1(math.log(v) / cnt))
            o_arg = o_a + min(np.int64(uniform_open(kc, np.uint64(2 * o_node + 1)) * cnt), cnt - 1)
            # push right then left so leaves come out in ascending position
            if o_a > k_a:
                s_node[top] = o_node; s_a[top] = o_a; s_b[top] = o_b
                s_mu[top] = o_mu; s_arg[top] = o_arg; top += 1
                s_node[top] = k_node; s_a[top] = k_a; s_b[top] = k_b
                s_mu[top] = mu; s_arg[top] = arg; top += 1
            else:
                s_node[top] = k_node; s_a[top] = k_a; s_b[top] = k_b
                s_mu[top] = mu; s_arg[top] = arg; top += 1
                s_node[top] = o_node; s_a[top] = o_a; s_b[top] = o_b
                s_mu[top] = o_mu; s_arg[top] = o_arg; top += 1
    return edges, unif, cls, n, False


@njit(cache=True)
def _sample_geometric(key, reps, lo, ext, mult, p, L, start_cap, cap):
    edges = np.empty((max(start_cap, 1), 2), dtype=np.int64)
    unif = np.empty(max(start_cap, 1))
    cls = np.empty(max(start_cap, 1), dtype=np.int64)
    n = 0
    for c in range(mult.shape[0]):
        pc = p[c]
        if pc <= 0.0:
            continue
        m = mult[c]
        kc = derive_key(key, np.uint64(c + 1))
        if pc > 0.5:
            for j in range(m):
                u_j = uniform_open(kc, np.uint64(j))
                if u_j < pc:
                    if n >= edges.shape[0]:
                        if edges.shape[0] >= cap:
                            return edges, unif, cls, n, True
                        edges, unif, cls = _grow(edges, unif, cls, n, cap)
                    u, w = _edge_ids(c, j, reps, lo, ext, L)
                    edges[n, 0] = u
                    edges[n, 1] = w
                    unif[n] = u_j
                    cls[n] = c
                    n += 1
            continue
        log_q = math.log1p(-pc)
        j = np.int64(-1)
        t = 0
        while True:
            # compare as a float: huge skips must not wrap when cast to int64
            x = math.log(uniform_open(kc, np.uint64(t))) / log_q
            t += 1
            if not x < m:
                break
            j += np.int64(x) + 1
            if j >= m:
                break
            if n >= edges.shape[0]:
                if edges.shape[0] >= cap:
                    return edges, unif, cls, n, True
                edges, unif, cls = _grow(edges, unif, cls, n, cap)
            u, w = _edge_ids(c, j, reps, lo, ext, L)
            edges[n, 0] = u
            edges[n, 1] = w
            unif[n] = np.nan
            cls[n] = c
            n += 1
    return edges, unif, cls, n, False


@njit(cache=True)
def _sample_pairs(key, table, offset, L, d, torus):
    N = L ** d
    width = L if torus else 2 * L - 1
    cap = 1024
    edges = np.empty((cap, 2), dtype=np.int64)
    n = 0
    xa = np.empty(d, dtype=np.int64)
    xb = np.empty(d, dtype=np.int64)
    for a in range(N):
        r = a
        for i in range(d - 1, -1, -1):
            xa[i] = r % L
            r //= L
        for b in range(a + 1, N):
            r = b
            for i in range(d - 1, -1, -1):
                xb[i] = r % L
                r //= L
            t = 0
            for i in range(d):
                diff = xb[i] - xa[i]
                if torus:
                    diff = diff % L
                else:
                    diff = diff + offset
                t = t * width + diff
            pt = table[t]
            if pt > 0.0 and uniform_open(key, np.uint64(a * N + b)) < pt:
                if n >= cap:
                    cap *= 2
                    e2 = np.empty((cap, 2), dtype=np.int64)
                    e2[:n] = edges[:n]
                    edges = e2
                edges[n, 0] = a
                edges[n, 1] = b
                n += 1
    return edges[:n].copy()


# ---------------------------------------------------------------------------
# debugging dump

def dump_configuration(cfg: Configuration, path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (little-endian u64 vertex pairs) and ``<path>.json``."""
    path = Path(path)
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    bin_path.write_bytes(cfg.to_bytes())
    json_path.write_text(json.dumps(cfg.header(), indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def load_configuration(path) -> Configuration:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<u8")
    edges = raw.astype(np.int64).reshape(-1, 2)
    if edges.shape[0] != header["n_edges"]:
        raise DomainError("edge count in header does not match the binary payload")
    return Configuration(TorusBox.from_dict(header["box"]), Kernel.from_dict(header["kernel"]),
                         header["beta"], edges, header["seed"], header["replica_index"],
                         header["method"])
