"""Balanced splitting of a connected graph into connected edge pieces.

Given a connected graph and a finite vertex set ``A`` with ``|A| >= 3^k``,
``partition_k`` returns disjoint connected edge sets ``E_1..E_m`` covering
every vertex such that each piece meets ``A`` in at least ``3^-k |A|`` and
fewer than ``3^(-k+1) |A|`` vertices, which forces ``m >= 3^(k-1) + 1``.

Pieces are built on a breadth-first spanning tree by repeated two-way
splits. A split grows an edge set ``W`` from the root by a downward walk:
when the walk vertex has a single unexplored edge it steps along it,
otherwise it swallows the child subtree with the fewest ``A`` vertices.
The walk stops as soon as ``W`` covers more than a third of ``A``.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field

from .errors import DomainError


def _canon(e):
    u, v = e
    return (u, v) if u <= v else (v, u)


def _adjacency(edges):
    adj = defaultdict(list)
    for u, v in edges:
        if u == v:
            raise DomainError(f"self-loop at {u}")
        adj[u].append(v)
        adj[v].append(u)
    for nbrs in adj.values():
        nbrs.sort()
    return adj


def _spanning_tree(adj, root):
    """BFS tree from ``root`` visiting neighbours in ascending order."""
    parent = {root: None}
    order = [root]
    queue = deque([root])
    tree = []
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in parent:
                parent[y] = x
                order.append(y)
                tree.append(_canon((x, y)))
                queue.append(y)
    return tree, parent, order


def _vertices(edges):
    vs = set()
    for u, v in edges:
        vs.add(u)
        vs.add(v)
    return vs


def split_two(tree_edges, A):
    """Split a tree's edges into two connected pieces, each meeting ``A`` in at least a third.

    Returns ``(E1, E2)`` as lists of canonical edges. ``E1`` contains the root
    (smallest vertex) and meets ``A`` in more than ``|A|/3`` and at most
    ``2|A|/3`` vertices. ``E2`` meets ``A`` in at least ``|A|/3`` vertices; its
    count exceeds ``2|A|/3`` only when the single shared vertex is in ``A``.
    """
    edges = [_canon(e) for e in tree_edges]
    if len(set(edges)) != len(edges):
        raise DomainError("repeated edge in tree")
    verts = _vertices(edges)
    A = set(A)
    if len(A) < 3:
        raise DomainError(f"need |A| >= 3, got {len(A)}")
    if not A <= verts:
        raise DomainError("A must be a subset of the tree's vertices")
    adj = _adjacency(edges)
    root = min(verts)
    _, parent, order = _spanning_tree(adj, root)
    if len(order) != len(verts):
        raise DomainError("input graph is disconnected")
    if len(edges) != len(verts) - 1:
        raise DomainError("input graph is not a tree")

    children = {x: [y for y in adj[x] if parent.get(y) == x] for x in verts}
    weight = {}
    for x in reversed(order):
        weight[x] = (x in A) + sum(weight[y] for y in children[x])

    nA = len(A)
    W = []
    covered = 1 if root in A else 0
    pending = {x: list(children[x]) for x in verts}

    def absorb_subtree(top):
        stack = [top]
        while stack:
            y = stack.pop()
            W.append(_canon((parent[y], y)))
            stack.extend(children[y])

    v = root
    while 3 * covered <= nA:
        open_children = pending[v]
        if not open_children:
            raise AssertionError("exploration exhausted the tree before balancing")
        if len(open_children) == 1:
            c = open_children.pop()
            W.append(_canon((v, c)))
            covered += c in A
            v = c
            continue
        remaining = sum(weight[c] for c in open_children)
        best = min(open_children, key=lambda c: (weight[c], c))
        assert 2 * weight[best] <= remaining
        open_children.remove(best)
        absorb_subtree(best)
        covered += weight[best]
    W_set = set(W)
    return sorted(W), sorted(e for e in edges if e not in W_set)


@dataclass
class PartitionResult:
    """Pieces of a balanced partition and their ``A`` counts."""

    pieces: list
    vertex_sets: list
    counts: list
    k: int
    size_A: int
    tree_edges: list = field(default_factory=list, repr=False)

    @property
    def m(self) -> int:
        return len(self.pieces)


def partition_k(graph_edges, A, k: int) -> PartitionResult:
    """Partition a connected graph's spanning tree into pieces balanced at scale ``3^-k``."""
    if k < 1:
        raise DomainError(f"k must be at least 1, got {k}")
    edges = sorted({_canon(e) for e in graph_edges})
    verts = _vertices(edges)
    A = set(A)
    if len(A) < 3 ** k:
        raise DomainError(f"need |A| >= 3^k = {3 ** k}, got {len(A)}")
    if not A <= verts:
        raise DomainError("A must be a subset of the graph's vertices")
    adj = _adjacency(edges)
    tree, _, order = _spanning_tree(adj, min(verts))
    if len(order) != len(verts):
        raise DomainError("input graph is disconnected")

    nA = len(A)
    big = 3 ** (k - 1)

    def count(piece):
        return len(_vertices(piece) & A)

    done = []
    todo = [sorted(tree)]
    while todo:
        piece = todo.pop()
        c = count(piece)
        if c * big >= nA:
            e1, e2 = split_two(piece, _vertices(piece) & A)
            todo.append(e2)
            todo.append(e1)
        else:
            done.append(piece)
    vsets = [_vertices(p) for p in done]
    return PartitionResult(done, vsets, [len(v & A) for v in vsets], k, nA, sorted(tree))


@dataclass
class PartitionReport:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def _connected(piece):
    adj = _adjacency(piece)
    start = next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(adj)


def verify_partition(graph_edges, A, k: int, result: PartitionResult) -> PartitionReport:
    """Check disjointness, connectivity, coverage, the balance window and the piece count."""
    edges = {_canon(e) for e in graph_edges}
    verts = _vertices(edges)
    A = set(A)
    nA = len(A)
    out = []
    seen = {}
    for i, piece in enumerate(result.pieces):
        if not piece:
            out.append(("connectivity", i, "empty piece"))
            continue
        for e in map(_canon, piece):
            if e not in edges:
                out.append(("membership", i, f"edge {e} not in graph"))
            if e in seen:
                out.append(("disjointness", i, f"edge {e} also in piece {seen[e]}"))
            seen[e] = i
        if not _connected(piece):
            out.append(("connectivity", i, "piece does not span a connected subgraph"))
        c = len(_vertices(piece) & A)
        if c * 3 ** k < nA:
            out.append(("balance lower bound", i, f"count {c} < 3^-{k}|A|"))
        if c * 3 ** (k - 1) >= nA:
            out.append(("balance upper bound is strict", i, f"count {c} >= 3^-{k - 1}|A|"))
    covered = set().union(*(_vertices(p) for p in result.pieces)) if result.pieces else set()
    missing = verts - covered
    if missing:
        out.append(("coverage", None, f"{len(missing)} vertices not incident to any piece"))
    if len(result.pieces) < 3 ** (k - 1) + 1:
        out.append(("piece count", None, f"m = {len(result.pieces)} < 3^{k - 1} + 1"))
    return PartitionReport(not out, out)
