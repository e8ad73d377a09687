"""Finite multigraphs, lattice presets, free abelian group actions and quotients.

Edges of a :class:`Graph` are addressed by integer index; each index also
carries an opaque ``key`` (for lattice windows the key is the base lattice
edge ``(tail, direction)``).  An oriented edge is an index together with a
sign, ``+1`` meaning the stored tail -> head orientation.

The infinite lattices Z and Z^2 are never materialized.  A :class:`Lattice`
answers local questions (endpoints, incident edges, boxes) and a
:class:`TranslationAction` by a full-rank sublattice turns it into a finite
:class:`QuotientGraph` with voltages in the deck group.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid graph, action or quotient construction."""


@dataclass(frozen=True)
class OrientedEdge:
    edge_id: Hashable
    tail: Hashable
    head: Hashable
    sign: int = 1

    def __post_init__(self):
        if self.tail == self.head:
            raise GraphError(f"self-loop at vertex {self.tail!r}")
        if self.sign not in (1, -1):
            raise GraphError("sign must be +1 or -1")

    def reverse(self) -> "OrientedEdge":
        return OrientedEdge(self.edge_id, self.head, self.tail, -self.sign)


class Graph:
    """Finite multigraph without self-loops.

    ``edges`` is a sequence of ``(tail, head)`` vertex pairs; parallel edges
    are allowed.  Instances are treated as immutable.
    """

    def __init__(self, vertices: Iterable[Hashable], edges: Iterable[tuple],
                 keys: Sequence[Hashable] | None = None, name: str = ""):
        self.vertices = tuple(vertices)
        self.vertex_index = {v: i for i, v in enumerate(self.vertices)}
        if len(self.vertex_index) != len(self.vertices):
            raise GraphError("duplicate vertex id")
        tails, heads = [], []
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at vertex {u!r}")
            try:
                tails.append(self.vertex_index[u])
                heads.append(self.vertex_index[v])
            except KeyError as exc:
                raise GraphError(f"edge endpoint {exc.args[0]!r} is not a vertex") from None
        self.tail = np.array(tails, dtype=np.intp)
        self.head = np.array(heads, dtype=np.intp)
        self.tail.setflags(write=False)
        self.head.setflags(write=False)
        m = len(tails)
        self.keys = tuple(keys) if keys is not None else tuple(range(m))
        if len(self.keys) != m:
            raise GraphError("need exactly one key per edge")
        self.edge_index = {k: i for i, k in enumerate(self.keys)}
        if len(self.edge_index) != m:
            raise GraphError("duplicate edge key")
        self.name = name
        inc: list[list[tuple[int, int]]] = [[] for _ in self.vertices]
        for e in range(m):
            inc[tails[e]].append((e, 1))
            inc[heads[e]].append((e, -1))
        self._incident = tuple(tuple(x) for x in inc)

    def __repr__(self):
        label = self.name or "Graph"
        return f"<{label}: {self.num_vertices} vertices, {self.num_edges} edges>"

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.vertices == other.vertices and self.keys == other.keys
                and np.array_equal(self.tail, other.tail)
                and np.array_equal(self.head, other.head))

    def __hash__(self):
        return hash((self.vertices, self.keys))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.keys)

    def endpoints(self, e: int, sign: int = 1) -> tuple[int, int]:
        """Vertex indices ``(tail, head)`` of edge ``e`` in orientation ``sign``."""
        t, h = int(self.tail[e]), int(self.head[e])
        return (t, h) if sign == 1 else (h, t)

    def oriented(self, e: int, sign: int = 1) -> OrientedEdge:
        t, h = self.endpoints(e, sign)
        return OrientedEdge(e, self.vertices[t], self.vertices[h], sign)

    def incident(self, v: int) -> tuple[tuple[int, int], ...]:
        """``(edge, sign)`` pairs of oriented edges leaving vertex index ``v``."""
        return self._incident[v]

    def degree(self, v: int) -> int:
        return len(self._incident[v])

    def bfs_tree(self, root: int = 0, allowed: Iterable[int] | None = None):
        """Breadth-first spanning tree of the component of ``root``.

        Returns ``(tree_edges, parent)`` where ``parent[v] = (edge, sign)`` is
        the oriented edge from the parent of ``v`` into ``v``.
        """
        ok = None if allowed is None else set(allowed)
        parent: dict[int, tuple[int, int] | None] = {root: None}
        queue = deque([root])
        tree = []
        while queue:
            u = queue.popleft()
            for e, s in self._incident[u]:
                if ok is not None and e not in ok:
                    continue
                w = int(self.head[e]) if s == 1 else int(self.tail[e])
                if w not in parent:
                    parent[w] = (e, s)
                    tree.append(e)
                    queue.append(w)
        return tree, parent

    def components(self, edges: Iterable[int] | None = None) -> list[list[int]]:
        """Vertex components of the spanning subgraph with the given edges."""
        uf = UnionFind(self.num_vertices)
        for e in (range(self.num_edges) if edges is None else edges):
            uf.union(int(self.tail[e]), int(self.head[e]))
        groups: dict[int, list[int]] = {}
        for v in range(self.num_vertices):
            groups.setdefault(uf.find(v), []).append(v)
        return list(groups.values())

    def is_connected(self, edges: Iterable[int] | None = None) -> bool:
        return self.num_vertices <= 1 or len(self.components(edges)) == 1

    def is_spanning_tree(self, edges: Iterable[int]) -> bool:
        edges = list(edges)
        if len(edges) != self.num_vertices - 1:
            return False
        uf = UnionFind(self.num_vertices)
        return all(uf.union(int(self.tail[e]), int(self.head[e])) for e in edges)

    def tree_path(self, parent, u: int) -> list[tuple[int, int]]:
        """Oriented edges of the tree path from the root to ``u``."""
        path = []
        while parent[u] is not None:
            e, s = parent[u]
            path.append((e, s))
            u = self.endpoints(e, s)[0]
        return path[::-1]

    def edge_list_text(self) -> str:
        lines = [f"{_fmt(self.keys[e])}\t{_fmt(self.vertices[self.tail[e]])}\t"
                 f"{_fmt(self.vertices[self.head[e]])}" for e in range(self.num_edges)]
        return "\n".join(lines) + ("\n" if lines else "")

    def write_edge_list(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.edge_list_text())


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _fmt(x) -> str:
    if isinstance(x, tuple):
        return "(" + ",".join(_fmt(y) for y in x) + ")"
    return str(x)


# --------------------------------------------------------------------------
# Lattices and presets

def _vadd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _vsub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _unit(dim: int, k: int) -> tuple[int, ...]:
    return tuple(1 if i == k else 0 for i in range(dim))


class Lattice:
    """The hypercubic lattice Z^dim, queried locally.

    Vertices are integer tuples; the edge ``(v, k)`` joins ``v`` to
    ``v + e_k`` and is oriented that way.
    """

    def __init__(self, dim: int):
        if dim not in (1, 2):
            raise GraphError("only Z and Z^2 are provided")
        self.dim = dim

    def __repr__(self):
        return f"Lattice(Z^{self.dim})"

    def __eq__(self, other):
        return isinstance(other, Lattice) and other.dim == self.dim

    def __hash__(self):
        return hash(("Lattice", self.dim))

    @property
    def degree(self) -> int:
        return 2 * self.dim

    def origin(self) -> tuple[int, ...]:
        return (0,) * self.dim

    def endpoints(self, key) -> tuple[tuple, tuple]:
        v, k = key
        return v, _vadd(v, _unit(self.dim, k))

    def incident(self, v) -> list[tuple[tuple, int]]:
        """``(edge key, sign)`` for the oriented edges leaving ``v``."""
        out = []
        for k in range(self.dim):
            out.append(((v, k), 1))
            out.append(((_vsub(v, _unit(self.dim, k)), k), -1))
        return out

    def neighbours(self, v):
        for key, s in self.incident(v):
            t, h = self.endpoints(key)
            yield h if s == 1 else t

    def box_vertices(self, R: int) -> list[tuple]:
        return list(itertools.product(range(-R, R + 1), repeat=self.dim))

    def box(self, R: int) -> Graph:
        """Induced subgraph on ``[-R, R]^dim`` (free boundary)."""
        if R < 1:
            raise GraphError("box radius must be >= 1")
        verts = self.box_vertices(R)
        vs = set(verts)
        keys, edges = [], []
        for v in verts:
            for k in range(self.dim):
                w = _vadd(v, _unit(self.dim, k))
                if w in vs:
                    keys.append((v, k))
                    edges.append((v, w))
        return Graph(verts, edges, keys, name=f"box(R={R}, d={self.dim})")

    def wired_box(self, R: int, boundary_id: Hashable = "wired") -> Graph:
        """Box with its boundary vertices identified to one vertex.

        Boundary vertices are those with a lattice neighbour outside the box.
        Edges joining two boundary vertices become loops after identification
        and are dropped; loops never lie in a spanning tree.
        """
        if R < 1:
            raise GraphError("box radius must be >= 1")
        verts = self.box_vertices(R)
        inner = [v for v in verts if max(abs(x) for x in v) < R]
        on_boundary = {v for v in verts if max(abs(x) for x in v) == R}
        keys, edges = [], []
        for v in verts:
            for k in range(self.dim):
                w = _vadd(v, _unit(self.dim, k))
                if max(abs(x) for x in w) > R:
                    continue
                a = boundary_id if v in on_boundary else v
                b = boundary_id if w in on_boundary else w
                if a == b:
                    continue
                keys.append((v, k))
                edges.append((a, b))
        return Graph(inner + [boundary_id], edges, keys, name=f"wired_box(R={R}, d={self.dim})")

    def edges_near(self, vertices: Iterable[tuple], radius: int) -> Graph:
        """Induced subgraph on vertices within graph distance ``radius``."""
        seen = set(vertices)
        frontier = list(seen)
        for _ in range(radius):
            nxt = []
            for v in frontier:
                for w in self.neighbours(v):
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        verts = sorted(seen)
        keys, edges = [], []
        for v in verts:
            for k in range(self.dim):
                w = _vadd(v, _unit(self.dim, k))
                if w in seen:
                    keys.append((v, k))
                    edges.append((v, w))
        return Graph(verts, edges, keys)

    def window_graph(self, keys: Iterable) -> Graph:
        """Graph made of the given lattice edges and their endpoints."""
        keys = list(keys)
        verts = sorted({x for key in keys for x in self.endpoints(key)})
        return Graph(verts, [self.endpoints(k) for k in keys], keys)


@dataclass(frozen=True)
class LatticeSpec:
    """Named graph family with its size parameters.

    ``line``/``grid`` are the infinite lattices Z, Z^2; ``cycle``,
    ``complete``, ``torus``, ``path`` take ``n``; ``box`` takes ``R``;
    ``complete_bipartite`` takes ``n`` and ``m``.
    """
    family: str
    n: int | None = None
    R: int | None = None
    m: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        unknown = set(d) - {"family", "n", "R", "m"}
        if unknown:
            raise GraphError(f"unknown graph keys: {sorted(unknown)}")
        return cls(d["family"], d.get("n"), d.get("R"), d.get("m"))

    @property
    def is_infinite(self) -> bool:
        return self.family in ("line", "grid")


def _need(value, name, lo, family):
    if value is None or int(value) != value or value < lo:
        raise GraphError(f"{family} needs integer {name} >= {lo}, got {value!r}")
    return int(value)


def lattice(spec: LatticeSpec | str) -> Lattice:
    family = spec.family if isinstance(spec, LatticeSpec) else spec
    if family == "line":
        return Lattice(1)
    if family == "grid":
        return Lattice(2)
    raise GraphError(f"{family!r} is not an infinite lattice family")


def build_graph(spec: LatticeSpec) -> Graph:
    """Deterministically numbered finite graph for a named family."""
    f = spec.family
    if spec.is_infinite:
        raise GraphError(f"{f} is infinite; use lattice() and query finite windows")
    if f == "cycle":
        n = _need(spec.n, "n", 2, f)
        return Graph(range(n), [(i, (i + 1) % n) for i in range(n)], name=f"C_{n}")
    if f == "path":
        n = _need(spec.n, "n", 2, f)
        return Graph(range(n), [(i, i + 1) for i in range(n - 1)], name=f"P_{n}")
    if f == "complete":
        n = _need(spec.n, "n", 2, f)
        return Graph(range(n), list(itertools.combinations(range(n), 2)), name=f"K_{n}")
    if f == "complete_bipartite":
        a = _need(spec.n, "n", 1, f)
        b = _need(spec.m, "m", 1, f)
        left = [("a", i) for i in range(a)]
        right = [("b", j) for j in range(b)]
        return Graph(left + right, [(u, v) for u in left for v in right], name=f"K_{a},{b}")
    if f == "torus":
        n = _need(spec.n, "n", 2, f)
        g = build_quotient(Lattice(2), TranslationAction.diagonal(2, n)).graph
        g.name = f"torus Z_{n} x Z_{n}"
        return g
    if f == "box":
        R = _need(spec.R, "R", 1, f)
        return Lattice(2).box(R)
    raise GraphError(f"unknown graph family {f!r}")


# --------------------------------------------------------------------------
# Group actions

def _hermite_rows(gens: Sequence[Sequence[int]], dim: int) -> list[list[int]]:
    """Upper-triangular integer row basis of the lattice spanned by ``gens``."""
    rows = [list(map(int, g)) for g in gens]
    for g in rows:
        if len(g) != dim:
            raise GraphError(f"generator {g} is not a vector in Z^{dim}")
    basis = []
    r = 0
    for col in range(dim):
        while True:
            live = [i for i in range(r, len(rows)) if rows[i][col] != 0]
            if not live:
                break
            piv = min(live, key=lambda i: abs(rows[i][col]))
            rows[r], rows[piv] = rows[piv], rows[r]
            done = True
            for i in range(r + 1, len(rows)):
                if rows[i][col]:
                    q = rows[i][col] // rows[r][col]
                    rows[i] = [x - q * y for x, y in zip(rows[i], rows[r])]
                    if rows[i][col]:
                        done = False
            if done:
                break
        if r >= len(rows) or rows[r][col] == 0:
            raise GraphError("translation generators do not span a full-rank "
                             "sublattice; the quotient would be infinite")
        if rows[r][col] < 0:
            rows[r] = [-x for x in rows[r]]
        basis.append(rows[r])
        r += 1
    return basis


class TranslationGroup:
    """Deck group of a lattice quotient: a sublattice L of Z^d, written additively."""

    finite = False

    def __init__(self, dim: int):
        self.dim = dim

    def identity(self):
        return (0,) * self.dim

    def op(self, a, b):
        return _vadd(a, b)

    def inverse(self, a):
        return tuple(-x for x in a)

    def has_finite_order(self, a) -> bool:
        return not any(a)


class TranslationAction:
    """Action of a full-rank sublattice L < Z^d on the lattice by translation.

    Translations by nonzero vectors fix no vertex, so the action is free.
    Canonical representatives of Z^d / L form a centred box, which keeps
    fundamental domains nested along towers such as (nZ)^2 > (2nZ)^2.
    """

    def __init__(self, dim: int, generators: Sequence[Sequence[int]]):
        self.dim = dim
        self.generators = tuple(tuple(int(x) for x in g) for g in generators)
        self.basis = _hermite_rows(self.generators, dim)
        self.sides = tuple(self.basis[i][i] for i in range(dim))
        self.deck = TranslationGroup(dim)

    @classmethod
    def diagonal(cls, dim: int, n: int) -> "TranslationAction":
        return cls(dim, [tuple(n if i == k else 0 for i in range(dim)) for k in range(dim)])

    def __repr__(self):
        return f"TranslationAction(Z^{self.dim}, generators={list(self.generators)})"

    @property
    def index(self) -> int:
        return int(np.prod(self.sides))

    def reduce(self, v) -> tuple[tuple, tuple]:
        """Split ``v = rep + t`` with ``rep`` canonical and ``t`` in L."""
        w = list(v)
        t = [0] * self.dim
        for i, row in enumerate(self.basis):
            h = row[i]
            q = (w[i] + h // 2) // h
            if q:
                w = [x - q * y for x, y in zip(w, row)]
                t = [x + q * y for x, y in zip(t, row)]
        return tuple(w), tuple(t)

    def representatives(self) -> list[tuple]:
        ranges = [range(-(h // 2), h - h // 2) for h in self.sides]
        return list(itertools.product(*ranges))


class PermutationGroup:
    """Finite abelian group of vertex permutations, composed as functions."""

    finite = True

    def __init__(self, n: int, elements: Sequence[tuple]):
        self.n = n
        self.elements = tuple(elements)

    def identity(self):
        return tuple(range(self.n))

    def op(self, a, b):
        return tuple(a[b[i]] for i in range(self.n))

    def inverse(self, a):
        inv = [0] * self.n
        for i, x in enumerate(a):
            inv[x] = i
        return tuple(inv)

    def has_finite_order(self, a) -> bool:
        return True


class PermutationAction:
    """Finite abelian group acting freely on a finite graph by automorphisms.

    Generators are vertex maps (dicts or sequences indexed by vertex
    position).  Parallel edges are matched in index order.  The closure is
    enumerated exhaustively, so freeness, commutativity and adjacency
    preservation are checked exactly.
    """

    def __init__(self, graph: Graph, generators: Sequence = ()):
        self.graph = graph
        n = graph.num_vertices
        gens = []
        for g in generators:
            if isinstance(g, dict):
                try:
                    perm = tuple(graph.vertex_index[g.get(v, v)] for v in graph.vertices)
                except KeyError as exc:
                    raise GraphError(f"generator maps to unknown vertex {exc.args[0]!r}") from None
            else:
                perm = tuple(int(x) for x in g)
            if sorted(perm) != list(range(n)):
                raise GraphError("generator is not a permutation of the vertices")
            gens.append(perm)
        self.generators = tuple(gens)
        self.deck = _closure(n, self.generators)
        ident = self.deck.identity()
        for a in self.deck.elements:
            for b in self.deck.elements:
                if self.deck.op(a, b) != self.deck.op(b, a):
                    raise GraphError("group is not abelian")
            if a != ident and any(a[v] == v for v in range(n)):
                raise GraphError("action is not free: a non-identity element fixes a vertex")
        self._edge_perm = {a: self._induced_edge_map(a) for a in self.deck.elements}

    def _induced_edge_map(self, perm):
        g = self.graph
        slots: dict[tuple[int, int], list[int]] = {}
        for e in range(g.num_edges):
            slots.setdefault((int(g.tail[e]), int(g.head[e])), []).append(e)
        out = []
        for e in range(g.num_edges):
            t, h = perm[g.tail[e]], perm[g.head[e]]
            pos = slots[(int(g.tail[e]), int(g.head[e]))].index(e)
            if len(slots.get((t, h), [])) > pos:
                out.append((slots[(t, h)][pos], 1))
            elif len(slots.get((h, t), [])) > pos:
                out.append((slots[(h, t)][pos], -1))
            else:
                raise GraphError("generator does not preserve adjacency")
        if len({e for e, _ in out}) != g.num_edges:
            raise GraphError("generator does not preserve adjacency")
        return tuple(out)

    def edge_image(self, a, e: int) -> tuple[int, int]:
        """Image ``(edge, sign)`` of edge ``e`` under group element ``a``."""
        return self._edge_perm[a][e]


def _closure(n: int, gens) -> PermutationGroup:
    ident = tuple(range(n))
    seen = {ident}
    order = [ident]
    queue = deque([ident])
    while queue:
        a = queue.popleft()
        for g in gens:
            b = tuple(g[a[i]] for i in range(n))
            if b not in seen:
                seen.add(b)
                order.append(b)
                queue.append(b)
    return PermutationGroup(n, order)


# --------------------------------------------------------------------------
# Quotients

class QuotientGraph:
    """Quotient of a base graph by a free action, with projection and voltages.

    ``graph`` is the quotient; ``lifts[e]`` is the chosen base lift of
    quotient edge ``e`` (its tail is the canonical lift of the quotient
    tail) and ``voltages[e]`` is the deck element carrying the canonical
    lift of the quotient head onto the head of that chosen lift.  Summing
    voltages along a closed walk gives the displacement of its lift.
    """

    def __init__(self, base, action, graph: Graph, vertex_lifts, lifts, voltages):
        self.base = base
        self.action = action
        self.graph = graph
        self.vertex_lifts = tuple(vertex_lifts)
        self.lifts = tuple(lifts)
        self.voltages = tuple(voltages)
        self.deck = action.deck

    def __repr__(self):
        return f"<QuotientGraph {self.base!r} / {self.action!r}: {self.graph!r}>"

    @property
    def is_lattice(self) -> bool:
        return isinstance(self.base, Lattice)

    def voltage(self, e: int, sign: int = 1):
        v = self.voltages[e]
        return v if sign == 1 else self.deck.inverse(v)

    def project_vertex(self, v) -> int:
        if self.is_lattice:
            rep, _ = self.action.reduce(v)
            return self.graph.vertex_index[rep]
        return self._vertex_orbit[self.base.vertex_index[v]]

    def project_edge(self, key) -> tuple[int, int]:
        """Quotient oriented edge ``(edge, sign)`` under a base edge key."""
        if self.is_lattice:
            v, k = key
            rep, _ = self.action.reduce(v)
            return self.graph.edge_index[(rep, k)], 1
        return self._edge_orbit[self.base.edge_index[key]]

    def base_endpoints(self, key):
        if self.is_lattice:
            return self.base.endpoints(key)
        e = self.base.edge_index[key]
        t, h = self.base.endpoints(e)
        return self.base.vertices[t], self.base.vertices[h]

    def group_edge_actions(self) -> list[tuple[int, ...]]:
        """Edge permutations of the quotient induced by the finite group G/G_i.

        For lattice quotients G = Z^d acts by translation and G/G_i = Z^d/L;
        every element maps quotient edges to quotient edges preserving
        orientation.  For finite bases the ambient group is not recorded and
        only the identity is returned.
        """
        m = self.graph.num_edges
        if not self.is_lattice:
            return [tuple(range(m))]
        perms = []
        for t in self.action.representatives():
            perm = []
            for e in range(m):
                rep, k = self.graph.keys[e]
                shifted, _ = self.action.reduce(_vadd(rep, t))
                perm.append(self.graph.edge_index[(shifted, k)])
            perms.append(tuple(perm))
        return perms

    def group_edge_generators(self) -> list[tuple[int, ...]]:
        """Edge permutations of the unit translations (generators of G/G_i)."""
        m = self.graph.num_edges
        if not self.is_lattice:
            return [tuple(range(m))]
        gens = []
        for k in range(self.base.dim):
            u = _unit(self.base.dim, k)
            perm = []
            for e in range(m):
                rep, j = self.graph.keys[e]
                shifted, _ = self.action.reduce(_vadd(rep, u))
                perm.append(self.graph.edge_index[(shifted, j)])
            gens.append(tuple(perm))
        return gens


def build_quotient(base, action=None) -> QuotientGraph:
    """Quotient of a lattice by translations, or of a finite graph by a free action.

    ``base`` may be a :class:`LatticeSpec`, :class:`Lattice` or
    :class:`Graph`.  For lattices ``action`` is a :class:`TranslationAction`
    or a list of generator vectors; for finite graphs it is a
    :class:`PermutationAction`, a list of vertex maps, or ``None`` for the
    trivial action.
    """
    if isinstance(base, LatticeSpec):
        base = lattice(base) if base.is_infinite else build_graph(base)
    if isinstance(base, Lattice):
        if action is None:
            raise GraphError("a lattice needs a full-rank translation action")
        if not isinstance(action, TranslationAction):
            action = TranslationAction(base.dim, action)
        if action.dim != base.dim:
            raise GraphError("action dimension does not match the lattice")
        return _lattice_quotient(base, action)
    if not isinstance(action, PermutationAction):
        action = PermutationAction(base, action or ())
    if action.graph is not base and action.graph != base:
        raise GraphError("action is defined on a different graph")
    return _finite_quotient(base, action)


def _lattice_quotient(lat: Lattice, action: TranslationAction) -> QuotientGraph:
    d = lat.dim
    reps = action.representatives()
    for k in range(d):
        if action.reduce(_unit(d, k))[0] == lat.origin():
            raise GraphError("quotient has a self-loop: a unit step lies in the "
                             "translation subgroup")
    keys, edges, volts = [], [], []
    for r in reps:
        for k in range(d):
            head, t = action.reduce(_vadd(r, _unit(d, k)))
            keys.append((r, k))
            edges.append((r, head))
            volts.append(t)
    g = Graph(reps, edges, keys, name=f"Z^{d}/L(index {action.index})")
    return QuotientGraph(lat, action, g, reps, keys, volts)


def _finite_quotient(base: Graph, action: PermutationAction) -> QuotientGraph:
    deck = action.deck
    n = base.num_vertices
    found = [False] * n
    canon: list[int] = []
    # canonical lift of an orbit: its first vertex met by BFS from vertex 0
    for start in range(n):
        if found[start]:
            continue
        queue = deque([start])
        while queue:
            u = queue.popleft()
            if found[u]:
                continue
            canon.append(u)
            for a in deck.elements:
                found[a[u]] = True
            for e, s in base.incident(u):
                w = base.endpoints(e, s)[1]
                if not found[w]:
                    queue.append(w)
    canon.sort()
    orbit_of = [-1] * n
    for idx, c in enumerate(canon):
        for a in deck.elements:
            orbit_of[a[c]] = idx
    # element carrying canonical lift of the orbit onto a given vertex
    carrier = {}
    for c in canon:
        for a in deck.elements:
            carrier[a[c]] = a
    edge_orbit: dict[int, tuple[int, int]] = {}
    q_edges, q_keys, lifts, volts = [], [], [], []
    for e in range(base.num_edges):
        if e in edge_orbit:
            continue
        t, h = base.endpoints(e)
        if orbit_of[t] == orbit_of[h]:
            raise GraphError("quotient has a self-loop: an edge joins two "
                             "vertices of the same orbit")
        # translate so the tail is canonical
        a = deck.inverse(carrier[t])
        lift, s = action.edge_image(a, e)
        lt, lh = base.endpoints(lift, s)
        qe = len(q_edges)
        for b in deck.elements:
            img, sg = action.edge_image(b, lift)
            edge_orbit[img] = (qe, sg * s)
        q_edges.append((canon[orbit_of[lt]], canon[orbit_of[lh]]))
        q_keys.append(base.keys[e])
        lifts.append((base.keys[lift], s))
        volts.append(carrier[lh])
    qverts = [base.vertices[c] for c in canon]
    g = Graph(qverts, [(base.vertices[a], base.vertices[b]) for a, b in q_edges], q_keys,
              name=f"{base.name or 'graph'}/G")
    q = QuotientGraph(base, action, g, qverts, [k for k, _ in lifts], volts)
    q._vertex_orbit = orbit_of
    q._edge_orbit = edge_orbit
    q._lift_signs = tuple(s for _, s in lifts)
    return q


def _as_walk(q: QuotientGraph, cycle) -> list[tuple[int, int]]:
    walk = []
    for step in cycle:
        if isinstance(step, OrientedEdge):
            walk.append((int(step.edge_id), step.sign))
        elif isinstance(step, tuple):
            walk.append((int(step[0]), int(step[1])))
        else:
            walk.append((int(step), 1))
    if not walk:
        raise GraphError("empty walk")
    g = q.graph
    for i, (e, s) in enumerate(walk):
        if not 0 <= e < g.num_edges:
            raise GraphError(f"unknown quotient edge {e}")
        head = g.endpoints(e, s)[1]
        nxt_e, nxt_s = walk[(i + 1) % len(walk)]
        if head != g.endpoints(nxt_e, nxt_s)[0]:
            raise GraphError("edge sequence is not a closed walk")
    return walk


def cycle_voltage(q: QuotientGraph, cycle):
    """Product of voltages along a closed walk of quotient oriented edges.

    Steps may be :class:`OrientedEdge`, ``(edge, sign)`` pairs, or bare edge
    indices (positive orientation).
    """
    total = q.deck.identity()
    for e, s in _as_walk(q, cycle):
        total = q.deck.op(total, q.voltage(e, s))
    return total


def is_true_cycle(q: QuotientGraph, cycle) -> bool:
    """Whether every lift of the closed walk closes up into a finite cycle.

    For a free action this happens exactly when the walk's voltage has
    finite order: the identity for lattice quotients, always for finite
    deck groups.
    """
    return q.deck.has_finite_order(cycle_voltage(q, cycle))


# --------------------------------------------------------------------------
# Fundamental domains and lifts

@dataclass(frozen=True)
class FundamentalDomain:
    index: int
    edges: tuple  # base edge keys, ordered like quotient edges
    vertices: frozenset

    def __contains__(self, key) -> bool:
        return key in self._edge_set

    @property
    def _edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def contains_all(self, keys: Iterable) -> bool:
        s = self._edge_set
        return all(k in s for k in keys)


def fundamental_domain(q: QuotientGraph, index: int = 0) -> FundamentalDomain:
    """Connected base subgraph mapped edge-bijectively onto the quotient.

    A spanning tree of identity-voltage quotient edges lifts to the
    canonical vertex lifts; every other quotient edge is lifted from the
    canonical lift of its tail.  That is exactly the set of chosen lifts.
    """
    g = q.graph
    if not g.is_connected():
        raise GraphError("quotient is disconnected")
    ident = q.deck.identity()
    flat = [e for e in range(g.num_edges) if q.voltages[e] == ident]
    tree, parent = g.bfs_tree(0, allowed=flat)
    if len(parent) != g.num_vertices:
        raise GraphError("canonical lifts are not connected by identity-voltage edges")
    keys = tuple(q.lifts)
    verts = set()
    for k in keys:
        verts.update(q.base_endpoints(k))
    return FundamentalDomain(index, keys, frozenset(verts))


def lift_subgraph(q: QuotientGraph, H: Iterable[int], window: Iterable, mode: str = "tilde",
                  domain: FundamentalDomain | None = None) -> set:
    """Base edges of the window lying over the quotient edge set ``H``.

    ``tilde`` keeps every preimage in the window; ``hat`` keeps only the
    copy inside the fundamental domain and requires the window to lie in it.
    """
    H = set(H)
    window = list(window)
    if mode == "tilde":
        return {w for w in window if q.project_edge(w)[0] in H}
    if mode == "hat":
        dom = domain if domain is not None else fundamental_domain(q)
        if not dom.contains_all(window):
            raise GraphError("hat lift needs the window inside the fundamental domain")
        return {w for w in window if w in dom and q.project_edge(w)[0] in H}
    raise GraphError(f"unknown lift mode {mode!r}")


def check_nested(inner: FundamentalDomain, outer: FundamentalDomain) -> bool:
    return outer.contains_all(inner.edges)
