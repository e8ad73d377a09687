"""Antisymmetric edge flows, subspaces with orthonormal bases, and the
star / cycle / true-cycle decompositions of the flow space.

An :class:`EdgeVector` stores one real value per edge in its stored
orientation; the value on the reversed orientation is the negative, so
antisymmetry holds by construction.  With the inner product
``<f, g> = 1/2 * sum over oriented edges f(e) g(e)`` this is the ordinary dot
product of the stored arrays and every unit flow has norm one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy

from .graph import (FundamentalDomain, Graph, GraphError, Lattice, OrientedEdge, QuotientGraph,
                    cycle_voltage, fundamental_domain)

RANK_TOL = 1e-9


class SubspaceError(ValueError):
    pass


class StabilizationError(RuntimeError):
    """A window projection did not stabilize within the radius cap."""


def _check_ambient(a: Graph, b: Graph):
    if a is not b and a != b:
        raise SubspaceError("ambient graphs differ")


@dataclass(frozen=True, eq=False)
class EdgeVector:
    graph: Graph
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.graph.num_edges,):
            raise SubspaceError("vector length does not match the edge count")
        object.__setattr__(self, "values", vals)

    def __call__(self, e: int | OrientedEdge, sign: int = 1) -> float:
        if isinstance(e, OrientedEdge):
            e, sign = e.edge_id, e.sign
        return sign * float(self.values[e])

    def __add__(self, other: "EdgeVector") -> "EdgeVector":
        _check_ambient(self.graph, other.graph)
        return EdgeVector(self.graph, self.values + other.values)

    def __sub__(self, other: "EdgeVector") -> "EdgeVector":
        _check_ambient(self.graph, other.graph)
        return EdgeVector(self.graph, self.values - other.values)

    def __mul__(self, c: float) -> "EdgeVector":
        return EdgeVector(self.graph, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "EdgeVector":
        return EdgeVector(self.graph, -self.values)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))


def inner(f: EdgeVector, g: EdgeVector) -> float:
    """Half the sum over both orientations of every edge."""
    _check_ambient(f.graph, g.graph)
    both = np.concatenate([f.values, -f.values]) @ np.concatenate([g.values, -g.values])
    return 0.5 * float(both)


def chi(graph: Graph, e: int | OrientedEdge, sign: int = 1) -> EdgeVector:
    """Unit flow along an oriented edge."""
    if isinstance(e, OrientedEdge):
        e, sign = e.edge_id, e.sign
    if not (isinstance(e, (int, np.integer)) and 0 <= e < graph.num_edges):
        raise GraphError(f"unknown edge {e!r}")
    vals = np.zeros(graph.num_edges)
    vals[e] = sign
    return EdgeVector(graph, vals)


def star(graph: Graph, v) -> EdgeVector:
    """Sum of the unit flows leaving vertex ``v`` (a vertex id)."""
    try:
        i = graph.vertex_index[v]
    except KeyError:
        raise GraphError(f"unknown vertex {v!r}") from None
    return EdgeVector(graph, _star_values(graph, i))


def _star_values(graph: Graph, i: int) -> np.ndarray:
    vals = np.zeros(graph.num_edges)
    for e, s in graph.incident(i):
        vals[e] += s
    return vals


def orthonormalize(rows, width: int | None = None, tol: float = RANK_TOL) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    A vector is dropped when its residual falls to ``tol`` times the
    largest original norm in the set.
    """
    V = np.array(rows, dtype=float)
    if V.size == 0:
        return np.zeros((0, width if width is not None else 0))
    V = V.reshape(len(V), -1)
    ref = np.full(len(V), np.linalg.norm(V, axis=1).max())
    for _ in range(2):
        keep = []
        for i in range(len(V)):
            v = V[i]
            nv = np.linalg.norm(v)
            if ref[i] == 0 or nv <= tol * ref[i]:
                continue
            q = v / nv
            keep.append(q)
            if i + 1 < len(V):
                V[i + 1:] -= np.outer(V[i + 1:] @ q, q)
        V = np.array(keep).reshape(len(keep), V.shape[1])
        ref = np.ones(len(V))
    return V


class Subspace:
    """Subspace of the flow space of ``graph`` with an orthonormal basis (rows)."""

    def __init__(self, graph: Graph, basis, name: str = ""):
        self.graph = graph
        B = np.asarray(basis, dtype=float).reshape(-1, graph.num_edges)
        B.setflags(write=False)
        self.basis = B
        self.name = name

    @classmethod
    def span(cls, graph: Graph, vectors, name: str = "") -> "Subspace":
        rows = [v.values if isinstance(v, EdgeVector) else v for v in vectors]
        return cls(graph, orthonormalize(rows, graph.num_edges), name)

    @classmethod
    def full(cls, graph: Graph) -> "Subspace":
        return cls(graph, np.eye(graph.num_edges), "full")

    @classmethod
    def zero(cls, graph: Graph) -> "Subspace":
        return cls(graph, np.zeros((0, graph.num_edges)), "zero")

    def __repr__(self):
        return f"<Subspace {self.name or ''} dim={self.dim} of {self.graph!r}>"

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def vectors(self) -> list[EdgeVector]:
        return [EdgeVector(self.graph, b) for b in self.basis]

    def orthonormality_residual(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.abs(self.basis @ self.basis.T - np.eye(self.dim)).max())

    def to_text(self) -> str:
        """Basis dump, one ``basis_index  edge_key  value`` record per nonzero."""
        lines = []
        for i, b in enumerate(self.basis):
            for e in np.flatnonzero(np.abs(b) > 1e-15):
                lines.append(f"{i}\t{self.graph.keys[e]}\t{b[e]:.17g}")
        return "\n".join(lines) + ("\n" if lines else "")


def project(s: Subspace, f: EdgeVector) -> EdgeVector:
    _check_ambient(s.graph, f.graph)
    return EdgeVector(s.graph, s.basis.T @ (s.basis @ f.values))


def subspace_distance(a: Subspace, b: Subspace) -> float:
    """Spectral norm of the difference of the two orthogonal projectors."""
    _check_ambient(a.graph, b.graph)
    if a.graph.num_edges == 0:
        return 0.0
    return float(np.linalg.norm(a.projector() - b.projector(), 2))


def max_cross_inner(a: Subspace, b: Subspace) -> float:
    if a.dim == 0 or b.dim == 0:
        return 0.0
    return float(np.abs(a.basis @ b.basis.T).max())


def star_space(graph: Graph) -> Subspace:
    rows = [_star_values(graph, i) for i in range(graph.num_vertices)]
    return Subspace(graph, orthonormalize(rows, graph.num_edges), "star")


def fundamental_cycles(graph: Graph) -> list[list[tuple[int, int]]]:
    """Closed walks, one per non-tree edge of a BFS spanning forest.

    Each walk runs from the component root down the tree to the tail of the
    non-tree edge, across it, and back up to the root.
    """
    walks = []
    seen: set[int] = set()
    for root in range(graph.num_vertices):
        if root in seen:
            continue
        tree, parent = graph.bfs_tree(root)
        seen.update(parent)
        tree = set(tree)
        comp_edges = sorted({e for v in parent for e, _ in graph.incident(v)})
        for e in comp_edges:
            if e in tree:
                continue
            u, v = graph.endpoints(e)
            down = graph.tree_path(parent, u)
            up = [(f, -s) for f, s in reversed(graph.tree_path(parent, v))]
            walks.append(down + [(e, 1)] + up)
    return walks


def walk_vector(graph: Graph, walk) -> np.ndarray:
    vals = np.zeros(graph.num_edges)
    for e, s in walk:
        vals[e] += s
    return vals


def cycle_space(graph: Graph) -> Subspace:
    rows = [walk_vector(graph, w) for w in fundamental_cycles(graph)]
    return Subspace(graph, orthonormalize(rows, graph.num_edges), "cycle")


def _voltage_matrix(q: QuotientGraph, walks) -> np.ndarray:
    return np.array([cycle_voltage(q, w) for w in walks], dtype=np.int64).reshape(len(walks), -1)


def true_cycle_space(q: QuotientGraph) -> Subspace:
    """Span of the cycles whose lifts close up.

    For a lattice quotient this is the rational kernel of the voltage map
    from the integer cycle space to Z^d, evaluated on fundamental cycles.
    A finite deck group has torsion voltages only, so every cycle is true.
    """
    g = q.graph
    walks = fundamental_cycles(g)
    Z = np.array([walk_vector(g, w) for w in walks]).reshape(len(walks), g.num_edges)
    if q.deck.finite or not walks:
        return Subspace(g, orthonormalize(Z, g.num_edges), "true_cycle")
    M = _voltage_matrix(q, walks)
    kernel = sympy.Matrix(M.T.tolist()).nullspace()
    combos = []
    for vec in kernel:
        den = sympy.ilcm(*[sympy.fraction(x)[1] for x in vec]) if len(vec) else 1
        combos.append(np.array([int(x * den) for x in vec], dtype=float))
    rows = [c @ Z for c in combos]
    return Subspace(g, orthonormalize(rows, g.num_edges), "true_cycle")


def voltage_rank(q: QuotientGraph, edges) -> int:
    """Rank of the voltage image of the cycle space of a spanning subgraph."""
    g = q.graph
    edges = sorted(set(edges))
    sub = Graph(g.vertices, [(g.vertices[g.tail[e]], g.vertices[g.head[e]]) for e in edges])
    walks = [[(edges[e], s) for e, s in w] for w in fundamental_cycles(sub)]
    if not walks:
        return 0
    if q.deck.finite:
        return 0
    return int(np.linalg.matrix_rank(_voltage_matrix(q, walks).astype(float)))


def orthocomplement(s: Subspace, ambient: Subspace | None = None) -> Subspace:
    """Orthogonal complement of ``s`` inside ``ambient`` (default: everything)."""
    amb = ambient if ambient is not None else Subspace.full(s.graph)
    _check_ambient(s.graph, amb.graph)
    if s.dim:
        resid = s.basis - (s.basis @ amb.basis.T) @ amb.basis
        if resid.size and np.abs(resid).max() > 1e-9:
            raise SubspaceError("subspace is not contained in the ambient subspace")
    comp = orthonormalize(np.vstack([s.basis, amb.basis]), s.graph.num_edges)[s.dim:]
    if comp.shape[0] != amb.dim - s.dim:
        raise SubspaceError(f"complement has dimension {comp.shape[0]}, "
                            f"expected {amb.dim - s.dim}")
    return Subspace(s.graph, comp, "complement")


def direct_sum(*spaces: Subspace) -> Subspace:
    g = spaces[0].graph
    rows = [b for sp in spaces for b in sp.basis]
    return Subspace(g, orthonormalize(rows, g.num_edges), "+".join(sp.name for sp in spaces))


@dataclass
class DecompositionReport:
    num_vertices: int
    num_edges: int
    dims: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    @property
    def dim_sum(self) -> int:
        parts = ("star", "true_cycle", "H", "grad_hd") if "true_cycle" in self.dims \
            else ("star", "cycle", "grad_hd")
        return sum(self.dims[p] for p in parts)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return self.dim_sum == self.num_edges and self.max_residual <= 1e-9

    def rows(self):
        out = [("num_vertices", self.num_vertices), ("num_edges", self.num_edges)]
        out += [(f"dim_{k}", v) for k, v in self.dims.items()]
        out += [(f"residual_{k}", v) for k, v in self.residuals.items()]
        out += [("dim_sum", self.dim_sum), ("ok", self.ok)]
        return out


def verify_decomposition(x: Graph | QuotientGraph) -> DecompositionReport:
    """Dimensions and orthogonality of star + cycle (+ true-cycle / H) + grad HD.

    Failures are reported, never raised.
    """
    q = x if isinstance(x, QuotientGraph) else None
    g = q.graph if q is not None else x
    st, cy = star_space(g), cycle_space(g)
    rep = DecompositionReport(g.num_vertices, g.num_edges)
    rep.dims["star"] = st.dim
    rep.dims["cycle"] = cy.dim
    rep.residuals["star_cycle"] = max_cross_inner(st, cy)
    both = direct_sum(st, cy)
    try:
        ghd = orthocomplement(both)
    except SubspaceError:
        ghd = Subspace.zero(g)
        rep.residuals["grad_hd_complement"] = float("inf")
    rep.dims["grad_hd"] = ghd.dim
    rep.residuals["star_grad_hd"] = max_cross_inner(st, ghd)
    rep.residuals["cycle_grad_hd"] = max_cross_inner(cy, ghd)
    for name, sp in (("star", st), ("cycle", cy), ("grad_hd", ghd)):
        rep.residuals[f"orthonormal_{name}"] = sp.orthonormality_residual()
    if q is not None:
        C = true_cycle_space(q)
        try:
            H = orthocomplement(C, cy)
            rep.residuals["true_cycle_in_cycle"] = 0.0
        except SubspaceError:
            H = Subspace.zero(g)
            rep.residuals["true_cycle_in_cycle"] = float("inf")
        rep.dims["true_cycle"] = C.dim
        rep.dims["H"] = H.dim
        rep.residuals["true_cycle_H"] = max_cross_inner(C, H)
        rep.residuals["star_true_cycle"] = max_cross_inner(st, C)
        rep.residuals["star_H"] = max_cross_inner(st, H)
    return rep


# --------------------------------------------------------------------------
# Window projections

def _window_graph(endpoints, keys) -> Graph:
    keys = list(keys)
    ends = [endpoints(k) for k in keys]
    verts = sorted({x for pair in ends for x in pair}, key=repr)
    return Graph(verts, ends, keys)


def _restrict(rows, cols, width) -> np.ndarray:
    """Restrict row vectors to the given columns; ``None`` columns read as 0."""
    out = np.zeros((len(rows), width))
    for j, c in enumerate(cols):
        if c is None:
            continue
        idx, sign = c
        out[:, j] = sign * rows[:, idx] if len(rows) else 0.0
    return out


def projected_window_subspace(window, family: str, source, max_radius: int = 8,
                              domain: FundamentalDomain | None = None) -> Subspace:
    """Projection of the star or cycle family onto ``span{chi^e : e in window}``.

    ``source`` is either the base :class:`Lattice` or a
    :class:`QuotientGraph`; for a quotient the family is pulled back onto
    its fundamental domain first (hat lift).  On a lattice the star family
    is exact; the cycle family uses all cycles within graph distance ``r``
    of the window and ``r`` grows until two successive spans coincide.
    """
    if family not in ("star", "cycle"):
        raise ValueError(f"unknown family {family!r}")
    window = list(window)
    if isinstance(source, Lattice):
        W = _window_graph(source.endpoints, window)
        m = W.num_edges
        if family == "star":
            rows = []
            for v in W.vertices:
                vals = np.zeros(m)
                for key, s in source.incident(v):
                    j = W.edge_index.get(key)
                    if j is not None:
                        vals[j] += s
                rows.append(vals)
            return Subspace(W, orthonormalize(rows, m), "P(star)")
        prev = None
        for r in range(max_radius + 1):
            region = source.edges_near(W.vertices, r)
            cyc = cycle_space(region)
            cols = [(region.edge_index[k], 1) for k in window]
            cur = Subspace(W, orthonormalize(_restrict(cyc.basis, cols, m), m), "P(cycle)")
            if prev is not None and subspace_distance(prev, cur) <= 1e-9:
                return cur
            prev = cur
        raise StabilizationError(f"cycle projection not stable by radius {max_radius}")
    q: QuotientGraph = source
    dom = domain if domain is not None else fundamental_domain(q)
    W = _window_graph(q.base_endpoints, window)
    m = W.num_edges
    cols = [q.project_edge(k) if k in dom else None for k in window]
    if family == "star":
        fam = np.array([_star_values(q.graph, i) for i in range(q.graph.num_vertices)])
    else:
        fam = true_cycle_space(q).basis
    return Subspace(W, orthonormalize(_restrict(fam, cols, m), m), f"P(hat {family})")


def domain_graph(q: QuotientGraph) -> Graph:
    """The fundamental domain as a graph, edges ordered and oriented like the quotient."""
    dom = fundamental_domain(q)
    signs = getattr(q, "_lift_signs", (1,) * len(dom.edges))
    ends = []
    for key, s in zip(dom.edges, signs):
        t, h = q.base_endpoints(key)
        ends.append((t, h) if s == 1 else (h, t))
    verts = sorted(dom.vertices, key=repr)
    return Graph(verts, ends, dom.edges, name="fundamental domain")


def hat_pullback(q: QuotientGraph, s: Subspace, graph: Graph | None = None) -> Subspace:
    """Pull a quotient subspace back onto the fundamental domain.

    The projection restricted to the domain is an isomorphism of flow
    spaces, so the basis carries over unchanged.
    """
    _check_ambient(s.graph, q.graph)
    D = graph if graph is not None else domain_graph(q)
    return Subspace(D, s.basis, f"hat {s.name}")
