"""Independent reference computations used to check the determinantal route.

None of these go through subspaces or projection kernels.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from .graph import Graph, Lattice, UnionFind


def spanning_trees(g: Graph) -> list[int]:
    """All spanning trees as edge bitmasks, by exhaustive search."""
    n, m = g.num_vertices, g.num_edges
    out = []
    for combo in itertools.combinations(range(m), n - 1):
        uf = UnionFind(n)
        if all(uf.union(int(g.tail[e]), int(g.head[e])) for e in combo):
            out.append(sum(1 << e for e in combo))
    return out


def ust_pmf(g: Graph) -> dict[int, float]:
    trees = spanning_trees(g)
    return {t: 1.0 / len(trees) for t in trees}


def laplacian(g: Graph) -> np.ndarray:
    L = np.zeros((g.num_vertices, g.num_vertices))
    for t, h in zip(g.tail, g.head):
        L[t, t] += 1
        L[h, h] += 1
        L[t, h] -= 1
        L[h, t] -= 1
    return L


def spanning_tree_count(g: Graph) -> int:
    """Matrix-tree theorem."""
    L = laplacian(g)
    return int(round(np.linalg.det(L[1:, 1:])))


def effective_resistance(g: Graph, e: int) -> float:
    """Unit-conductance effective resistance across edge ``e`` (Kirchhoff)."""
    Lp = np.linalg.pinv(laplacian(g))
    t, h = int(g.tail[e]), int(g.head[e])
    return float(Lp[t, t] + Lp[h, h] - 2 * Lp[t, h])


def transitive_edge_marginal(num_vertices: int, num_edges: int, dim: int | None = None) -> Fraction:
    """Edge marginal of a projection measure on an edge-transitive graph.

    All diagonal kernel entries agree and sum to the subspace dimension.
    The default dimension is |V| - 1, the spanning-tree size.
    """
    d = num_vertices - 1 if dim is None else dim
    return Fraction(d, num_edges)


def torus_marginals(n: int) -> tuple[Fraction, Fraction]:
    """(wired, free) edge marginals on the n x n torus.

    The star space has dimension n^2 - 1 and the complement of the
    true-cycle space has dimension 2n^2 - (n^2 - 1) = n^2 + 1; the torus is
    edge-transitive with 2n^2 edges.
    """
    V, E = n * n, 2 * n * n
    return transitive_edge_marginal(V, E), transitive_edge_marginal(V, E, V + 1)


def lattice_edge_marginal(lat: Lattice) -> Fraction:
    """Wired forest edge marginal on Z^d, here d = 1 or 2.

    On an amenable transitive graph every tree of the wired forest is
    infinite and the expected degree of a vertex is 2, so each of the
    ``2d`` edges at a vertex is present with probability ``2 / 2d``.  For
    Z^2 this is the classical resistance value 1/2 between neighbours.
    """
    return Fraction(2, lat.degree)


def bracket_check(lat: Lattice, R: int, window_key=None) -> tuple[float, float, float]:
    """Rayleigh bracket ``wired(R) <= reference <= free(R)`` via resistances.

    Identifying vertices lowers effective resistance and deleting edges
    raises it, so the wired and free boxes bound the infinite-lattice value.
    """
    key = window_key if window_key is not None else (lat.origin(), 0)
    free, wired = lat.box(R), lat.wired_box(R)
    lo = effective_resistance(wired, wired.edge_index[key])
    hi = effective_resistance(free, free.edge_index[key])
    return lo, float(lattice_edge_marginal(lat)), hi
