import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from usflab.flows import (EdgeVector, StabilizationError, Subspace, SubspaceError, chi, cycle_space,
                          direct_sum, domain_graph, fundamental_cycles, hat_pullback, inner,
                          max_cross_inner, orthocomplement, orthonormalize, project,
                          projected_window_subspace, star, star_space, subspace_distance,
                          true_cycle_space, verify_decomposition, voltage_rank, walk_vector)
from usflab.graph import Graph, GraphError, Lattice, OrientedEdge, PermutationAction, build_quotient

from conftest import c3_from_z, connected_graphs, named, torus


def test_unit_flow_is_antisymmetric_with_norm_one():
    g = named("cycle", n=4)
    f = chi(g, 1)
    assert f(1) == 1.0 and f(1, -1) == -1.0
    assert f(OrientedEdge(1, 2, 1, -1)) == -1.0
    assert f.norm() == pytest.approx(1.0)
    assert inner(chi(g, 1, -1), f) == pytest.approx(-1.0)
    assert inner(chi(g, 0), f) == 0.0


def test_edge_vector_arithmetic():
    g = named("cycle", n=3)
    f = chi(g, 0) + chi(g, 1) * 2.0 - chi(g, 2)
    assert list(f.values) == [1.0, 2.0, -1.0]
    assert list((-f).values) == [-1.0, -2.0, 1.0]


def test_star_of_a_vertex():
    g = named("cycle", n=3)
    s = star(g, 0)
    # edge 0 leaves vertex 0, edge 2 enters it
    assert list(s.values) == [1.0, 0.0, -1.0]


def test_orthonormalize_drops_dependent_rows():
    rows = [[1, 1, 0], [2, 2, 0], [0, 0, 3]]
    B = orthonormalize(rows, 3)
    assert B.shape == (2, 3)
    assert np.allclose(B @ B.T, np.eye(2))


@given(connected_graphs())
def test_star_and_cycle_dimensions(g):
    V, E = g.num_vertices, g.num_edges
    st_, cy = star_space(g), cycle_space(g)
    assert st_.dim == V - 1
    assert cy.dim == E - V + 1
    assert max_cross_inner(st_, cy) <= 1e-9
    # every edge is split exactly: P_star + P_cycle = I on finite graphs
    assert np.allclose(st_.projector() + cy.projector(), np.eye(E), atol=1e-9)


@given(connected_graphs())
def test_fundamental_cycles_are_closed(g):
    for w in fundamental_cycles(g):
        v = walk_vector(g, w)
        # a closed walk has zero divergence at every vertex
        for u in range(g.num_vertices):
            assert abs(inner(EdgeVector(g, v), star(g, g.vertices[u]))) <= 1e-12


@given(connected_graphs(), st.data())
def test_projection_is_idempotent_and_self_adjoint(g, data):
    s = star_space(g)
    P = s.projector()
    assert np.allclose(P @ P, P, atol=1e-9)
    assert np.allclose(P, P.T, atol=1e-12)
    vals = data.draw(st.lists(st.floats(-3, 3), min_size=g.num_edges, max_size=g.num_edges))
    f = EdgeVector(g, np.array(vals))
    pf = project(s, f)
    assert np.allclose(project(s, pf).values, pf.values, atol=1e-9)


def test_orthocomplement_containment_and_dims():
    g = named("complete", n=4)
    st_, cy = star_space(g), cycle_space(g)
    with pytest.raises(SubspaceError):
        orthocomplement(st_, cy)
    comp = orthocomplement(st_)
    assert comp.dim == 3
    assert subspace_distance(comp, cy) <= 1e-9
    total = direct_sum(st_, cy)
    assert total.dim == 6 and orthocomplement(total).dim == 0


def test_subspace_distance_is_a_metric_on_examples():
    g = named("cycle", n=4)
    a = Subspace.span(g, [chi(g, 0).values])
    b = Subspace.span(g, [chi(g, 1).values])
    assert subspace_distance(a, a) == 0.0
    assert subspace_distance(a, b) == pytest.approx(1.0)
    assert subspace_distance(Subspace.zero(g), Subspace.full(g)) == pytest.approx(1.0)


def test_verify_decomposition_on_test_graphs(small_graph):
    rep = verify_decomposition(small_graph)
    g = small_graph
    assert rep.dims == {"star": g.num_vertices - 1, "cycle": g.num_edges - g.num_vertices + 1,
                        "grad_hd": 0}
    assert rep.ok and rep.max_residual <= 1e-9


@pytest.mark.parametrize("n", [2, 3, 4])
def test_torus_true_cycle_and_h_dims(n):
    rep = verify_decomposition(torus(n))
    assert rep.dims["true_cycle"] == n * n - 1
    assert rep.dims["H"] == 2
    assert rep.dims["grad_hd"] == 0
    assert rep.ok


def test_true_cycle_space_of_c3_from_z_is_zero():
    q = c3_from_z()
    assert true_cycle_space(q).dim == 0
    assert orthocomplement(true_cycle_space(q)).dim == 3


def test_true_cycle_space_finite_deck_is_everything():
    c6 = named("cycle", n=6)
    q = build_quotient(c6, PermutationAction(c6, [[2, 3, 4, 5, 0, 1]]))
    assert subspace_distance(true_cycle_space(q), cycle_space(q.graph)) <= 1e-12


def test_true_cycles_in_oblique_quotient():
    # L generated by (2, 1) and (0, 3): index 6, still two independent windings
    q = build_quotient(Lattice(2), [[2, 1], [0, 3]])
    rep = verify_decomposition(q)
    assert rep.dims["true_cycle"] == q.graph.num_vertices - 1
    assert rep.dims["H"] == 2


def test_voltage_rank():
    q = torus(3)
    assert voltage_rank(q, range(q.graph.num_edges)) == 2
    tree, _ = q.graph.bfs_tree()
    assert voltage_rank(q, tree) == 0
    c6 = named("cycle", n=6)
    fq = build_quotient(c6, PermutationAction(c6, [[2, 3, 4, 5, 0, 1]]))
    assert voltage_rank(fq, [0, 1]) == 0


def test_projected_window_star_family_on_lattice():
    lat = Lattice(2)
    window = [((0, 0), 0)]
    s = projected_window_subspace(window, "star", lat)
    # the two endpoint stars restrict to +1 and -1 on the edge
    assert s.dim == 1
    c = projected_window_subspace(window, "cycle", lat)
    assert c.dim == 1


def test_projected_window_cycle_family_on_tree_region():
    # on Z every cycle family is trivial, so both sides are {0}
    lat = Lattice(1)
    c = projected_window_subspace([((0,), 0)], "cycle", lat)
    assert c.dim == 0


def test_projected_window_cycle_stabilisation_error():
    with pytest.raises(StabilizationError):
        projected_window_subspace([((0, 0), 0)], "cycle", Lattice(2), max_radius=0)


def test_hat_pullback_matches_quotient_gram_matrix():
    q = torus(3)
    s = orthocomplement(true_cycle_space(q))
    h = hat_pullback(q, s)
    D = domain_graph(q)
    assert D.num_edges == q.graph.num_edges
    assert np.allclose(h.projector(), s.projector())
    assert nx.is_connected(nx.MultiGraph([(D.tail[e], D.head[e]) for e in range(D.num_edges)]))


def test_hat_pullback_rejects_foreign_subspace():
    with pytest.raises((GraphError, SubspaceError)):
        hat_pullback(torus(2), star_space(torus(3).graph))


def test_star_space_of_plain_graph_from_networkx_incidence():
    g = named("box", R=1)
    G = nx.MultiDiGraph()
    G.add_nodes_from(range(g.num_vertices))
    G.add_edges_from(zip(g.tail.tolist(), g.head.tolist()))
    M = nx.incidence_matrix(G, oriented=True).toarray()
    ref = Subspace.span(g, M)
    assert subspace_distance(ref, star_space(g)) <= 1e-9


def test_edge_vector_rejects_bad_shape():
    g = Graph([0, 1], [(0, 1)])
    with pytest.raises((ValueError, GraphError)):
        EdgeVector(g, np.zeros(3))
