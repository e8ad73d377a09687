import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from usflab import oracles
from usflab.determinantal import (KernelError, SubsetDistribution, dominates, edges_of,
                                  enumerate_distribution, fsf_measure, inclusion_probability,
                                  kernel, mask_of, sample, sample_many, wilson_many, wilson_ust,
                                  wsf_measure)
from usflab.flows import Subspace, chi, star_space
from usflab.graph import Graph, GraphError

from conftest import c3_from_z, connected_graphs, named, torus

# Spanning-tree counts of the test graphs, from the matrix-tree theorem
# (networkx cross-check below) and frozen here.
TREE_COUNTS = {"C3": 3, "C5": 5, "K4": 16, "K23": 12, "grid3": 192}


def _nx(g):
    G = nx.MultiGraph()
    G.add_nodes_from(range(g.num_vertices))
    G.add_edges_from(zip(g.tail.tolist(), g.head.tolist()))
    return G


def test_mask_roundtrip():
    assert mask_of([0, 3, 5]) == 0b101001
    assert edges_of(0b101001) == [0, 3, 5]


@pytest.mark.parametrize("name,builder", [
    ("C3", lambda: named("cycle", n=3)), ("C5", lambda: named("cycle", n=5)),
    ("K4", lambda: named("complete", n=4)), ("K23", lambda: named("complete_bipartite", n=2, m=3)),
    ("grid3", lambda: named("box", R=1)),
])
def test_frozen_tree_counts(name, builder):
    g = builder()
    assert oracles.spanning_tree_count(g) == TREE_COUNTS[name]
    assert round(nx.number_of_spanning_trees(_nx(g))) == TREE_COUNTS[name]
    assert len(enumerate_distribution(wsf_measure(g))) == TREE_COUNTS[name]


def test_kernel_diagonal_is_effective_resistance(small_graph):
    """Transfer-current diagonal equals unit-conductance resistance (Kirchhoff)."""
    g = small_graph
    k = wsf_measure(g)
    G = _nx(g)
    for e in range(g.num_edges):
        r = nx.resistance_distance(G, int(g.tail[e]), int(g.head[e]))
        assert k.matrix[e, e] == pytest.approx(r, abs=1e-9)


def test_c3_exact_values():
    k = wsf_measure(named("cycle", n=3))
    assert np.allclose(k.diagonal(), 2 / 3)
    assert inclusion_probability(k, [0, 1]) == pytest.approx(1 / 3)
    assert inclusion_probability(k, [0, 1, 2]) == pytest.approx(0.0, abs=1e-12)
    assert inclusion_probability(k, []) == 1.0
    with pytest.raises(GraphError):
        inclusion_probability(k, [7])


def test_k4_marginals_and_pair():
    k = wsf_measure(named("complete", n=4))
    assert np.allclose(k.diagonal(), 0.5)
    # every pair minor against a brute-force count over the 16 trees
    g = named("complete", n=4)
    trees = oracles.spanning_trees(g)
    for a, b in itertools.combinations(range(6), 2):
        frac = sum(1 for t in trees if t >> a & 1 and t >> b & 1) / len(trees)
        assert inclusion_probability(k, [a, b]) == pytest.approx(frac, abs=1e-12)


@given(connected_graphs(max_vertices=5, max_extra=4))
def test_kernel_is_a_projection(g):
    k = wsf_measure(g)
    r = k.residuals()
    assert r["symmetry"] <= 1e-12 and r["idempotence"] <= 1e-9
    assert k.dim == g.num_vertices - 1
    assert k.is_valid()


@given(connected_graphs(max_vertices=5, max_extra=4), st.data())
def test_orientation_section_invariance(g, data):
    k = wsf_measure(g)
    signs = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=g.num_edges,
                               max_size=g.num_edges))
    k2 = kernel(star_space(g), signs)
    B = data.draw(st.sets(st.integers(0, g.num_edges - 1), max_size=3))
    assert abs(inclusion_probability(k, B) - inclusion_probability(k2, B)) <= 1e-9
    assert np.allclose(k.with_section(signs).matrix, k2.matrix, atol=1e-12)


def test_bad_section_rejected():
    g = named("cycle", n=3)
    with pytest.raises(KernelError):
        kernel(star_space(g), [1, 0, 1])


@given(connected_graphs(max_vertices=5, max_extra=3))
def test_enumeration_equals_ust(g):
    dist = enumerate_distribution(wsf_measure(g))
    ref = oracles.ust_pmf(g)
    assert set(dist.atoms) == set(ref)
    assert max(abs(dist.prob(m) - p) for m, p in ref.items()) <= 1e-9
    assert np.allclose(dist.marginals(), wsf_measure(g).diagonal(), atol=1e-9)


def test_enumeration_cap():
    with pytest.raises(KernelError, match="capped"):
        enumerate_distribution(wsf_measure(named("box", R=2)))


def test_distribution_text_roundtrip():
    dist = enumerate_distribution(wsf_measure(named("complete", n=4)))
    back = SubsetDistribution.from_text(dist.to_text())
    assert back.num_edges == 6 and back.max_atom_difference(dist) == 0.0
    with pytest.raises(ValueError):
        SubsetDistribution.from_text("1\t0.5\n")


def test_distribution_validate():
    with pytest.raises(KernelError):
        SubsetDistribution(2, {1: 0.5}).validate()
    with pytest.raises(KernelError):
        SubsetDistribution(2, {1: 1.5, 2: -0.5}).validate()
    with pytest.raises(KernelError):
        SubsetDistribution(1, {2: 1.0}).validate()


@pytest.mark.parametrize("n", [2, 3])
def test_torus_measures(n):
    q = torus(n)
    W, F = wsf_measure(q), fsf_measure(q)
    w, f = oracles.torus_marginals(n)
    assert np.allclose(W.diagonal(), float(w), atol=1e-9)
    assert np.allclose(F.diagonal(), float(f), atol=1e-9)
    assert F.dim == n * n + 1


def test_fsf_of_plain_graph_equals_wsf(small_graph):
    assert np.allclose(fsf_measure(small_graph).matrix, wsf_measure(small_graph).matrix,
                       atol=1e-9)


def test_c3_from_z_free_measure_is_everything():
    dist = enumerate_distribution(fsf_measure(c3_from_z()))
    assert dist.atoms == {0b111: 1.0}


def test_sampling_reproducible_and_sized():
    k = fsf_measure(torus(2))
    assert sample(k, 5) == sample(k, 5)
    draws = sample_many(k, 200, 1)
    assert all(len(s) == 5 for s in draws)
    assert draws == sample_many(k, 200, 1)
    support = set(enumerate_distribution(k).atoms)
    assert all(mask_of(s) in support for s in draws)


def test_sampler_frequencies_k4():
    g = named("complete", n=4)
    k = wsf_measure(g)
    N = 20000
    counts = {}
    for s in sample_many(k, N, 3):
        counts[mask_of(s)] = counts.get(mask_of(s), 0) + 1
    for m in oracles.spanning_trees(g):
        p = 1 / 16
        assert abs(counts.get(m, 0) / N - p) <= 4 * math.sqrt(p * (1 - p) / N)


def test_wilson_returns_spanning_trees():
    g = named("box", R=2)
    for t in wilson_many(g, 50, 2):
        assert g.is_spanning_tree(t)
    assert wilson_ust(g, 4) == wilson_ust(g, 4)
    with pytest.raises(GraphError):
        wilson_ust(Graph([0, 1, 2], [(0, 1)]), 0)


def test_dominates():
    g = named("cycle", n=3)
    full = Subspace.full(g)
    ok, coupling = dominates(wsf_measure(g), kernel(full))
    assert ok and coupling.monotonicity_violations() == 0
    ok, witness = dominates(kernel(full), wsf_measure(g))
    assert not ok
    mu = enumerate_distribution(kernel(full))
    nu = enumerate_distribution(wsf_measure(g))
    assert witness.mass(mu) > witness.mass(nu) + 1e-9


def test_single_edge_subspace_kernel():
    g = named("cycle", n=4)
    k = kernel(Subspace.span(g, [chi(g, 2).values]))
    assert enumerate_distribution(k).atoms == {0b100: 1.0}
