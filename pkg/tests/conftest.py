import itertools

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from usflab.graph import Graph, Lattice, LatticeSpec, TranslationAction, build_graph, build_quotient

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def named(family, **kw):
    return build_graph(LatticeSpec(family, **kw))


SMALL_GRAPHS = {
    "C3": lambda: named("cycle", n=3),
    "C5": lambda: named("cycle", n=5),
    "K4": lambda: named("complete", n=4),
    "K23": lambda: named("complete_bipartite", n=2, m=3),
    "grid3": lambda: named("box", R=1),
}


@pytest.fixture(params=sorted(SMALL_GRAPHS))
def small_graph(request):
    return SMALL_GRAPHS[request.param]()


def torus(n):
    return build_quotient(Lattice(2), TranslationAction.diagonal(2, n))


def c3_from_z():
    return build_quotient(Lattice(1), TranslationAction(1, [[3]]))


@st.composite
def connected_graphs(draw, max_vertices=6, max_extra=5):
    """Random connected multigraphs: a random tree plus random extra edges."""
    n = draw(st.integers(2, max_vertices))
    edges = []
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.append((u, v) if draw(st.booleans()) else (v, u))
    pairs = [p for p in itertools.permutations(range(n), 2)]
    extra = draw(st.lists(st.sampled_from(pairs), max_size=max_extra))
    edges += extra
    order = draw(st.permutations(range(len(edges))))
    return Graph(range(n), [edges[i] for i in order])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
