"""Determinantal measures on edge subsets from projection kernels.

For a subspace S of the flow space the inclusion probability of a finite
edge set B is the principal minor of the Gram matrix
``K(e, f) = <P_S chi^e, chi^f>`` on B.  Subsets of the ground edge set are
encoded as integer bitmasks (bit ``e`` set iff edge ``e`` is present).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .flows import Subspace, orthocomplement, star_space, true_cycle_space
from .graph import Graph, GraphError, QuotientGraph, build_quotient

ENUMERATION_CAP = 24
PROB_TOL = 1e-9
ATOM_FLOOR = 1e-12


class KernelError(ValueError):
    pass


def mask_of(edges) -> int:
    m = 0
    for e in edges:
        m |= 1 << int(e)
    return m


def edges_of(mask: int) -> list[int]:
    out = []
    e = 0
    while mask:
        if mask & 1:
            out.append(e)
        mask >>= 1
        e += 1
    return out


@dataclass(frozen=True, eq=False)
class ProjectionKernel:
    graph: Graph
    section: np.ndarray
    matrix: np.ndarray

    @property
    def num_edges(self) -> int:
        return self.graph.num_edges

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def dim(self) -> int:
        return int(round(self.trace))

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def with_section(self, section) -> "ProjectionKernel":
        """Same measure written over a different orientation section."""
        new = np.asarray(section, dtype=float)
        flip = new * self.section
        return ProjectionKernel(self.graph, new, self.matrix * np.outer(flip, flip))

    def residuals(self) -> dict[str, float]:
        K = self.matrix
        d = np.diag(K)
        return {
            "symmetry": float(np.abs(K - K.T).max(initial=0.0)),
            "idempotence": float(np.abs(K @ K - K).max(initial=0.0)),
            "diagonal_range": float(max(0.0, -d.min(initial=0.0), d.max(initial=0.0) - 1.0)),
            "trace_integrality": abs(self.trace - self.dim),
        }

    def is_valid(self) -> bool:
        r = self.residuals()
        return (r["symmetry"] <= 1e-9 and r["idempotence"] <= 1e-8
                and r["diagonal_range"] <= 1e-9 and r["trace_integrality"] <= 1e-6)

    def to_text(self) -> str:
        return "\n".join(" ".join(f"{x:.17g}" for x in row) for row in self.matrix) + "\n"


def kernel(s: Subspace, section=None) -> ProjectionKernel:
    """Gram matrix of projected unit flows over an orientation section.

    The default section is the stored orientation of every edge.
    """
    m = s.graph.num_edges
    sec = np.ones(m) if section is None else np.asarray(section, dtype=float)
    if sec.shape != (m,) or not np.all(np.abs(sec) == 1):
        raise KernelError("section must give +1 or -1 for every edge")
    B = s.basis * sec
    return ProjectionKernel(s.graph, sec, B.T @ B)


def _clip(p: float) -> float:
    if p < -PROB_TOL or p > 1 + PROB_TOL:
        raise KernelError(f"principal minor {p} is not a probability")
    return min(1.0, max(0.0, p))


def inclusion_probability(k: ProjectionKernel, B) -> float:
    """Probability that every edge of ``B`` (edge indices) is present."""
    B = sorted(set(int(e) for e in B))
    for e in B:
        if not 0 <= e < k.num_edges:
            raise GraphError(f"unknown edge {e}")
    if not B:
        return 1.0
    return _clip(float(np.linalg.det(k.matrix[np.ix_(B, B)])))


class SubsetDistribution:
    """Explicit probability mass function over subsets of ``num_edges`` edges."""

    def __init__(self, num_edges: int, atoms: dict[int, float]):
        self.num_edges = num_edges
        self.atoms = dict(sorted(atoms.items()))

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms.items())

    def prob(self, mask: int) -> float:
        return self.atoms.get(mask, 0.0)

    @property
    def total(self) -> float:
        return math.fsum(self.atoms.values())

    def marginals(self) -> np.ndarray:
        out = np.zeros(self.num_edges)
        for mask, p in self.atoms.items():
            for e in edges_of(mask):
                out[e] += p
        return out

    def sizes(self) -> set[int]:
        return {bin(m).count("1") for m in self.atoms}

    def mass(self, predicate) -> float:
        return math.fsum(p for m, p in self.atoms.items() if predicate(m))

    def validate(self, tol: float = PROB_TOL) -> None:
        if any(p < -tol for p in self.atoms.values()):
            raise KernelError("negative probability")
        if abs(self.total - 1.0) > tol:
            raise KernelError(f"total mass {self.total} differs from 1")
        if any(m >> self.num_edges for m in self.atoms):
            raise KernelError("atom outside the ground set")

    def max_atom_difference(self, other: "SubsetDistribution") -> float:
        keys = set(self.atoms) | set(other.atoms)
        return max((abs(self.prob(k) - other.prob(k)) for k in keys), default=0.0)

    def to_text(self) -> str:
        lines = [f"# ground={self.num_edges}"]
        lines += [f"{m}\t{p:.17g}" for m, p in self.atoms.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SubsetDistribution":
        m, atoms = None, {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = int(line.split("=", 1)[1])
                continue
            a, p = line.split()
            atoms[int(a)] = float(p)
        if m is None:
            raise ValueError("missing '# ground=' header")
        return cls(m, atoms)


def enumerate_distribution(k: ProjectionKernel, cap: int = ENUMERATION_CAP,
                           chunk: int = 20000) -> SubsetDistribution:
    """Every dim-sized subset with a positive principal minor, with that minor as mass."""
    m, d = k.num_edges, k.dim
    if m > cap:
        raise KernelError(f"ground set has {m} edges; exact enumeration is capped at "
                          f"{cap} (use marginals, inclusion_probability or sample)")
    atoms: dict[int, float] = {}
    if d == 0:
        atoms[0] = 1.0
    else:
        K = k.matrix
        combos = itertools.combinations(range(m), d)
        weights = 1 << np.arange(m, dtype=np.int64)
        while True:
            block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
            if block.size == 0:
                break
            dets = np.linalg.det(K[block[:, :, None], block[:, None, :]])
            keep = dets > ATOM_FLOOR
            masks = weights[block[keep]].sum(axis=1)
            for mask, p in zip(masks.tolist(), dets[keep].tolist()):
                atoms[mask] = min(1.0, p)
    dist = SubsetDistribution(m, atoms)
    dist.validate()
    return dist


class SamplingError(RuntimeError):
    pass


def _sample_once(K0: np.ndarray, dim: int, rng: np.random.Generator, retries: int = 5) -> list[int]:
    m = K0.shape[0]
    for _ in range(retries):
        K = K0.copy()
        chosen = []
        degenerate = False
        for e in rng.permutation(m):
            if len(chosen) == dim:
                break
            p = min(1.0, max(0.0, K[e, e]))
            col = K[:, e].copy()
            if rng.random() < p:
                if p < ATOM_FLOOR:
                    degenerate = True
                    break
                chosen.append(int(e))
                K -= np.outer(col, K[e, :]) / p
            else:
                if 1.0 - p < ATOM_FLOOR:
                    degenerate = True
                    break
                K += np.outer(col, K[e, :]) / (1.0 - p)
        if not degenerate and len(chosen) == dim:
            return sorted(chosen)
    raise SamplingError("sampling kept hitting numerically degenerate pivots")


def sample(k: ProjectionKernel, seed) -> list[int]:
    """Exact sample by sequential conditioning over a seed-dependent edge order."""
    return _sample_once(k.matrix, k.dim, np.random.default_rng(seed))


def sample_many(k: ProjectionKernel, count: int, seed) -> list[list[int]]:
    rng = np.random.default_rng(seed)
    return [_sample_once(k.matrix, k.dim, rng) for _ in range(count)]


def wilson_ust(g: Graph, seed) -> list[int]:
    """Uniform spanning tree by loop-erased random walks (Wilson's algorithm)."""
    rng = np.random.default_rng(seed)
    return _wilson(g, rng)


def wilson_many(g: Graph, count: int, seed) -> list[list[int]]:
    rng = np.random.default_rng(seed)
    return [_wilson(g, rng) for _ in range(count)]


def _wilson(g: Graph, rng: np.random.Generator) -> list[int]:
    n = g.num_vertices
    if not g.is_connected():
        raise GraphError("graph is disconnected")
    in_tree = [False] * n
    nxt: list[tuple[int, int] | None] = [None] * n
    in_tree[0] = True
    buf = rng.random(256)
    pos = 0
    for start in range(n):
        u = start
        while not in_tree[u]:
            if pos == len(buf):
                buf = rng.random(256)
                pos = 0
            inc = g.incident(u)
            e, s = inc[int(buf[pos] * len(inc))]
            pos += 1
            nxt[u] = (e, s)
            u = g.endpoints(e, s)[1]
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            e, s = nxt[u]
            u = g.endpoints(e, s)[1]
    return sorted(nxt[v][0] for v in range(n) if nxt[v] is not None and v != 0)


def _as_quotient(x) -> QuotientGraph:
    return x if isinstance(x, QuotientGraph) else build_quotient(x)


def wsf_measure(x: Graph | QuotientGraph) -> ProjectionKernel:
    """Kernel of the star space: the wired forest measure of a finite graph."""
    g = x.graph if isinstance(x, QuotientGraph) else x
    return kernel(star_space(g))


def fsf_measure(x: QuotientGraph | Graph) -> ProjectionKernel:
    """Kernel of the orthocomplement of the true-cycle space.

    A plain graph is treated as its own quotient under the trivial action.
    """
    q = _as_quotient(x)
    return kernel(orthocomplement(true_cycle_space(q)))


def dominates(kS: ProjectionKernel, kT: ProjectionKernel):
    """``(True, coupling)`` if the S-measure is dominated by the T-measure,
    else ``(False, increasing_event)``."""
    from .coupling import NotDominatedError, strassen_coupling

    if kS.num_edges != kT.num_edges:
        raise KernelError("kernels live on different ground sets")
    mu = enumerate_distribution(kS)
    nu = enumerate_distribution(kT)
    try:
        return True, strassen_coupling(mu, nu)
    except NotDominatedError as exc:
        return False, exc.witness
