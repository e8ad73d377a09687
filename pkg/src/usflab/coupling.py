"""Monotone couplings of subset distributions.

A coupling is built as a transport problem solved by maximum flow: mass
moves from each atom A of the smaller measure to atoms B of the larger
one with A a subset of B.  A full unit of flow is a monotone coupling;
otherwise the minimum cut yields an increasing event that the first
measure charges more than the second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from ._maxflow import INF, FlowNetwork
from .determinantal import SubsetDistribution
from .graph import FundamentalDomain, GraphError, QuotientGraph, fundamental_domain

TOL = 1e-9
WINDOW_CAP = 12


class CouplingError(ValueError):
    pass


@dataclass(frozen=True)
class IncreasingEvent:
    """Up-closure of a family of generating subsets."""
    num_edges: int
    generators: tuple[int, ...]

    def __contains__(self, mask: int) -> bool:
        return any(g & ~mask == 0 for g in self.generators)

    def mass(self, dist: SubsetDistribution) -> float:
        return dist.mass(lambda m: m in self)


class NotDominatedError(CouplingError):
    def __init__(self, witness: IncreasingEvent, flow: float, mu_mass: float, nu_mass: float):
        super().__init__(f"not stochastically dominated: max flow {flow:.12g} < 1; "
                         f"increasing event has mass {mu_mass:.12g} vs {nu_mass:.12g}")
        self.witness = witness
        self.flow = flow
        self.mu_mass = mu_mass
        self.nu_mass = nu_mass


class MonotoneCoupling:
    """Probability mass on pairs ``(A, B)`` of edge bitmasks."""

    def __init__(self, num_edges: int, atoms: dict[tuple[int, int], float]):
        self.num_edges = num_edges
        self.atoms = dict(sorted(atoms.items()))

    def __len__(self):
        return len(self.atoms)

    def prob(self, a: int, b: int) -> float:
        return self.atoms.get((a, b), 0.0)

    @property
    def total(self) -> float:
        return math.fsum(self.atoms.values())

    def marginals(self) -> tuple[SubsetDistribution, SubsetDistribution]:
        first: dict[int, list[float]] = {}
        second: dict[int, list[float]] = {}
        for (a, b), p in self.atoms.items():
            first.setdefault(a, []).append(p)
            second.setdefault(b, []).append(p)
        return (SubsetDistribution(self.num_edges, {k: math.fsum(v) for k, v in first.items()}),
                SubsetDistribution(self.num_edges, {k: math.fsum(v) for k, v in second.items()}))

    def monotonicity_violations(self, tol: float = 0.0) -> int:
        return sum(1 for (a, b), p in self.atoms.items() if p > tol and a & ~b)

    def marginal_residuals(self, mu: SubsetDistribution, nu: SubsetDistribution) -> tuple[float, float]:
        f, s = self.marginals()
        return f.max_atom_difference(mu), s.max_atom_difference(nu)

    def validate(self, mu: SubsetDistribution | None = None, nu: SubsetDistribution | None = None,
                 tol: float = TOL) -> None:
        if any(p < -tol for p in self.atoms.values()):
            raise CouplingError("negative probability")
        if abs(self.total - 1.0) > tol:
            raise CouplingError(f"total mass {self.total} differs from 1")
        if self.monotonicity_violations(tol):
            raise CouplingError("coupling charges a pair (A, B) with A not inside B")
        if mu is not None and nu is not None:
            r1, r2 = self.marginal_residuals(mu, nu)
            if max(r1, r2) > tol:
                raise CouplingError(f"marginal residuals {r1:.3g}, {r2:.3g} exceed {tol}")

    def translate(self, perm: Sequence[int]) -> "MonotoneCoupling":
        pm = MaskPermuter(perm)
        out: dict[tuple[int, int], float] = {}
        for (a, b), p in self.atoms.items():
            key = (pm(a), pm(b))
            out[key] = out.get(key, 0.0) + p
        return MonotoneCoupling(self.num_edges, out)

    def tv_distance(self, other: "MonotoneCoupling") -> float:
        keys = set(self.atoms) | set(other.atoms)
        return 0.5 * math.fsum(abs(self.prob(*k) - other.prob(*k)) for k in keys)

    def to_text(self) -> str:
        lines = [f"# ground={self.num_edges}"]
        lines += [f"{a}\t{b}\t{p:.17g}" for (a, b), p in self.atoms.items()]
        return "\n".join(lines) + "\n"


def mix(c1: MonotoneCoupling, c2: MonotoneCoupling, t: float) -> MonotoneCoupling:
    out: dict[tuple[int, int], float] = {}
    for c, w in ((c1, t), (c2, 1.0 - t)):
        for k, p in c.atoms.items():
            out[k] = out.get(k, 0.0) + w * p
    return MonotoneCoupling(c1.num_edges, out)


class MaskPermuter:
    """Apply an edge permutation to bitmasks via byte lookup tables."""

    def __init__(self, perm: Sequence[int]):
        perm = [int(x) for x in perm]
        if sorted(perm) != list(range(len(perm))):
            raise CouplingError("group element does not permute the ground edges")
        self.perm = tuple(perm)
        self.tables = []
        for lo in range(0, len(perm), 8):
            table = []
            for byte in range(256):
                img = 0
                for j in range(8):
                    if byte >> j & 1 and lo + j < len(perm):
                        img |= 1 << perm[lo + j]
                table.append(img)
            self.tables.append(table)

    def __call__(self, mask: int) -> int:
        out = 0
        for t in self.tables:
            out |= t[mask & 255]
            mask >>= 8
        return out


def _supersets(a: int, nu_by_size: dict[int, dict[int, float]], num_edges: int):
    size_a = bin(a).count("1")
    free = [e for e in range(num_edges) if not a >> e & 1]
    for size, atoms in nu_by_size.items():
        k = size - size_a
        if k < 0:
            continue
        if math.comb(len(free), k) <= len(atoms):
            for extra in combinations(free, k):
                b = a
                for e in extra:
                    b |= 1 << e
                if b in atoms:
                    yield b
        else:
            for b in atoms:
                if a & ~b == 0:
                    yield b


def strassen_coupling(mu: SubsetDistribution, nu: SubsetDistribution) -> MonotoneCoupling:
    """Monotone coupling of ``mu`` below ``nu`` by maximum flow.

    Atoms are processed in increasing bitmask order; a greedy pass fills
    most of the flow and Dinic's algorithm completes it, so the result is
    deterministic.  Raises :class:`NotDominatedError` carrying an
    increasing-event witness when the flow stays below one.
    """
    if mu.num_edges != nu.num_edges:
        raise CouplingError("distributions live on different ground sets")
    mu_atoms = [(a, p) for a, p in mu.atoms.items() if p > 0]
    nu_atoms = [(b, p) for b, p in nu.atoms.items() if p > 0]
    na, nb = len(mu_atoms), len(nu_atoms)
    src, sink = 0, na + nb + 1
    net = FlowNetwork(na + nb + 2)
    nu_pos = {b: na + 1 + j for j, (b, _) in enumerate(nu_atoms)}
    nu_by_size: dict[int, dict[int, float]] = {}
    for b, p in nu_atoms:
        nu_by_size.setdefault(bin(b).count("1"), {})[b] = p
    src_arcs = [net.add_edge(src, 1 + i, p) for i, (_, p) in enumerate(mu_atoms)]
    sink_arcs = [net.add_edge(nu_pos[b], sink, p) for b, p in nu_atoms]
    middle = []
    for i, (a, _) in enumerate(mu_atoms):
        for b in _supersets(a, nu_by_size, mu.num_edges):
            middle.append((i, b, net.add_edge(1 + i, nu_pos[b], INF)))
    # greedy preflow along the arcs in order
    by_source: dict[int, list[tuple[int, int]]] = {}
    for i, b, arc in middle:
        by_source.setdefault(i, []).append((arc, nu_pos[b] - na - 1))
    for i, arcs in by_source.items():
        for arc, j in arcs:
            left = net.cap[src_arcs[i]]
            if left <= 0:
                break
            amount = min(left, net.cap[sink_arcs[j]])
            if amount > 0:
                net.push(src_arcs[i], amount)
                net.push(arc, amount)
                net.push(sink_arcs[j], amount)
    net.max_flow(src, sink)
    flow = math.fsum(net.flow_on(a) for a in src_arcs)
    if flow < 1.0 - TOL:
        seen = net.reachable(src)
        gens = tuple(a for i, (a, _) in enumerate(mu_atoms) if seen[1 + i])
        event = IncreasingEvent(mu.num_edges, gens)
        raise NotDominatedError(event, flow, event.mass(mu), event.mass(nu))
    atoms = {}
    for i, b, arc in middle:
        f = net.flow_on(arc)
        if f > 0:
            atoms[(mu_atoms[i][0], b)] = f
    return MonotoneCoupling(mu.num_edges, atoms)


def _max_marginal_shift(dist: SubsetDistribution, pm: MaskPermuter) -> float:
    return max((abs(p - dist.prob(pm(m))) for m, p in dist.atoms.items()), default=0.0)


def average_over_group(c: MonotoneCoupling, actions: Sequence[Sequence[int]],
                       tol: float = TOL) -> MonotoneCoupling:
    """Uniform average of the translates ``g . c`` over a finite group.

    ``actions`` must list every group element as an edge permutation.  Both
    marginals have to be invariant already, otherwise averaging would change
    them.
    """
    if not actions:
        raise CouplingError("empty group")
    first, second = c.marginals()
    perms = [MaskPermuter(g) for g in actions]
    for pm in perms:
        if max(_max_marginal_shift(first, pm), _max_marginal_shift(second, pm)) > tol:
            raise CouplingError("marginals are not invariant under the group")
    acc: dict[tuple[int, int], list[float]] = {}
    w = 1.0 / len(perms)
    for pm in perms:
        for (a, b), p in c.atoms.items():
            acc.setdefault((pm(a), pm(b)), []).append(p * w)
    return MonotoneCoupling(c.num_edges, {k: math.fsum(v) for k, v in acc.items()})


def check_invariance(c: MonotoneCoupling, generators: Sequence[Sequence[int]]) -> float:
    """Largest total-variation distance between ``c`` and a generator translate."""
    return max((c.tv_distance(c.translate(g)) for g in generators), default=0.0)


@dataclass
class PairTable:
    """Joint law of the lifted pair restricted to a finite window of base edges."""
    window: tuple
    cells: dict[tuple[int, int], float]

    def marginals(self) -> tuple[dict[int, float], dict[int, float]]:
        first: dict[int, float] = {}
        second: dict[int, float] = {}
        for (a, b), p in self.cells.items():
            first[a] = first.get(a, 0.0) + p
            second[b] = second.get(b, 0.0) + p
        return first, second

    def edge_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        k = len(self.window)
        w = np.zeros(k)
        f = np.zeros(k)
        for (a, b), p in self.cells.items():
            for j in range(k):
                w[j] += p * (a >> j & 1)
                f[j] += p * (b >> j & 1)
        return w, f

    def monotonicity_violations(self) -> int:
        return sum(1 for (a, b), p in self.cells.items() if p > 0 and a & ~b)

    def max_difference(self, other: "PairTable") -> float:
        keys = set(self.cells) | set(other.cells)
        return max((abs(self.cells.get(k, 0.0) - other.cells.get(k, 0.0)) for k in keys),
                   default=0.0)

    def to_csv_rows(self):
        k = len(self.window)
        for (a, b), p in sorted(self.cells.items()):
            yield format(a, f"0{k}b")[::-1], format(b, f"0{k}b")[::-1], p


def lift_coupling_window(c: MonotoneCoupling, q: QuotientGraph, window, mode: str = "tilde",
                         domain: FundamentalDomain | None = None) -> PairTable:
    """Pull a quotient coupling back to a window of base edges.

    In ``tilde`` mode a window edge is present iff the quotient edge below it
    is; ``hat`` mode keeps only the copy inside the fundamental domain and
    requires the window to lie in it.  Bit ``j`` of a cell refers to
    ``window[j]``.
    """
    window = tuple(window)
    if len(window) > WINDOW_CAP:
        raise CouplingError(f"window has {len(window)} edges; the cap is {WINDOW_CAP}")
    if mode == "hat":
        dom = domain if domain is not None else fundamental_domain(q)
        if not dom.contains_all(window):
            raise GraphError("hat lift needs the window inside the fundamental domain")
        present = [w in dom for w in window]
    elif mode == "tilde":
        present = [True] * len(window)
    else:
        raise GraphError(f"unknown lift mode {mode!r}")
    below = [q.project_edge(w)[0] for w in window]
    if not c.atoms:
        return PairTable(window, {})
    pairs = np.array(list(c.atoms.keys()), dtype=np.int64)
    probs = np.array(list(c.atoms.values()))
    A = np.zeros(len(pairs), dtype=np.int64)
    B = np.zeros(len(pairs), dtype=np.int64)
    for j, (qe, ok) in enumerate(zip(below, present)):
        if ok:
            A |= ((pairs[:, 0] >> qe) & 1) << j
            B |= ((pairs[:, 1] >> qe) & 1) << j
    cells: dict[tuple[int, int], list[float]] = {}
    for a, b, p in zip(A.tolist(), B.tolist(), probs.tolist()):
        cells.setdefault((a, b), []).append(p)
    return PairTable(window, {k: math.fsum(v) for k, v in cells.items()})


def lift_distribution_window(dist: SubsetDistribution, q: QuotientGraph, window) -> dict[int, float]:
    """Law of ``pi^{-1}(G) ∩ window`` for a quotient subset distribution."""
    below = [q.project_edge(w)[0] for w in window]
    out: dict[int, list[float]] = {}
    for m, p in dist.atoms.items():
        a = 0
        for j, qe in enumerate(below):
            a |= (m >> qe & 1) << j
        out.setdefault(a, []).append(p)
    return {k: math.fsum(v) for k, v in out.items()}

