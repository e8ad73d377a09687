"""Experiment configuration read from YAML (or JSON, which YAML accepts)."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .graph import (GraphError, Lattice, LatticeSpec, PermutationAction, QuotientGraph,
                    TranslationAction, build_graph, build_quotient, lattice)


class ConfigError(ValueError):
    pass


def _tuplify(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuplify(y) for y in x)
    return x


def parse_edge_key(raw):
    """``[[x, y], k]`` -> ``((x, y), k)`` for lattice keys; scalars pass through."""
    return _tuplify(raw)


@dataclass
class ExperimentConfig:
    experiment: str = ""
    graph: dict | None = None
    quotient: dict | None = None
    levels: list = field(default_factory=list)
    window: list | None = None
    seed: int = 0
    samples: int | None = None
    measure: str = "wsf"
    lattice: str = "grid"
    boundary: list = field(default_factory=lambda: ["wired", "free"])
    families: list = field(default_factory=lambda: ["star", "cycle"])
    output: str | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        known = {"experiment", "graph", "quotient", "levels", "tower", "radii", "window", "seed",
                 "samples", "measure", "lattice", "boundary", "families", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        levels = d.get("levels", d.get("tower", d.get("radii", [])))
        boundary = d.get("boundary", ["wired", "free"])
        if isinstance(boundary, str):
            boundary = [boundary]
        window = d.get("window")
        if window is not None:
            window = [parse_edge_key(w) for w in window]
        samples = d.get("samples")
        if samples is not None and int(samples) < 0:
            raise ConfigError("samples must be non-negative")
        return cls(
            experiment=d.get("experiment", ""),
            graph=d.get("graph"),
            quotient=d.get("quotient"),
            levels=[int(x) for x in levels],
            window=window,
            seed=int(d.get("seed", 0)),
            samples=None if samples is None or int(samples) == 0 else int(samples),
            measure=d.get("measure", "wsf"),
            lattice=d.get("lattice", "grid"),
            boundary=list(boundary),
            families=list(d.get("families", ["star", "cycle"])),
            output=d.get("output"),
            raw=d,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        return cls.from_dict(yaml.safe_load(text) or {})

    def digest(self) -> str:
        """sha256 of the configuration in canonical JSON form."""
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def build_quotient(self) -> QuotientGraph:
        """The quotient described by ``quotient``, else ``graph`` under the trivial action.

        The ``torus`` family is read as the lattice quotient of Z^2, so its
        true cycles are the null-homologous ones.
        """
        if self.quotient is not None:
            return quotient_from_dict(self.quotient)
        if self.graph is not None:
            spec = LatticeSpec.from_dict(self.graph)
            if spec.family == "torus":
                return build_quotient(Lattice(2), TranslationAction.diagonal(2, spec.n))
            return build_quotient(build_graph(spec))
        raise ConfigError("configuration needs a 'graph' or a 'quotient'")


def quotient_from_dict(d: dict) -> QuotientGraph:
    """Build a quotient from ``{base: ..., generators: [...]}``.

    ``base`` is ``line``/``grid`` (generators are translation vectors) or a
    finite-graph mapping such as ``{family: cycle, n: 6}`` (generators are
    vertex permutations given as lists or mappings).
    """
    if "base" not in d:
        raise ConfigError("quotient needs a 'base'")
    base = d["base"]
    gens = d.get("generators", [])
    try:
        if isinstance(base, str):
            lat = lattice(base)
            return build_quotient(lat, TranslationAction(lat.dim, gens))
        g = build_graph(LatticeSpec.from_dict(base))
        return build_quotient(g, PermutationAction(g, gens) if gens else None)
    except GraphError as exc:
        raise ConfigError(str(exc)) from exc
