"""Command-line entry point: ``usflab <command> --config cfg.yaml --seed N --out DIR``.

Each command writes CSV tables, text artifacts, ``checks.csv`` and a
``manifest.json`` into the output directory, and exits with status 0 only
when every in-run verification passes.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import sympy
import yaml

from . import __version__, lab
from .config import ConfigError, ExperimentConfig
from .graph import Lattice

log = logging.getLogger("usflab")

COMMANDS = ("decompose", "marginals", "sample", "couple", "tower", "exhaust", "topology", "sot")


def _window(cfg: ExperimentConfig, default):
    return cfg.window if cfg.window is not None else default


def run_command(command: str, cfg: ExperimentConfig, seed: int) -> lab.RunResult:
    if command == "decompose":
        return lab.run_decomposition_report(cfg.build_quotient())
    if command == "marginals":
        return lab.run_marginals(cfg.build_quotient())
    if command == "sample":
        return lab.run_sampling(cfg.build_quotient(), cfg.measure, cfg.samples or 10000, seed)
    if command == "couple":
        return lab.run_coupling_pipeline(cfg.build_quotient(), cfg.window)
    if command == "tower":
        window = _window(cfg, list(lab.DEFAULT_WINDOW))
        return lab.run_torus_tower(cfg.levels or [2, 3, 4], window[0])
    if command == "exhaust":
        lat = Lattice(1 if cfg.lattice == "line" else 2)
        window = _window(cfg, [(lat.origin(), 0)])
        return lab.run_exhaustion(lat, cfg.levels or [4, 6, 8, 10], cfg.boundary, window[0])
    if command == "topology":
        n = cfg.levels[0] if cfg.levels else 2
        return lab.run_fsf_topology_check(n, cfg.samples, seed)
    if command == "sot":
        window = _window(cfg, [((0, 0), 0), ((1, 0), 0)])
        return lab.run_sot_diagnostic(window, cfg.levels or [2, 4, 6, 8], cfg.families)
    raise ValueError(f"unknown command {command!r}")


def write_outputs(out: Path, command: str, cfg: ExperimentConfig, seed: int,
                  result: lab.RunResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, table in result.tables.items():
        (out / f"{name}.csv").write_text(table.to_csv())
        files.append(f"{name}.csv")
    (out / "checks.csv").write_text(result.checks_table().to_csv())
    files.append("checks.csv")
    for name, text in result.artifacts.items():
        (out / name).write_text(text)
        files.append(name)
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "config": cfg.raw,
        "seed": seed,
        "versions": {
            "usflab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "sympy": sympy.__version__,
            "pyyaml": yaml.__version__,
        },
        "passed": result.ok,
        "checks": {c.name: c.passed for c in result.checks},
        "info": result.info,
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str)
                                       + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usflab", description="Spanning-forest experiments on quotient towers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None,
                       help="YAML experiment configuration (defaults are used if omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (overrides the config seed)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        seed = args.seed if args.seed is not None else cfg.seed
        if seed < 0 or seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        result = run_command(args.command, cfg, seed)
    except (ValueError, RuntimeError, OSError, yaml.YAMLError) as exc:
        print(f"usflab: error: {exc}", file=sys.stderr)
        return 2
    write_outputs(args.out, args.command, cfg, seed, result)
    for c in result.checks:
        log.info("%-36s %-5s %.3g %s %.3g", c.name, "PASS" if c.passed else "FAIL",
                 c.value, c.relation, c.threshold)
    status = "passed" if result.ok else "FAILED"
    print(f"{args.command}: {sum(c.passed for c in result.checks)}/{len(result.checks)} "
          f"checks passed ({status}); outputs in {args.out}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
