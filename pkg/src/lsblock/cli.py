"""Command-line entry point: ``lsblock run|scan|verify|geometry|dump-config-schema``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, RunConfig, load, schema_document
from .geometry import (
    GeometryError,
    LatticeSpec,
    enumerate_rectangles,
    g_set,
    g_set_count_cap,
    shape_count_cap,
    shapes,
    step_sequence,
    sub_rectangles,
)
from .runner import (
    EXIT_CONFIG,
    EXIT_OK,
    print_summary,
    run_experiment,
    scan_experiment,
    verify_artifacts,
)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with flat dotted keys")
    p.add_argument("--out", help="artifact directory (overrides output.directory)")
    p.add_argument("--t", type=float, help="coupling override")
    p.add_argument("--seed", type=int, help="seed override")
    p.add_argument("--debug-dump", action="store_true", help="dump every potential matrix")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsblock", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lsblock {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="block-diagonalize one coupling and verify it")
    _add_run_flags(p)

    p = sub.add_parser("scan", help="run every coupling of a grid")
    _add_run_flags(p)
    p.add_argument("--grid", help="comma-separated couplings (overrides t_grid)")
    p.add_argument("--workers", type=int, help="parallel runs")

    p = sub.add_parser("verify", help="re-check a stored run without recomputing it")
    p.add_argument("--out", required=True, help="directory of a completed run")
    p.add_argument("--report", help="where to write the new report")

    p = sub.add_parser("geometry", help="rectangle counting and ordering utilities")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--l", type=int, default=None, help="circumference")
    p.add_argument("--shapes", action="store_true", help="count shapes of circumference l")
    p.add_argument("--steps", action="store_true", help="list the ordered steps of the lattice")
    p.add_argument("--caps", action="store_true", help="compare rectangle counts with their caps")

    sub.add_parser("dump-config-schema", help="print the config schema as JSON")
    return parser


def _config(args) -> RunConfig:
    config = load(args.config)
    updates = {}
    if args.t is not None:
        updates["t"] = args.t
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "grid", None):
        updates["t_grid"] = [float(x) for x in args.grid.split(",")]
    if getattr(args, "workers", None) is not None:
        updates["scan.workers"] = args.workers
    return config.with_updates(**updates) if updates else config


def _geometry(args) -> int:
    if args.shapes:
        if args.l is None:
            raise ConfigError("--shapes needs --l")
        found = shapes(args.d, args.l)
        print(len(found))
        logging.getLogger(__name__).info("cap %d", shape_count_cap(args.d, args.l))
        return EXIT_OK
    if args.N is None:
        raise ConfigError("--steps and --caps need --N")
    lattice = LatticeSpec(args.d, args.N)
    if args.steps:
        for i, step in enumerate(step_sequence(lattice)):
            print(i, json.dumps(step.to_json()))
        return EXIT_OK
    if args.caps:
        rows = []
        for target in enumerate_rectangles(lattice):
            if target.size < 1:
                continue
            worst = max(
                (len(g_set(inner, target)) for inner in sub_rectangles(target) if inner != target),
                default=0,
            )
            rows.append({"target": target.to_json(), "max_g_set": worst, "cap": g_set_count_cap(args.d, target.size)})
        print(json.dumps(rows))
        return EXIT_OK
    print(len(enumerate_rectangles(lattice)))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "dump-config-schema":
            print(json.dumps(schema_document(), indent=2))
            return EXIT_OK
        if args.command == "geometry":
            return _geometry(args)
        if args.command == "verify":
            outcome, identical = verify_artifacts(args.out, args.report)
            print_summary(outcome.report)
            print("identical to stored report" if identical else "differs from stored report")
            return outcome.exit_code
        config = _config(args)
        if args.command == "run":
            outcome = run_experiment(config, args.out, args.debug_dump or None)
            if outcome.report is not None:
                print_summary(outcome.report)
            if outcome.error:
                print(f"algorithm error: {outcome.error}", file=sys.stderr)
            return outcome.exit_code
        outcome = scan_experiment(config, args.out, args.debug_dump or None)
        print("all grid points passed" if outcome.exit_code == EXIT_OK else "some grid points failed")
        return outcome.exit_code
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
