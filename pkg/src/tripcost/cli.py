"""
Command line entry point.

    tripcost analyze  [--config FILE] [--out DIR]
    tripcost simulate [--config FILE] [--out DIR] [--seed N] [--approach A] [--density D] [--trace] [--audit]
    tripcost sweep    [--config FILE] [--out DIR] [--seed N,..] [--approach A,..] [--density D,..]
    tripcost report   RECORDS.csv [...] [--config FILE] [--out DIR]

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import pandas as pd

from .analysis import run_numerical_analysis, write_analysis_tables
from .config import RunConfig, load_config
from .errors import ConfigurationError, SimulationError
from .experiment import (
    ExperimentMatrix,
    bin_and_aggregate,
    gain_vs_baseline,
    read_records,
    records_frame,
    records_from_trips,
    run_experiment,
    write_frame,
    write_manifest,
    write_records,
)
from .formation import AUDIT_HEADER, audit_rows
from .simulation import APPROACHES, Simulation

log = logging.getLogger("tripcost")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _approach(text: str) -> str:
    if text not in APPROACHES:
        raise argparse.ArgumentTypeError(f"unknown approach {text!r} (choose from {', '.join(APPROACHES)})")
    return text


def _approach_list(text: str) -> tuple[str, ...]:
    return tuple(_approach(a.strip()) for a in text.split(",") if a.strip())


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tripcost", description="Trip-cost based platoon formation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")

    p = sub.add_parser("analyze", help="single-vehicle curves of travel time, fuel and trip cost")
    common(p)

    p = sub.add_parser("simulate", help="one freeway simulation")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--approach", type=_approach)
    p.add_argument("--density", type=float, help="veh/km/lane")
    p.add_argument("--trace", action="store_true", help="write per-step vehicle states to trace.csv")
    p.add_argument("--audit", action="store_true", help="write formation decisions to audit.csv")

    p = sub.add_parser("sweep", help="run an approach x density x seed matrix and report gains")
    common(p)
    p.add_argument("--seed", type=_int_list, help="comma separated seeds")
    p.add_argument("--approach", type=_approach_list, help="comma separated approaches")
    p.add_argument("--density", type=_float_list, help="comma separated densities (veh/km/lane)")

    p = sub.add_parser("report", help="binned statistics and gains from existing records")
    common(p)
    p.add_argument("records", type=Path, nargs="+", help="records.csv files")
    return parser


def cmd_analyze(cfg: RunConfig, args) -> int:
    paths = write_analysis_tables(run_numerical_analysis(cfg.analysis), args.out)
    for path in paths:
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    scenario = cfg.scenario
    demand = scenario.demand
    if args.density is not None:
        demand = replace(demand, density=args.density)
    if args.seed is not None:
        demand = replace(demand, seed=args.seed)
    scenario = replace(scenario, demand=demand)
    approach = args.approach or cfg.approach
    args.out.mkdir(parents=True, exist_ok=True)
    trace = open(args.out / "trace.csv", "w", newline="") if args.trace else None
    try:
        sim = Simulation(scenario, approach, demand.seed, cfg.formation, trace)
        sim.run()
    finally:
        if trace is not None:
            trace.close()
    records = records_from_trips(sim.world.completed, approach, demand.density, demand.seed, scenario.warmup_s)
    write_records(records, args.out / "records.csv")
    if args.audit:
        with open(args.out / "audit.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AUDIT_HEADER)
            w.writerows(audit_rows(sim.decisions))
    log.info("%s: %d records", approach, len(records))
    return EXIT_OK


def _report(records: pd.DataFrame, bin_width: float, out: Path) -> pd.DataFrame:
    stats = bin_and_aggregate(records, bin_width)
    gains = gain_vs_baseline(stats)
    write_frame(stats, out / "stats.csv")
    write_frame(gains, out / "gains.csv")
    return gains


def cmd_sweep(cfg: RunConfig, args) -> int:
    m = cfg.matrix
    matrix = ExperimentMatrix(
        approaches=args.approach or m.approaches,
        densities=args.density or m.densities,
        seeds=args.seed or m.seeds,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runs = run_experiment(matrix, cfg.scenario, cfg.formation, cfg.workers)
    elapsed = time.perf_counter() - start
    records = [r for run in runs for r in run.records]
    write_records(records, args.out / "records.csv")
    write_manifest(
        args.out / "manifest.json", cfg.scenario, matrix, runs,
        {"formation": cfg.formation, "bin_width_eur_per_h": cfg.bin_width},
    )
    _report(records_frame(records), cfg.bin_width, args.out)
    failed = [r for r in runs if r.failed]
    log.info("%d runs in %.1f s, %d failed", len(runs), elapsed, len(failed))
    for r in failed:
        print(f"run {r.approach}/{r.density}/{r.seed} failed: {r.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    frames = [read_records(path) for path in args.records]
    records = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    args.out.mkdir(parents=True, exist_ok=True)
    _report(records, cfg.bin_width, args.out)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"tripcost: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"tripcost: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"tripcost: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
