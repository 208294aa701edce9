"""Command-line experiment runner.

    lpvmpc run <config.yaml>        execute the configured experiment
    lpvmpc plot <output-dir>        render SVG figures from artifacts
    lpvmpc coverage <output-dir>    recompute interval coverage

Exit codes: 0 success, 1 configuration/artifact error, 2 QP infeasibility.
The environment variable LPVMPC_OUTPUT_DIR overrides the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import yaml

from . import plots
from .artifacts import coverage_report, write_run_artifacts
from .config import ConfigError, load_config
from .mpc import run_loop
from .stabilizer import SynthesisError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2

OUTPUT_DIR_ENV = "LPVMPC_OUTPUT_DIR"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpvmpc",
                                     description="GP-corrected LPV-MPC experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="path to the YAML experiment config")
    p_run.add_argument("--output-dir", default=None,
                       help="override the configured output directory")

    p_plot = sub.add_parser("plot", help="render SVG figures from run artifacts")
    p_plot.add_argument("directory", help="artifact directory of a finished run")

    p_cov = sub.add_parser("coverage", help="recompute interval coverage")
    p_cov.add_argument("directory", help="artifact directory of a finished run")
    p_cov.add_argument("--z", type=float, default=2.576,
                       help="confidence multiplier (default 2.576)")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(os.environ.get(OUTPUT_DIR_ENV) or args.output_dir
                   or cfg.output["directory"])

    try:
        model = cfg.build_model()
        sm = cfg.build_stabilized(model)
    except (ConfigError, SynthesisError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run = cfg.run
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    bank = cfg.build_bank(model.n_x)
    log = run_loop(sm, cfg.build_mpc_config(), bank,
                   run["x0"], int(run["steps"]), x_ref=run["x_ref"])
    timings["run" if not run["comparison"] else "corrected"] = time.perf_counter() - t0

    baseline = None
    if run["comparison"]:
        t0 = time.perf_counter()
        baseline_bank = cfg.build_bank(model.n_x)
        baseline = run_loop(sm, cfg.build_mpc_config(error_correction=False),
                            baseline_bank, run["x0"], int(run["steps"]),
                            x_ref=run["x_ref"])
        timings["baseline"] = time.perf_counter() - t0

    paths = write_run_artifacts(out_dir, log, baseline, cfg.raw, timings,
                                zscore=float(run["zscore"]))
    if "svg" in cfg.output.get("formats", []):
        plots.render_all(out_dir)

    print(f"artifacts written to {out_dir}")
    for name, status in {"run": log.status,
                         **({"baseline": baseline.status} if baseline else {})}.items():
        print(f"{name}: {status} ({paths['trajectory'].name})")
    if log.status.startswith("qp_") or (baseline and baseline.status.startswith("qp_")):
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_plot(args: argparse.Namespace) -> int:
    try:
        written = plots.render_all(Path(args.directory))
    except FileNotFoundError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_coverage(args: argparse.Namespace) -> int:
    snap = Path(args.directory) / "horizon_snapshots.csv"
    if not snap.exists():
        print(f"artifact error: {snap} not found", file=sys.stderr)
        return EXIT_CONFIG
    report = coverage_report(snap, zscore=args.z)
    out = Path(args.directory) / "coverage.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report["overall"], sort_keys=True))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "plot":
        return _cmd_plot(args)
    return _cmd_coverage(args)


if __name__ == "__main__":
    sys.exit(main())
