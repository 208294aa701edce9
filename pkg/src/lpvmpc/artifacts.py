"""Run artifacts: delimited trajectory/horizon logs, coverage, metadata.

Fixed schemas:
  trajectory.csv         k, t, theta, omega, u, p, cost
  horizon_snapshots.csv  k, i, n, x_true, x_pred, x_bar, e, ehat_mean, ehat_std
  coverage.json          per-state and overall z-interval coverage
  meta.json              config echo, versions, timings

Floats are serialized with 17 significant digits; fields that do not
exist for a row (final-row input, horizon row N+1 corrections) are empty.
"""
from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .mpc import TrajectoryLog

__all__ = [
    "write_trajectory",
    "write_horizon_snapshots",
    "read_horizon_snapshots",
    "coverage_report",
    "write_meta",
    "write_run_artifacts",
]

TRAJECTORY_COLUMNS = ["k", "t", "theta", "omega", "u", "p", "cost"]
SNAPSHOT_COLUMNS = ["k", "i", "n", "x_true", "x_pred", "x_bar", "e", "ehat_mean", "ehat_std"]


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def write_trajectory(path: Path, log: TrajectoryLog) -> None:
    n_x = log.states.shape[1]
    if n_x == 2:
        cols = TRAJECTORY_COLUMNS
    else:
        cols = ["k", "t"] + [f"x{j + 1}" for j in range(n_x)] + ["u", "p", "cost"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k, xk in enumerate(log.states):
            has_input = k < log.u_applied.shape[0]
            row = [str(k), _fmt(k * log.ts)]
            row += [_fmt(v) for v in xk]
            row.append(_fmt(log.u_applied[k, 0]) if has_input else "")
            row.append(_fmt(log.scheduling[k]))
            row.append(_fmt(log.costs[k]) if has_input else "")
            w.writerow(row)


def write_horizon_snapshots(path: Path, log: TrajectoryLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_COLUMNS)
        for step, xt, xp in zip(log.mpc_steps, log.truth_rollouts, log.pred_rollouts):
            N = step.u_star.shape[0]
            n_x = xt.shape[1]
            for i in range(1, N + 2):
                for n in range(n_x):
                    e = xt[i, n] - xp[i, n]
                    if i <= N:
                        x_bar = _fmt(step.x_bar[i, n])
                        m = _fmt(step.e_hat.mean[i - 1, n])
                        s = _fmt(step.e_hat.std[i - 1, n])
                    else:
                        x_bar = m = s = ""
                    w.writerow([str(step.k), str(i), str(n + 1),
                                _fmt(xt[i, n]), _fmt(xp[i, n]), x_bar,
                                _fmt(e), m, s])


def read_horizon_snapshots(path: Path) -> list[dict[str, Any]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "k": int(rec["k"]),
                "i": int(rec["i"]),
                "n": int(rec["n"]),
                "x_true": float(rec["x_true"]),
                "x_pred": float(rec["x_pred"]),
                "x_bar": float(rec["x_bar"]) if rec["x_bar"] else None,
                "e": float(rec["e"]),
                "ehat_mean": float(rec["ehat_mean"]) if rec["ehat_mean"] else None,
                "ehat_std": float(rec["ehat_std"]) if rec["ehat_std"] else None,
            })
    return rows


def coverage_report(snapshots: Iterable[dict[str, Any]] | Path | str,
                    zscore: float) -> dict[str, Any]:
    """Fraction of realized errors inside mean +- z*std, per state component.

    Only rows where a GP prediction existed (ehat_std > 0) count; an empty
    eligible set reports count 0 with null coverage.
    """
    if isinstance(snapshots, (str, Path)):
        snapshots = read_horizon_snapshots(Path(snapshots))
    per_state: dict[int, dict[str, int]] = {}
    for row in snapshots:
        mean, std = row.get("ehat_mean"), row.get("ehat_std")
        if mean is None or std is None or std <= 0.0:
            continue
        acc = per_state.setdefault(row["n"], {"count": 0, "inside": 0})
        acc["count"] += 1
        if abs(row["e"] - mean) <= zscore * std:
            acc["inside"] += 1
    states = {}
    total = {"count": 0, "inside": 0}
    for n in sorted(per_state):
        c = per_state[n]
        states[str(n)] = {
            "count": c["count"],
            "inside": c["inside"],
            "coverage": c["inside"] / c["count"] if c["count"] else None,
        }
        total["count"] += c["count"]
        total["inside"] += c["inside"]
    return {
        "zscore": zscore,
        "per_state": states,
        "overall": {
            "count": total["count"],
            "inside": total["inside"],
            "coverage": total["inside"] / total["count"] if total["count"] else None,
        },
    }


def write_meta(path: Path, config_echo: dict[str, Any], timings: dict[str, float],
               statuses: dict[str, str]) -> None:
    import lpvmpc
    meta = {
        "config": config_echo,
        "versions": {
            "lpvmpc": lpvmpc.__version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "platform": platform.platform(),
        },
        "timings_s": timings,
        "statuses": statuses,
        "horizon_extension": "zero_order_hold",
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_artifacts(
    out_dir: Path,
    log: TrajectoryLog,
    baseline: TrajectoryLog | None,
    config_echo: dict[str, Any],
    timings: dict[str, float],
    zscore: float,
) -> dict[str, Path]:
    """Write every artifact for a run (and the comparison baseline, if any)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["trajectory"] = out_dir / "trajectory.csv"
    write_trajectory(paths["trajectory"], log)
    paths["horizon_snapshots"] = out_dir / "horizon_snapshots.csv"
    write_horizon_snapshots(paths["horizon_snapshots"], log)
    paths["coverage"] = out_dir / "coverage.json"
    report = coverage_report(paths["horizon_snapshots"], zscore)
    with open(paths["coverage"], "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    statuses = {"corrected" if (baseline is not None) else "run": log.status}
    if baseline is not None:
        paths["trajectory_baseline"] = out_dir / "trajectory_baseline.csv"
        write_trajectory(paths["trajectory_baseline"], baseline)
        paths["horizon_snapshots_baseline"] = out_dir / "horizon_snapshots_baseline.csv"
        write_horizon_snapshots(paths["horizon_snapshots_baseline"], baseline)
        statuses["baseline"] = baseline.status

    paths["meta"] = out_dir / "meta.json"
    write_meta(paths["meta"], config_echo, timings, statuses)
    return paths
