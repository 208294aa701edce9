"""Static SVG figures rendered from the run artifacts.

phase_space.svg    theta-omega trajectory plus, at one snapshot step, the
                   true vs predicted horizon points with +-z*std bars.
trajectories.svg   states, applied input, scheduling, and cost versus
                   time, overlaying the with/without-correction runs.

Rendering is deterministic: fixed hash salt, no embedded timestamps.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lpvmpc"

import matplotlib.pyplot as plt  # noqa: E402

from .artifacts import read_horizon_snapshots  # noqa: E402

__all__ = ["render_phase_space", "render_trajectories", "render_all"]

_SVG_META = {"Date": None}
_WITH_COLOR = "tab:orange"
_WITHOUT_COLOR = "c"


def _read_trajectory(path: Path) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            for key, val in rec.items():
                cols.setdefault(key, []).append(float(val) if val != "" else float("nan"))
    return cols


def render_phase_space(out_dir: Path, snapshot_k: int | None = None,
                       zscore: float | None = None) -> Path:
    """Phase-plane figure with the horizon snapshot of one step."""
    out_dir = Path(out_dir)
    traj_path = out_dir / "trajectory.csv"
    snap_path = out_dir / "horizon_snapshots.csv"
    if not traj_path.exists() or not snap_path.exists():
        raise FileNotFoundError(f"missing artifacts in {out_dir}")
    meta = _load_meta(out_dir)
    if snapshot_k is None:
        snapshot_k = int(meta.get("config", {}).get("output", {}).get("snapshot_k", 15))
    if zscore is None:
        zscore = float(meta.get("config", {}).get("run", {}).get("zscore", 2.576))

    traj = _read_trajectory(traj_path)
    rows = [r for r in read_horizon_snapshots(snap_path) if r["k"] == snapshot_k]

    fig, ax = plt.subplots(figsize=(7.0, 5.2))
    ax.plot(traj["theta"], traj["omega"], color="0.45", lw=1.2,
            label="closed-loop trajectory")
    if rows:
        by_i: dict[int, dict[int, dict]] = {}
        for r in rows:
            by_i.setdefault(r["i"], {})[r["n"]] = r
        i_sorted = sorted(by_i)
        true_pts = [(by_i[i][1]["x_true"], by_i[i][2]["x_true"]) for i in i_sorted]
        pred_pts = [(by_i[i][1]["x_pred"], by_i[i][2]["x_pred"]) for i in i_sorted]
        ax.plot(*zip(*true_pts), "o-", color="tab:green", ms=4, lw=1.0,
                label=f"true response (k={snapshot_k})")
        ax.plot(*zip(*pred_pts), "s-", color="tab:blue", ms=4, lw=1.0,
                label="predicted response")
        bar_x, bar_y, err_x, err_y = [], [], [], []
        for i in i_sorted:
            r1, r2 = by_i[i][1], by_i[i][2]
            if r1["x_bar"] is None or r1["ehat_std"] is None:
                continue
            bar_x.append(r1["x_bar"])
            bar_y.append(r2["x_bar"])
            err_x.append(zscore * r1["ehat_std"])
            err_y.append(zscore * r2["ehat_std"])
        if bar_x:
            ax.errorbar(bar_x, bar_y, xerr=err_x, yerr=err_y, fmt="none",
                        ecolor="tab:red", elinewidth=1.0, capsize=2.5,
                        label=f"corrected +-{zscore} std")
    ax.set_xlabel("angular displacement [rad]")
    ax.set_ylabel("angular speed [rad/s]")
    ax.legend(loc="best", fontsize=9,
              title="deterministic polytopic bounds omitted\n(external prior work)",
              title_fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = out_dir / "phase_space.svg"
    fig.savefig(out, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return out


def render_trajectories(out_dir: Path) -> Path:
    """Time-series overlay of the with/without-correction runs."""
    out_dir = Path(out_dir)
    main_path = out_dir / "trajectory.csv"
    if not main_path.exists():
        raise FileNotFoundError(f"missing artifacts in {out_dir}")
    main = _read_trajectory(main_path)
    base_path = out_dir / "trajectory_baseline.csv"
    base = _read_trajectory(base_path) if base_path.exists() else None

    fig, axes = plt.subplots(5, 1, figsize=(7.0, 9.5), sharex=True)
    panels = [("theta", "theta [rad]"), ("omega", "omega [rad/s]"),
              ("u", "applied input [V]"), ("p", "scheduling p"),
              ("cost", "cost")]
    for ax, (col, label) in zip(axes, panels):
        ax.plot(main["t"], main[col], color=_WITH_COLOR, lw=1.4,
                label="with correction")
        if base is not None:
            ax.plot(base["t"], base[col], color=_WITHOUT_COLOR, lw=1.2, ls="--",
                    label="without correction")
        ax.set_ylabel(label, fontsize=9)
        ax.grid(alpha=0.3)
    axes[0].legend(loc="best", fontsize=9)
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    out = out_dir / "trajectories.svg"
    fig.savefig(out, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return out


def render_all(out_dir: Path) -> list[Path]:
    return [render_phase_space(out_dir), render_trajectories(out_dir)]


def _load_meta(out_dir: Path) -> dict:
    meta_path = Path(out_dir) / "meta.json"
    if meta_path.exists():
        with open(meta_path) as fh:
            return json.load(fh)
    return {}
