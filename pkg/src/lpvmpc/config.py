"""Experiment configuration: strict YAML schema with a disk preset.

Unknown sections or keys are rejected. The `unbalanced_disk` preset
pre-fills the benchmark parameters (bounds, horizon, weights, sampling
time); any field can be overridden per file.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from . import gp as gplib
from .errorbank import ErrorBank
from .model import LpvModel, discretize_euler, make_unbalanced_disk, sinc
from .mpc import MpcConfig
from .stabilizer import StabilizedModel, synthesize_lqr

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "disk_defaults"]


class ConfigError(ValueError):
    pass


_TWO_PI = 2.0 * math.pi

_SCHEMA: dict[str, set[str]] = {
    "model": {"name", "ts", "A0", "A_l", "B", "p_bounds", "scheduling"},
    "stabilizer": {"Q", "R", "p_nominal"},
    "mpc": {"N", "Q", "R", "x_bounds", "u_bounds", "input_bound_mode",
            "phat_update_source", "inner_iterations", "qp_max_iter"},
    "gp": {"kernel", "period", "periodic_lengthscale", "log_sigma2_bounds",
           "log_lengthscale_bounds", "log_noise2_bounds", "window",
           "refit_every", "n_starts", "standardize"},
    "run": {"steps", "x0", "x_ref", "error_correction", "zscore", "seed",
            "comparison"},
    "output": {"directory", "formats", "snapshot_k"},
}


def disk_defaults() -> dict[str, Any]:
    """Fully-resolved defaults for the unbalanced-disk benchmark."""
    return {
        "model": {"name": "unbalanced_disk", "ts": 0.01},
        "stabilizer": {"Q": [[8.0, 0.0], [0.0, 0.1]], "R": [[0.5]], "p_nominal": [1.0]},
        "mpc": {
            "N": 10,
            "Q": [[8.0, 0.0], [0.0, 0.1]],
            "R": [[0.5]],
            "x_bounds": [[-_TWO_PI, _TWO_PI], [-10.0 * math.pi, 10.0 * math.pi]],
            "u_bounds": [[-10.0, 10.0]],
            "input_bound_mode": "total",
            "phat_update_source": "previous_truth",
            "inner_iterations": 1,
            "qp_max_iter": 4000,
        },
        "gp": {
            "kernel": "se",
            "period": None,
            "periodic_lengthscale": None,
            "log_sigma2_bounds": [-8.0, 4.0],
            "log_lengthscale_bounds": [-4.0, 3.0],
            "log_noise2_bounds": [-12.0, 0.0],
            "window": 20,
            "refit_every": 1,
            "n_starts": 8,
            "standardize": False,
        },
        "run": {
            "steps": 100,
            "x0": [-_TWO_PI, 0.0],
            "x_ref": [0.0, 0.0],
            "error_correction": True,
            "zscore": 2.576,
            "seed": 0,
            "comparison": True,
        },
        "output": {"directory": "lpvmpc_out", "formats": ["csv", "json"], "snapshot_k": 15},
    }


def _custom_defaults() -> dict[str, Any]:
    d = disk_defaults()
    d["model"] = {"name": "custom", "ts": None, "A0": None, "A_l": None, "B": None,
                  "p_bounds": None, "scheduling": None}
    return d


@dataclass
class ExperimentConfig:
    """Validated, fully-resolved experiment description."""

    raw: dict[str, Any]

    def __post_init__(self) -> None:
        self.raw = copy.deepcopy(self.raw)

    @property
    def run(self) -> dict[str, Any]:
        return self.raw["run"]

    @property
    def output(self) -> dict[str, Any]:
        return self.raw["output"]

    def build_model(self) -> LpvModel:
        m = self.raw["model"]
        if m["name"] == "unbalanced_disk":
            return discretize_euler(make_unbalanced_disk(), float(m["ts"]))
        sched = m["scheduling"] or {}
        kind = sched.get("kind")
        if kind == "sinc_of_state":
            comp = int(sched.get("component", 0))

            def rho(x: np.ndarray) -> np.ndarray:
                return np.array([sinc(float(x[comp]))])
        elif kind == "constant":
            value = np.asarray(sched.get("value", [1.0]), dtype=float)

            def rho(x: np.ndarray) -> np.ndarray:
                return value.copy()
        else:
            raise ConfigError(f"unsupported scheduling kind {kind!r}")
        return LpvModel(
            A0=np.asarray(m["A0"], dtype=float),
            A_l=[np.asarray(Al, dtype=float) for Al in m["A_l"]],
            B=np.asarray(m["B"], dtype=float),
            rho=rho,
            p_bounds=np.asarray(m["p_bounds"], dtype=float),
            ts=float(m["ts"]),
        )

    def build_stabilized(self, model: LpvModel) -> StabilizedModel:
        s = self.raw["stabilizer"]
        return synthesize_lqr(model, np.asarray(s["Q"], dtype=float),
                              np.asarray(s["R"], dtype=float),
                              np.asarray(s["p_nominal"], dtype=float))

    def build_mpc_config(self, error_correction: bool | None = None) -> MpcConfig:
        m = self.raw["mpc"]
        r = self.raw["run"]
        ec = r["error_correction"] if error_correction is None else error_correction
        return MpcConfig(
            N=int(m["N"]),
            Q=np.asarray(m["Q"], dtype=float),
            R=np.asarray(m["R"], dtype=float),
            x_bounds=np.asarray(m["x_bounds"], dtype=float),
            u_bounds=np.asarray(m["u_bounds"], dtype=float),
            zscore=float(r["zscore"]),
            error_correction=bool(ec),
            input_bound_mode=str(m["input_bound_mode"]),
            phat_update_source=str(m["phat_update_source"]),
            inner_iterations=int(m["inner_iterations"]),
            qp_max_iter=int(m["qp_max_iter"]),
        )

    def build_bank(self, n_x: int) -> ErrorBank:
        g = self.raw["gp"]
        r = self.raw["run"]
        bounds = gplib.HyperBox(
            log_sigma2=tuple(g["log_sigma2_bounds"]),
            log_lengthscale=tuple(g["log_lengthscale_bounds"]),
            log_noise2=tuple(g["log_noise2_bounds"]),
        )
        return ErrorBank(
            N=int(self.raw["mpc"]["N"]),
            n_x=n_x,
            window=int(g["window"]),
            zscore=float(r["zscore"]),
            kernel_variant=str(g["kernel"]),
            period=g["period"],
            periodic_lengthscale=g["periodic_lengthscale"],
            bounds=bounds,
            seed=int(r["seed"]),
            n_starts=int(g["n_starts"]),
            refit_every=int(g["refit_every"]),
            standardize=bool(g["standardize"]),
        )


def _validate(user: dict[str, Any]) -> None:
    if not isinstance(user, dict):
        raise ConfigError("config root must be a mapping")
    for section, content in user.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if content is None:
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key in content:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")


def load_config(source: str | dict[str, Any]) -> ExperimentConfig:
    """Load and validate a config from a YAML path or an equivalent dict."""
    if isinstance(source, dict):
        user = copy.deepcopy(source)
    else:
        with open(source) as fh:
            user = yaml.safe_load(fh) or {}
    _validate(user)

    name = (user.get("model") or {}).get("name", "unbalanced_disk")
    if name == "unbalanced_disk":
        resolved = disk_defaults()
    elif name == "custom":
        resolved = _custom_defaults()
    else:
        raise ConfigError(f"unknown model name {name!r}")
    for section, content in user.items():
        if content:
            resolved[section].update(content)

    if name == "custom":
        m = resolved["model"]
        for req in ("ts", "A0", "A_l", "B", "p_bounds", "scheduling"):
            if m.get(req) is None:
                raise ConfigError(f"custom model requires model.{req}")
    if resolved["run"]["steps"] < 0:
        raise ConfigError("run.steps must be nonnegative")
    if resolved["gp"]["kernel"] not in ("se", "se_periodic"):
        raise ConfigError("gp.kernel must be 'se' or 'se_periodic'")
    return ExperimentConfig(raw=resolved)
