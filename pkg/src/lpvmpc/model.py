"""Affine LPV state-space models, scheduling maps, and exact plant simulation.

The LPV form `x+ = A(p) x + B u` with `p = rho(x)` is treated as the true
plant: the scheduling map absorbs the nonlinearity exactly, so no separate
nonlinear integrator is simulated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "LpvModel",
    "ContinuousModel",
    "sinc",
    "eval_A",
    "step",
    "rollout",
    "discretize_euler",
    "make_unbalanced_disk",
    "UNBALANCED_DISK_PARAMS",
]

# Physical parameters of the unbalanced-disk benchmark.
UNBALANCED_DISK_PARAMS = {
    "inertia": 2.4e-4,      # kg m^2
    "mass": 0.076,          # kg
    "gravity": 9.81,        # m/s^2
    "arm": 0.041,           # m
    "tau": 0.4,             # 1/s
    "motor_gain": 11.0,     # rad/(V s^2)
}

_SINC_TAYLOR_CUTOFF = 1e-8


def sinc(theta: float) -> float:
    """Unnormalized cardinal sine sin(t)/t with sinc(0) = 1.

    Near zero the two-term Taylor expansion 1 - t^2/6 is used so the map
    stays numerically C^1.
    """
    if abs(theta) < _SINC_TAYLOR_CUTOFF:
        return 1.0 - theta * theta / 6.0
    return float(np.sin(theta) / theta)


@dataclass
class LpvModel:
    """Discrete-time affine LPV system x+ = (A0 + sum_l p[l] A_l) x + B u."""

    A0: np.ndarray
    A_l: list[np.ndarray]
    B: np.ndarray
    rho: Callable[[np.ndarray], np.ndarray]
    p_bounds: np.ndarray  # (n_p, 2) per-component [lo, hi]
    ts: float

    def __post_init__(self) -> None:
        self.A0 = np.asarray(self.A0, dtype=float)
        self.A_l = [np.asarray(Al, dtype=float) for Al in self.A_l]
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.p_bounds = np.atleast_2d(np.asarray(self.p_bounds, dtype=float))
        n = self.A0.shape[0]
        if self.A0.shape != (n, n):
            raise ValueError("A0 must be square")
        for Al in self.A_l:
            if Al.shape != self.A0.shape:
                raise ValueError("every A_l must share the shape of A0")
        if self.B.shape[0] != n:
            raise ValueError("B must have n_x rows")
        if self.p_bounds.shape != (len(self.A_l), 2):
            raise ValueError("p_bounds must be (n_p, 2)")
        if not self.ts > 0:
            raise ValueError("sampling time must be positive")

    @property
    def n_x(self) -> int:
        return self.A0.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_p(self) -> int:
        return len(self.A_l)


@dataclass
class ContinuousModel:
    """Continuous-time counterpart; discretized by `discretize_euler`."""

    A0_cont: np.ndarray
    A_l_cont: list[np.ndarray]
    B_cont: np.ndarray
    rho: Callable[[np.ndarray], np.ndarray]
    p_bounds: np.ndarray

    def __post_init__(self) -> None:
        self.A0_cont = np.asarray(self.A0_cont, dtype=float)
        self.A_l_cont = [np.asarray(Al, dtype=float) for Al in self.A_l_cont]
        self.B_cont = np.atleast_2d(np.asarray(self.B_cont, dtype=float))
        self.p_bounds = np.atleast_2d(np.asarray(self.p_bounds, dtype=float))
        n = self.A0_cont.shape[0]
        if self.A0_cont.shape != (n, n) or self.B_cont.shape[0] != n:
            raise ValueError("inconsistent continuous-model dimensions")


def eval_A(model: LpvModel, p: Sequence[float]) -> np.ndarray:
    """Affine evaluation A(p) = A0 + sum_l p[l] A_l. No clamping."""
    p = np.asarray(p, dtype=float).ravel()
    if p.shape[0] != model.n_p:
        raise ValueError(f"expected {model.n_p} scheduling components, got {p.shape[0]}")
    A = model.A0.copy()
    for pl, Al in zip(p, model.A_l):
        A += pl * Al
    return A


def step(model: LpvModel, x: Sequence[float], u: Sequence[float]) -> np.ndarray:
    """One true-plant transition x+ = A(rho(x)) x + B u."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite state or input")
    if x.shape[0] != model.n_x or u.shape[0] != model.n_u:
        raise ValueError("state/input dimension mismatch")
    return eval_A(model, model.rho(x)) @ x + model.B @ u


def rollout(model: LpvModel, x0: Sequence[float], u_seq: np.ndarray) -> np.ndarray:
    """Repeated `step` application; returns (H+1, n_x) including x0."""
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    if u_seq.shape[0] < 1:
        raise ValueError("need at least one input")
    out = np.empty((u_seq.shape[0] + 1, model.n_x))
    out[0] = np.asarray(x0, dtype=float).ravel()
    for j, u in enumerate(u_seq):
        out[j + 1] = step(model, out[j], u)
    return out


def discretize_euler(cm: ContinuousModel, ts: float) -> LpvModel:
    """Forward-Euler discretization; affine structure in p is preserved."""
    if not ts > 0:
        raise ValueError("sampling time must be positive")
    n = cm.A0_cont.shape[0]
    return LpvModel(
        A0=np.eye(n) + ts * cm.A0_cont,
        A_l=[ts * Al for Al in cm.A_l_cont],
        B=ts * cm.B_cont,
        rho=cm.rho,
        p_bounds=cm.p_bounds.copy(),
        ts=ts,
    )


def _sinc_range_min(lo: float, hi: float, resolution: float = 1e-6) -> float:
    """Grid-minimize sinc over [lo, hi] at the given resolution (chunked)."""
    n_pts = int(np.ceil((hi - lo) / resolution)) + 1
    best = np.inf
    chunk = 2_000_000
    for start in range(0, n_pts, chunk):
        stop = min(start + chunk, n_pts)
        theta = np.minimum(lo + resolution * np.arange(start, stop), hi)
        safe = np.where(np.abs(theta) < _SINC_TAYLOR_CUTOFF, 1.0, theta)
        vals = np.where(
            np.abs(theta) < _SINC_TAYLOR_CUTOFF,
            1.0 - theta * theta / 6.0,
            np.sin(safe) / safe,
        )
        best = min(best, float(vals.min()))
    return best


_DISK_SINC_MIN: float | None = None


def _disk_sinc_min() -> float:
    # Computed once per process; the grid sweep over [-2pi, 2pi] is ~12.6M points.
    global _DISK_SINC_MIN
    if _DISK_SINC_MIN is None:
        _DISK_SINC_MIN = _sinc_range_min(-2.0 * np.pi, 2.0 * np.pi)
    return _DISK_SINC_MIN


def make_unbalanced_disk() -> ContinuousModel:
    """Continuous unbalanced-disk model with scheduling p = sinc(theta).

    The scheduling lower bound is the grid minimum of sinc over the
    theta constraint range [-2pi, 2pi]; the upper bound is sinc(0) = 1.
    """
    par = UNBALANCED_DISK_PARAMS
    gain = par["mass"] * par["gravity"] * par["arm"] / par["inertia"]
    A0 = np.array([[0.0, 1.0], [0.0, -1.0 / par["tau"]]])
    A1 = np.array([[0.0, 0.0], [gain, 0.0]])
    B = np.array([[0.0], [par["motor_gain"] / par["tau"]]])

    def rho(x: np.ndarray) -> np.ndarray:
        return np.array([sinc(float(x[0]))])

    p_bounds = np.array([[_disk_sinc_min(), 1.0]])
    return ContinuousModel(A0_cont=A0, A_l_cont=[A1], B_cont=B, rho=rho, p_bounds=p_bounds)
