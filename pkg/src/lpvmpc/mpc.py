"""Condensed error-corrected LPV-MPC and the receding-horizon loop.

The QP eliminates the predicted states, leaving the stacked MPC inputs
as the decision vector. Predicted states follow the assumed scheduling
sequence; the GP error means shift them to corrected states, and the GP
stds shrink the state boxes per horizon step. Input bounds apply to the
physical plant input (feedback part plus MPC part), which is what the
actuator limit constrains.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qp as qplib
from .errorbank import ErrorBank, ErrorPrediction
from .model import step as plant_step
from .stabilizer import StabilizedModel, closed_A

__all__ = ["MpcConfig", "MpcStep", "TrajectoryLog", "condense", "tighten", "run_loop",
           "closed_step"]

logger = logging.getLogger(__name__)

DEFAULT_ZSCORE = 2.576


@dataclass
class MpcConfig:
    N: int
    Q: np.ndarray
    R: np.ndarray
    x_bounds: np.ndarray            # (n_x, 2)
    u_bounds: np.ndarray            # (n_u, 2) on the physical input
    zscore: float = DEFAULT_ZSCORE
    error_correction: bool = True
    input_bound_mode: str = "total"     # "total": bound K x_bar + u; "mpc": bound u alone
    phat_update_source: str = "previous_truth"   # or "qp_states"
    inner_iterations: int = 1
    qp_max_iter: int = qplib.DEFAULT_MAX_ITER

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.x_bounds = np.atleast_2d(np.asarray(self.x_bounds, dtype=float))
        self.u_bounds = np.atleast_2d(np.asarray(self.u_bounds, dtype=float))
        if np.any(self.x_bounds[:, 0] >= self.x_bounds[:, 1]):
            raise ValueError("state bounds must have lower < upper")
        if np.any(self.u_bounds[:, 0] >= self.u_bounds[:, 1]):
            raise ValueError("input bounds must have lower < upper")
        if self.input_bound_mode not in ("total", "mpc"):
            raise ValueError("input_bound_mode must be 'total' or 'mpc'")
        if self.phat_update_source not in ("previous_truth", "qp_states"):
            raise ValueError("phat_update_source must be 'previous_truth' or 'qp_states'")


@dataclass
class MpcStep:
    """One solved step of the receding-horizon loop."""

    k: int
    u_star: np.ndarray              # (N, n_u) optimal MPC inputs
    x_hat: np.ndarray               # (N+1, n_x) predicted states, rows 0..N
    x_bar: np.ndarray               # (N+1, n_x) corrected states (x_bar[0] = x_k)
    p_hat: np.ndarray               # (N+1, n_p) scheduling sequence used
    e_hat: ErrorPrediction
    qp_diag: qplib.QpSolution
    cost: float
    tightening_inverted: bool = False


def tighten(
    x_bounds: np.ndarray,
    e_std: np.ndarray,
    zscore: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis z-score shrink of the state box, one interval per horizon step.

    Returns (bounds, inverted): bounds has shape (N, n_x, 2); inverted flags
    the (i, n) entries whose shrunk interval crossed over and was collapsed
    to its midpoint.
    """
    x_bounds = np.atleast_2d(np.asarray(x_bounds, dtype=float))
    e_std = np.atleast_2d(np.asarray(e_std, dtype=float))
    if np.any(e_std < 0):
        raise ValueError("stds must be nonnegative")
    N, n_x = e_std.shape
    out = np.empty((N, n_x, 2))
    out[:, :, 0] = x_bounds[None, :, 0] + zscore * e_std
    out[:, :, 1] = x_bounds[None, :, 1] - zscore * e_std
    inverted = out[:, :, 0] > out[:, :, 1]
    if np.any(inverted):
        mid = 0.5 * (x_bounds[:, 0] + x_bounds[:, 1])
        for i, n in zip(*np.nonzero(inverted)):
            out[i, n, :] = mid[n]
    return out, inverted


def _prediction_matrices(sm: StabilizedModel, p_hat: np.ndarray, N: int):
    """F, Gm with x_hat_{i+1} = F[i] x_k + Gm[i] z for i = 0..N-1."""
    n_x, n_u = sm.base.n_x, sm.base.n_u
    Acs = [closed_A(sm, p_hat[i]) for i in range(N)]
    F = np.empty((N, n_x, n_x))
    Gm = np.zeros((N, n_x, N * n_u))
    Phi = np.eye(n_x)
    for i in range(N):
        Phi = Acs[i] @ Phi
        F[i] = Phi
        if i > 0:
            Gm[i, :, : i * n_u] = Acs[i] @ Gm[i - 1, :, : i * n_u]
        Gm[i, :, i * n_u:(i + 1) * n_u] = sm.base.B
    return F, Gm


def _clamp_scheduling(sm: StabilizedModel, p_hat: np.ndarray) -> np.ndarray:
    lo = sm.base.p_bounds[:, 0]
    hi = sm.base.p_bounds[:, 1]
    clamped = np.clip(p_hat, lo[None, :], hi[None, :])
    if not np.array_equal(clamped, p_hat):
        logger.warning("scheduling sequence clamped to p_bounds")
    return clamped


def condense(
    sm: StabilizedModel,
    cfg: MpcConfig,
    p_hat: np.ndarray,
    x_k: np.ndarray,
    x_ref: np.ndarray,
    e_hat: ErrorPrediction,
) -> qplib.QpProblem:
    """Build the dense QP over the stacked inputs z = (u_0, ..., u_{N-1}).

    Cost: sum_i ||x_bar_i - ref_i||_Q^2 + ||u_i||_R^2 plus the terminal
    ||x_bar_N - ref_N||_P^2; constraints: tightened state boxes on the
    corrected states and input boxes (physical input by default).
    """
    prob, _ = _condense_full(sm, cfg, p_hat, x_k, x_ref, e_hat)
    return prob


def _condense_full(sm, cfg, p_hat, x_k, x_ref, e_hat):
    N = cfg.N
    n_x, n_u = sm.base.n_x, sm.base.n_u
    p_hat = _clamp_scheduling(sm, np.atleast_2d(np.asarray(p_hat, dtype=float))[:N])
    x_k = np.asarray(x_k, dtype=float).ravel()
    x_ref = np.atleast_2d(np.asarray(x_ref, dtype=float))
    if x_ref.shape != (N + 1, n_x):
        raise ValueError(f"x_ref must be ({N + 1}, {n_x})")
    F, Gm = _prediction_matrices(sm, p_hat, N)

    weights = [cfg.Q] * (N - 1) + [sm.P]
    H = 2.0 * np.kron(np.eye(N), cfg.R)
    f = np.zeros(N * n_u)
    free = F @ x_k + e_hat.mean           # x_bar_{i+1} at z = 0, rows i = 0..N-1
    for i in range(N):
        W = weights[i]
        H += 2.0 * Gm[i].T @ W @ Gm[i]
        f += 2.0 * Gm[i].T @ W @ (free[i] - x_ref[i + 1])

    boxes, inverted = tighten(cfg.x_bounds, e_hat.std, cfg.zscore)
    rows, rhs = [], []
    for i in range(N):
        rows.append(Gm[i])
        rhs.append(boxes[i, :, 1] - free[i])
        rows.append(-Gm[i])
        rhs.append(free[i] - boxes[i, :, 0])
    for i in range(N):
        sel = np.zeros((n_u, N * n_u))
        sel[:, i * n_u:(i + 1) * n_u] = np.eye(n_u)
        if cfg.input_bound_mode == "total":
            # Physical input K x_bar_i + u_i; x_bar_0 is the measured state.
            if i == 0:
                base = sm.K @ x_k
                lhs = sel
            else:
                base = sm.K @ (F[i - 1] @ x_k + e_hat.mean[i - 1])
                lhs = sm.K @ Gm[i - 1] + sel
        else:
            base = np.zeros(n_u)
            lhs = sel
        rows.append(lhs)
        rhs.append(cfg.u_bounds[:, 1] - base)
        rows.append(-lhs)
        rhs.append(base - cfg.u_bounds[:, 0])

    prob = qplib.QpProblem(H=H, f=f, G=np.vstack(rows), h=np.concatenate(rhs))
    return prob, {"F": F, "Gm": Gm, "p_hat": p_hat, "inverted": bool(np.any(inverted))}


def closed_step(sm: StabilizedModel, x: np.ndarray, u_mpc: np.ndarray) -> np.ndarray:
    """True plant transition of the prestabilized loop: total input K x + u."""
    u_total = sm.K @ np.asarray(x, dtype=float) + np.asarray(u_mpc, dtype=float).ravel()
    return plant_step(sm.base, x, u_total)


@dataclass
class TrajectoryLog:
    """Everything the receding-horizon loop produced."""

    ts: float
    states: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    u_mpc: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    u_applied: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    scheduling: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mpc_steps: list[MpcStep] = field(default_factory=list)
    truth_rollouts: list[np.ndarray] = field(default_factory=list)   # (N+2, n_x) each
    pred_rollouts: list[np.ndarray] = field(default_factory=list)    # (N+2, n_x) each
    status: str = "completed"
    completed_steps: int = 0


def _reference_table(x_ref, steps: int, N: int, n_x: int) -> np.ndarray:
    """Absolute-time reference r(t) for t = 0..steps+N."""
    total = steps + N + 1
    if x_ref is None:
        return np.zeros((total, n_x))
    if callable(x_ref):
        return np.array([np.asarray(x_ref(t), dtype=float).ravel() for t in range(total)])
    arr = np.asarray(x_ref, dtype=float)
    if arr.ndim == 1:
        return np.tile(arr, (total, 1))
    if arr.shape[0] < total:
        pad = np.tile(arr[-1], (total - arr.shape[0], 1))
        arr = np.vstack([arr, pad])
    return arr[:total]


def run_loop(
    sm: StabilizedModel,
    cfg: MpcConfig,
    bank: ErrorBank,
    x0: Sequence[float],
    steps: int,
    x_ref: np.ndarray | Callable[[int], np.ndarray] | None = None,
) -> TrajectoryLog:
    """Receding-horizon loop: predict errors, solve the QP, apply the first
    input, roll out the truth over the horizon, record errors, shift the
    scheduling estimate from the truth rollout."""
    N, n_x, n_u = cfg.N, sm.base.n_x, sm.base.n_u
    x = np.asarray(x0, dtype=float).ravel()
    if np.any(x < cfg.x_bounds[:, 0] - 1e-12) or np.any(x > cfg.x_bounds[:, 1] + 1e-12):
        raise ValueError("initial state violates the state bounds")
    refs = _reference_table(x_ref, steps, N, n_x)

    log = TrajectoryLog(ts=sm.base.ts)
    states = [x.copy()]
    u_mpc, u_applied, costs = [], [], []
    sched = [float(sm.base.rho(x)[0])]

    p_hat = np.tile(sm.base.rho(x), (N + 1, 1))
    for k in range(steps):
        if cfg.error_correction:
            e_hat = bank.predict_errors(k)
        else:
            e_hat = ErrorPrediction.zero(N, n_x)

        p_used = p_hat.copy()
        prob, aux = _condense_full(sm, cfg, p_used[:N], x, refs[k:k + N + 1], e_hat)
        sol = qplib.solve(prob, max_iter=cfg.qp_max_iter)
        x_hat = _rollout_hat(sm, aux["p_hat"], x, sol.z, N)
        for _ in range(cfg.inner_iterations - 1):
            if sol.status != "optimal":
                break
            # Optional inner refinement: re-estimate the scheduling from the
            # corrected states and re-solve once more.
            x_bar_inner = x_hat.copy()
            x_bar_inner[1:] += e_hat.mean
            p_used = np.array([sm.base.rho(x_bar_inner[i]) for i in range(N + 1)])
            prob, aux = _condense_full(sm, cfg, p_used[:N], x, refs[k:k + N + 1], e_hat)
            sol = qplib.solve(prob, max_iter=cfg.qp_max_iter)
            x_hat = _rollout_hat(sm, aux["p_hat"], x, sol.z, N)
        if sol.status != "optimal":
            log.status = f"qp_{sol.status}"
            break

        u = sol.z.reshape(N, n_u)
        x_bar = x_hat.copy()
        x_bar[1:] += e_hat.mean
        cost = _trajectory_cost(cfg, sm.P, x_bar, u, refs[k:k + N + 1])
        log.mpc_steps.append(MpcStep(
            k=k, u_star=u, x_hat=x_hat, x_bar=x_bar, p_hat=p_used.copy(),
            e_hat=e_hat, qp_diag=sol, cost=cost,
            tightening_inverted=aux["inverted"],
        ))

        # Predicted rollout extension via zero-order hold on the last input.
        x_hat_ext = closed_A(sm, p_used[N]) @ x_hat[N] + sm.base.B @ u[N - 1]
        x_pred_full = np.vstack([x_hat, x_hat_ext])

        # Truth rollout under the same inputs, also ZOH-extended.
        x_true_full = np.empty((N + 2, n_x))
        x_true_full[0] = x
        for i in range(N):
            x_true_full[i + 1] = closed_step(sm, x_true_full[i], u[i])
        x_true_full[N + 1] = closed_step(sm, x_true_full[N], u[N - 1])

        bank.record_errors(k, x_true_full[1:], x_pred_full[1:])
        log.truth_rollouts.append(x_true_full)
        log.pred_rollouts.append(x_pred_full)

        u_mpc.append(u[0].copy())
        u_applied.append(sm.K @ x + u[0])
        costs.append(cost)

        if cfg.phat_update_source == "previous_truth":
            p_hat = np.array([sm.base.rho(x_true_full[i + 1]) for i in range(N + 1)])
        else:
            p_hat = np.array([sm.base.rho(x_bar[min(i + 1, N)]) for i in range(N + 1)])

        x = x_true_full[1]
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("plant state became non-finite")
        states.append(x.copy())
        sched.append(float(sm.base.rho(x)[0]))
        log.completed_steps = k + 1

    log.states = np.asarray(states)
    log.u_mpc = np.asarray(u_mpc).reshape(-1, n_u)
    log.u_applied = np.asarray(u_applied).reshape(-1, n_u)
    log.scheduling = np.asarray(sched)
    log.costs = np.asarray(costs)
    return log


def _rollout_hat(sm, p_hat, x_k, z, N) -> np.ndarray:
    n_x, n_u = sm.base.n_x, sm.base.n_u
    u = np.asarray(z, dtype=float).reshape(N, n_u)
    out = np.empty((N + 1, n_x))
    out[0] = x_k
    for i in range(N):
        out[i + 1] = closed_A(sm, p_hat[i]) @ out[i] + sm.base.B @ u[i]
    return out


def _trajectory_cost(cfg, P, x_bar, u, refs) -> float:
    cost = 0.0
    for i in range(cfg.N):
        dx = x_bar[i] - refs[i]
        cost += float(dx @ cfg.Q @ dx + u[i] @ cfg.R @ u[i])
    dN = x_bar[cfg.N] - refs[cfg.N]
    return cost + float(dN @ P @ dN)
