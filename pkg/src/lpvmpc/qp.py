"""Dense convex QP solver: minimize 0.5 z'Hz + f'z subject to Gz <= h.

ADMM on the inequality-constrained problem (fixed penalty, row-norm
equilibration of G) polished by an active-set KKT solve. A solution is
reported optimal only when the KKT certificate holds:

    primal violation   max(Gz - h)            <= 1e-8
    stationarity       ||Hz + f + G'dual||_inf <= 1e-6
    complementarity    |dual_i (Gz - h)_i|     <= 1e-6
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QpProblem", "QpSolution", "solve"]

H_REGULARIZATION = 1e-10
ADMM_RHO = 1.0
ADMM_EPS_ABS = 1e-9
ADMM_EPS_REL = 1e-9
KKT_PRIMAL_TOL = 1e-8
KKT_STATIONARITY_TOL = 1e-6
KKT_COMPLEMENTARITY_TOL = 1e-6
POLISH_TIKHONOV = 1e-12
DEFAULT_MAX_ITER = 4000
_CHECK_EVERY = 25
_INFEASIBLE_RESIDUAL = 1e-4
_DUAL_DIVERGENCE = 1e12


@dataclass
class QpProblem:
    """Problem data; H is symmetrized and shifted to be >= 1e-10 I."""

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.H = 0.5 * (H + H.T)
        lam_min = float(np.min(np.linalg.eigvalsh(self.H)))
        if lam_min < H_REGULARIZATION:
            self.H = self.H + (H_REGULARIZATION - lam_min) * np.eye(self.H.shape[0])
        self.f = np.asarray(self.f, dtype=float).ravel()
        m = self.H.shape[0]
        if self.f.shape[0] != m:
            raise ValueError("f length must match H")
        self.G = np.asarray(self.G, dtype=float).reshape(-1, m) if np.size(self.G) else np.zeros((0, m))
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.G.shape[0] != self.h.shape[0]:
            raise ValueError("G rows must match h length")


@dataclass
class QpSolution:
    z: np.ndarray
    duals: np.ndarray
    status: str                 # optimal | infeasible | max_iter
    kkt_stationarity: float
    kkt_primal: float
    iterations: int = 0
    active_set: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _kkt_metrics(prob: QpProblem, z: np.ndarray, duals: np.ndarray) -> tuple[float, float, float]:
    slack = prob.G @ z - prob.h if prob.G.shape[0] else np.zeros(0)
    primal = float(np.max(slack)) if slack.size else 0.0
    grad = prob.H @ z + prob.f
    if duals.size:
        grad = grad + prob.G.T @ duals
    stationarity = float(np.max(np.abs(grad)))
    compl = float(np.max(np.abs(duals * slack))) if slack.size else 0.0
    return primal, stationarity, compl


def _certified(prob: QpProblem, z: np.ndarray, duals: np.ndarray) -> bool:
    if duals.size and np.min(duals) < -1e-12:
        return False
    primal, stat, compl = _kkt_metrics(prob, z, duals)
    return (
        primal <= KKT_PRIMAL_TOL
        and stat <= KKT_STATIONARITY_TOL
        and compl <= KKT_COMPLEMENTARITY_TOL
    )


def _polish(prob: QpProblem, active: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Equality-constrained KKT solve on the active rows; drops rows whose
    multiplier comes out negative and retries."""
    m = prob.H.shape[0]
    active = np.asarray(active, dtype=int)
    for _ in range(1 + len(active)):
        if active.size == 0:
            try:
                z = np.linalg.solve(prob.H, -prob.f)
            except np.linalg.LinAlgError:
                return None
            return z, np.zeros(prob.G.shape[0])
        Ga = prob.G[active]
        KKT = np.block([
            [prob.H, Ga.T],
            [Ga, np.zeros((active.size, active.size))],
        ])
        rhs = np.concatenate([-prob.f, prob.h[active]])
        try:
            sol = np.linalg.solve(KKT, rhs)
            if not np.all(np.isfinite(sol)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            # Degenerate active set: Tikhonov-regularized least squares.
            AtA = KKT.T @ KKT + POLISH_TIKHONOV * np.eye(KKT.shape[0])
            sol = np.linalg.solve(AtA, KKT.T @ rhs)
        z = sol[:m]
        mu = sol[m:]
        if mu.size and np.min(mu) < -1e-9:
            active = active[mu > -1e-9]
            continue
        duals = np.zeros(prob.G.shape[0])
        duals[active] = np.maximum(mu, 0.0)
        return z, duals
    return None


def solve(
    prob: QpProblem,
    max_iter: int = DEFAULT_MAX_ITER,
    z0: np.ndarray | None = None,
    duals0: np.ndarray | None = None,
) -> QpSolution:
    """Deterministic ADMM + polish solve of `prob`."""
    m = prob.H.shape[0]
    q = prob.G.shape[0]

    if q == 0:
        z = np.linalg.solve(prob.H, -prob.f)
        primal, stat, _ = _kkt_metrics(prob, z, np.zeros(0))
        status = "optimal" if stat <= KKT_STATIONARITY_TOL else "max_iter"
        return QpSolution(z, np.zeros(0), status, stat, primal, 0)

    # Row-norm equilibration of the constraints.
    row_norm = np.linalg.norm(prob.G, axis=1)
    row_norm[row_norm == 0.0] = 1.0
    Gs = prob.G / row_norm[:, None]
    hs = prob.h / row_norm

    M = prob.H + ADMM_RHO * Gs.T @ Gs
    Minv = np.linalg.inv(M)
    GsT = Gs.T

    z = np.zeros(m) if z0 is None else np.asarray(z0, dtype=float).copy()
    lam = np.zeros(q) if duals0 is None else np.asarray(duals0, dtype=float) * row_norm
    y = Gs @ z

    def try_polish(lam_scaled: np.ndarray, Gz: np.ndarray, it: int) -> QpSolution | None:
        active = np.flatnonzero((lam_scaled > 1e-9) | (hs - Gz < 1e-9))
        polished = _polish(prob, active)
        if polished is None:
            return None
        pz, pduals = polished
        if _certified(prob, pz, pduals):
            primal, stat, _ = _kkt_metrics(prob, pz, pduals)
            return QpSolution(pz, pduals, "optimal", stat, primal, it,
                              np.flatnonzero(pduals > 0))
        return None

    best_primal = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        z = Minv @ (-prob.f + GsT @ (ADMM_RHO * y - lam))
        Gz = Gs @ z
        y_prev = y
        y = np.minimum(Gz + lam / ADMM_RHO, hs)
        lam = lam + ADMM_RHO * (Gz - y)

        if it % _CHECK_EVERY == 0 or it == max_iter:
            r_primal = float(np.max(np.abs(Gz - y)))
            r_dual = float(np.max(np.abs(ADMM_RHO * (GsT @ (y - y_prev)))))
            best_primal = min(best_primal, r_primal)
            scale_p = max(float(np.max(np.abs(Gz))), float(np.max(np.abs(y))), 1.0)
            done = (
                r_primal <= ADMM_EPS_ABS + ADMM_EPS_REL * scale_p
                and r_dual <= ADMM_EPS_ABS + ADMM_EPS_REL * float(np.max(np.abs(GsT @ lam)) + 1.0)
            )
            if done or it % (4 * _CHECK_EVERY) == 0:
                sol = try_polish(lam, Gz, it)
                if sol is not None:
                    return sol
            if done:
                duals = lam / row_norm
                primal, stat, _ = _kkt_metrics(prob, z, duals)
                if _certified(prob, z, duals):
                    return QpSolution(z, duals, "optimal", stat, primal, it,
                                      np.flatnonzero(duals > 1e-9))
            if np.max(lam) > _DUAL_DIVERGENCE:
                break

    duals = lam / row_norm
    primal, stat, _ = _kkt_metrics(prob, z, duals)
    r_primal = float(np.max(np.abs(Gs @ z - y)))
    status = "infeasible" if r_primal > _INFEASIBLE_RESIDUAL else "max_iter"
    return QpSolution(z, duals, status, stat, primal, it)
