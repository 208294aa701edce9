"""Auxiliary state-feedback synthesis and the closed-loop LPV operator.

The gain K is computed by a discrete algebraic Riccati equation at a
nominal scheduling point and certified a posteriori by a spectral-radius
sweep over the scheduling range; the terminal weight P solves the
discrete Lyapunov equation of the nominal closed loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import LpvModel, eval_A

__all__ = [
    "StabilizedModel",
    "synthesize_lqr",
    "terminal_weight",
    "closed_A",
    "solve_dare",
    "solve_dlyap",
]

DARE_TOL = 1e-12
DARE_MAX_ITER = 10_000
DLYAP_TOL = 1e-14
STABILITY_GRID_POINTS = 101
STABILITY_MARGIN = 1e-6


class SynthesisError(RuntimeError):
    """Raised when the Riccati/Lyapunov solve or the grid certificate fails."""


def solve_dare(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Fixed-point iteration on the Riccati map starting from S = Q."""
    S = np.asarray(Q, dtype=float).copy()
    for _ in range(DARE_MAX_ITER):
        BtSB = B.T @ S @ B
        gain = np.linalg.solve(R + BtSB, B.T @ S @ A)
        S_next = Q + A.T @ S @ A - A.T @ S @ B @ gain
        if np.max(np.abs(S_next - S)) < DARE_TOL:
            return S_next
        S = S_next
    raise SynthesisError(
        f"DARE fixed-point iteration did not converge in {DARE_MAX_ITER} steps"
    )


def solve_dlyap(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Accumulate P = sum_k (A^T)^k W A^k; convergent for Schur-stable A."""
    P = np.asarray(W, dtype=float).copy()
    term = P.copy()
    # Geometric decay for Schur-stable A; generous cap.
    for _ in range(1_000_000):
        term = A.T @ term @ A
        P = P + term
        if np.max(np.abs(term)) < DLYAP_TOL:
            return P
    raise SynthesisError("Lyapunov accumulation did not converge")


@dataclass
class StabilizedModel:
    """LpvModel plus feedback gain K and terminal weight P."""

    base: LpvModel
    K: np.ndarray          # (n_u, n_x), closed loop A_c(p) = A(p) + B K
    P: np.ndarray          # (n_x, n_x) terminal weight, symmetric PD
    p_nominal: np.ndarray  # scheduling point used for synthesis


def closed_A(sm: StabilizedModel, p: Sequence[float]) -> np.ndarray:
    """Closed-loop operator A_c(p) = A(p) + B K."""
    return eval_A(sm.base, p) + sm.base.B @ sm.K


def _grid_spectral_check(model: LpvModel, K: np.ndarray) -> None:
    BK = model.B @ K
    for comp in range(model.n_p):
        grid = np.linspace(*model.p_bounds[comp], STABILITY_GRID_POINTS)
        for pval in grid:
            p = model.p_bounds[:, 0].copy()
            p[comp] = pval
            radius = np.max(np.abs(np.linalg.eigvals(eval_A(model, p) + BK)))
            if radius >= 1.0 - STABILITY_MARGIN:
                raise SynthesisError(
                    f"closed loop not Schur stable at p={p}: spectral radius {radius:.6f}"
                )


def synthesize_lqr(
    model: LpvModel,
    Q: np.ndarray,
    R: np.ndarray,
    p_nominal: Sequence[float],
) -> StabilizedModel:
    """DARE-based gain at `p_nominal`, then a grid spectral-radius certificate.

    K = -(R + B'SB)^{-1} B'S A(p_nominal) with S the DARE solution; the
    returned model carries the terminal weight from `terminal_weight`.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    p_nominal = np.asarray(p_nominal, dtype=float).ravel()
    A = eval_A(model, p_nominal)
    B = model.B
    S = solve_dare(A, B, Q, R)
    K = -np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
    _grid_spectral_check(model, K)
    sm = StabilizedModel(base=model, K=K, P=np.eye(model.n_x), p_nominal=p_nominal)
    sm.P = terminal_weight(sm, Q, R)
    return sm


def terminal_weight(sm: StabilizedModel, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """P solving P = A_c' P A_c + Q + K'RK at the nominal scheduling point."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Ac = closed_A(sm, sm.p_nominal)
    if np.max(np.abs(np.linalg.eigvals(Ac))) >= 1.0:
        raise SynthesisError("A_c(p_nominal) is not Schur stable")
    W = Q + sm.K.T @ R @ sm.K
    P = solve_dlyap(Ac, W)
    return 0.5 * (P + P.T)
