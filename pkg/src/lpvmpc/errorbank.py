"""Forward-error history and the per-(horizon, state) GP bank.

Errors e_{i|k} = x_true - x_pred are recorded per MPC step as a column
of the history (rows i = 1..N+1). One GP per (horizon row i <= N, state
component n) learns the map e_{i+1|j} -> e_{i|j+1}: both sides address
the same absolute time j+i+1, so the bank predicts one step ahead of
what has been measured. Queried at e_{i+1|k-1}, GP_i yields e_{i|k}.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import gp as gplib

__all__ = ["ErrorBank", "ErrorPrediction", "InsufficientHistory"]

logger = logging.getLogger(__name__)

DEFAULT_ZSCORE = 2.576


class InsufficientHistory(RuntimeError):
    pass


@dataclass
class ErrorPrediction:
    """One-step-ahead error means/stds for horizon rows 1..N."""

    mean: np.ndarray    # (N, n_x)
    std: np.ndarray     # (N, n_x), zero where no GP prediction exists
    fitted: np.ndarray  # (N, n_x) bool, True where a GP produced the row

    @classmethod
    def zero(cls, N: int, n_x: int) -> "ErrorPrediction":
        return cls(np.zeros((N, n_x)), np.zeros((N, n_x)), np.zeros((N, n_x), dtype=bool))


@dataclass
class ErrorBank:
    """History window plus the N x n_x bank of scalar GPs.

    Not thread-safe: recording and predicting both mutate bank state
    (history, fitted models, warm starts), so callers serialize access.
    The per-(i, n) fits inside one predict call are independent and are
    executed as one vectorized batch.
    """

    N: int
    n_x: int
    window: int = 0                  # 0 -> default 2N columns
    zscore: float = DEFAULT_ZSCORE
    kernel_variant: str = "se"
    period: float | None = None
    periodic_lengthscale: float | None = None
    bounds: gplib.HyperBox = field(default_factory=gplib.HyperBox)
    seed: int = 0
    n_starts: int = gplib.N_STARTS
    refit_every: int = 1
    standardize: bool = False

    steps: list[int] = field(default_factory=list)
    columns: list[np.ndarray] = field(default_factory=list)  # each (N+1, n_x)
    gps: list[list[gplib.GpModel | None]] = field(default_factory=list)
    _warm: np.ndarray | None = None
    _fits_done: int = 0

    def __post_init__(self) -> None:
        if self.window <= 0:
            self.window = 2 * self.N
        if not self.gps:
            self.gps = [[None] * self.n_x for _ in range(self.N)]

    # -- recording ---------------------------------------------------------

    def record_errors(self, k: int, x_true: np.ndarray, x_pred: np.ndarray) -> None:
        """Store column e_{i|k} = x_true[i] - x_pred[i] for i = 1..N+1.

        Both sequences carry horizon rows 1..N+1; row N+1 exists via the
        zero-order-hold extension of the final input. e_{0|k} is zero by
        construction and never stored.
        """
        x_true = np.asarray(x_true, dtype=float)
        x_pred = np.asarray(x_pred, dtype=float)
        if x_true.shape != (self.N + 1, self.n_x) or x_pred.shape != x_true.shape:
            raise ValueError(
                f"expected ({self.N + 1}, {self.n_x}) sequences, got {x_true.shape} and {x_pred.shape}"
            )
        self.steps.append(k)
        self.columns.append(x_true - x_pred)
        if len(self.columns) > self.window:
            self.steps = self.steps[-self.window:]
            self.columns = self.columns[-self.window:]

    # -- training-set construction ----------------------------------------

    def build_training(self, i: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Training set for GP_{i,n}: consecutive-column pairs
        (e_{i+1|j}, e_{i|j+1}) within the retention window."""
        if not 1 <= i <= self.N or not 0 <= n < self.n_x:
            raise ValueError("horizon row or state component out of range")
        if len(self.columns) < 2:
            raise InsufficientHistory("need at least 2 recorded columns")
        E = np.asarray(self.columns)       # (m, N+1, n_x); row r holds e_{r+1}
        inputs = E[:-1, i, n]              # e_{i+1 | j},   j = first..last-1
        targets = E[1:, i - 1, n]          # e_{i   | j+1}
        # Consecutive-column absolute-time identity: (j) + (i+1) == (j+1) + i.
        assert all(b == a + 1 for a, b in zip(self.steps[:-1], self.steps[1:])), \
            "history columns must be consecutive steps"
        return inputs, targets

    # -- prediction --------------------------------------------------------

    def predict_errors(self, k: int) -> ErrorPrediction:
        """Fit (or recondition) the bank and predict e_{i|k} for i = 1..N.

        With fewer than 2 recorded columns the zero prediction is returned
        (std 0, nothing fitted): the controller then degenerates to the
        uncorrected loop.
        """
        pred = ErrorPrediction.zero(self.N, self.n_x)
        if len(self.columns) < 2:
            return pred
        E = np.asarray(self.columns)
        Xs = np.empty((self.N * self.n_x, E.shape[0] - 1))
        Ys = np.empty_like(Xs)
        for i in range(1, self.N + 1):
            for n in range(self.n_x):
                g = (i - 1) * self.n_x + n
                Xs[g], Ys[g] = self.build_training(i, n)
        try:
            models = self._fit_bank(Xs, Ys)
        except gplib.GpFitError as exc:
            logger.warning("GP bank fit failed (%s); using zero prediction", exc)
            return pred
        for i in range(1, self.N + 1):
            for n in range(self.n_x):
                g = (i - 1) * self.n_x + n
                self.gps[i - 1][n] = models[g]
                query = float(E[-1, i, n])      # e_{i+1 | k-1}
                post = gplib.predict(models[g], query)
                pred.mean[i - 1, n] = post.mean
                pred.std[i - 1, n] = post.std
                pred.fitted[i - 1, n] = True
        return pred

    def _fit_bank(self, Xs: np.ndarray, Ys: np.ndarray) -> list[gplib.GpModel]:
        refit_due = self._fits_done % max(self.refit_every, 1) == 0 or self._warm is None
        if refit_due:
            models = gplib.fit_batch(
                Xs, Ys,
                variant=self.kernel_variant,
                bounds=self.bounds,
                seed=self.seed,
                n_starts=self.n_starts,
                period=self.period,
                periodic_lengthscale=self.periodic_lengthscale,
                standardize=self.standardize,
                warm_starts=self._warm,
            )
            self._warm = np.array(
                [[np.log(m.kernel.sigma2), np.log(m.kernel.lengthscale), np.log(m.noise2)]
                 for m in models]
            )
        else:
            # Recondition: keep hyperparameters, refresh data and factorization.
            models = []
            for g in range(Xs.shape[0]):
                s2, ls, n2 = np.exp(self._warm[g])
                kern = gplib.Kernel(self.kernel_variant, float(s2), float(ls),
                                    self.period, self.periodic_lengthscale)
                models.append(gplib.make_gp(Xs[g], Ys[g], kern, float(n2)))
        self._fits_done += 1
        return models

    # -- export ------------------------------------------------------------

    def export_csv(self, path) -> None:
        """Dump the retained history as rows (k, i, n, error)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "i", "n", "error"])
            for k, col in zip(self.steps, self.columns):
                for i in range(1, self.N + 2):
                    for n in range(self.n_x):
                        writer.writerow([k, i, n + 1, np.format_float_scientific(
                            col[i - 1, n], precision=16)])
