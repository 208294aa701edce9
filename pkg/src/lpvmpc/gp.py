"""Scalar Gaussian-process regression with exact inference.

Squared-exponential kernel (optionally multiplied by a periodic factor),
hyperparameters fitted by maximizing the exact marginal log-likelihood
over a bounded log-box with a multi-start projected gradient ascent
(analytic gradients, Barzilai-Borwein step, Armijo backtracking).

`fit_batch` optimizes many same-size problems in one vectorized pass;
results are identical to fitting each problem alone because every
linear-algebra call operates per problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "Kernel",
    "HyperBox",
    "GpModel",
    "Posterior",
    "GpFitError",
    "kernel_eval",
    "kernel_matrix",
    "log_marginal_likelihood",
    "mll_gradient",
    "make_gp",
    "fit",
    "fit_batch",
    "predict",
]

NOISE_FLOOR = 1e-10
JITTER_START = 1e-10
JITTER_MAX = 1e-6
N_STARTS = 8
MAX_FIT_ITER = 200
_GRAD_TOL = 1e-5
_ARMIJO_C = 1e-4
_MIN_STEP = 1e-12


class GpFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Covariance function; `se` or `se_periodic` (SE times periodic factor)."""

    variant: str = "se"
    sigma2: float = 1.0
    lengthscale: float = 1.0
    period: float | None = None
    periodic_lengthscale: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in ("se", "se_periodic"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.sigma2 <= 0 or self.lengthscale <= 0:
            raise ValueError("kernel hyperparameters must be positive")
        if self.variant == "se_periodic":
            if not self.period or not self.periodic_lengthscale:
                raise ValueError("se_periodic requires period and periodic_lengthscale")
            if self.period <= 0 or self.periodic_lengthscale <= 0:
                raise ValueError("periodic hyperparameters must be positive")


@dataclass(frozen=True)
class HyperBox:
    """Bounds of the log-hyperparameter search box (natural log)."""

    log_sigma2: tuple[float, float] = (-8.0, 4.0)
    log_lengthscale: tuple[float, float] = (-4.0, 3.0)
    log_noise2: tuple[float, float] = (-12.0, 0.0)

    def lows(self) -> np.ndarray:
        return np.array([self.log_sigma2[0], self.log_lengthscale[0], self.log_noise2[0]])

    def highs(self) -> np.ndarray:
        return np.array([self.log_sigma2[1], self.log_lengthscale[1], self.log_noise2[1]])


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _periodic_factor(kernel: Kernel, delta: np.ndarray) -> np.ndarray:
    s = np.sin(np.pi * delta / kernel.period)
    return np.exp(-2.0 * s * s / (kernel.periodic_lengthscale ** 2))


def kernel_eval(kernel: Kernel, t: float, t2: float) -> float:
    """Covariance between two scalar inputs."""
    d = t - t2
    val = kernel.sigma2 * math.exp(-(d * d) / (2.0 * kernel.lengthscale ** 2))
    if kernel.variant == "se_periodic":
        val *= float(_periodic_factor(kernel, np.asarray(d)))
    return val


def kernel_matrix(kernel: Kernel, X: np.ndarray, X2: np.ndarray | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float).ravel()
    X2 = X if X2 is None else np.asarray(X2, dtype=float).ravel()
    delta = X[:, None] - X2[None, :]
    K = kernel.sigma2 * np.exp(-(delta ** 2) / (2.0 * kernel.lengthscale ** 2))
    if kernel.variant == "se_periodic":
        K = K * _periodic_factor(kernel, delta)
    return K


@dataclass
class GpModel:
    """Fitted (or directly constructed) scalar GP with cached factorization."""

    kernel: Kernel
    noise2: float
    X: np.ndarray
    Y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    log_marginal: float = float("nan")
    # Optional input/target standardization applied before inference.
    x_shift: float = 0.0
    x_scale: float = 1.0
    y_shift: float = 0.0
    y_scale: float = 1.0


def _condition(kernel: Kernel, noise2: float, X: np.ndarray, Y: np.ndarray):
    """Cholesky of K + noise2 I with jitter escalation; returns (chol, alpha, jitter)."""
    K = kernel_matrix(kernel, X)
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            chol = np.linalg.cholesky(K + (noise2 + jitter) * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 100.0
            if jitter > JITTER_MAX:
                raise GpFitError(
                    f"Cholesky failed after jitter escalation to {jitter:.1e}"
                ) from None
    tmp = np.linalg.solve(chol, Y)
    alpha = np.linalg.solve(chol.T, tmp)
    return chol, alpha, jitter


def make_gp(
    X: Sequence[float],
    Y: Sequence[float],
    kernel: Kernel,
    noise2: float,
) -> GpModel:
    """Construct a GP with given hyperparameters (noise floored at 1e-10)."""
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    if X.size == 0 or X.shape != Y.shape:
        raise GpFitError("training inputs and targets must be same-length and non-empty")
    noise2 = max(float(noise2), NOISE_FLOOR)
    chol, alpha, jitter = _condition(kernel, noise2, X, Y)
    lml = _lml_from_factor(chol, Y, alpha)
    return GpModel(kernel=kernel, noise2=noise2, X=X, Y=Y, chol=chol, alpha=alpha,
                   jitter=jitter, log_marginal=lml)


def _lml_from_factor(chol: np.ndarray, Y: np.ndarray, alpha: np.ndarray) -> float:
    n = Y.shape[0]
    return float(-0.5 * Y @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * n * math.log(2.0 * math.pi))


def predict(gp: GpModel, t_star: float) -> Posterior:
    """Posterior mean and variance at a scalar query (variance clamped at 0)."""
    ts = (float(t_star) - gp.x_shift) / gp.x_scale
    k_star = kernel_matrix(gp.kernel, gp.X, np.array([ts]))[:, 0]
    mean = float(k_star @ gp.alpha)
    v = np.linalg.solve(gp.chol, k_star)
    k_ss = kernel_eval(gp.kernel, ts, ts)
    var = max(k_ss - float(v @ v), 0.0)
    mean = gp.y_shift + gp.y_scale * mean
    var = gp.y_scale ** 2 * var
    return Posterior(mean=mean, variance=var)


def log_marginal_likelihood(
    log_params: Sequence[float],
    X: Sequence[float],
    Y: Sequence[float],
    variant: str = "se",
    period: float | None = None,
    periodic_lengthscale: float | None = None,
) -> float:
    """Exact MLL at log (sigma2, lengthscale, noise2)."""
    mll, _ = _mll_impl(np.asarray(log_params, float), np.asarray(X, float).ravel(),
                       np.asarray(Y, float).ravel(), variant, period, periodic_lengthscale,
                       want_grad=False)
    return mll


def mll_gradient(
    log_params: Sequence[float],
    X: Sequence[float],
    Y: Sequence[float],
    variant: str = "se",
    period: float | None = None,
    periodic_lengthscale: float | None = None,
) -> np.ndarray:
    """Analytic MLL gradient w.r.t. the log hyperparameters."""
    _, g = _mll_impl(np.asarray(log_params, float), np.asarray(X, float).ravel(),
                     np.asarray(Y, float).ravel(), variant, period, periodic_lengthscale,
                     want_grad=True)
    return g


def _mll_impl(theta, X, Y, variant, period, periodic_lengthscale, want_grad):
    n = X.shape[0]
    s2, ls, n2 = np.exp(theta[0]), np.exp(theta[1]), np.exp(theta[2])
    delta = X[:, None] - X[None, :]
    K = s2 * np.exp(-(delta ** 2) / (2.0 * ls * ls))
    if variant == "se_periodic":
        K = K * _periodic_factor(
            Kernel("se_periodic", s2, ls, period, periodic_lengthscale), delta
        )
    Kt = K + n2 * np.eye(n)
    try:
        chol = np.linalg.cholesky(Kt)
    except np.linalg.LinAlgError:
        return -np.inf, np.full(3, np.nan)
    alpha = np.linalg.solve(Kt, Y)
    mll = float(-0.5 * Y @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * n * math.log(2 * math.pi))
    if not want_grad:
        return mll, None
    Kinv = np.linalg.solve(Kt, np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    g = np.array([
        0.5 * np.sum(A * K),
        0.5 * np.sum(A * (K * (delta ** 2) / (ls * ls))),
        0.5 * np.trace(A) * n2,
    ])
    return mll, g


# ---------------------------------------------------------------------------
# Batched multi-start fitting
# ---------------------------------------------------------------------------

def _lhs_starts(box: HyperBox, seed: int, n_starts: int) -> np.ndarray:
    """Latin-hypercube starts over the log box; deterministic per seed."""
    rng = np.random.default_rng(seed)
    lows, highs = box.lows(), box.highs()
    pts = np.empty((n_starts, 3))
    for d in range(3):
        perm = rng.permutation(n_starts)
        u = rng.uniform(size=n_starts)
        pts[:, d] = lows[d] + (perm + u) * (highs[d] - lows[d]) / n_starts
    return pts


class _BatchObjective:
    """Vectorized MLL and gradient over a stack of same-size problems.

    Works from the triangular inverse V = L^-1 of the Cholesky factor:
    data term -0.5||VY||^2, tr(Kinv) = ||V||_F^2, tr(Kinv M) = <VM, V>.
    """

    def __init__(self, D2: np.ndarray, F: np.ndarray, Y: np.ndarray):
        # D2, F: (P, n, n); Y: (P, n). F is the fixed periodic factor (ones for SE).
        self.D2 = D2
        self.F = F
        self.Y = Y
        self.n = D2.shape[-1]
        self.eye = np.eye(self.n)
        self._const = 0.5 * self.n * math.log(2.0 * math.pi)

    def _cholesky(self, Kt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        try:
            return np.linalg.cholesky(Kt), np.ones(Kt.shape[0], bool)
        except np.linalg.LinAlgError:
            ok = np.zeros(Kt.shape[0], bool)
            chol = np.empty_like(Kt)
            for p in range(Kt.shape[0]):
                try:
                    chol[p] = np.linalg.cholesky(Kt[p])
                    ok[p] = True
                except np.linalg.LinAlgError:
                    chol[p] = self.eye
            return chol, ok

    def value(self, theta: np.ndarray, idx: np.ndarray) -> np.ndarray:
        D2, F, Y = self.D2[idx], self.F[idx], self.Y[idx]
        s2 = np.exp(theta[:, 0])[:, None, None]
        ls2 = np.exp(2.0 * theta[:, 1])[:, None, None]
        n2 = np.exp(theta[:, 2])
        Kt = s2 * np.exp(-D2 / (2.0 * ls2)) * F + n2[:, None, None] * self.eye
        chol, ok = self._cholesky(Kt)
        alpha = np.linalg.solve(Kt, Y[..., None])[..., 0]
        logdet = 2.0 * np.sum(np.log(np.einsum("pii->pi", chol)), axis=1)
        mll = -0.5 * np.einsum("pi,pi->p", Y, alpha) - 0.5 * logdet - self._const
        mll[~ok] = -np.inf
        return mll

    def value_and_grad(self, theta: np.ndarray, idx: np.ndarray):
        D2, F, Y = self.D2[idx], self.F[idx], self.Y[idx]
        s2 = np.exp(theta[:, 0])[:, None, None]
        ls2 = np.exp(2.0 * theta[:, 1])
        n2 = np.exp(theta[:, 2])
        K = s2 * np.exp(-D2 / (2.0 * ls2[:, None, None])) * F
        Kt = K + n2[:, None, None] * self.eye
        chol, ok = self._cholesky(Kt)
        V = np.linalg.inv(chol)                       # triangular inverse
        t1 = np.einsum("pij,pj->pi", V, Y)            # L^-1 Y
        alpha = np.einsum("pji,pj->pi", V, t1)        # Kinv Y
        logdet = 2.0 * np.sum(np.log(np.einsum("pii->pi", chol)), axis=1)
        mll = -0.5 * np.einsum("pi,pi->p", t1, t1) - 0.5 * logdet - self._const
        mll[~ok] = -np.inf
        tr_kinv = np.einsum("pij,pij->p", V, V)
        M = K * (D2 / ls2[:, None, None])
        VM = V @ M
        tr_kinv_m = np.einsum("pij,pij->p", VM, V)
        Ka = np.einsum("pij,pj->pi", K, alpha)
        Ma = np.einsum("pij,pj->pi", M, alpha)
        aKa = np.einsum("pi,pi->p", alpha, Ka)
        aMa = np.einsum("pi,pi->p", alpha, Ma)
        aa = np.einsum("pi,pi->p", alpha, alpha)
        grad = np.empty((theta.shape[0], 3))
        grad[:, 0] = 0.5 * (aKa - (self.n - n2 * tr_kinv))   # dK = K
        grad[:, 1] = 0.5 * (aMa - tr_kinv_m)                 # dK = K .* D2/ls^2
        grad[:, 2] = 0.5 * n2 * (aa - tr_kinv)               # dK = n2 I
        grad[~ok] = 0.0
        return mll, grad


def _ascend(obj: _BatchObjective, theta0: np.ndarray, box: HyperBox,
            n_starts: int, screen_iters: int = 5, top_keep: int = 2):
    """Projected gradient ascent with an adaptive step and Armijo backtracking.

    All starts run a short screening phase; afterwards only the best
    `top_keep` starts of each problem continue until their marginal
    log-likelihood stops improving (or the iteration cap). Start selection
    is per problem, so batching never changes an individual fit.
    """
    lows, highs = box.lows(), box.highs()
    P = theta0.shape[0]
    theta = np.clip(theta0.copy(), lows, highs)
    mll, grad = obj.value_and_grad(theta, np.arange(P))
    step = np.full(P, 1.0)
    active = np.isfinite(mll)
    window_mll = mll.copy()

    for it in range(MAX_FIT_ITER):
        if it == screen_iters and n_starts > top_keep:
            # Keep the most promising starts of each problem.
            by_problem = mll.reshape(-1, n_starts)
            order = np.argsort(-by_problem, axis=1, kind="stable")
            survivors = np.zeros_like(by_problem, dtype=bool)
            np.put_along_axis(survivors, order[:, :top_keep], True, axis=1)
            active &= survivors.ravel()
        if it and it % 2 == 0:
            # A start whose likelihood gained almost nothing over the last
            # two iterations has converged for our purposes.
            flat = (mll - window_mll) < 1e-7 * (1.0 + np.abs(mll))
            active &= ~flat
            window_mll = mll.copy()
        pg = grad.copy()
        pg[(theta <= lows + 1e-12) & (pg < 0)] = 0.0
        pg[(theta >= highs - 1e-12) & (pg > 0)] = 0.0
        active &= np.max(np.abs(pg), axis=1) > _GRAD_TOL
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break

        # Backtracking line search; the trial evaluation carries the gradient
        # so an accepted move needs no second evaluation.
        pending = idx.copy()
        accepted_any = np.zeros(P, bool)
        for _bt in range(25):
            if pending.size == 0:
                break
            trial = np.clip(theta[pending] + step[pending, None] * pg[pending], lows, highs)
            mll_t, grad_t = obj.value_and_grad(trial, pending)
            gain = np.einsum("pi,pi->p", pg[pending], trial - theta[pending])
            ok = (mll_t >= mll[pending] + _ARMIJO_C * gain) & np.isfinite(mll_t)
            acc = pending[ok]
            theta[acc] = trial[ok]
            mll[acc] = mll_t[ok]
            grad[acc] = grad_t[ok]
            accepted_any[acc] = True
            if _bt == 0:
                step[acc] = np.minimum(step[acc] * 1.5, 1e2)
            pending = pending[~ok]
            step[pending] *= 0.25
            dead = pending[step[pending] < _MIN_STEP]
            active[dead] = False
            pending = pending[step[pending] >= _MIN_STEP]
        active &= accepted_any
    return theta, mll


def fit_batch(
    Xs: np.ndarray,
    Ys: np.ndarray,
    variant: str = "se",
    bounds: HyperBox | None = None,
    seed: int = 0,
    n_starts: int = N_STARTS,
    period: float | None = None,
    periodic_lengthscale: float | None = None,
    standardize: bool = False,
    warm_starts: np.ndarray | None = None,
) -> list[GpModel]:
    """Fit G same-size scalar GPs; Xs, Ys have shape (G, n).

    `warm_starts` (G, 3 log-params) adds one extra start per problem,
    typically the previous fit; it can only improve the found optimum.
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    Ys = np.atleast_2d(np.asarray(Ys, dtype=float))
    if Xs.shape != Ys.shape or Xs.shape[1] < 1:
        raise GpFitError("inputs and targets must be same-shape and non-empty")
    box = bounds or HyperBox()
    G, n = Xs.shape

    Xw, Yw = Xs, Ys
    shifts = np.zeros((G, 4))
    shifts[:, 1] = 1.0
    shifts[:, 3] = 1.0
    if standardize:
        mx, sx = Xs.mean(axis=1), np.maximum(Xs.std(axis=1), 1e-12)
        my, sy = Ys.mean(axis=1), np.maximum(Ys.std(axis=1), 1e-12)
        Xw = (Xs - mx[:, None]) / sx[:, None]
        Yw = (Ys - my[:, None]) / sy[:, None]
        shifts = np.column_stack([mx, sx, my, sy])

    delta = Xw[:, :, None] - Xw[:, None, :]
    D2 = delta ** 2
    if variant == "se_periodic":
        if not period or not periodic_lengthscale:
            raise GpFitError("se_periodic requires period and periodic_lengthscale")
        s = np.sin(np.pi * delta / period)
        F = np.exp(-2.0 * s * s / periodic_lengthscale ** 2)
    else:
        F = np.ones_like(D2)

    starts = _lhs_starts(box, seed, n_starts)            # shared by every problem
    theta0 = np.repeat(starts[None], G, axis=0).reshape(G, n_starts, 3)
    if warm_starts is not None:
        warm = np.asarray(warm_starts, dtype=float).reshape(G, 1, 3)
        theta0 = np.concatenate([theta0, warm], axis=1)
    n_eff = theta0.shape[1]
    theta0 = theta0.reshape(G * n_eff, 3)
    obj = _BatchObjective(
        np.repeat(D2, n_eff, axis=0),
        np.repeat(F, n_eff, axis=0),
        np.repeat(Yw, n_eff, axis=0),
    )
    theta, mll = _ascend(obj, theta0, box, n_eff)

    mllG = mll.reshape(G, n_eff)
    winner = np.argmax(mllG, axis=1)
    theta_best = theta.reshape(G, n_eff, 3)[np.arange(G), winner]

    models = []
    for g in range(G):
        if not np.isfinite(mllG[g, winner[g]]):
            raise GpFitError("all hyperparameter starts failed")
        s2, ls, n2 = np.exp(theta_best[g])
        kern = Kernel(variant, float(s2), float(ls), period, periodic_lengthscale)
        gp = make_gp(Xw[g], Yw[g], kern, float(n2))
        gp.x_shift, gp.x_scale, gp.y_shift, gp.y_scale = shifts[g]
        models.append(gp)
    return models


def fit(
    X: Sequence[float],
    Y: Sequence[float],
    variant: str = "se",
    bounds: HyperBox | None = None,
    seed: int = 0,
    n_starts: int = N_STARTS,
    period: float | None = None,
    periodic_lengthscale: float | None = None,
    standardize: bool = False,
) -> GpModel:
    """Fit one scalar GP by bounded marginal-likelihood maximization."""
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    if X.size == 0 or X.shape != Y.shape:
        raise GpFitError("training inputs and targets must be same-length and non-empty")
    return fit_batch(X[None], Y[None], variant, bounds, seed, n_starts,
                     period, periodic_lengthscale, standardize)[0]
