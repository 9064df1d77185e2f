"""Gaussian-process regression with a squared-exponential kernel.

Inputs live in the unit hypercube. Targets are centered before fitting so the
zero-mean prior does not pull predictions toward 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

THETA_GRID = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6)
DEFAULT_JITTER = 1e-8
MAX_JITTER = 1e-2


class GPModelError(RuntimeError):
    """Kernel matrix could not be factorized."""


@dataclass(frozen=True, eq=False)
class GpModel:
    X: np.ndarray
    y: np.ndarray  # centered targets
    y_mean: float
    theta: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _check_theta(theta):
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")


def se_kernel(xi, xj, theta: float) -> float:
    _check_theta(theta)
    xi = np.asarray(xi, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    if xi.shape != xj.shape:
        raise ValueError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    d2 = float(np.sum((xi - xj) ** 2))
    return math.exp(-d2 / (2.0 * theta * theta))


def kernel_matrix(A, B, theta: float) -> np.ndarray:
    """Pairwise SE covariances between the rows of ``A`` and ``B``."""
    _check_theta(theta)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    d2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * theta * theta))


def fit(X, y, theta: float, jitter: float = DEFAULT_JITTER) -> GpModel:
    """Factorize K + jitter*I, escalating jitter tenfold (up to 1e-2) on failure."""
    _check_theta(theta)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one training point")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("training inputs must lie in the unit hypercube")
    if jitter < 0:
        raise ValueError("jitter must be >= 0")
    y_mean = float(np.mean(y))
    yc = y - y_mean
    K = kernel_matrix(X, X, theta)
    n = X.shape[0]
    jit = jitter
    while True:
        try:
            L = np.linalg.cholesky(K + jit * np.eye(n))
            if np.all(np.isfinite(L)):
                break
        except np.linalg.LinAlgError:
            pass
        jit = 10 * jit if jit > 0 else DEFAULT_JITTER
        if jit > MAX_JITTER * (1 + 1e-9):
            raise GPModelError(
                f"kernel matrix is not positive definite even with jitter {MAX_JITTER:g} "
                f"(n={n}, theta={theta:g}); check for duplicate inputs with conflicting targets")
    alpha = cho_solve((L, True), yc)
    for a in (X, yc, L, alpha):
        a.setflags(write=False)
    return GpModel(X, yc, y_mean, float(theta), float(jit), L, alpha)


def predict_many(model: GpModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at the rows of ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    if Xq.shape[1] != model.dim:
        raise ValueError(f"query has dimension {Xq.shape[1]}, model has {model.dim}")
    k = kernel_matrix(model.X, Xq, model.theta)  # n x m
    mean = model.y_mean + k.T @ model.alpha
    v = solve_triangular(model.chol, k, lower=True)
    var = 1.0 - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def predict(model: GpModel, x) -> Posterior:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single d-vector; use predict_many for batches")
    mean, var = predict_many(model, x[None, :])
    return Posterior(float(mean[0]), float(var[0]))


def log_marginal_likelihood(model: GpModel) -> float:
    return float(-0.5 * model.y @ model.alpha
                 - np.sum(np.log(np.diag(model.chol)))
                 - 0.5 * model.n * math.log(2 * math.pi))


def fit_best(X, y, thetas=THETA_GRID, jitter: float = DEFAULT_JITTER) -> GpModel:
    """Fit one model per kernel width and keep the most likely one.

    Widths whose factorization fails outright are skipped; ties keep the
    earlier (narrower) width.
    """
    best, best_lml, last_err = None, -math.inf, None
    for theta in thetas:
        try:
            m = fit(X, y, theta, jitter)
        except GPModelError as exc:
            last_err = exc
            continue
        lml = log_marginal_likelihood(m)
        if best is None or lml > best_lml:
            best, best_lml = m, lml
    if best is None:
        raise last_err
    return best


def fit_profiled(X, y, thetas=THETA_GRID, jitter: float = DEFAULT_JITTER) -> tuple[GpModel, float]:
    """Select the width together with a maximum-likelihood signal amplitude.

    For each width the amplitude s^2 = y'K^-1 y / n has a closed form; the
    width maximizing the profiled likelihood wins. Returns the model fitted to
    ``y / s`` and ``s``, so ``s * mean`` is in the units of ``y``.
    """
    best, best_score, last_err = None, -math.inf, None
    for theta in thetas:
        try:
            m = fit(X, y, theta, jitter)
        except GPModelError as exc:
            last_err = exc
            continue
        s2 = float(m.y @ m.alpha) / m.n
        if s2 <= 1e-300:
            s2 = 1.0
        score = -0.5 * m.n * math.log(s2) - float(np.sum(np.log(np.diag(m.chol))))
        if best is None or score > best_score:
            best, best_score = (theta, math.sqrt(s2)), score
    if best is None:
        raise last_err
    theta, scale = best
    return fit(X, np.asarray(y, dtype=np.float64) / scale, theta, jitter), scale
