"""Gaussian process regression with a constant prior mean.

The posterior is held behind a Cholesky factor of A = K + noise * I.
Conditioning failures walk a jitter ladder from 1e-10 * amplitude up to
1e-4 * amplitude before giving up with NumericalError.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .domain import BoxBounds, latin_hypercube
from .kernels import KernelSpec, kernel_gradient_batch, kernel_matrix, kernel_matrix_with_grads

_JITTER_START = 1e-10
_JITTER_STOP = 1e-4
LOG_2PI = np.log(2.0 * np.pi)


class NumericalError(RuntimeError):
    """Linear algebra or optimization failed beyond recovery."""


@dataclass(frozen=True)
class Dataset:
    """Evaluated points with their objective values, tied to a search box."""

    X: np.ndarray
    y: np.ndarray
    bounds: BoxBounds

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if X.size == 0:
            X = X.reshape(0, self.bounds.dim)
            y = y.reshape(0)
        if X.ndim != 2 or X.shape[1] != self.bounds.dim:
            raise ValueError(f"X must be (n, {self.bounds.dim}), got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y must be ({X.shape[0]},), got {y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def append(self, x: np.ndarray, y: float) -> "Dataset":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        X = np.vstack([self.X, x[None, :]]) if self.n else x[None, :]
        return Dataset(X, np.append(self.y, float(y)), self.bounds)

    def incumbent(self) -> tuple[np.ndarray, float]:
        """Best observed point; ties resolve to the lowest index."""
        if self.n == 0:
            raise ValueError("incumbent of an empty dataset")
        i = int(np.argmin(self.y))
        return self.X[i].copy(), float(self.y[i])


def _chol_with_jitter(A: np.ndarray, amplitude: float) -> tuple[np.ndarray, float]:
    jitter = _JITTER_START * amplitude
    eye = np.eye(A.shape[0])
    while jitter <= _JITTER_STOP * amplitude * (1 + 1e-12):
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        f"Cholesky failed for n={A.shape[0]} even at jitter {_JITTER_STOP * amplitude:.3e}"
    )


@dataclass(frozen=True)
class GPPosterior:
    """Immutable GP posterior; build with `posterior` and extend with `fantasy_update`."""

    data: Dataset
    spec: KernelSpec
    prior_mean: float
    mean_fitted: bool
    L: np.ndarray
    alpha: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.data.n

    def predict(self, X: np.ndarray, include_noise: bool = False):
        """Posterior mean and variance at query points; X is (m, d) or (d,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.spec.dim:
            raise ValueError(f"query dimension {X.shape[1]} != kernel dimension {self.spec.dim}")
        if self.n == 0:
            mean = np.full(X.shape[0], self.prior_mean)
            var = np.full(X.shape[0], self.spec.amplitude)
        else:
            k = kernel_matrix(self.spec, X, self.data.X)  # (m, n)
            mean = self.prior_mean + k @ self.alpha
            v = solve_triangular(self.L, k.T, lower=True)  # (n, m)
            var = self.spec.amplitude - np.sum(v * v, axis=0)
            var = np.maximum(var, 0.0)
        if include_noise:
            var = var + self.spec.noise
        return mean, var

    def predict_with_grad(self, x: np.ndarray):
        """Mean, variance, and their gradients at a single point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        mean, var, dmean, dvar = self.predict_with_grad_batch(x[None, :])
        return float(mean[0]), float(var[0]), dmean[0], dvar[0]

    def predict_with_grad_batch(self, X: np.ndarray):
        """Vectorized predict_with_grad over rows of X; returns (B,), (B,), (B,d), (B,d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B, d = X.shape
        if self.n == 0:
            return (
                np.full(B, self.prior_mean),
                np.full(B, self.spec.amplitude),
                np.zeros((B, d)),
                np.zeros((B, d)),
            )
        k = kernel_matrix(self.spec, X, self.data.X)  # (B, n)
        dk = kernel_gradient_batch(self.spec, X, self.data.X)  # (B, n, d)
        mean = self.prior_mean + k @ self.alpha
        W = cho_solve((self.L, True), k.T)  # (n, B) = A^{-1} k
        var = np.maximum(self.spec.amplitude - np.sum(k.T * W, axis=0), 0.0)
        dmean = np.einsum("bnd,n->bd", dk, self.alpha)
        dvar = -2.0 * np.einsum("bnd,nb->bd", dk, W)
        return mean, var, dmean, dvar

    def sample_noiseless(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Scale-and-shift draws mean + sqrt(var) * Z from the latent posterior."""
        mean, var = self.predict(X)
        return mean + np.sqrt(var) * np.asarray(Z, dtype=float)

    def fantasy_update(self, x: np.ndarray, y: float) -> "GPPosterior":
        """Condition on one more observation, extending the Cholesky factor in place.

        Falls back to a full refactorization when the rank-one extension loses
        positive definiteness.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        data = self.data.append(x, y)
        explicit_mean = None if self.mean_fitted else self.prior_mean
        if self.n == 0:
            return posterior(data, self.spec, prior_mean=explicit_mean)
        b = kernel_matrix(self.spec, x[None, :], self.data.X)[0]
        diag = self.spec.amplitude + self.spec.noise + self.jitter
        l12 = solve_triangular(self.L, b, lower=True)
        l22_sq = diag - l12 @ l12
        if l22_sq <= 1e-12 * self.spec.amplitude:
            return posterior(data, self.spec, prior_mean=explicit_mean)
        n = self.n
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.L
        L[n, :n] = l12
        L[n, n] = np.sqrt(l22_sq)
        prior_mean = float(np.mean(data.y)) if self.mean_fitted else self.prior_mean
        alpha = cho_solve((L, True), data.y - prior_mean)
        return GPPosterior(data, self.spec, prior_mean, self.mean_fitted, L, alpha, self.jitter)


def posterior(data: Dataset, spec: KernelSpec, prior_mean: float | None = None) -> GPPosterior:
    """Condition a GP prior on a dataset.

    With prior_mean=None the constant mean is set to the sample mean of y
    (and tracks it through fantasy updates); passing a float pins it.
    """
    if spec.dim != data.dim:
        raise ValueError(f"kernel dimension {spec.dim} != data dimension {data.dim}")
    mean_fitted = prior_mean is None
    if data.n == 0:
        if mean_fitted:
            raise ValueError("an empty dataset needs an explicit prior mean")
        L = np.zeros((0, 0))
        return GPPosterior(data, spec, float(prior_mean), False, L, np.zeros(0), 0.0)
    m = float(np.mean(data.y)) if mean_fitted else float(prior_mean)
    A = kernel_matrix(spec, data.X) + spec.noise * np.eye(data.n)
    L, jitter = _chol_with_jitter(A, spec.amplitude)
    alpha = cho_solve((L, True), data.y - m)
    return GPPosterior(data, spec, m, mean_fitted, L, alpha, jitter)


def log_marginal_likelihood(
    data: Dataset, spec: KernelSpec, prior_mean: float | None = None
) -> tuple[float, np.ndarray]:
    """Log evidence and its gradient w.r.t. (log l_1..d, log amplitude, log noise)."""
    m = float(np.mean(data.y)) if prior_mean is None else float(prior_mean)
    K, dK_ls, dK_amp = kernel_matrix_with_grads(spec, data.X)
    A = K + spec.noise * np.eye(data.n)
    L, jitter = _chol_with_jitter(A, spec.amplitude)
    r = data.y - m
    alpha = cho_solve((L, True), r)
    value = -0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * data.n * LOG_2PI
    A_inv = cho_solve((L, True), np.eye(data.n))
    grad = np.empty(spec.dim + 2)

    def trace_term(dA):
        return 0.5 * (alpha @ dA @ alpha - np.sum(A_inv * dA))

    for j in range(spec.dim):
        grad[j] = trace_term(dK_ls[j])
    grad[spec.dim] = trace_term(dK_amp)
    grad[spec.dim + 1] = 0.5 * spec.noise * (alpha @ alpha - np.trace(A_inv))
    return float(value), grad


def fit_hyperparameters(
    data: Dataset,
    family: str = "matern52",
    n_starts: int = 8,
    seed: int = 0,
    prior_mean: float | None = None,
) -> KernelSpec:
    """Type-II MLE over log-hyperparameters from Latin-hypercube restarts.

    Search ranges: lengthscales in [1e-2, 1e1] * box width per dimension,
    amplitude in [1e-3, 1e3] * var(y), noise in [1e-8, 1e-1] * var(y).
    """
    if data.n < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    width = data.bounds.width
    vy = max(float(np.var(data.y)), 1e-12)
    lo = np.concatenate([np.log(1e-2 * width), [np.log(1e-3 * vy), np.log(1e-8 * vy)]])
    hi = np.concatenate([np.log(1e1 * width), [np.log(1e3 * vy), np.log(1e-1 * vy)]])
    d = data.dim

    def objective(theta):
        spec = KernelSpec(
            family,
            lengthscales=np.exp(theta[:d]),
            amplitude=float(np.exp(theta[d])),
            noise=float(np.exp(theta[d + 1])),
        )
        try:
            value, grad = log_marginal_likelihood(data, spec, prior_mean)
        except NumericalError:
            return 1e25, np.zeros_like(theta)
        return -value, -grad

    rng = np.random.default_rng(seed)
    starts = lo + latin_hypercube(n_starts, d + 2, rng) * (hi - lo)
    best_val, best_theta = np.inf, None
    for theta0 in starts:
        res = minimize(
            objective, theta0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi))
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = float(res.fun), res.x
    if best_theta is None:
        raise NumericalError("all hyperparameter fits failed")
    return KernelSpec(
        family,
        lengthscales=np.exp(best_theta[:d]),
        amplitude=float(np.exp(best_theta[d])),
        noise=float(np.exp(best_theta[d + 1])),
    )
