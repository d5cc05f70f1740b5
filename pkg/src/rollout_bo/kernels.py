"""Stationary covariance kernels with per-dimension (ARD) lengthscales.

All families are radial in the scaled distance r, where
r^2 = sum_j (x_j - x'_j)^2 / l_j^2:

    squared_exponential:  amp * exp(-r^2 / 2)
    matern52:             amp * (1 + sqrt(5) r + 5 r^2 / 3) * exp(-sqrt(5) r)
    matern32:             amp * (1 + sqrt(3) r) * exp(-sqrt(3) r)

`amp` is the signal variance, so K(x, x) == amp exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SQRT3 = np.sqrt(3.0)
SQRT5 = np.sqrt(5.0)

FAMILIES = ("squared_exponential", "matern52", "matern32")

_ALIASES = {
    "se": "squared_exponential",
    "rbf": "squared_exponential",
    "squared_exponential": "squared_exponential",
    "matern52": "matern52",
    "matern32": "matern32",
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters (ARD lengthscales, signal variance, noise variance)."""

    family: str
    lengthscales: np.ndarray
    amplitude: float = 1.0
    noise: float = 0.0

    def __post_init__(self):
        fam = _ALIASES.get(str(self.family).lower())
        if fam is None:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("lengthscales must be a 1-d vector of positive reals")
        if not (self.amplitude > 0 and np.isfinite(self.amplitude)):
            raise ValueError("amplitude must be positive and finite")
        if not (self.noise >= 0 and np.isfinite(self.noise)):
            raise ValueError("noise must be non-negative and finite")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "noise", float(self.noise))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def with_noise(self, noise: float) -> "KernelSpec":
        return replace(self, noise=noise)


def _profile(family: str, r2: np.ndarray) -> np.ndarray:
    """k(r)/amp as a function of the scaled squared distance r2."""
    if family == "squared_exponential":
        return np.exp(-0.5 * r2)
    r = np.sqrt(np.maximum(r2, 0.0))
    if family == "matern52":
        return (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-SQRT5 * r)
    if family == "matern32":
        return (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    raise ValueError(f"unknown kernel family {family!r}")


def _radial_coeff(family: str, r2: np.ndarray) -> np.ndarray:
    """-(dk/dr)/r / amp, finite as r -> 0 for every family.

    Used both for spatial gradients (dK/dx_j = -amp * coeff * diff_j / l_j^2)
    and lengthscale gradients (dK/dlog l_j = amp * coeff * diff_j^2 / l_j^2).
    """
    r = np.sqrt(np.maximum(r2, 0.0))
    if family == "squared_exponential":
        return np.exp(-0.5 * r2)
    if family == "matern52":
        return (5.0 / 3.0) * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
    if family == "matern32":
        return 3.0 * np.exp(-SQRT3 * r)
    raise ValueError(f"unknown kernel family {family!r}")


def scaled_sqdist(spec: KernelSpec, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Scaled squared distance r^2 with broadcasting over leading axes.

    x: (..., n, d), x2: (..., m, d) -> (..., n, m).
    """
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    diff = x[..., :, None, :] - x2[..., None, :, :]
    return np.sum((diff / spec.lengthscales) ** 2, axis=-1)


def kernel_eval(spec: KernelSpec, x: np.ndarray, x2: np.ndarray) -> float:
    """Covariance K(x, x2) between two points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != (spec.dim,) or x2.shape != (spec.dim,):
        raise ValueError(
            f"point dimension mismatch: kernel has d={spec.dim}, "
            f"got shapes {x.shape} and {x2.shape}"
        )
    r2 = np.sum(((x - x2) / spec.lengthscales) ** 2)
    return float(spec.amplitude * _profile(spec.family, r2))


def kernel_matrix(spec: KernelSpec, x: np.ndarray, x2: np.ndarray | None = None) -> np.ndarray:
    """Cross-covariance matrix; broadcasts over leading batch axes."""
    if x2 is None:
        x2 = x
    r2 = scaled_sqdist(spec, x, x2)
    return spec.amplitude * _profile(spec.family, r2)


def kernel_gradient_x(spec: KernelSpec, x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Gradient of K(x, points_i) with respect to x; returns (n, d)."""
    return kernel_gradient_batch(spec, np.asarray(x, dtype=float)[None, :], points)[0]


def kernel_gradient_batch(spec: KernelSpec, X: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Gradients of K(X_b, points_i) w.r.t. X_b for a batch; returns (B, n, d).

    points may also carry a leading batch axis (B, n, d) for per-row designs.
    """
    X = np.asarray(X, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.ndim == 2:
        diff = X[:, None, :] - points[None, :, :]
    else:
        diff = X[:, None, :] - points
    r2 = np.sum((diff / spec.lengthscales) ** 2, axis=-1)
    coeff = spec.amplitude * _radial_coeff(spec.family, r2)
    return -coeff[..., None] * diff / spec.lengthscales**2


def kernel_matrix_with_grads(spec: KernelSpec, x: np.ndarray):
    """Gram matrix plus its derivatives w.r.t. log-hyperparameters.

    Returns (K, dK_dlog_ls, dK_dlog_amp) where dK_dlog_ls is (d, n, n).
    The noise derivative is handled by the caller (it is just noise * I).
    """
    x = np.asarray(x, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    s = (diff / spec.lengthscales) ** 2  # (n, n, d): per-dimension scaled sq dists
    r2 = np.sum(s, axis=-1)
    K = spec.amplitude * _profile(spec.family, r2)
    coeff = spec.amplitude * _radial_coeff(spec.family, r2)
    dK_dlog_ls = coeff[None, :, :] * np.moveaxis(s, -1, 0)
    return K, dK_dlog_ls, K.copy()
