"""Box-constrained search domains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned box [lower, upper] in R^d."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("lower must be strictly below upper in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x: np.ndarray, atol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol)
        )

    def clip(self, x: np.ndarray) -> np.ndarray:
        """Project points onto the box (works on (d,) or (..., d) arrays)."""
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Map points in [0,1]^d onto the box."""
        return self.lower + np.asarray(u, dtype=float) * self.width


def unit_box(dim: int) -> BoxBounds:
    return BoxBounds(np.zeros(dim), np.ones(dim))


def latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified [0,1)^d sample: one point per axis-aligned slab, shuffled per dimension."""
    if n < 1:
        raise ValueError("latin hypercube needs n >= 1")
    u = (np.arange(n)[:, None] + rng.random((n, dim))) / n
    for j in range(dim):
        u[:, j] = u[rng.permutation(n), j]
    return u
