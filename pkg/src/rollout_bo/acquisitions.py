"""Myopic acquisition functions under a minimization convention.

Everything scores candidates so that larger is better while the objective
is being minimized: with m, s the posterior mean and standard deviation
and u = (y* - m)/s,

    EI  = (y* - m) Phi(u) + s phi(u)
    PI  = Phi(u)
    UCB = kappa * s - m          (exploration bonus against predicted value)
    KG  = min_G mean - E_y[min_G fantasy mean]   over a fixed Sobol grid G
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import ndtr

from .gp import Dataset, GPPosterior
from .kernels import kernel_matrix
from .variance_reduction import sobol_points

# 16-node Gauss-Hermite rule, reweighted so that for y ~ N(m, s^2):
# E[g(y)] ~= sum_i GH_WEIGHTS[i] * g(m + sqrt(2) * s * GH_NODES[i]).
GH_NODES, GH_WEIGHTS = np.polynomial.hermite.hermgauss(16)
GH_WEIGHTS = GH_WEIGHTS / np.sqrt(np.pi)
_KG_GRID_CAP = 4096
_TAGS = ("ei", "pi", "ucb", "kg")


def _npdf(z):
    # Standard normal density; ndtr supplies the cdf without scipy.stats call overhead.
    return np.exp(-(z**2) / 2.0) / np.sqrt(2 * np.pi)


@dataclass(frozen=True)
class Incumbent:
    """Best observed value so far (a minimum)."""

    y_star: float

    @classmethod
    def of(cls, data: Dataset) -> "Incumbent":
        return cls(float(np.min(data.y)))


@dataclass(frozen=True)
class AcquisitionKind:
    """Tagged acquisition family; kappa applies to UCB, grid to KG (0 = auto-size)."""

    tag: str
    kappa: float = 0.0
    grid: int = 0

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError(f"unknown acquisition {self.tag!r}; expected one of {_TAGS}")
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError("kappa must be finite and non-negative")
        if self.tag == "kg" and self.grid and self.grid < 4:
            raise ValueError("KG grid size must be at least 4")

    @classmethod
    def ei(cls) -> "AcquisitionKind":
        return cls("ei")

    @classmethod
    def pi(cls) -> "AcquisitionKind":
        return cls("pi")

    @classmethod
    def ucb(cls, kappa: float) -> "AcquisitionKind":
        return cls("ucb", kappa=float(kappa))

    @classmethod
    def kg(cls, grid: int = 0) -> "AcquisitionKind":
        return cls("kg", grid=int(grid))

    @property
    def label(self) -> str:
        if self.tag == "ucb":
            kappa = self.kappa
            text = f"{kappa:g}"
            return f"UCB-{text}"
        return self.tag.upper()


def ei_value(mean, var, y_star):
    """Expected improvement; the s = 0 limit is (y* - mean)^+."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    s = np.sqrt(np.maximum(var, 0.0))
    imp = y_star - mean
    out = np.maximum(imp, 0.0)
    pos = s > 0
    if np.any(pos):
        u = imp[pos] / s[pos]
        out[pos] = imp[pos] * ndtr(u) + s[pos] * _npdf(u)
    return out


def pi_value(mean, var, y_star):
    """Probability of improvement; the s = 0 limit is the indicator mean < y*."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    s = np.sqrt(np.maximum(var, 0.0))
    imp = y_star - mean
    out = (imp > 0).astype(float)
    pos = s > 0
    if np.any(pos):
        out[pos] = ndtr(imp[pos] / s[pos])
    return out


def ucb_value(mean, var, kappa):
    """Exploration score kappa * s - mean (maximizing it trades bonus against value)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    return kappa * np.sqrt(np.maximum(var, 0.0)) - mean


def ei_value_grad(mean, var, dmean, dvar, y_star):
    """EI and its spatial gradient from posterior value/gradient arrays."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    dmean = np.asarray(dmean, dtype=float)
    s = np.sqrt(np.maximum(var, 0.0))
    imp = y_star - mean
    val = np.maximum(imp, 0.0)
    grad = -dmean * (imp > 0)[..., None]
    pos = s > 0
    if np.any(pos):
        u = imp[pos] / s[pos]
        cdf, pdf = ndtr(u), _npdf(u)
        val[pos] = imp[pos] * cdf + s[pos] * pdf
        ds = np.asarray(dvar, dtype=float)[pos] / (2.0 * s[pos, None])
        grad[pos] = -cdf[:, None] * dmean[pos] + pdf[:, None] * ds
    return val, grad


def pi_value_grad(mean, var, dmean, dvar, y_star):
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    s = np.sqrt(np.maximum(var, 0.0))
    imp = y_star - mean
    val = (imp > 0).astype(float)
    grad = np.zeros_like(np.asarray(dmean, dtype=float))
    pos = s > 0
    if np.any(pos):
        u = imp[pos] / s[pos]
        val[pos] = ndtr(u)
        ds = np.asarray(dvar, dtype=float)[pos] / (2.0 * s[pos, None])
        du = -np.asarray(dmean, dtype=float)[pos] / s[pos, None] - (u / s[pos])[:, None] * ds
        grad[pos] = _npdf(u)[:, None] * du
    return val, grad


def ucb_value_grad(mean, var, dmean, dvar, kappa):
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    s = np.sqrt(np.maximum(var, 0.0))
    val = kappa * s - mean
    grad = -np.asarray(dmean, dtype=float).copy()
    pos = s > 0
    if np.any(pos) and kappa:
        grad[pos] += kappa * np.asarray(dvar, dtype=float)[pos] / (2.0 * s[pos, None])
    return val, grad


def acquisition_values(kind: AcquisitionKind, mean, var, y_star=None):
    """Dispatch EI/PI/UCB values on posterior summary arrays (KG has no closed form)."""
    if kind.tag == "ei":
        return ei_value(mean, var, y_star)
    if kind.tag == "pi":
        return pi_value(mean, var, y_star)
    if kind.tag == "ucb":
        return ucb_value(mean, var, kind.kappa)
    raise ValueError(f"no closed form for {kind.tag!r}")


def closed_form_value_grad(kind: AcquisitionKind, mean, var, dmean, dvar, y_star=None):
    """Dispatch EI/PI/UCB value-and-gradient on posterior summary arrays."""
    if kind.tag == "ei":
        return ei_value_grad(mean, var, dmean, dvar, y_star)
    if kind.tag == "pi":
        return pi_value_grad(mean, var, dmean, dvar, y_star)
    if kind.tag == "ucb":
        return ucb_value_grad(mean, var, dmean, dvar, kind.kappa)
    raise ValueError(f"no closed-form gradient for {kind.tag!r}")


def kg_grid(bounds, size: int = 0) -> np.ndarray:
    """Deterministic Sobol design the KG inner minimization runs over."""
    if size <= 0:
        size = min(30**bounds.dim, _KG_GRID_CAP)
    return bounds.from_unit(sobol_points(size, bounds.dim))


def _fantasy_mean_pieces(post: GPPosterior, G: np.ndarray, X: np.ndarray):
    """Posterior means plus the rank-one update ingredients for fantasies at X.

    Returns (mu_G, mean_X, denom, cov_GX) so a fantasy observation (x_j, y)
    moves the grid mean by cov_GX[:, j] * (y - mean_X[j]) / denom[j]. The
    prior mean is held fixed during this one-step update.
    """
    mu_G, _ = post.predict(G)
    mean_X, var_X = post.predict(X)
    if post.n:
        k_XD = kernel_matrix(post.spec, X, post.data.X)  # (B, n)
        W = cho_solve((post.L, True), k_XD.T)  # (n, B)
        cov_GX = kernel_matrix(post.spec, G, X) - kernel_matrix(post.spec, G, post.data.X) @ W
    else:
        cov_GX = kernel_matrix(post.spec, G, X)
    denom = var_X + post.spec.noise + post.jitter
    return mu_G, mean_X, var_X, denom, cov_GX


def kg_values(post: GPPosterior, X: np.ndarray, grid_size: int = 0) -> np.ndarray:
    """Knowledge gradient at each row of X over the module's fixed Sobol grid.

    The expectation over the fantasy observation y ~ N(m, s^2 + noise) uses
    16 Gauss-Hermite nodes; the fantasy posterior mean is the rank-one
    update with the prior mean held fixed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    G = kg_grid(post.data.bounds, grid_size)
    mu_G, mean_X, var_X, denom, cov_GX = _fantasy_mean_pieces(post, G, X)
    current_min = float(np.min(mu_G))
    s_obs = np.sqrt(np.maximum(var_X, 0.0) + post.spec.noise)
    out = np.empty(X.shape[0])
    for j in range(X.shape[0]):
        shifts = np.sqrt(2.0) * s_obs[j] * GH_NODES  # y - mean at the GH nodes
        fantasy = mu_G[:, None] + np.outer(cov_GX[:, j] / denom[j], shifts)
        out[j] = current_min - GH_WEIGHTS @ fantasy.min(axis=0)
    return out


def maximize_kg(post: GPPosterior, kind: AcquisitionKind) -> tuple[np.ndarray, float]:
    """Grid-search argmax of KG over its own Sobol grid; lowest index wins ties."""
    G = kg_grid(post.data.bounds, kind.grid)
    values = kg_values(post, G, kind.grid)
    j = int(np.argmax(values))
    return G[j].copy(), float(values[j])


def eval_acquisition(
    kind: AcquisitionKind, post: GPPosterior, x: np.ndarray, inc: Incumbent | None = None
) -> float:
    """Score a single candidate; EI/PI need the incumbent, UCB/KG ignore it."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if kind.tag == "kg":
        return float(kg_values(post, x[None, :], kind.grid)[0])
    mean, var = post.predict(x[None, :])
    if kind.tag == "ei":
        return float(ei_value(mean, var, inc.y_star)[0])
    if kind.tag == "pi":
        return float(pi_value(mean, var, inc.y_star)[0])
    return float(ucb_value(mean, var, kind.kappa)[0])


def acquisition_gradient(
    kind: AcquisitionKind, post: GPPosterior, x: np.ndarray, inc: Incumbent | None = None
) -> np.ndarray:
    """Spatial gradient of the acquisition; analytic except KG (central differences)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if kind.tag == "kg":
        step = 1e-5 * post.data.bounds.width
        grad = np.empty(x.size)
        for j in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[j] += step[j]
            xm[j] -= step[j]
            pair = np.vstack([xp, xm])
            vals = kg_values(post, pair, kind.grid)
            grad[j] = (vals[0] - vals[1]) / (2.0 * step[j])
        return grad
    mean, var, dmean, dvar = post.predict_with_grad_batch(x[None, :])
    y_star = inc.y_star if inc is not None else None
    _, grad = closed_form_value_grad(kind, mean, var, dmean, dvar, y_star)
    return grad[0]
