"""Monte Carlo rollout of a base acquisition policy over a short horizon.

A trajectory starts by fantasizing an observation at the candidate, then
repeatedly maximizes the base policy on the updated posterior and
fantasizes there, for `horizon` steps in total. The payoff of a step is
the one-sided improvement over the running incumbent, so the horizon-1
expectation is exactly EI. All trajectories for one candidate run in
lockstep as a batch; common random numbers across candidates come from
reusing one ZMatrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .acquisitions import (
    GH_NODES,
    GH_WEIGHTS,
    AcquisitionKind,
    Incumbent,
    acquisition_values,
    closed_form_value_grad,
    kg_grid,
)
from .domain import latin_hypercube
from .gp import GPPosterior, NumericalError, _chol_with_jitter
from .kernels import kernel_gradient_batch, kernel_matrix
from .optim import projected_ascent
from .variance_reduction import VRConfig, ZMatrix, cv_combine, first_step_covariates

MAX_HORIZON = 10
# KG as a base policy searches this reduced Sobol grid inside trajectories
# (the full 30^d grid would dominate the rollout cost); kind.grid overrides.
_KG_BASE_GRID = 64
_KG_ROW_CHUNK = 32


@dataclass(frozen=True)
class RolloutConfig:
    """Settings for rollout estimation of a candidate's multi-step value.

    `horizon` counts fantasy steps including the candidate itself;
    `n_samples` is the number of Monte Carlo trajectories. Steps after the
    first query the argmax of `base_policy` on the current fantasy
    posterior, found by multistart ascent with `inner_restarts` starts
    drawn from a seed that depends only on (`argmax_seed`, step), so the
    inner designs are shared across candidates and samples. `ascent_iters`
    caps each inner ascent sweep; the default matches the outer optimizer,
    and desk-scale studies may lower it to trade argmax precision for time.
    """

    horizon: int
    n_samples: int
    base_policy: AcquisitionKind = AcquisitionKind.ei()
    vr: VRConfig = VRConfig()
    inner_restarts: int = 3
    argmax_seed: int = 0
    ascent_iters: int = 200

    def __post_init__(self):
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise ValueError(f"horizon must be in 1..{MAX_HORIZON}, got {self.horizon}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.inner_restarts < 1:
            raise ValueError("inner_restarts must be at least 1")
        if self.argmax_seed < 0:
            raise ValueError("argmax_seed must be non-negative")
        if self.ascent_iters < 1:
            raise ValueError("ascent_iters must be at least 1")


@dataclass(frozen=True)
class TrajectoryStep:
    """One fantasy step: the point queried, the draw, and its payoff."""

    x: np.ndarray
    y: float
    y_star_before: float
    reward: float


@dataclass(frozen=True)
class TrajectoryRecord:
    steps: tuple[TrajectoryStep, ...]
    total_reward: float


@dataclass(frozen=True)
class RolloutEstimate:
    """Monte Carlo estimate of the rollout value with its standard error."""

    mean: float
    std_error: float
    n_used: int
    per_sample: np.ndarray


def _step_seed(argmax_seed: int, step: int) -> int:
    """Per-step design seed; independent of the candidate and the sample."""
    return int(np.random.SeedSequence([argmax_seed, step]).generate_state(1)[0])


class _FantasyBatch:
    """Fantasy posteriors for every trajectory, grown in lockstep.

    Per row: the design X, values y, and the explicit inverse Cholesky
    factor of A = K + (noise + jitter) I, extended one observation at a
    time. Keeping the inverse factor makes every per-step operation a
    batched matmul; a row that loses positive definiteness under the
    rank-one extension falls back to a full refactorization.
    """

    def __init__(self, post: GPPosterior, n_rows: int):
        if post.n == 0:
            raise ValueError("rollout needs at least one observation for the incumbent")
        self.spec = post.spec
        self.bounds = post.data.bounds
        self.mean_fitted = post.mean_fitted
        self.jitter = post.jitter
        L_inv = solve_triangular(post.L, np.eye(post.n), lower=True)
        self.X = np.repeat(post.data.X[None], n_rows, axis=0)
        self.y = np.repeat(post.data.y[None], n_rows, axis=0)
        self.L_inv = np.repeat(L_inv[None], n_rows, axis=0)
        self.prior = np.full(n_rows, post.prior_mean)
        self.alpha = np.repeat(post.alpha[None], n_rows, axis=0)
        self.y_star = np.full(n_rows, float(np.min(post.data.y)))

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    def _state(self, rows):
        if rows is None:
            return self.X, self.L_inv, self.alpha, self.prior
        return self.X[rows], self.L_inv[rows], self.alpha[rows], self.prior[rows]

    def predict(self, Xq: np.ndarray, rows=None):
        """Mean and variance at one candidate per row; Xq is (B, d)."""
        X, L_inv, alpha, prior = self._state(rows)
        k = kernel_matrix(self.spec, Xq[:, None, :], X)[:, 0, :]  # (B, n)
        v = np.einsum("bij,bj->bi", L_inv, k)
        var = np.maximum(self.spec.amplitude - np.einsum("bi,bi->b", v, v), 0.0)
        return prior + np.einsum("bi,bi->b", k, alpha), var

    def predict_design(self, design: np.ndarray):
        """Every row's posterior on a shared (m, d) design; returns (B, m) pairs."""
        k = kernel_matrix(self.spec, design[None], self.X)  # (B, m, n)
        v = np.einsum("bij,bmj->bmi", self.L_inv, k)
        var = np.maximum(self.spec.amplitude - np.sum(v * v, axis=-1), 0.0)
        return self.prior[:, None] + np.einsum("bmn,bn->bm", k, self.alpha), var

    def predict_with_grad(self, Xq: np.ndarray, rows):
        X, L_inv, alpha, prior = self._state(rows)
        k = kernel_matrix(self.spec, Xq[:, None, :], X)[:, 0, :]
        dk = kernel_gradient_batch(self.spec, Xq, X)  # (B, n, d)
        v = np.einsum("bij,bj->bi", L_inv, k)
        w = np.einsum("bji,bj->bi", L_inv, v)  # A^{-1} k
        var = np.maximum(self.spec.amplitude - np.einsum("bi,bi->b", v, v), 0.0)
        mean = prior + np.einsum("bi,bi->b", k, alpha)
        dmean = np.einsum("bnd,bn->bd", dk, alpha)
        dvar = -2.0 * np.einsum("bnd,bn->bd", dk, w)
        return mean, var, dmean, dvar

    def extend(self, Xq: np.ndarray, y_new: np.ndarray) -> None:
        """Condition every row on one more (x, y) pair."""
        B, n = self.y.shape
        amp = self.spec.amplitude
        k = kernel_matrix(self.spec, Xq[:, None, :], self.X)[:, 0, :]
        l12 = np.einsum("bij,bj->bi", self.L_inv, k)
        l22_sq = amp + self.spec.noise + self.jitter - np.einsum("bi,bi->b", l12, l12)
        bad = l22_sq <= 1e-12 * amp
        l22 = np.sqrt(np.where(bad, 1.0, l22_sq))
        L_inv = np.zeros((B, n + 1, n + 1))
        L_inv[:, :n, :n] = self.L_inv
        L_inv[:, n, :n] = -np.einsum("bj,bji->bi", l12, self.L_inv) / l22[:, None]
        L_inv[:, n, n] = 1.0 / l22
        self.X = np.concatenate([self.X, Xq[:, None, :]], axis=1)
        self.y = np.concatenate([self.y, y_new[:, None]], axis=1)
        self.L_inv = L_inv
        if np.any(bad):
            self._refactor(np.flatnonzero(bad))
        if self.mean_fitted:
            self.prior = self.y.mean(axis=1)
        r = self.y - self.prior[:, None]
        t = np.einsum("bij,bj->bi", self.L_inv, r)
        self.alpha = np.einsum("bji,bj->bi", self.L_inv, t)
        self.y_star = np.minimum(self.y_star, y_new)

    def _refactor(self, rows: np.ndarray) -> None:
        eye = np.eye(self.y.shape[1])
        for b in rows:
            A = kernel_matrix(self.spec, self.X[b]) + self.spec.noise * eye
            L, _ = _chol_with_jitter(A, self.spec.amplitude)
            self.L_inv[b] = solve_triangular(L, eye, lower=True)


def _argmax_closed_form(engine: _FantasyBatch, cfg: RolloutConfig, step: int) -> np.ndarray:
    """Per-row multistart ascent of the base policy, mirroring maximize_cheap."""
    bounds = engine.bounds
    d = bounds.dim
    kind = cfg.base_policy
    rng = np.random.default_rng(_step_seed(cfg.argmax_seed, step))
    design = bounds.from_unit(latin_hypercube(10 * d, d, rng))
    mean, var = engine.predict_design(design)
    vals = acquisition_values(kind, mean, var, engine.y_star[:, None])
    finite = np.isfinite(vals)
    n_ok = finite.sum(axis=1)
    if np.any(n_ok == 0):
        raise NumericalError(f"base-policy argmax failed at rollout step {step}")
    order = np.argsort(-np.where(finite, vals, -np.inf), axis=1, kind="stable")
    R = min(cfg.inner_restarts, design.shape[0])
    col = np.arange(R)[None, :]
    keep = np.where(col < n_ok[:, None], order[:, :R], order[:, :1])  # pad short rows
    starts = design[keep].reshape(-1, d)
    B = engine.n_rows
    row_of = np.repeat(np.arange(B), R)

    def value_grad(Xc, rows):
        er = row_of[rows]
        m, v, dm, dv = engine.predict_with_grad(Xc, er)
        return closed_form_value_grad(kind, m, v, dm, dv, engine.y_star[er])

    Xf, Ff, _ = projected_ascent(value_grad, starts, bounds, max_iter=cfg.ascent_iters)
    best = np.argmax(Ff.reshape(B, R), axis=1)
    return Xf.reshape(B, R, d)[np.arange(B), best]


def _argmax_kg(engine: _FantasyBatch, cfg: RolloutConfig) -> np.ndarray:
    """Per-row KG grid argmax, chunked to bound the (rows x grid x grid) tensor."""
    kind = cfg.base_policy
    G = kg_grid(engine.bounds, kind.grid if kind.grid else _KG_BASE_GRID)
    K_GG = kernel_matrix(engine.spec, G)
    amp, noise = engine.spec.amplitude, engine.spec.noise
    out = np.empty((engine.n_rows, engine.bounds.dim))
    for lo in range(0, engine.n_rows, _KG_ROW_CHUNK):
        rows = slice(lo, min(lo + _KG_ROW_CHUNK, engine.n_rows))
        X, L_inv, alpha, prior = engine._state(rows)
        k = kernel_matrix(engine.spec, G[None], X)  # (C, g, n)
        v = np.einsum("cij,cgj->cgi", L_inv, k)
        mu = prior[:, None] + np.einsum("cgn,cn->cg", k, alpha)
        var = np.maximum(amp - np.sum(v * v, axis=-1), 0.0)
        cov = K_GG[None] - np.einsum("cgi,chi->cgh", v, v)  # posterior covariance on G
        denom = var + noise + engine.jitter
        scale = np.sqrt(2.0 * (var + noise))[:, :, None] * GH_NODES / denom[:, :, None]
        fant = mu[:, None, :, None] + cov.transpose(0, 2, 1)[:, :, :, None] * scale[:, :, None, :]
        kg = mu.min(axis=1)[:, None] - fant.min(axis=2) @ GH_WEIGHTS
        out[rows] = G[np.argmax(kg, axis=1)]
    return out


def _inner_argmax(engine: _FantasyBatch, cfg: RolloutConfig, step: int) -> np.ndarray:
    if cfg.base_policy.tag == "kg":
        return _argmax_kg(engine, cfg)
    return _argmax_closed_form(engine, cfg, step)


def _run_batch(post: GPPosterior, x_first, Z: np.ndarray, cfg: RolloutConfig, record=False):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != cfg.horizon:
        raise ValueError(f"z matrix has horizon {Z.shape[1]}, config says {cfg.horizon}")
    x_first = np.atleast_1d(np.asarray(x_first, dtype=float))
    if not post.data.bounds.contains(x_first):
        raise ValueError("candidate lies outside the search box")
    engine = _FantasyBatch(post, Z.shape[0])
    totals = np.zeros(Z.shape[0])
    steps: list[TrajectoryStep] = []
    Xq = np.repeat(x_first[None], Z.shape[0], axis=0)
    for t in range(cfg.horizon):
        if t > 0:
            Xq = _inner_argmax(engine, cfg, t)
        mean, var = engine.predict(Xq)
        y_t = mean + np.sqrt(var) * Z[:, t]
        reward = np.maximum(engine.y_star - y_t, 0.0)
        if record:
            steps.append(
                TrajectoryStep(
                    Xq[0].copy(), float(y_t[0]), float(engine.y_star[0]), float(reward[0])
                )
            )
        totals += reward
        engine.extend(Xq, y_t)
    return totals, steps


def simulate_trajectory(
    post: GPPosterior, x_first: np.ndarray, z_row: np.ndarray, cfg: RolloutConfig
) -> TrajectoryRecord:
    """Play out one fantasy trajectory starting at x_first.

    Step 1 draws at x_first with z_row[0]; each later step maximizes the
    base policy on the current fantasy posterior, draws with the next z,
    and conditions on the fantasy pair (the kernel is never refit).
    Rewards are one-sided improvements over the running incumbent, so
    total_reward telescopes to the overall incumbent drop.
    """
    z_row = np.atleast_1d(np.asarray(z_row, dtype=float))
    totals, steps = _run_batch(post, x_first, z_row[None, :], cfg, record=True)
    return TrajectoryRecord(steps=tuple(steps), total_reward=float(totals[0]))


def rollout_acquisition(
    post: GPPosterior, x: np.ndarray, cfg: RolloutConfig, zmat: ZMatrix
) -> RolloutEstimate:
    """Estimate the rollout value of candidate x from the rows of zmat.

    Reusing one zmat across candidates yields common random numbers. The
    per-sample total rewards feed the control-variate combiner configured
    in cfg.vr; estimated coefficients need at least 4 samples, otherwise
    the plain mean is reported. Fewer than 2 samples cannot support a
    standard error, which is then +inf.
    """
    if zmat.horizon != cfg.horizon:
        raise ValueError(f"z matrix horizon {zmat.horizon} != config horizon {cfg.horizon}")
    totals, _ = _run_batch(post, x, zmat.Z, cfg)
    n = totals.size
    if n < 2:
        return RolloutEstimate(float(totals.mean()), float("inf"), n, totals)
    kinds = cfg.vr.covariates
    estimating = isinstance(cfg.vr.beta_mode, str)
    if kinds and (n >= 4 or not estimating):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        G, known = first_step_covariates(post, x_arr, Incumbent.of(post.data), zmat.Z[:, 0], kinds)
        mean, se, _ = cv_combine(totals, G, known, cfg.vr.beta_mode)
    else:
        mean, se, _ = cv_combine(totals, np.zeros((n, 0)), np.zeros(0))
    return RolloutEstimate(mean, se, n, totals)
