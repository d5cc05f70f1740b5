"""Bound-constrained maximization of acquisition functions.

Two regimes: cheap acquisitions (closed forms with gradients) get a
multistart projected ascent seeded from a Latin hypercube; expensive
rollout acquisitions get a small inner BO loop over a fixed surrogate.

Evaluators passed to these routines must be vectorized: f maps an (n, d)
batch of rows to an (n,) vector and grad to an (n, d) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisitions import Incumbent, ei_value, ei_value_grad
from .domain import BoxBounds, latin_hypercube
from .gp import Dataset, posterior
from .kernels import KernelSpec
from .variance_reduction import sobol_points

_ASCENT_TOL = 1e-8
_ASCENT_MAX_ITER = 200
_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class OptResult:
    """Outcome of a bound-constrained maximization."""

    x_best: np.ndarray
    f_best: float
    evals: int
    starts: tuple


def projected_ascent(
    value_grad,
    X0: np.ndarray,
    bounds: BoxBounds,
    tol: float = _ASCENT_TOL,
    max_iter: int = _ASCENT_MAX_ITER,
):
    """Monotone projected ascent on a batch of independent problem rows.

    value_grad(X, rows) must return (values (m,), gradients (m, d)) for the
    problem instances named by `rows`; each row of X0 is optimized
    independently (Barzilai-Borwein steps with Armijo backtracking).
    Terminates a row when the unit-step projected gradient has infinity
    norm <= tol, when backtracking cannot make progress, or after
    max_iter iterations. Returns (X, F, evals).
    """
    X = bounds.clip(np.atleast_2d(np.asarray(X0, dtype=float)))
    B = X.shape[0]
    all_rows = np.arange(B)
    F, G = value_grad(X, all_rows)
    F = np.asarray(F, dtype=float).copy()
    G = np.asarray(G, dtype=float).copy()
    evals = B
    wmin = float(np.min(bounds.width))
    gmax = np.max(np.abs(G), axis=1)
    alpha = 0.1 * wmin / np.maximum(gmax, 1e-12)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        pg = bounds.clip(X + G) - X
        active &= np.max(np.abs(pg), axis=1) > tol
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        Xa, Fa, Ga = X[rows], F[rows], G[rows]
        step = alpha[rows]
        cand = bounds.clip(Xa + step[:, None] * Ga)
        Fc, Gc = value_grad(cand, rows)
        Fc = np.asarray(Fc, dtype=float).copy()
        Gc = np.asarray(Gc, dtype=float).copy()
        evals += rows.size
        gain = np.sum(Ga * (cand - Xa), axis=1)
        ok = Fc >= Fa + _ARMIJO_C * gain
        ok &= np.isfinite(Fc)
        for _ in range(_MAX_BACKTRACKS):
            bad = np.flatnonzero(~ok)
            if bad.size == 0:
                break
            step[bad] *= 0.5
            cand[bad] = bounds.clip(Xa[bad] + step[bad, None] * Ga[bad])
            Fb, Gb = value_grad(cand[bad], rows[bad])
            evals += bad.size
            Fc[bad] = Fb
            Gc[bad] = Gb
            gain[bad] = np.sum(Ga[bad] * (cand[bad] - Xa[bad]), axis=1)
            ok[bad] = np.isfinite(Fc[bad]) & (Fc[bad] >= Fa[bad] + _ARMIJO_C * gain[bad])
            # A fully stalled step (candidate == current point) cannot improve.
            ok[bad] |= np.all(cand[bad] == Xa[bad], axis=1)
        moved = ok & np.any(cand != Xa, axis=1) & (Fc >= Fa)
        stuck = rows[~moved]
        active[stuck] = False
        adv = rows[moved]
        if adv.size:
            dx = cand[moved] - X[adv]
            dg = Gc[moved] - G[adv]
            denom = np.abs(np.sum(dx * dg, axis=1))
            bb = np.where(denom > 0, np.sum(dx * dx, axis=1) / np.maximum(denom, 1e-300), step[moved])
            alpha[adv] = np.clip(bb, 1e-14 * wmin, 1e6)
            X[adv] = cand[moved]
            F[adv] = Fc[moved]
            G[adv] = Gc[moved]
    return X, F, evals


def maximize_cheap(
    f,
    grad,
    bounds: BoxBounds,
    restarts: int = 5,
    seed: int = 0,
    design_size: int | None = None,
) -> OptResult:
    """Multistart maximization of a cheap vectorized acquisition.

    Scores a Latin hypercube of 10d points, runs projected ascent from the
    best `restarts` of them, and returns the overall best. A start with a
    non-finite value is discarded; if every design point is non-finite the
    function is rejected as invalid. With grad=None, gradients fall back
    to central differences with step 1e-6 * width.
    """
    d = bounds.dim
    rng = np.random.default_rng(seed)
    n_design = design_size if design_size is not None else 10 * d
    design = bounds.from_unit(latin_hypercube(n_design, d, rng))
    design_vals = np.asarray(f(design), dtype=float)
    evals = n_design
    finite = np.isfinite(design_vals)
    if not np.any(finite):
        raise ValueError("invalid function: no finite values on the initial design")
    order = np.argsort(-np.where(finite, design_vals, -np.inf), kind="stable")
    keep = order[: min(restarts, int(finite.sum()))]
    starts = design[keep]

    if grad is None:
        step = 1e-6 * bounds.width

        def fd_grad(X):
            out = np.empty_like(X)
            for j in range(d):
                e = np.zeros(d)
                e[j] = step[j]
                out[:, j] = (f(X + e) - f(X - e)) / (2 * step[j])
            return out

        grad_fn = fd_grad
    else:
        grad_fn = grad

    def value_grad(X, rows):
        return np.asarray(f(X), dtype=float), np.asarray(grad_fn(X), dtype=float)

    Xf, Ff, ascent_evals = projected_ascent(value_grad, starts, bounds)
    evals += ascent_evals
    j = int(np.argmax(Ff))
    return OptResult(
        x_best=Xf[j].copy(),
        f_best=float(Ff[j]),
        evals=evals,
        starts=tuple((starts[i].copy(), float(Ff[i])) for i in range(len(keep))),
    )


def maximize_expensive(f, bounds: BoxBounds, seed: int = 0, extra_starts=()) -> OptResult:
    """Inner-BO maximization for evaluators too costly for multistart ascent.

    Scores a Sobol design of 10d points plus the supplied extra starts,
    fits a fixed-kernel GP surrogate to the scores (SE, lengthscale
    0.1 * width, no refit), and spends 50d further evaluations at the
    surrogate's EI argmax. Returns the best point actually evaluated;
    total evaluations are exactly 10d + len(extra_starts) + 50d.
    """
    d = bounds.dim
    design = [row for row in bounds.from_unit(sobol_points(10 * d, d))]
    design += [np.atleast_1d(np.asarray(x, dtype=float)) for x in extra_starts]
    X_all, y_all = [], []
    evals = 0
    for x in design:
        val = float(np.asarray(f(x[None, :])).reshape(-1)[0])
        evals += 1
        if np.isfinite(val):
            X_all.append(x)
            y_all.append(val)
    if not X_all:
        raise ValueError("invalid function: no finite values on the initial design")
    spread = float(np.var(y_all))
    spec = KernelSpec(
        "squared_exponential",
        lengthscales=0.1 * bounds.width,
        amplitude=max(spread, 1e-12),
        noise=1e-6 * max(spread, 1e-12),
    )
    for it in range(50 * d):
        data = Dataset(np.array(X_all), -np.array(y_all), bounds)  # surrogate minimizes -f
        surrogate = posterior(data, spec)
        inc = Incumbent.of(data)

        def ei_f(X):
            mean, var = surrogate.predict(X)
            return ei_value(mean, var, inc.y_star)

        def ei_fg(X):
            mean, var, dmean, dvar = surrogate.predict_with_grad_batch(X)
            _, g = ei_value_grad(mean, var, dmean, dvar, inc.y_star)
            return g

        res = maximize_cheap(ei_f, ei_fg, bounds, restarts=3, seed=seed + 1 + it)
        val = float(np.asarray(f(res.x_best[None, :])).reshape(-1)[0])
        evals += 1
        if np.isfinite(val):
            X_all.append(res.x_best)
            y_all.append(val)
    j = int(np.argmax(y_all))
    return OptResult(
        x_best=np.array(X_all[j]),
        f_best=float(y_all[j]),
        evals=evals,
        starts=tuple((np.array(x), float(v)) for x, v in zip(X_all, y_all)),
    )
