"""Synthetic benchmark objectives plus lazily sampled GP objectives.

Standard literature definitions throughout: Branin on [-5,10]x[0,15],
Ackley (a=20, b=0.2, c=2pi) on [-5,5]^d, Rastrigin (A=10) on
[-5.12,5.12]^d, six-hump camel on [-3,3]x[-2,2]. The weighted two-norm
x1^2 + 5*x2^2 on [-5,5]^2 is a strongly convex anisotropic baseline, and
the 1D demo function sin(20x) + 20(x-0.3)^2 pairs a fast oscillation with
a parabolic envelope. GP-sampled objectives reveal a zero-mean sample
path one query at a time and replay revealed values bitwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .domain import BoxBounds
from .gp import Dataset, posterior
from .kernels import KernelSpec

KINDS = (
    "branin",
    "sixhump",
    "ackley",
    "rastrigin",
    "weighted_two_norm",
    "demo1d",
    "gp_sampled",
)


class GPSampledState:
    """Lazy sample path of a zero-mean GP with noiseless truth values.

    Each new query draws from the posterior given everything revealed so
    far and records the pair, so any finite restriction of the path is one
    consistent multivariate normal draw. Callers must serialize access to
    a single state; distinct states are independent paths.
    """

    def __init__(self, kernel: KernelSpec, bounds: BoxBounds, seed: int = 0):
        if kernel.dim != bounds.dim:
            raise ValueError(f"kernel dimension {kernel.dim} != bounds dimension {bounds.dim}")
        self.kernel = kernel.with_noise(0.0)
        self.bounds = bounds
        self.revealed = Dataset(np.zeros((0, bounds.dim)), np.zeros(0), bounds)
        self._rng = np.random.default_rng(seed)
        self._values: dict[bytes, float] = {}


def gp_sampled_eval(state: GPSampledState, x: np.ndarray) -> float:
    """Value of the lazy sample path at x, drawing and recording it if new."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    key = x.tobytes()
    if key in state._values:
        return state._values[key]
    post = posterior(state.revealed, state.kernel, prior_mean=0.0)
    mean, var = post.predict(x[None, :])
    draw = float(mean[0]) + np.sqrt(max(float(var[0]), 0.0)) * float(state._rng.standard_normal())
    state.revealed = state.revealed.append(x, draw)
    state._values[key] = draw
    return draw


@dataclass(frozen=True)
class ObjectiveSpec:
    """A benchmark objective: kind, search box, noise level, optimum if known."""

    kind: str
    bounds: BoxBounds
    noise_sd: float = 0.0
    known_min: tuple[np.ndarray, float] | None = None
    weights: np.ndarray | None = None
    state: GPSampledState | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}; expected one of {KINDS}")
        if not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise ValueError("noise_sd must be non-negative and finite")
        if self.kind == "weighted_two_norm":
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if w.shape != (self.bounds.dim,) or not np.all(w > 0):
                raise ValueError("weights must be positive, one per dimension")
            object.__setattr__(self, "weights", w)
        if self.kind == "gp_sampled" and self.state is None:
            raise ValueError("gp_sampled objectives need a GPSampledState")
        if self.known_min is not None:
            x_star, f_star = self.known_min
            x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
            if x_star.shape != (self.bounds.dim,):
                raise ValueError("known_min point has the wrong dimension")
            object.__setattr__(self, "known_min", (x_star, float(f_star)))

    @property
    def dim(self) -> int:
        return self.bounds.dim


def branin(noise_sd: float = 0.0) -> ObjectiveSpec:
    bounds = BoxBounds(np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
    # f* = 5/(4 pi): the quadratic term vanishes exactly at (pi, 2.275).
    return ObjectiveSpec(
        "branin", bounds, noise_sd, known_min=(np.array([np.pi, 2.275]), 5.0 / (4.0 * np.pi))
    )


def sixhump(noise_sd: float = 0.0) -> ObjectiveSpec:
    bounds = BoxBounds(np.array([-3.0, -2.0]), np.array([3.0, 2.0]))
    x_star = np.array([0.089842011817429165, -0.7126564056224669])
    return ObjectiveSpec("sixhump", bounds, noise_sd, known_min=(x_star, -1.0316284534898774))


def ackley(dim: int = 2, noise_sd: float = 0.0) -> ObjectiveSpec:
    bounds = BoxBounds(np.full(dim, -5.0), np.full(dim, 5.0))
    return ObjectiveSpec("ackley", bounds, noise_sd, known_min=(np.zeros(dim), 0.0))


def rastrigin(dim: int = 4, noise_sd: float = 0.0) -> ObjectiveSpec:
    bounds = BoxBounds(np.full(dim, -5.12), np.full(dim, 5.12))
    return ObjectiveSpec("rastrigin", bounds, noise_sd, known_min=(np.zeros(dim), 0.0))


def weighted_two_norm(weights=(1.0, 5.0), noise_sd: float = 0.0) -> ObjectiveSpec:
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    bounds = BoxBounds(np.full(w.size, -5.0), np.full(w.size, 5.0))
    return ObjectiveSpec(
        "weighted_two_norm",
        bounds,
        noise_sd,
        known_min=(np.zeros(w.size), 0.0),
        weights=w,
    )


def demo1d(noise_sd: float = 0.0) -> ObjectiveSpec:
    bounds = BoxBounds(np.array([0.0]), np.array([1.0]))
    x_star = np.array([0.24148444495645435])
    return ObjectiveSpec("demo1d", bounds, noise_sd, known_min=(x_star, -0.92464684550390364))


def gp_sampled(
    kernel: KernelSpec,
    seed: int = 0,
    bounds: BoxBounds | None = None,
    noise_sd: float = 0.0,
) -> ObjectiveSpec:
    if bounds is None:
        bounds = BoxBounds(np.zeros(kernel.dim), np.ones(kernel.dim))
    return ObjectiveSpec(
        "gp_sampled", bounds, noise_sd, state=GPSampledState(kernel, bounds, seed)
    )


def objective_by_name(name: str, noise_sd: float = 0.0) -> ObjectiveSpec:
    """Resolve config names: branin, sixhump, weighted_two_norm, demo1d,
    ackley[D] (default 2), rastrigin[D] (default 4)."""
    key = name.strip().lower()
    m = re.fullmatch(r"(ackley|rastrigin)(\d+)?", key)
    if m:
        default = 2 if m.group(1) == "ackley" else 4
        dim = int(m.group(2)) if m.group(2) else default
        maker = ackley if m.group(1) == "ackley" else rastrigin
        return maker(dim, noise_sd=noise_sd)
    plain = {
        "branin": branin,
        "sixhump": sixhump,
        "weighted_two_norm": weighted_two_norm,
        "demo1d": demo1d,
    }
    if key not in plain:
        raise ValueError(f"unknown objective name {name!r}")
    return plain[key](noise_sd=noise_sd)


def _raw_value(spec: ObjectiveSpec, x: np.ndarray) -> float:
    if spec.kind == "branin":
        b = 5.1 / (4.0 * np.pi**2)
        c = 5.0 / np.pi
        t = 1.0 / (8.0 * np.pi)
        quad = (x[1] - b * x[0] ** 2 + c * x[0] - 6.0) ** 2
        return float(quad + 10.0 * (1.0 - t) * np.cos(x[0]) + 10.0)
    if spec.kind == "sixhump":
        x1, x2 = x
        return float(
            (4.0 - 2.1 * x1**2 + x1**4 / 3.0) * x1**2
            + x1 * x2
            + (-4.0 + 4.0 * x2**2) * x2**2
        )
    if spec.kind == "ackley":
        # Grouped so both brackets vanish exactly at the origin.
        return float(
            20.0 * (1.0 - np.exp(-0.2 * np.sqrt(np.mean(x**2))))
            + (np.e - np.exp(np.mean(np.cos(2.0 * np.pi * x))))
        )
    if spec.kind == "rastrigin":
        return float(10.0 * x.size + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x)))
    if spec.kind == "weighted_two_norm":
        return float(spec.weights @ x**2)
    if spec.kind == "demo1d":
        return float(np.sin(20.0 * x[0]) + 20.0 * (x[0] - 0.3) ** 2)
    return gp_sampled_eval(spec.state, x)


def eval_objective(spec: ObjectiveSpec, x: np.ndarray, rng=None) -> float:
    """Evaluate the objective at x, adding noise_sd * xi with xi ~ N(0, 1) from rng."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (spec.bounds.dim,):
        raise ValueError(f"x must have shape ({spec.bounds.dim},), got {x.shape}")
    if not spec.bounds.contains(x):
        raise ValueError(f"x {x} lies outside the search box")
    value = _raw_value(spec, x)
    if spec.noise_sd > 0.0:
        if rng is None:
            raise ValueError("a noisy objective needs an rng")
        value += spec.noise_sd * float(rng.standard_normal())
    return value
