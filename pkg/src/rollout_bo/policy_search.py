"""Per-iteration acquisition selection by rolling out each candidate policy.

Every member of a PolicySet is scored by simulating its own behavior: find
the member's argmax, then roll the member out from that point as its own
base policy. All members share one ZMatrix so the comparison is paired,
and the highest estimated mean wins (earliest member on ties).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .acquisitions import (
    AcquisitionKind,
    Incumbent,
    acquisition_values,
    closed_form_value_grad,
    maximize_kg,
)
from .gp import GPPosterior, NumericalError
from .optim import maximize_cheap
from .rollout import RolloutConfig, RolloutEstimate, _step_seed, rollout_acquisition
from .variance_reduction import ZMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicySet:
    """Ordered acquisition portfolio; the order defines tie-breaking."""

    members: tuple[AcquisitionKind, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("a policy set needs at least one member")
        object.__setattr__(self, "members", members)

    @classmethod
    def default(cls) -> "PolicySet":
        kappas = (0.0, 1.0, 2.0, 4.0, 8.0)
        return cls(
            (AcquisitionKind.ei(), AcquisitionKind.kg())
            + tuple(AcquisitionKind.ucb(k) for k in kappas)
        )

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(kind.label for kind in self.members)


@dataclass(frozen=True)
class PolicyChoice:
    """Outcome of one selection round.

    scores and argmaxes are per member, in set order; a member excluded by
    an argmax or rollout failure carries None in both and its position in
    `excluded`.
    """

    index: int
    chosen: AcquisitionKind
    x_next: np.ndarray
    scores: tuple[RolloutEstimate | None, ...]
    argmaxes: tuple[np.ndarray | None, ...]
    excluded: tuple[int, ...] = ()

    @property
    def n_members(self) -> int:
        return len(self.scores)


def maximize_acquisition(
    post: GPPosterior, kind: AcquisitionKind, seed: int = 0, restarts: int = 5
) -> tuple[np.ndarray, float]:
    """Argmax of an acquisition over the search box.

    Closed forms run multistart projected ascent; KG searches its own
    Sobol grid. Returns (x, value).
    """
    if kind.tag == "kg":
        return maximize_kg(post, kind)
    inc = Incumbent.of(post.data)

    def f(X):
        mean, var = post.predict(X)
        return acquisition_values(kind, mean, var, inc.y_star)

    def g(X):
        mean, var, dmean, dvar = post.predict_with_grad_batch(X)
        return closed_form_value_grad(kind, mean, var, dmean, dvar, inc.y_star)[1]

    res = maximize_cheap(f, g, post.data.bounds, restarts=restarts, seed=seed)
    return res.x_best, res.f_best


def select_policy(
    post: GPPosterior, policies: PolicySet, cfg: RolloutConfig, zmat: ZMatrix
) -> PolicyChoice:
    """Score every member on the shared zmat and pick the best one.

    Each member is rolled out at its own argmax with itself as the base
    policy. The outer argmax draws its multistart design from step index 0
    of cfg's seed stream, so a singleton {EI} set at horizon 1 reproduces
    plain EI maximization bit for bit.
    """
    seed0 = _step_seed(cfg.argmax_seed, 0)
    estimates: list[RolloutEstimate | None] = []
    argmaxes: list[np.ndarray | None] = []
    excluded: list[int] = []
    for i, kind in enumerate(policies.members):
        try:
            x_i, _ = maximize_acquisition(post, kind, seed=seed0)
            est = rollout_acquisition(post, x_i, replace(cfg, base_policy=kind), zmat)
        except (ValueError, NumericalError) as err:
            logger.warning("policy %s excluded from selection: %s", kind.label, err)
            estimates.append(None)
            argmaxes.append(None)
            excluded.append(i)
            continue
        estimates.append(est)
        argmaxes.append(x_i)
    means = np.array([e.mean if e is not None else -np.inf for e in estimates])
    if not np.any(np.isfinite(means)):
        raise NumericalError("every policy in the set failed to score")
    idx = int(np.argmax(means))  # ties resolve to the earliest member
    return PolicyChoice(
        index=idx,
        chosen=policies.members[idx],
        x_next=argmaxes[idx].copy(),
        scores=tuple(estimates),
        argmaxes=tuple(argmaxes),
        excluded=tuple(excluded),
    )


def usage_histogram(choices, window: int = 5, n_members: int | None = None) -> np.ndarray:
    """Box-filtered per-iteration selection frequencies across replications.

    choices is either one replication (a sequence of PolicyChoice or member
    indices) or a list of replications of equal length. Returns an
    (iterations, members) matrix whose rows sum to 1.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    seq = list(choices)
    if not seq:
        raise ValueError("choices must be non-empty")
    if not isinstance(seq[0], (list, tuple, np.ndarray)):
        seq = [seq]

    def as_index(c):
        return c.index if isinstance(c, PolicyChoice) else int(c)

    idx = np.asarray([[as_index(c) for c in rep] for rep in seq])
    if n_members is None:
        first = seq[0][0]
        if not isinstance(first, PolicyChoice):
            raise ValueError("n_members is required when choices are plain indices")
        n_members = first.n_members
    if idx.min() < 0 or idx.max() >= n_members:
        raise ValueError("choice index outside the policy set")
    freq = np.stack([(idx == j).mean(axis=0) for j in range(n_members)], axis=1)
    half = window // 2
    out = np.empty_like(freq)
    for t in range(freq.shape[0]):
        lo, hi = max(0, t - half), min(freq.shape[0], t + half + 1)
        out[t] = freq[lo:hi].mean(axis=0)
    return out
