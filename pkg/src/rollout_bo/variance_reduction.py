"""Quasi-Monte Carlo sampling and control variates for rollout estimators.

The Sobol generator is self-contained: direction numbers for dimensions
2..20 come from the Joe & Kuo "new-joe-kuo-6" table (degree s, coefficient
a, initial values m), dimension 1 is the van der Corput sequence. Points
are produced in Gray-code order with the index-zero point skipped, so the
first emitted point is the sequence's second element.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_BITS = 32
_SCALE = float(2**_BITS)

# dim -> (s, a, m_1..m_s) from the published primitive-polynomial table.
_JOE_KUO = {
    2: (1, 0, (1,)),
    3: (2, 1, (1, 3)),
    4: (3, 1, (1, 3, 1)),
    5: (3, 2, (1, 1, 1)),
    6: (4, 1, (1, 1, 3, 3)),
    7: (4, 4, (1, 3, 5, 13)),
    8: (5, 2, (1, 1, 5, 5, 17)),
    9: (5, 4, (1, 1, 5, 5, 5)),
    10: (5, 7, (1, 1, 7, 11, 19)),
    11: (5, 11, (1, 1, 5, 1, 1)),
    12: (5, 13, (1, 1, 1, 3, 11)),
    13: (5, 14, (1, 3, 5, 5, 31)),
    14: (6, 1, (1, 3, 3, 9, 7, 49)),
    15: (6, 13, (1, 1, 1, 15, 21, 21)),
    16: (6, 16, (1, 3, 1, 13, 27, 49)),
    17: (6, 19, (1, 1, 1, 15, 7, 5)),
    18: (6, 22, (1, 3, 1, 15, 13, 25)),
    19: (6, 25, (1, 1, 5, 5, 19, 61)),
    20: (7, 1, (1, 3, 7, 11, 23, 15, 103)),
}

MAX_SOBOL_DIM = max(_JOE_KUO)


@lru_cache(maxsize=None)
def _direction_vectors(dim: int) -> np.ndarray:
    """Pre-scaled direction numbers V[j, k] = m_k * 2^(32-k), shape (dim, 32)."""
    V = np.zeros((dim, _BITS), dtype=np.uint64)
    V[0] = np.uint64(1) << np.arange(_BITS - 1, -1, -1, dtype=np.uint64)
    for j in range(1, dim):
        s, a, m = _JOE_KUO[j + 1]
        v = np.zeros(_BITS, dtype=np.uint64)
        for k in range(s):
            v[k] = np.uint64(m[k]) << np.uint64(_BITS - 1 - k)
        for k in range(s, _BITS):
            v[k] = v[k - s] ^ (v[k - s] >> np.uint64(s))
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    v[k] ^= v[k - i]
        V[j] = v
    V.setflags(write=False)
    return V


def _lowest_zero_bit(k: int) -> int:
    c = 0
    while k & 1:
        k >>= 1
        c += 1
    return c


def sobol_points(n: int, dim: int, shift_seed: int | None = None) -> np.ndarray:
    """First n Sobol points in [0,1)^dim, index zero skipped.

    With shift_seed set, every coordinate stream is XORed with a random
    32-bit digital shift, which randomizes the point set while keeping its
    low-discrepancy structure.
    """
    if not 1 <= dim <= MAX_SOBOL_DIM:
        raise ValueError(f"Sobol dimension must be in [1, {MAX_SOBOL_DIM}], got {dim}")
    if n < 0:
        raise ValueError("n must be non-negative")
    V = _direction_vectors(dim)
    if shift_seed is None:
        shift = np.zeros(dim, dtype=np.uint64)
    else:
        rng = np.random.default_rng(shift_seed)
        shift = rng.integers(0, 2**_BITS, size=dim, dtype=np.uint64)
    state = np.zeros(dim, dtype=np.uint64)
    out = np.empty((n, dim))
    for i in range(1, n + 1):
        state = state ^ V[:, _lowest_zero_bit(i - 1)]
        out[i - 1] = (state ^ shift) / _SCALE
    return out


def box_muller(u1, u2):
    """Map a pair of uniforms in the open unit interval to a pair of normals.

    z1 = sqrt(-2 ln u1) cos(2 pi u2), z2 = sqrt(-2 ln u1) sin(2 pi u2);
    works elementwise on arrays. Boundary values {0, 1} are rejected
    because ln 0 diverges.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    for u in (u1, u2):
        if not np.all((u > 0.0) & (u < 1.0)):
            raise ValueError("box_muller inputs must lie strictly inside (0, 1)")
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return radius * np.cos(angle), radius * np.sin(angle)


def _box_muller_columns(u: np.ndarray) -> np.ndarray:
    """Apply box_muller to column pairs (2j, 2j+1) of a matrix with even width."""
    if u.shape[-1] % 2 != 0:
        raise ValueError("box_muller consumes uniforms in pairs")
    z1, z2 = box_muller(u[..., 0::2], u[..., 1::2])
    z = np.empty_like(u)
    z[..., 0::2] = z1
    z[..., 1::2] = z2
    return z


COVARIATE_KINDS = ("ei_first_step", "pi_first_step")


@dataclass(frozen=True)
class VRConfig:
    """Which variance-reduction pieces a rollout estimator uses.

    use_qmc swaps pseudo-random normals for a Box-Muller Sobol stream;
    use_crn shares one ZMatrix across every candidate compared within an
    outer iteration; covariates names the first-step control variates;
    beta_mode is "estimated" or a fixed coefficient vector (one per
    covariate). digital_shift randomizes the Sobol stream per seed, for
    replicated error studies.
    """

    use_qmc: bool = True
    use_crn: bool = True
    covariates: tuple = ("ei_first_step", "pi_first_step")
    beta_mode: object = "estimated"
    digital_shift: bool = False

    def __post_init__(self):
        cov = tuple(self.covariates)
        if len(set(cov)) != len(cov):
            raise ValueError("covariates must be distinct")
        for c in cov:
            if c not in COVARIATE_KINDS:
                raise ValueError(f"unknown covariate {c!r}; expected one of {COVARIATE_KINDS}")
        object.__setattr__(self, "covariates", cov)
        if isinstance(self.beta_mode, str):
            if self.beta_mode != "estimated":
                raise ValueError("beta_mode must be 'estimated' or a fixed vector")
        else:
            beta = np.atleast_1d(np.asarray(self.beta_mode, dtype=float))
            if beta.shape != (len(cov),):
                raise ValueError("fixed beta length must match the number of covariates")
            object.__setattr__(self, "beta_mode", beta)


def plain_mc_config() -> VRConfig:
    """Baseline estimator: pseudo-random draws, no CRN, no covariates."""
    return VRConfig(use_qmc=False, use_crn=False, covariates=())


@dataclass(frozen=True)
class ZMatrix:
    """Standard-normal draws Z[i, t] for trajectory i, rollout step t.

    Sharing one instance across candidates or policies is what makes
    common-random-number comparisons work.
    """

    Z: np.ndarray
    mode: str
    seed: int

    @property
    def n_samples(self) -> int:
        return self.Z.shape[0]

    @property
    def horizon(self) -> int:
        return self.Z.shape[1]


def make_zmatrix(n_samples: int, horizon: int, vr: VRConfig | None = None, seed: int = 0) -> ZMatrix:
    """Build the (n_samples, horizon) innovation matrix for rollout estimation.

    With vr.use_qmc a Sobol stream is pushed through box_muller (an odd
    horizon is padded to the next even dimension and the extra column
    dropped); otherwise rows are iid normals from a seeded generator.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    vr = vr if vr is not None else VRConfig()
    if vr.use_qmc:
        dim = horizon + (horizon % 2)
        u = sobol_points(n_samples, dim, shift_seed=seed if vr.digital_shift else None)
        Z = _box_muller_columns(u)[:, :horizon].copy()
        mode = "sobol"
    else:
        Z = np.random.default_rng(seed).standard_normal((n_samples, horizon))
        mode = "pseudo"
    Z.setflags(write=False)
    return ZMatrix(Z, mode, seed)


@dataclass(frozen=True)
class CVStats:
    """Byproducts of a control-variate combination."""

    sigma_g: np.ndarray
    sigma_gf: np.ndarray
    beta: np.ndarray
    known_means: np.ndarray
    used_fallback: bool


def cv_combine(
    f_samples: np.ndarray,
    g_samples: np.ndarray,
    known_means: np.ndarray,
    beta_mode="estimated",
) -> tuple[float, float, CVStats]:
    """De-biased mean of f using covariate draws g with known expectations.

    Returns (mean, std_error, stats) where mean averages the corrected
    draws c_i = f_i - beta @ (g_i - known_means). Estimated beta solves
    (Cov[g] + ridge I) beta = Cov[g, f] with ridge 1e-10 * trace(Cov[g]);
    a singular or non-finite solve falls back to beta = 0 (the plain
    sample mean) and flags it in stats.
    """
    f = np.asarray(f_samples, dtype=float)
    G = np.asarray(g_samples, dtype=float)
    known_means = np.atleast_1d(np.asarray(known_means, dtype=float))
    if f.ndim != 1 or f.shape[0] < 2:
        raise ValueError("cv_combine needs a vector of at least two reward draws")
    n = f.shape[0]
    if G.size == 0:
        G = G.reshape(n, 0)
    elif G.ndim == 1:
        G = G[:, None]
    if G.shape[0] != n:
        raise ValueError(f"g_samples must have {n} rows, got {G.shape}")
    q = G.shape[1]
    if known_means.shape != (q,):
        raise ValueError(f"known_means must have shape ({q},)")
    estimating = isinstance(beta_mode, str)
    if estimating and beta_mode != "estimated":
        raise ValueError("beta_mode must be 'estimated' or a fixed vector")
    if estimating and q > 0 and n < 4:
        raise ValueError("estimating beta needs at least four samples")
    used_fallback = False
    if q == 0:
        beta = np.zeros(0)
        sigma_g = np.zeros((0, 0))
        sigma_gf = np.zeros(0)
    else:
        Gc = G - G.mean(axis=0)
        fc = f - f.mean()
        sigma_g = (Gc.T @ Gc) / (n - 1)
        sigma_gf = (Gc.T @ fc) / (n - 1)
        if estimating:
            ridge = 1e-10 * np.trace(sigma_g)
            try:
                beta = np.linalg.solve(sigma_g + ridge * np.eye(q), sigma_gf)
            except np.linalg.LinAlgError:
                beta = None
            if beta is None or not np.all(np.isfinite(beta)):
                beta = np.zeros(q)
                used_fallback = True
        else:
            beta = np.atleast_1d(np.asarray(beta_mode, dtype=float))
            if beta.shape != (q,):
                raise ValueError(f"fixed beta must have shape ({q},)")
    corrected = f - (G - known_means) @ beta if q else f
    mean = float(np.mean(corrected))
    std_error = float(np.std(corrected, ddof=1) / np.sqrt(n))
    return mean, std_error, CVStats(sigma_g, sigma_gf, beta, known_means, used_fallback)


def first_step_covariates(post, x, inc, z_col: np.ndarray, covariates=COVARIATE_KINDS):
    """Covariate draws from the candidate's own fantasy value.

    Reuses the z column that generates the first fantasy observation:
    y_i = mean + std * z_i at x. The improvement draw (y* - y_i)^+ has
    known mean EI(x); the event draw 1[y_i < y*] has known mean PI(x).
    Returns (g_samples: N x m, known_means: m).
    """
    from .acquisitions import ei_value, pi_value  # local import; acquisitions needs our sobol

    z = np.asarray(z_col, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean, var = post.predict(x[None, :])
    y = mean[0] + np.sqrt(var[0]) * z
    y_star = inc.y_star if hasattr(inc, "y_star") else float(inc)
    columns, means = [], []
    for kind in covariates:
        if kind == "ei_first_step":
            columns.append(np.maximum(y_star - y, 0.0))
            means.append(float(ei_value(mean, var, y_star)[0]))
        elif kind == "pi_first_step":
            columns.append((y < y_star).astype(float))
            means.append(float(pi_value(mean, var, y_star)[0]))
        else:
            raise ValueError(f"unknown covariate {kind!r}")
    if not columns:
        return np.zeros((z.shape[0], 0)), np.zeros(0)
    return np.column_stack(columns), np.asarray(means)
