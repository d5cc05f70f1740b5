"""Kernel evaluations against brute-force oracles and finite differences."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rollout_bo.kernels import (
    FAMILIES,
    KernelSpec,
    kernel_eval,
    kernel_gradient_x,
    kernel_matrix,
    kernel_matrix_with_grads,
)


def oracle_value(family, ls, amp, x, x2):
    # Direct transcription of the radial forms, one pair at a time.
    r = np.sqrt(np.sum(((x - x2) / ls) ** 2))
    if family == "squared_exponential":
        return amp * np.exp(-0.5 * r**2)
    if family == "matern52":
        return amp * (1 + np.sqrt(5) * r + 5 * r**2 / 3) * np.exp(-np.sqrt(5) * r)
    if family == "matern32":
        return amp * (1 + np.sqrt(3) * r) * np.exp(-np.sqrt(3) * r)
    raise AssertionError(family)


@pytest.mark.parametrize("family", FAMILIES)
def test_matrix_matches_pairwise_oracle(family):
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = rng.integers(1, 5)
        ls = rng.uniform(0.2, 3.0, size=d)
        amp = rng.uniform(0.1, 10.0)
        spec = KernelSpec(family, ls, amplitude=amp)
        X = rng.normal(size=(8, d))
        X2 = rng.normal(size=(5, d))
        K = kernel_matrix(spec, X, X2)
        expected = np.array(
            [[oracle_value(family, ls, amp, xi, xj) for xj in X2] for xi in X]
        )
        assert_allclose(K, expected, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
def test_zero_distance_equals_amplitude(family):
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = rng.integers(1, 6)
        spec = KernelSpec(family, rng.uniform(0.1, 2.0, d), amplitude=rng.uniform(0.01, 100))
        x = rng.normal(size=d)
        assert kernel_eval(spec, x, x) == spec.amplitude


@pytest.mark.parametrize("family", FAMILIES)
def test_gram_symmetric_and_positive_semidefinite(family):
    rng = np.random.default_rng(11)
    for _ in range(10):
        d = rng.integers(1, 4)
        spec = KernelSpec(family, rng.uniform(0.3, 2.0, d), amplitude=1.7)
        X = rng.normal(size=(15, d))
        K = kernel_matrix(spec, X)
        assert_allclose(K, K.T, atol=1e-14)
        eigs = np.linalg.eigvalsh(K)
        assert eigs.min() > -1e-9


def test_known_values():
    # Hand-computed at r = 1 with unit lengthscale and amplitude.
    x, x2 = np.array([0.0]), np.array([1.0])
    se = KernelSpec("squared_exponential", np.array([1.0]))
    assert_allclose(kernel_eval(se, x, x2), np.exp(-0.5), rtol=1e-15)
    m52 = KernelSpec("matern52", np.array([1.0]))
    assert_allclose(
        kernel_eval(m52, x, x2), (1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5)), rtol=1e-15
    )
    m32 = KernelSpec("matern32", np.array([1.0]))
    assert_allclose(kernel_eval(m32, x, x2), (1 + np.sqrt(3)) * np.exp(-np.sqrt(3)), rtol=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_wrt_x_matches_finite_differences(family):
    rng = np.random.default_rng(19)
    eps = 1e-6
    for _ in range(10):
        d = rng.integers(1, 4)
        spec = KernelSpec(family, rng.uniform(0.4, 2.0, d), amplitude=2.3)
        points = rng.normal(size=(6, d))
        x = rng.normal(size=d) + 0.05  # keep away from exact coincidence
        grad = kernel_gradient_x(spec, x, points)
        for j in range(d):
            xp, xm = x.copy(), x.copy()
            xp[j] += eps
            xm[j] -= eps
            fd = (
                kernel_matrix(spec, xp[None], points)[0]
                - kernel_matrix(spec, xm[None], points)[0]
            ) / (2 * eps)
            assert_allclose(grad[:, j], fd, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("family", FAMILIES)
def test_hyperparameter_gradients_match_finite_differences(family):
    rng = np.random.default_rng(23)
    eps = 1e-6
    d = 3
    ls = rng.uniform(0.5, 1.5, d)
    amp = 1.9
    X = rng.normal(size=(7, d))
    K, dK_ls, dK_amp = kernel_matrix_with_grads(KernelSpec(family, ls, amp), X)
    for j in range(d):
        lp, lm = ls.copy(), ls.copy()
        lp[j] *= np.exp(eps)
        lm[j] *= np.exp(-eps)
        fd = (
            kernel_matrix(KernelSpec(family, lp, amp), X)
            - kernel_matrix(KernelSpec(family, lm, amp), X)
        ) / (2 * eps)
        assert_allclose(dK_ls[j], fd, rtol=1e-5, atol=1e-8)
    fd_amp = (
        kernel_matrix(KernelSpec(family, ls, amp * np.exp(eps)), X)
        - kernel_matrix(KernelSpec(family, ls, amp * np.exp(-eps)), X)
    ) / (2 * eps)
    assert_allclose(dK_amp, fd_amp, rtol=1e-6, atol=1e-9)


def test_aliases_and_validation():
    spec = KernelSpec("SE", np.array([1.0, 2.0]))
    assert spec.family == "squared_exponential"
    assert KernelSpec("rbf", np.array([1.0])).family == "squared_exponential"
    with pytest.raises(ValueError):
        KernelSpec("cubic", np.array([1.0]))
    with pytest.raises(ValueError):
        KernelSpec("se", np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        KernelSpec("se", np.array([1.0]), amplitude=0.0)
    with pytest.raises(ValueError):
        KernelSpec("se", np.array([1.0]), noise=-1e-9)
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec("se", np.array([1.0, 1.0])), np.zeros(3), np.zeros(3))


def test_batched_matrix_matches_loop():
    # Leading batch axes broadcast: evaluate (B, n, d) x (B, m, d) in one call.
    rng = np.random.default_rng(31)
    spec = KernelSpec("matern52", np.array([0.7, 1.3]), amplitude=0.8)
    XB = rng.normal(size=(4, 6, 2))
    YB = rng.normal(size=(4, 3, 2))
    K = kernel_matrix(spec, XB, YB)
    assert K.shape == (4, 6, 3)
    for b in range(4):
        assert_allclose(K[b], kernel_matrix(spec, XB[b], YB[b]), rtol=1e-13)
