"""Policy selection: tie rules, identities, the 1D exploration oracle, histograms."""

import numpy as np
import pytest

from rollout_bo.acquisitions import AcquisitionKind
from rollout_bo.domain import BoxBounds
from rollout_bo.gp import Dataset, NumericalError, posterior
from rollout_bo.kernels import KernelSpec
from rollout_bo.policy_search import (
    PolicyChoice,
    PolicySet,
    maximize_acquisition,
    select_policy,
    usage_histogram,
)
from rollout_bo.rollout import RolloutConfig, _step_seed, rollout_acquisition
from rollout_bo.variance_reduction import make_zmatrix


def toy_posterior(seed=3, n=6):
    rng = np.random.default_rng(seed)
    bounds = BoxBounds(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    X = bounds.from_unit(rng.random((n, 2)))
    y = np.sin(3 * X[:, 0]) + 0.5 * X[:, 1] ** 2
    spec = KernelSpec("matern52", lengthscales=[0.3, 0.5], amplitude=1.2, noise=1e-4)
    return posterior(Dataset(X, y, bounds), spec)


class TestPolicySet:
    def test_default_members(self):
        ps = PolicySet.default()
        assert ps.labels == ("EI", "KG", "UCB-0", "UCB-1", "UCB-2", "UCB-4", "UCB-8")
        assert ps.size == 7

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            PolicySet(())


class TestSelectPolicy:
    def test_singleton_set(self):
        post = toy_posterior()
        cfg = RolloutConfig(horizon=2, n_samples=16)
        zm = make_zmatrix(16, 2, cfg.vr, seed=0)
        choice = select_policy(post, PolicySet((AcquisitionKind.ei(),)), cfg, zm)
        assert choice.index == 0 and choice.chosen.tag == "ei"
        x_ref, _ = maximize_acquisition(
            post, AcquisitionKind.ei(), seed=_step_seed(cfg.argmax_seed, 0)
        )
        assert np.array_equal(choice.x_next, x_ref)

    def test_duplicate_member_breaks_tie_to_first(self):
        post = toy_posterior()
        cfg = RolloutConfig(horizon=2, n_samples=16)
        zm = make_zmatrix(16, 2, cfg.vr, seed=0)
        choice = select_policy(
            post, PolicySet((AcquisitionKind.ei(), AcquisitionKind.ei())), cfg, zm
        )
        assert choice.index == 0
        assert choice.scores[0].mean == choice.scores[1].mean

    def test_chosen_has_maximal_mean_and_is_deterministic(self):
        post = toy_posterior()
        cfg = RolloutConfig(horizon=2, n_samples=24)
        zm = make_zmatrix(24, 2, cfg.vr, seed=1)
        ps = PolicySet.default()
        choice = select_policy(post, ps, cfg, zm)
        means = [e.mean for e in choice.scores if e is not None]
        assert choice.scores[choice.index].mean == max(means)
        again = select_policy(post, ps, cfg, zm)
        assert again.index == choice.index
        assert np.array_equal(again.x_next, choice.x_next)
        assert [e.mean for e in again.scores] == [e.mean for e in choice.scores]

    def test_horizon_one_singleton_matches_plain_ei(self):
        post = toy_posterior()
        cfg = RolloutConfig(horizon=1, n_samples=8, argmax_seed=11)
        zm = make_zmatrix(8, 1, cfg.vr, seed=0)
        choice = select_policy(post, PolicySet((AcquisitionKind.ei(),)), cfg, zm)
        x_plain, _ = maximize_acquisition(post, AcquisitionKind.ei(), seed=_step_seed(11, 0))
        assert np.array_equal(choice.x_next, x_plain)

    def test_failed_member_is_excluded(self, monkeypatch):
        import rollout_bo.policy_search as ps_mod

        post = toy_posterior()
        cfg = RolloutConfig(horizon=1, n_samples=8)
        zm = make_zmatrix(8, 1, cfg.vr, seed=0)
        real = ps_mod.maximize_acquisition

        def flaky(post_, kind, seed=0, restarts=5):
            if kind.tag == "pi":
                raise NumericalError("synthetic argmax failure")
            return real(post_, kind, seed=seed, restarts=restarts)

        monkeypatch.setattr(ps_mod, "maximize_acquisition", flaky)
        choice = select_policy(
            post, PolicySet((AcquisitionKind.pi(), AcquisitionKind.ei())), cfg, zm
        )
        assert choice.excluded == (0,)
        assert choice.scores[0] is None and choice.argmaxes[0] is None
        assert choice.index == 1

        def broken(post_, kind, seed=0, restarts=5):
            raise NumericalError("synthetic argmax failure")

        monkeypatch.setattr(ps_mod, "maximize_acquisition", broken)
        with pytest.raises(NumericalError, match="every policy"):
            select_policy(post, PolicySet((AcquisitionKind.ei(),)), cfg, zm)


class TestExplorationOracle:
    def test_ucb8_outscores_ucb0_in_unexplored_basin(self):
        # 1D objective sin(20x) + 20(x - 0.3)^2 observed densely everywhere
        # except the basin (0.15, 0.45) that holds the true minimum (~0.262).
        # Against a zero prior mean the basin is both uncertain and promising,
        # so rolling out UCB-8 from its in-basin argmax must beat UCB-0.
        bounds = BoxBounds(np.array([0.0]), np.array([1.0]))
        xs = np.concatenate([np.arange(0.0, 0.16, 0.025), np.arange(0.45, 1.001, 0.025)])
        y = np.sin(20 * xs) + 20 * (xs - 0.3) ** 2
        spec = KernelSpec("matern52", [0.07], amplitude=2.0, noise=1e-6)
        post = posterior(Dataset(xs[:, None], y, bounds), spec, prior_mean=0.0)

        ucb8, ucb0 = AcquisitionKind.ucb(8.0), AcquisitionKind.ucb(0.0)
        x8, _ = maximize_acquisition(post, ucb8, seed=7)
        assert 0.15 < x8[0] < 0.45  # argmax sits inside the unexplored basin
        x0, _ = maximize_acquisition(post, ucb0, seed=7)
        scores8, scores0 = [], []
        for seed in range(50):
            zm = make_zmatrix(64, 3, None, seed=seed)
            cfg8 = RolloutConfig(horizon=3, n_samples=64, base_policy=ucb8)
            cfg0 = RolloutConfig(horizon=3, n_samples=64, base_policy=ucb0)
            scores8.append(rollout_acquisition(post, x8, cfg8, zm).mean)
            scores0.append(rollout_acquisition(post, x0, cfg0, zm).mean)
        assert np.mean(scores8) > np.mean(scores0)


class TestUsageHistogram:
    def test_constant_choice_single_replication(self):
        h = usage_histogram([1] * 8, n_members=3)
        assert h.shape == (8, 3)
        np.testing.assert_allclose(h[:, 1], 1.0)
        np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-9)

    def test_alternating_members_stay_near_half(self):
        h = usage_histogram([0, 1] * 6, window=5, n_members=2)
        interior = h[2:-2]
        assert np.all((0.4 <= interior) & (interior <= 0.6))
        np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-9)

    def test_synthetic_log_matches_counting_oracle(self):
        rng = np.random.default_rng(0)
        reps, iters, members = 50, 12, 3
        log = rng.integers(0, members, size=(reps, iters))
        h = usage_histogram(log, window=5, n_members=members)

        freq = np.zeros((iters, members))
        for t in range(iters):
            for j in range(members):
                freq[t, j] = np.mean(log[:, t] == j)
        expected = np.zeros_like(freq)
        for t in range(iters):
            lo, hi = max(0, t - 2), min(iters, t + 3)
            expected[t] = freq[lo:hi].mean(axis=0)
        np.testing.assert_allclose(h, expected, atol=1e-12)
        np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-9)

    def test_policy_choice_input_infers_member_count(self):
        post = toy_posterior()
        cfg = RolloutConfig(horizon=1, n_samples=8)
        zm = make_zmatrix(8, 1, cfg.vr, seed=0)
        ps = PolicySet((AcquisitionKind.ei(), AcquisitionKind.ucb(2.0)))
        choices = [select_policy(post, ps, cfg, zm) for _ in range(3)]
        h = usage_histogram(choices)
        assert h.shape == (3, 2)
        np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            usage_histogram([], n_members=2)
        with pytest.raises(ValueError):
            usage_histogram([0, 1], window=0, n_members=2)
        with pytest.raises(ValueError):
            usage_histogram([0, 5], n_members=2)
        with pytest.raises(ValueError):
            usage_histogram([0, 1])  # plain indices need n_members
