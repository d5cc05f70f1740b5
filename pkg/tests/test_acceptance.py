"""Acceptance checks, one test per release criterion.

Each test prints a single ``[criterion NN] PASS|FAIL`` line with the
measured quantities, then asserts. The statistical criteria (4-10) rerun
the full desk-scale protocols and together take on the order of two hours
on one core; criteria 1-3, 7, and 11 finish in seconds to a couple of
minutes. Session fixtures share the expensive studies between tests.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest

from rollout_bo import (
    AcquisitionKind,
    Dataset,
    Incumbent,
    KernelSpec,
    Method,
    PolicySet,
    RolloutConfig,
    RunConfig,
    VRConfig,
    fit_hyperparameters,
    kernel_matrix,
    make_zmatrix,
    mismatch_study,
    posterior,
    rollout_acquisition,
    run_replications,
    unit_box,
    variance_study,
)
from rollout_bo.acquisitions import ei_value, pi_value
from rollout_bo.cli import main
from rollout_bo.objectives import eval_objective, gp_sampled, objective_by_name


def _report(num: int, ok: bool, detail: str) -> None:
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    assert ok, line


# --- criterion 1: GP interpolation and dense-solve oracle -----------------


def _stratified_design(rng, n: int, d: int) -> np.ndarray:
    # One point per axis stratum with an interior margin, so no two points
    # nearly coincide and noiseless systems stay well conditioned.
    X = np.empty((n, d))
    for j in range(d):
        X[:, j] = (rng.permutation(n) + 0.25 + 0.5 * rng.random(n)) / n
    return X


# Family-specific sizes and lengthscales keep the noiseless kernel matrix
# numerically full rank (lambda_min comfortably above the base jitter), so
# exact interpolation is attainable in float64 at all.
_GP_CASES = (
    ("squared_exponential", 5, 0.08, 0.16),
    ("matern52", 7, 0.10, 0.25),
    ("matern32", 8, 0.12, 0.35),
)


def test_criterion_01_gp_interpolation_and_dense_oracle():
    rng = np.random.default_rng(11)
    worst_interp = worst_var = worst_mean_dev = worst_var_dev = 0.0
    for _ in range(50):
        family, n_max, lo, hi = _GP_CASES[int(rng.integers(3))]
        d = int(rng.integers(1, 4))
        n = int(rng.integers(3, n_max + 1))
        spec = KernelSpec(
            family,
            rng.uniform(lo, hi, d),
            amplitude=float(rng.uniform(0.5, 4.0)),
            noise=0.0,
        )
        X = _stratified_design(rng, n, d)
        y = rng.standard_normal(n) * np.sqrt(spec.amplitude)
        data = Dataset(X, y, unit_box(d))
        post = posterior(data, spec)

        mean_tr, var_tr = post.predict(X)
        worst_interp = max(worst_interp, float(np.max(np.abs(mean_tr - y))))
        worst_var = max(worst_var, float(np.max(var_tr)))

        # Dense oracle: same prior mean and jitter, no Cholesky reuse.
        Xq = np.vstack([X, rng.random((8, d))])
        A = kernel_matrix(spec, X) + (spec.noise + post.jitter) * np.eye(n)
        mbar = float(np.mean(y))
        k = kernel_matrix(spec, Xq, X)
        mean_o = mbar + k @ np.linalg.solve(A, y - mbar)
        var_o = np.maximum(spec.amplitude - np.sum(k * np.linalg.solve(A, k.T).T, axis=1), 0.0)
        mean_q, var_q = post.predict(Xq)
        worst_mean_dev = max(worst_mean_dev, float(np.max(np.abs(mean_q - mean_o))))
        worst_var_dev = max(worst_var_dev, float(np.max(np.abs(var_q - var_o))))
    ok = (
        worst_interp <= 1e-8
        and worst_var <= 1e-8
        and worst_mean_dev <= 1e-8
        and worst_var_dev <= 1e-8
    )
    _report(
        1, ok,
        f"50 datasets: interpolation residual {worst_interp:.2e}, train var {worst_var:.2e}, "
        f"oracle deviation mean {worst_mean_dev:.2e} var {worst_var_dev:.2e} (tol 1e-08)",
    )


# --- criterion 2: closed forms vs scale-and-shift MC ----------------------


def test_criterion_02_ei_pi_match_million_sample_mc():
    rng = np.random.default_rng(22)
    n = 1_000_000
    z = rng.standard_normal(n)
    worst = 0.0
    for _ in range(20):
        mu = float(rng.uniform(-2.0, 2.0))
        sd = float(rng.uniform(0.05, 2.0))
        y_star = mu + sd * float(rng.uniform(-1.5, 1.5))
        y = mu + sd * z
        imp = np.maximum(y_star - y, 0.0)
        hit = (y < y_star).astype(float)
        for closed, draws in (
            (float(ei_value(mu, sd**2, y_star)[0]), imp),
            (float(pi_value(mu, sd**2, y_star)[0]), hit),
        ):
            se = float(draws.std(ddof=1)) / np.sqrt(n)
            worst = max(worst, abs(closed - float(draws.mean())) / se)
    ok = worst <= 3.0
    _report(2, ok, f"20 states, 1e6 draws: worst |closed - MC| = {worst:.2f} SE (limit 3)")


# --- criterion 3: horizon-one identity -------------------------------------


def _toy_posterior(seed: int = 3):
    rng = np.random.default_rng(seed)
    X = rng.random((6, 2))
    y = np.sin(3.0 * X[:, 0]) + X[:, 1] ** 2
    spec = KernelSpec("matern52", np.array([0.4, 0.4]), amplitude=2.0, noise=1e-6)
    return posterior(Dataset(X, y, unit_box(2)), spec)


def test_criterion_03_horizon_one_estimator_reduces_to_ei():
    post = _toy_posterior()
    y_star = Incumbent.of(post.data).y_star
    rng = np.random.default_rng(33)
    vr_exact = VRConfig(covariates=("ei_first_step",), beta_mode=(1.0,))
    vr_plain = VRConfig(use_qmc=False, covariates=())
    worst_identity, worst_plain = 0.0, 0.0
    accepted = 0
    while accepted < 10:
        x = rng.random(2)
        mean, var = post.predict(x[None, :])
        ei = float(ei_value(mean, var, y_star)[0])
        if ei < 1e-3:
            # A candidate whose improvement probability is negligible makes
            # the MC comparison degenerate (all draws land at zero reward).
            continue
        t = accepted
        for vr_stream in (vr_exact, VRConfig(use_qmc=False, covariates=("ei_first_step",), beta_mode=(1.0,))):
            zmat = make_zmatrix(256, 1, vr_stream, seed=t)
            est = rollout_acquisition(post, x, RolloutConfig(1, 256, vr=vr_stream), zmat)
            worst_identity = max(worst_identity, abs(est.mean - ei))
        zmat = make_zmatrix(4096, 1, vr_plain, seed=100 + t)
        est = rollout_acquisition(post, x, RolloutConfig(1, 4096, vr=vr_plain), zmat)
        worst_plain = max(worst_plain, abs(est.mean - ei) / est.std_error)
        accepted += 1
    ok = worst_identity <= 1e-10 and worst_plain <= 3.0
    _report(
        3, ok,
        f"10 candidates: |CV(beta=1) - EI| = {worst_identity:.2e} (tol 1e-10), "
        f"plain estimate within {worst_plain:.2f} SE (limit 3)",
    )


# --- criteria 4-5: error-decay study on Ackley 2D --------------------------


@pytest.fixture(scope="session")
def ackley_error_study():
    return variance_study(
        objective_by_name("ackley2"),
        horizons=(2, 8),
        sample_sizes=tuple(range(100, 2001, 100)),
        trials=20,
        seed=0,
    )


def test_criterion_04_error_decay_slopes(ackley_error_study):
    study = ackley_error_study
    mc = float(study.slopes["mc"][0])
    reduced = float(study.slopes["qmc_cv"][0])
    ok = 0.4 <= mc <= 0.65 and reduced >= 0.75
    _report(
        4, ok,
        f"h=2 slopes: mc {mc:.3f} (need 0.40..0.65), reduced {reduced:.3f} (need >= 0.75)",
    )


def test_criterion_05_error_reduction_factors(ackley_error_study):
    study = ackley_error_study
    r2 = float(study.reduction["qmc_cv"][0])
    r8 = float(study.reduction["qmc_cv"][1])
    ok = r2 >= 30.0 and r8 >= 10.0
    _report(5, ok, f"error reduction: h=2 {r2:.1f}x (need >= 30), h=8 {r8:.1f}x (need >= 10)")


# --- criterion 6: estimator ordering on Rastrigin ---------------------------


def test_criterion_06_estimator_ordering_sign_test():
    study = variance_study(
        objective_by_name("rastrigin4"),
        horizons=(2,),
        sample_sizes=(2000,),
        trials=20,
        seed=0,
    )
    per_trial = {
        est: study.abs_errors[est][0, :, :, -1].mean(axis=1) for est in study.estimators
    }
    wins_a = int(np.sum(per_trial["mc"] > per_trial["qmc"]))
    wins_b = int(np.sum(per_trial["qmc"] > per_trial["qmc_cv"]))
    p_a = binomtest(wins_a, 20, alternative="greater").pvalue
    p_b = binomtest(wins_b, 20, alternative="greater").pvalue
    ok = p_a < 0.05 and p_b < 0.05
    _report(
        6, ok,
        f"mc>qmc {wins_a}/20 (p={p_a:.4f}), qmc>qmc_cv {wins_b}/20 (p={p_b:.4f}), need p<0.05",
    )


# --- criterion 7: shared streams shrink difference variance ----------------


def test_criterion_07_common_random_numbers_pair_variance():
    obj = objective_by_name("ackley2")
    bounds = obj.bounds
    rng = np.random.default_rng(77)
    X0 = bounds.from_unit(rng.random((8, 2)))
    y0 = np.array([eval_objective(obj, x) for x in X0])
    data = Dataset(X0, y0, bounds)
    post = posterior(data, fit_hyperparameters(data, "matern52", seed=7))

    vr = VRConfig(use_qmc=False, use_crn=False, covariates=())
    cfg = RolloutConfig(2, 64, vr=vr, inner_restarts=1, argmax_seed=0, ascent_iters=50)
    span = bounds.upper - bounds.lower
    centers = bounds.from_unit(0.05 + 0.9 * rng.random((20, 2)))
    wins = 0
    for pair in range(20):
        a = centers[pair]
        b = a.copy()
        b[pair % 2] += 0.02 * span[pair % 2]
        shared, indep = [], []
        for rep in range(12):
            s1, s2 = np.random.SeedSequence([777, pair, rep]).generate_state(2)
            za = make_zmatrix(64, 2, vr, seed=int(s1))
            zb = make_zmatrix(64, 2, vr, seed=int(s2))
            est_a = rollout_acquisition(post, a, cfg, za).mean
            shared.append(est_a - rollout_acquisition(post, b, cfg, za).mean)
            indep.append(est_a - rollout_acquisition(post, b, cfg, zb).mean)
        if np.var(shared, ddof=1) < np.var(indep, ddof=1):
            wins += 1
    ok = wins >= 16
    _report(7, ok, f"shared-stream variance smaller in {wins}/20 pairs (need >= 16)")


# --- criterion 8: rollout-EI vs EI on matched GP objectives -----------------

_MODEL_KERNEL = KernelSpec("matern52", np.array([0.2]), amplitude=1.0, noise=1e-6)


def _realized_reward(trace, n_init: int) -> float:
    y_init = min(r.y for r in trace.records[:n_init])
    return y_init - trace.final_best


def test_criterion_08_rollout_ei_dominates_plain_ei():
    template = gp_sampled(_MODEL_KERNEL, seed=0)
    common = dict(budget=7, seed=0, replications=200, fixed_kernel=_MODEL_KERNEL)
    cfg_ei = RunConfig(template, Method.single(AcquisitionKind.ei()), **common)
    cfg_ro = RunConfig(
        template, Method.rollout_ei(2), mc_samples=32,
        inner_restarts=1, ascent_iters=30, **common,
    )
    r_ei = np.array([_realized_reward(t, 2) for t in run_replications(cfg_ei)])
    r_ro = np.array([_realized_reward(t, 2) for t in run_replications(cfg_ro)])
    pooled = float(np.sqrt(r_ei.var(ddof=1) / 200 + r_ro.var(ddof=1) / 200))
    ok = float(r_ro.mean()) >= float(r_ei.mean()) - pooled
    _report(
        8, ok,
        f"mean realized reward: rollout h=2 {r_ro.mean():.4f}, EI {r_ei.mean():.4f}, "
        f"pooled SE {pooled:.4f} (need rollout >= EI - 1 SE)",
    )


# --- criterion 9: horizon ranking reverses under model mismatch ------------


def test_criterion_09_mismatch_reverses_horizon_ranking():
    study = mismatch_study(
        _MODEL_KERNEL,
        (
            ("matched", _MODEL_KERNEL),
            ("m32_l0.05", KernelSpec("matern32", np.array([0.05]), amplitude=1.0, noise=1e-6)),
        ),
        horizons=(1, 3),
        budget=7,
        replications=200,
        mc_samples=32,
        inner_restarts=1,
        ascent_iters=25,
    )
    (m1_match, m3_match), (m1_rough, m3_rough) = study.mean_best
    se_match = float(np.hypot(*study.std_errors[0]))
    se_rough = float(np.hypot(*study.std_errors[1]))
    ok_match = m3_match <= m1_match + se_match
    ok_rough = m1_rough <= m3_rough + se_rough
    ok = ok_match and ok_rough
    _report(
        9, ok,
        f"matched: h3 {m3_match:.4f} vs h1 {m1_match:.4f} (+{se_match:.4f} SE) "
        f"{'ok' if ok_match else 'violated'}; rough: h1 {m1_rough:.4f} vs h3 {m3_rough:.4f} "
        f"(+{se_rough:.4f} SE) {'ok' if ok_rough else 'violated'}",
    )


# --- criterion 10: policy search tracks its best member --------------------


def test_criterion_10_policy_search_matches_best_member():
    ackley = objective_by_name("ackley2")
    base = dict(budget=40, seed=0, replications=20, fit_starts=4)
    cfg_ps = RunConfig(
        ackley, Method.policy_search(2), mc_samples=32,
        inner_restarts=1, ascent_iters=40, **base,
    )
    ps_traces = run_replications(cfg_ps)
    assert not any(t.error for t in ps_traces)
    ps_median = float(np.median([t.final_best for t in ps_traces]))
    member_medians = {}
    for kind in PolicySet.default().members:
        traces = run_replications(RunConfig(ackley, Method.single(kind), **base))
        assert not any(t.error for t in traces)
        member_medians[kind.label] = float(np.median([t.final_best for t in traces]))
    best_label = min(member_medians, key=member_medians.get)
    best = member_medians[best_label]
    ok = ps_median <= 1.2 * best
    _report(
        10, ok,
        f"PS2 median {ps_median:.4f} vs best member {best_label} median {best:.4f} "
        f"(limit {1.2 * best:.4f})",
    )


# --- criterion 11: CLI determinism across thread counts --------------------

_TINY_KERNEL = {
    "family": "matern52", "lengthscales": [0.2], "amplitude": 1.0, "noise": 1e-6,
}

_TINY_CONFIGS = {
    "run-bo": {
        "label": "tiny_run", "objective": "branin",
        "method": {"kind": "single", "acquisition": "ei"},
        "budget": 5, "init_design": 3, "replications": 2, "fit_starts": 2, "seed": 0,
    },
    "policy-search": {
        "label": "tiny_ps", "objective": "ackley2", "horizon": 2,
        "budget": 6, "init_design": 4, "replications": 2, "mc_samples": 16,
        "inner_restarts": 1, "ascent_iters": 30, "fit_starts": 2,
        "policies": ["ei", "ucb-2"], "seed": 0,
    },
    "var-study": {
        "label": "tiny_vs", "objective": "ackley2", "horizons": [2],
        "sample_sizes": [64, 128], "trials": 2, "ground_truth_samples": 256,
        "inner_restarts": 1, "ascent_iters": 30, "seed": 0,
    },
    "mismatch": {
        "label": "tiny_mm", "model_kernel": _TINY_KERNEL,
        "truth_kernels": [["matched", _TINY_KERNEL]],
        "horizons": [1, 2], "budget": 4, "replications": 2, "mc_samples": 8,
        "inner_restarts": 1, "ascent_iters": 20, "seed": 0,
    },
    "demo": {"mc_samples": 60, "seed": 0},
}


def _tabular_bytes(root: Path) -> dict[str, bytes]:
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.suffix in (".csv", ".json")
    }


def test_criterion_11_cli_outputs_identical_across_threads(tmp_path_factory):
    base = tmp_path_factory.mktemp("determinism")
    compared = 0
    for command, cfg in _TINY_CONFIGS.items():
        cfg_path = base / f"{command}.json"
        cfg_path.write_text(json.dumps(cfg))
        outs = []
        for tag, threads in (("a", "1"), ("b", "3")):
            out = base / f"{command}_{tag}"
            rc = main([
                command, "--config", str(cfg_path), "--out", str(out),
                "--seed", "0", "--threads", threads,
            ])
            assert rc == 0, f"{command} exited {rc}"
            outs.append(_tabular_bytes(out))
        assert outs[0], f"{command} wrote no CSV/JSON output"
        assert outs[0] == outs[1], f"{command} outputs differ across thread counts"
        compared += len(outs[0])
    _report(11, True, f"5 subcommands, {compared} CSV/JSON files bitwise-identical at --threads 1 vs 3")
