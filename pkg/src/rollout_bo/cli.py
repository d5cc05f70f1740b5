"""Command-line surface: seeded runs, the two studies, and the demo.

Every subcommand reads a JSON config, writes its files under --out, and
exits 0 on success, 2 on a configuration problem, and 3 on a numerical
failure. Outputs are bitwise-reproducible for a given config and seed
regardless of --threads; --timings adds wall-clock columns and is the one
switch that breaks that guarantee.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .acquisitions import AcquisitionKind
from .gp import NumericalError
from .harness import (
    Method,
    RunConfig,
    default_mismatch_kernels,
    demo_scenario,
    mismatch_study,
    run_replications,
    variance_study,
)
from .kernels import KernelSpec
from .objectives import ObjectiveSpec, gp_sampled, objective_by_name
from .policy_search import PolicySet
from .reporting import emit_outputs

logger = logging.getLogger(__name__)

PAPER_TRIALS = 50
DESK_TRIALS = 20
PAPER_MISMATCH_REPS = 2000
DESK_MISMATCH_REPS = 200


class ConfigError(Exception):
    """Unusable configuration; the process exits with code 2."""


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _parse_acquisition(text) -> AcquisitionKind:
    key = str(text).strip().lower()
    simple = {"ei": AcquisitionKind.ei, "pi": AcquisitionKind.pi, "kg": AcquisitionKind.kg}
    if key in simple:
        return simple[key]()
    if key.startswith("ucb"):
        tail = key[4:] if key.startswith("ucb-") else key[3:]
        try:
            return AcquisitionKind.ucb(float(tail))
        except ValueError:
            pass
    raise ConfigError(f"unknown acquisition {text!r}; expected ei, pi, kg, or ucb-<kappa>")


def _parse_kernel(raw) -> KernelSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"kernel must be an object, got {type(raw).__name__}")
    try:
        return KernelSpec(
            _require(raw, "family"),
            _require(raw, "lengthscales"),
            amplitude=raw.get("amplitude", 1.0),
            noise=raw.get("noise", 0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"bad kernel: {exc}") from exc


def _parse_objective(raw) -> ObjectiveSpec:
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict):
        raise ConfigError(f"objective must be a name or an object, got {type(raw).__name__}")
    name = str(_require(raw, "name")).strip().lower()
    noise_sd = float(raw.get("noise_sd", 0.0))
    try:
        if name == "gp_sampled":
            kernel = _parse_kernel(_require(raw, "kernel"))
            return gp_sampled(kernel, seed=int(raw.get("seed", 0)), noise_sd=noise_sd)
        if "dim" in raw:
            name = f"{name}{int(raw['dim'])}"
        return objective_by_name(name, noise_sd=noise_sd)
    except ValueError as exc:
        raise ConfigError(f"bad objective: {exc}") from exc


def _parse_method(raw) -> Method:
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        raise ConfigError(f"method must be a kind or an object, got {type(raw).__name__}")
    kind = str(raw.get("kind", "")).strip().lower()
    try:
        if kind in ("random", "random_search"):
            return Method.random_search()
        if kind == "single":
            return Method.single(_parse_acquisition(raw.get("acquisition", "ei")))
        if kind == "rollout_ei":
            return Method.rollout_ei(int(raw.get("horizon", 2)))
        if kind == "policy_search":
            return Method.policy_search(int(raw.get("horizon", 2)))
    except ValueError as exc:
        raise ConfigError(f"bad method: {exc}") from exc
    raise ConfigError(
        f"unknown method kind {raw.get('kind')!r}; expected random_search, single, "
        "rollout_ei, or policy_search"
    )


def _parse_policies(raw) -> PolicySet:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError("policies must be a non-empty list of acquisition names")
    return PolicySet(tuple(_parse_acquisition(t) for t in raw))


def _run_config(cfg: dict, args, method: Method | None = None) -> RunConfig:
    default_reps = PAPER_TRIALS if args.paper_scale else DESK_TRIALS
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    kwargs = {}
    if "fixed_kernel" in cfg:
        kwargs["fixed_kernel"] = _parse_kernel(cfg["fixed_kernel"])
    if "policies" in cfg:
        kwargs["policies"] = _parse_policies(cfg["policies"])
    for key in ("inner_restarts", "ascent_iters", "fit_starts"):
        if key in cfg:
            kwargs[key] = int(cfg[key])
    init = cfg.get("init_design")
    samples = cfg.get("mc_samples")
    try:
        return RunConfig(
            _parse_objective(_require(cfg, "objective")),
            method or _parse_method(_require(cfg, "method")),
            int(_require(cfg, "budget")),
            init_design=None if init is None else int(init),
            mc_samples=None if samples is None else int(samples),
            seed=seed,
            replications=int(cfg.get("replications", default_reps)),
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(f"bad run config: {exc}") from exc


def _emit(result, args, label) -> None:
    files = emit_outputs(result, args.out, label=label)
    for path in files:
        logger.info("wrote %s", path)


def _cmd_run_bo(args, cfg: dict, method: Method | None = None) -> int:
    run_cfg = _run_config(cfg, args, method)
    traces = run_replications(run_cfg, threads=args.threads, timings=args.timings)
    _emit(traces, args, cfg.get("label", run_cfg.method.label))
    failed = [t for t in traces if t.error]
    for trace in failed:
        logger.error("replication with seed %d failed: %s", trace.seed, trace.error)
    return 3 if failed else 0


def _cmd_policy_search(args, cfg: dict) -> int:
    method = Method.policy_search(int(cfg.get("horizon", 2)))
    return _cmd_run_bo(args, cfg, method)


def _cmd_var_study(args, cfg: dict) -> int:
    default_trials = PAPER_TRIALS if args.paper_scale else DESK_TRIALS
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    try:
        study = variance_study(
            _parse_objective(_require(cfg, "objective")),
            horizons=tuple(cfg.get("horizons", (2, 4, 6, 8))),
            sample_sizes=tuple(cfg.get("sample_sizes", range(100, 2001, 100))),
            trials=int(cfg.get("trials", default_trials)),
            estimators=tuple(cfg.get("estimators", ("mc", "qmc", "qmc_cv"))),
            seed=seed,
            threads=args.threads,
            ground_truth_samples=int(cfg.get("ground_truth_samples", 10_000)),
            inner_restarts=int(cfg.get("inner_restarts", 3)),
            ascent_iters=int(cfg.get("ascent_iters", 200)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad study config: {exc}") from exc
    _emit(study, args, cfg.get("label", "variance study"))
    return 0


def _cmd_mismatch(args, cfg: dict) -> int:
    default_reps = PAPER_MISMATCH_REPS if args.paper_scale else DESK_MISMATCH_REPS
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    model, truths = default_mismatch_kernels()
    if "model_kernel" in cfg:
        model = _parse_kernel(cfg["model_kernel"])
    if "truth_kernels" in cfg:
        raw = cfg["truth_kernels"]
        if not isinstance(raw, (list, tuple)) or not raw:
            raise ConfigError("truth_kernels must be a non-empty list of [label, kernel] pairs")
        truths = tuple((str(label), _parse_kernel(spec)) for label, spec in raw)
    samples = cfg.get("mc_samples")
    try:
        study = mismatch_study(
            model,
            truths,
            horizons=tuple(cfg.get("horizons", (1, 2, 3, 4, 5))),
            budget=int(cfg.get("budget", 7)),
            replications=int(cfg.get("replications", default_reps)),
            mc_samples=None if samples is None else int(samples),
            seed=seed,
            threads=args.threads,
            inner_restarts=int(cfg.get("inner_restarts", 3)),
            ascent_iters=int(cfg.get("ascent_iters", 200)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad study config: {exc}") from exc
    _emit(study, args, cfg.get("label", "mismatch study"))
    return 0


def _cmd_demo(args, cfg: dict) -> int:
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    demo = demo_scenario(mc_samples=int(cfg.get("mc_samples", 400)), seed=seed)
    _emit(demo, args, cfg.get("label"))
    return 0


_COMMANDS = {
    "run-bo": _cmd_run_bo,
    "var-study": _cmd_var_study,
    "policy-search": _cmd_policy_search,
    "mismatch": _cmd_mismatch,
    "demo": _cmd_demo,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None,
                        help="base seed; overrides the config's value")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; never changes results")
    common.add_argument("--paper-scale", action="store_true",
                        help="paper-sized trial counts where the config does not set them")
    common.add_argument("--timings", action="store_true",
                        help="record wall-clock columns (breaks bitwise reproducibility)")

    parser = argparse.ArgumentParser(prog="rollout-bo",
                                     description="Non-myopic BO runs and studies")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run-bo", parents=[common],
                   help="seeded BO replications with any point-picking method")
    sub.add_parser("var-study", parents=[common],
                   help="estimator error curves against a high-sample truth")
    sub.add_parser("policy-search", parents=[common],
                   help="BO replications picking an acquisition each iteration")
    sub.add_parser("mismatch", parents=[common],
                   help="rollout-EI under matched and mismatched model kernels")
    sub.add_parser("demo", parents=[common],
                   help="two-step comparison of EI, KG, and rollout-EI on the 1D demo")
    return parser


def _load_config(args) -> dict:
    if args.config is None:
        if args.command == "demo":
            return {}
        raise ConfigError(f"{args.command} requires --config")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {args.config} must hold a JSON object")
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
