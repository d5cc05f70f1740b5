"""CSV, JSON, and SVG emission for runs and studies.

Output bytes depend only on the results passed in: floats print via repr
(shortest round-trip form), JSON keys are sorted, and SVGs are written with
a fixed hash salt and no date metadata. Running with a different thread
count therefore leaves every file unchanged.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .harness import DemoResult, MismatchStudy, RunTrace, VarianceStudy

_SVG_SALT = "rollout-bo"


def emit_outputs(result, out_dir, label: str | None = None) -> list[Path]:
    """Write the files describing a run or study under out_dir.

    Accepts a RunTrace, a sequence of them, a VarianceStudy, a
    MismatchStudy, or a DemoResult; returns the paths written. IO failures
    carry the offending path in the message.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if isinstance(result, RunTrace):
        return emit_run([result], out, label)
    if isinstance(result, VarianceStudy):
        return emit_variance_study(result, out, label)
    if isinstance(result, MismatchStudy):
        return emit_mismatch_study(result, out, label)
    if isinstance(result, DemoResult):
        return emit_demo(result, out)
    if isinstance(result, (list, tuple)) and result and all(
        isinstance(t, RunTrace) for t in result
    ):
        return emit_run(list(result), out, label)
    raise TypeError(f"no emitter for {type(result).__name__}")


def _cell(value) -> str:
    """One CSV field; empty for missing, repr for floats so parsing is exact."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not np.isfinite(value):
        return ""
    return repr(value)


def _write_rows(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _jsonable(value):
    """Recursively convert to JSON-safe types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def _write_json(path: Path, payload) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    try:
        path.write_text(text + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _save_svg(fig: Figure, path: Path) -> Path:
    fig.tight_layout()
    try:
        with matplotlib.rc_context({"svg.hashsalt": _SVG_SALT}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_run(traces: list[RunTrace], out: Path, label: str | None = None) -> list[Path]:
    """Per-replication CSVs, an aggregate curve, a JSON summary, and a plot."""
    label = label or "run"
    dim = len(traces[0].records[0].x) if traces[0].records else 0
    header = (
        ["iteration"] + [f"x{i}" for i in range(dim)]
        + ["y", "best_so_far", "wall_ms", "policy", "estimate_mean", "estimate_se"]
    )
    paths = []
    for r, trace in enumerate(traces):
        rows = [
            [rec.iteration, *rec.x, rec.y, rec.best_so_far,
             rec.wall_ms, rec.policy, rec.estimate_mean, rec.estimate_se]
            for rec in trace.records
        ]
        paths.append(_write_rows(out / f"rep_{r:03d}.csv", header, rows))

    complete = [t for t in traces if t.error is None]
    agg_rows = []
    if complete:
        curves = np.array([[rec.best_so_far for rec in t.records] for t in complete])
        mean = curves.mean(axis=0)
        se = (
            curves.std(axis=0, ddof=1) / np.sqrt(len(complete))
            if len(complete) > 1 else np.full(curves.shape[1], np.nan)
        )
        agg_rows = [
            [i, mean[i], se[i], len(complete)] for i in range(curves.shape[1])
        ]
    paths.append(
        _write_rows(out / "aggregate.csv", ["iteration", "best_mean", "best_se", "n"], agg_rows)
    )

    usage = _policy_usage(complete)
    if usage is not None:
        paths.append(
            _write_rows(out / "policy_usage.csv", ["iteration", "policy", "fraction"], usage)
        )

    finals = [t.final_best for t in complete]
    summary = {
        "label": label,
        "replications": len(traces),
        "iterations": len(traces[0].records),
        "seeds": [t.seed for t in traces],
        "final_best": [t.final_best if t.error is None else None for t in traces],
        "regret": [t.regret for t in traces],
        "errors": {str(r): t.error for r, t in enumerate(traces) if t.error},
        "final_best_mean": float(np.mean(finals)) if finals else None,
        "final_best_se": (
            float(np.std(finals, ddof=1) / np.sqrt(len(finals))) if len(finals) > 1 else None
        ),
    }
    paths.append(_write_json(out / "summary.json", summary))

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.subplots()
    if complete:
        it = np.arange(curves.shape[1])
        ax.plot(it, mean, color="tab:blue", label="mean best")
        if len(complete) > 1:
            ax.fill_between(it, mean - se, mean + se, color="tab:blue", alpha=0.25,
                            linewidth=0, label="±1 SE")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best observed value")
    ax.set_title(f"{label} ({len(complete)} of {len(traces)} replications)")
    if complete:
        ax.legend(loc="upper right")
    paths.append(_save_svg(fig, out / "best_curve.svg"))
    return paths


def _policy_usage(traces: list[RunTrace]):
    """Per-iteration pick fractions, or None when no trace records policies."""
    labels = sorted({rec.policy for t in traces for rec in t.records if rec.policy})
    if not labels or not traces:
        return None
    length = len(traces[0].records)
    rows = []
    for i in range(length):
        picks = [t.records[i].policy for t in traces if t.records[i].policy]
        if not picks:
            continue
        for lab in labels:
            rows.append([i, lab, picks.count(lab) / len(picks)])
    return rows


def emit_variance_study(study: VarianceStudy, out: Path, label: str | None = None) -> list[Path]:
    """Error curves per horizon and estimator, their decay rates, and a plot."""
    rows = [
        [h, est, n, study.mean_errors[est][i, j]]
        for i, h in enumerate(study.horizons)
        for est in study.estimators
        for j, n in enumerate(study.sample_sizes)
    ]
    paths = [
        _write_rows(
            out / "curves.csv", ["horizon", "estimator", "samples", "mean_abs_error"], rows
        )
    ]

    summary = {
        "label": label or "variance-study",
        "horizons": list(study.horizons),
        "sample_sizes": list(study.sample_sizes),
        "estimators": list(study.estimators),
        "slopes": {est: study.slopes[est] for est in study.estimators},
        "reduction": {est: study.reduction[est] for est in study.reduction},
        "truths": study.truths,
    }
    paths.append(_write_json(out / "summary.json", summary))

    colors = {"mc": "tab:gray", "qmc": "tab:orange", "qmc_cv": "tab:blue"}
    n_panels = len(study.horizons)
    fig = Figure(figsize=(4.0 * n_panels, 3.4))
    axes = fig.subplots(1, n_panels, squeeze=False)[0]
    for i, (h, ax) in enumerate(zip(study.horizons, axes)):
        for est in study.estimators:
            ax.loglog(
                study.sample_sizes, study.mean_errors[est][i],
                marker="o", markersize=3, color=colors.get(est), label=est,
            )
        ax.set_title(f"horizon {h}")
        ax.set_xlabel("samples")
        if i == 0:
            ax.set_ylabel("mean |error|")
            ax.legend()
    paths.append(_save_svg(fig, out / "error_curves.svg"))
    return paths


def emit_mismatch_study(study: MismatchStudy, out: Path, label: str | None = None) -> list[Path]:
    """Mean final best per truth kernel and horizon, with a ranking plot."""
    rows = [
        [truth, h, study.mean_best[t, i], study.std_errors[t, i]]
        for t, truth in enumerate(study.truth_labels)
        for i, h in enumerate(study.horizons)
    ]
    paths = [
        _write_rows(out / "results.csv", ["truth", "horizon", "mean_best", "std_error"], rows)
    ]

    summary = {
        "label": label or "mismatch",
        "truths": list(study.truth_labels),
        "horizons": list(study.horizons),
        "replications": study.replications,
        "mean_best": study.mean_best,
        "std_error": study.std_errors,
    }
    paths.append(_write_json(out / "summary.json", summary))

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.subplots()
    for t, truth in enumerate(study.truth_labels):
        se = study.std_errors[t]
        yerr = None if np.isnan(se).any() else se
        ax.errorbar(
            study.horizons, study.mean_best[t], yerr=yerr,
            marker="o", markersize=4, capsize=3, label=truth,
        )
    ax.set_xlabel("rollout horizon")
    ax.set_ylabel("mean final best value")
    ax.set_xticks(list(study.horizons))
    ax.legend()
    paths.append(_save_svg(fig, out / "mismatch.svg"))
    return paths


def emit_demo(demo: DemoResult, out: Path) -> list[Path]:
    """One annotated panel per method plus a JSON record of the picks."""
    paths = []
    summary = {
        "observations": {"x": demo.data_x[:, 0], "y": demo.data_y},
        "methods": [p.label for p in demo.panels],
        "picks": {p.label: p.picks[:, 0] for p in demo.panels},
        "pick_values": {p.label: p.pick_values for p in demo.panels},
    }
    paths.append(_write_json(out / "demo.json", summary))

    grid = demo.grid[:, 0]
    band = 2.0 * demo.sd
    for panel in demo.panels:
        fig = Figure(figsize=(5.0, 3.6))
        ax = fig.subplots()
        ax.plot(grid, demo.truth, color="black", linestyle="--", linewidth=1.0,
                label="objective")
        ax.plot(grid, demo.mean, color="tab:blue", label="posterior mean")
        ax.fill_between(grid, demo.mean - band, demo.mean + band,
                        color="tab:blue", alpha=0.2, linewidth=0, label="±2 sd")
        ax.plot(demo.data_x[:, 0], demo.data_y, "ko", markersize=5, label="observed")
        for step, (x, y) in enumerate(zip(panel.picks[:, 0], panel.pick_values), start=1):
            ax.plot([x], [y], "r*", markersize=11)
            ax.annotate(str(step), (x, y), textcoords="offset points",
                        xytext=(6, 6), color="tab:red")
        ax.set_title(panel.label)
        ax.set_xlabel("x")
        ax.set_ylabel("f(x)")
        ax.legend(loc="upper left", fontsize=8)
        name = panel.label.lower().replace(" ", "_").replace("-", "_")
        paths.append(_save_svg(fig, out / f"demo_{name}.svg"))
    return paths
