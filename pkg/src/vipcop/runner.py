"""Experiment orchestration and persistence.

A cell is one (dataset, setting, method) combination; its artifacts live
under ``out/<dataset>/<setting>/<method>/``: a ``row.json`` report row,
plus ``run.json`` and ``trajectory.csv`` for engine runs. Rows are never
rewritten unless forced, which makes benchmark sweeps resumable.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from .baselines import BaselineSpec, run_baseline
from .config import ConfigError
from .engine import EngineConfig, ItemUniverse, optimize
from .evaluators import (
    AdditiveOracle,
    BridgeEvaluator,
    BridgePool,
    Budget,
    ContextSelection,
    Evaluator,
    KnnEvaluator,
    full_selection,
    score_subset,
)
from .service.schemas import (
    ALL_BASELINES,
    SETTING_NOISE_KINDS,
    ExperimentConfig,
    ReportRow,
    RunSummary,
    StatsBundle,
    resolve_method,
)
from .stats import (
    ScoreMatrix,
    average_ranks,
    critical_difference,
    improvement_report,
    pairwise_p_matrix,
)
from .tables import SplitSpec, Table, load_csv, split
from .transforms import AugmentSpec, NoiseSpec, augment_features, augment_samples, inject_noise


def dataset_name(config: ExperimentConfig) -> str:
    return config.name or Path(config.dataset).stem


def prepare_tables(config: ExperimentConfig) -> tuple[Table, Table, Table]:
    """Load, split, and transform: the setting transform touches only the
    training split; validation and test stay original."""
    table = load_csv(config.dataset, config.label)
    spec = SplitSpec(
        train_fraction=config.split.train,
        val_fraction=config.split.val,
        test_fraction=config.split.test,
        seed=config.seed,
        stratified=config.split.stratified,
    )
    train, val, test = split(table, spec)
    train = apply_setting(train, config)
    return train, val, test


def apply_setting(train: Table, config: ExperimentConfig) -> Table:
    setting = config.setting
    if setting == "original":
        return train
    if setting == "da_sample":
        return augment_samples(
            train,
            AugmentSpec("sample_affine", target_n=config.augment.target_n, seed=config.seed),
        )
    if setting == "da_feature":
        return augment_features(
            train,
            AugmentSpec(
                "feature_projection", target_d=config.augment.target_d, seed=config.seed
            ),
        )
    kind = config.noise.kind or SETTING_NOISE_KINDS[setting]
    return inject_noise(
        train, NoiseSpec(kind, drop_fraction=config.noise.drop_fraction, seed=config.seed)
    )


def build_budget(config: ExperimentConfig) -> Budget:
    return Budget(max_samples=config.budget.samples, max_features=config.budget.features)


def build_evaluator(config: ExperimentConfig, budget: Budget) -> Evaluator:
    spec = config.evaluator
    capacity = budget if spec.enforce_capacity else None
    if spec.kind == "knn":
        return KnnEvaluator(k=spec.k, capacity=capacity)
    if spec.kind == "oracle":
        return AdditiveOracle(
            sample_weights=None if spec.sample_weights is None else np.array(spec.sample_weights),
            feature_weights=None
            if spec.feature_weights is None
            else np.array(spec.feature_weights),
            base=spec.base,
            noise_sd=spec.noise_sd,
            seed=config.seed,
            capacity=capacity,
        )
    if spec.connections > 1:
        return BridgePool(
            spec.bridge_cmd,
            connections=spec.connections,
            timeout=spec.timeout,
            capacity=capacity,
        )
    return BridgeEvaluator(spec.bridge_cmd, timeout=spec.timeout, capacity=capacity)


def build_engine_config(config: ExperimentConfig) -> EngineConfig:
    e = config.engine
    metric = "balanced_accuracy" if e.metric in ("bacc", "balanced_accuracy") else "auroc"
    return EngineConfig(
        rounds=e.rounds,
        eta=e.eta,
        batch=e.batch,
        learning_rate=e.learning_rate,
        seed=config.seed,
        metric=metric,
        intercept=e.intercept,
        class_coverage_fixup=e.class_coverage_fixup,
        parallel_eval=e.parallel_eval,
        early_stop=e.early_stop,
    )


def cell_dir(config: ExperimentConfig, method: str) -> Path:
    return Path(config.out) / dataset_name(config) / config.setting / method


def _write_row(directory: Path, row: ReportRow) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "row.json").write_text(row.model_dump_json(indent=1), encoding="utf-8")


def _selection_payload(selection: ContextSelection) -> dict:
    return {
        "sample_indices": selection.sample_indices.tolist(),
        "feature_indices": selection.feature_indices.tolist(),
    }


def run_optimize_experiment(
    config: ExperimentConfig,
) -> tuple[ReportRow, list[RunSummary], str]:
    """Full engine pipeline for one cell, with artifacts persisted."""
    started = time.perf_counter()
    train, val, test = prepare_tables(config)
    budget = build_budget(config)
    engine_config = build_engine_config(config)
    directory = cell_dir(config, "vipcop")

    with build_evaluator(config, budget) as evaluator:
        if ItemUniverse.from_table(train, budget).size == 0:
            # nothing exceeds the budget: the full table is the context
            selection = full_selection(train)
            results = []
        else:
            selection, results = optimize(train, val, evaluator, budget, engine_config)
        test_score = score_subset(evaluator, train, selection, test, "balanced_accuracy")

    elapsed = time.perf_counter() - started
    winner_index = None
    if results:
        candidates = [r for r in results if r.error is None]
        best = max(r.estimated_val for r in candidates)
        winner_index = next(
            i for i, r in enumerate(results) if r.error is None and r.estimated_val == best
        )

    injected_fraction = None
    if train.injected_rows is not None:
        injected_fraction = float(train.injected_rows[selection.sample_indices].mean())

    row = ReportRow(
        dataset=dataset_name(config),
        method="vipcop",
        setting=config.setting,
        score=float(test_score),
        context_size=selection.n_samples,
        wall_time=elapsed,
        seed=config.seed,
        details={
            "n_features": selection.n_features,
            "estimated_val": None if winner_index is None else results[winner_index].estimated_val,
            "winner_temperature": None if winner_index is None else results[winner_index].tau,
            "injected_fraction": injected_fraction,
            "metric": engine_config.metric,
        },
    )

    directory.mkdir(parents=True, exist_ok=True)
    _write_row(directory, row)
    run_payload = {
        "config": config.model_dump(),
        "winner_index": winner_index,
        "selection": _selection_payload(selection),
        "test_score": float(test_score),
        "elapsed_seconds": elapsed,
        "runs": [
            {
                "tau": r.tau,
                "estimated_val": r.estimated_val,
                "rounds_completed": r.rounds_completed,
                "error": r.error,
                "trajectory": [float(v) for v in r.trajectory],
                "round_seconds": [float(s) for s in r.round_seconds],
                "intercept": r.intercept,
                "values": [round(float(v), 8) for v in r.values],
                "selection": None if r.selection is None else _selection_payload(r.selection),
            }
            for r in results
        ],
    }
    (directory / "run.json").write_text(json.dumps(run_payload, indent=1), encoding="utf-8")
    if winner_index is not None:
        _write_trajectory(directory / "trajectory.csv", results[winner_index])

    summaries = [
        RunSummary(
            tau=r.tau,
            estimated_val=r.estimated_val,
            rounds_completed=r.rounds_completed,
            error=r.error,
        )
        for r in results
    ]
    return row, summaries, str(directory)


def _write_trajectory(path: Path, result) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "best_so_far", "elapsed_seconds"])
        elapsed = 0.0
        for t, (best, seconds) in enumerate(zip(result.trajectory, result.round_seconds)):
            elapsed += seconds
            writer.writerow([t, repr(float(best)), repr(elapsed)])


def run_baseline_experiment(config: ExperimentConfig, method: str) -> tuple[list[ReportRow], str]:
    """One baseline (or 'all') on one prepared dataset cell."""
    if method == "all":
        methods = list(ALL_BASELINES)
    else:
        resolved = resolve_method(method)
        if resolved == "vipcop":
            raise ConfigError("use the optimize command for the engine method")
        methods = [resolved]

    train, val, test = prepare_tables(config)
    budget = build_budget(config)
    rows = []
    for kind in methods:
        b = config.baseline
        spec = BaselineSpec(
            kind=kind,
            runs=b.runs,
            backoff=b.backoff,
            inits=b.inits,
            min_leaf=b.min_leaf,
            max_depth=b.max_depth,
            top_splits=b.top_splits,
            seed=config.seed,
        )
        with build_evaluator(config, budget) as evaluator:
            report = run_baseline(train, val, test, evaluator, budget, spec)
        row = ReportRow(
            dataset=dataset_name(config),
            method=kind,
            setting=config.setting,
            score=report.score,
            context_size=report.context_size,
            wall_time=report.wall_time,
            seed=report.seed,
            per_run_scores=report.per_run_scores,
            details=report.details,
        )
        _write_row(cell_dir(config, kind), row)
        rows.append(row)
    out_root = str(Path(config.out) / dataset_name(config) / config.setting)
    return rows, out_root


def load_report_rows(results_dir: str | Path) -> list[ReportRow]:
    rows = []
    for path in sorted(Path(results_dir).glob("*/*/*/row.json")):
        rows.append(ReportRow.model_validate_json(path.read_text(encoding="utf-8")))
    return rows


def build_stats_bundle(
    rows: list[ReportRow], permutations: int = 100_000, seed: int = 0, alpha: float = 0.05
) -> StatsBundle | None:
    """Assemble the cross-dataset comparison from report rows.

    Datasets are (dataset, setting) cells; only cells with a score for
    every method enter the matrix, the rest are reported as skipped.
    """
    methods = sorted({row.method for row in rows})
    if len(methods) < 2:
        return None
    cells: dict[str, dict[str, float]] = {}
    for row in rows:
        cells.setdefault(f"{row.dataset}/{row.setting}", {})[row.method] = row.score
    complete = {k: v for k, v in cells.items() if len(v) == len(methods)}
    skipped = sorted(set(cells) - set(complete))
    if not complete:
        return None
    datasets = sorted(complete)
    scores = np.array([[complete[d][m] for m in methods] for d in datasets])
    matrix = ScoreMatrix(scores=scores, dataset_ids=tuple(datasets), method_ids=tuple(methods))

    ranks = average_ranks(matrix)
    cd = None
    if len(datasets) >= 2 and 2 <= len(methods) <= 10:
        cd = critical_difference(len(methods), len(datasets), alpha=alpha)
    if len(datasets) >= 2:
        pairwise = pairwise_p_matrix(matrix, permutations=permutations, seed=seed)
    else:
        # a single comparable cell admits no permutation distribution
        pairwise = np.ones((len(methods), len(methods)))
    improvement = (
        improvement_report(matrix, "vipcop") if "vipcop" in methods else {}
    )
    return StatsBundle(
        methods=methods,
        datasets=datasets,
        average_ranks={m: float(r) for m, r in zip(methods, ranks)},
        critical_difference=cd,
        alpha=alpha,
        pairwise_p=[[float(v) for v in row] for row in pairwise],
        improvement=improvement,
        notes={
            "skipped_incomplete_cells": skipped,
            "test": "two-sided paired sign-flip permutation",
            "permutations": permutations,
        },
    )


def write_stats_outputs(out_dir: str | Path, bundle: StatsBundle) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bench_stats.json").write_text(bundle.model_dump_json(indent=1), "utf-8")

    with (out_dir / "rank_table.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "average_rank"])
        for method in bundle.methods:
            writer.writerow([method, bundle.average_ranks[method]])

    lines = [
        "# Benchmark summary",
        "",
        f"Datasets compared: {len(bundle.datasets)}",
        f"Critical difference (alpha={bundle.alpha}): "
        + (f"{bundle.critical_difference:.4f}" if bundle.critical_difference else "n/a"),
        "",
        "## Average ranks (lower is better)",
        "",
        "| method | rank |",
        "|---|---|",
    ]
    for method in sorted(bundle.methods, key=lambda m: bundle.average_ranks[m]):
        lines.append(f"| {method} | {bundle.average_ranks[method]:.3f} |")
    lines += ["", "## Pairwise p-values", "", "| | " + " | ".join(bundle.methods) + " |", "|" + "---|" * (len(bundle.methods) + 1)]
    for i, method in enumerate(bundle.methods):
        cells = " | ".join(f"{bundle.pairwise_p[i][j]:.4g}" for j in range(len(bundle.methods)))
        lines.append(f"| {method} | {cells} |")
    if bundle.improvement:
        lines += ["", "## Mean % improvement of vipcop", "", "| baseline | improvement % | excluded |", "|---|---|---|"]
        for method, info in bundle.improvement.items():
            lines.append(
                f"| {method} | {info['mean_improvement_pct']:.2f} | {int(info['excluded_cells'])} |"
            )
    (out_dir / "bench_summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def collect_time_performance(results_dir: str | Path) -> list[dict]:
    """Aggregate persisted trajectories into per-cell time/performance rows."""
    out = []
    for path in sorted(Path(results_dir).glob("*/*/vipcop/trajectory.csv")):
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        last = rows[-1]
        out.append(
            {
                "cell": str(path.parent.parent.relative_to(results_dir)),
                "rounds": len(rows),
                "best_so_far": float(last["best_so_far"]),
                "elapsed_seconds": float(last["elapsed_seconds"]),
            }
        )
    return out


def run_bench(
    configs: list[ExperimentConfig],
    jobs: int = 1,
    force: bool = False,
    out: str | None = None,
    permutations: int = 100_000,
) -> tuple[list[ReportRow], list[str], StatsBundle | None, str]:
    """Engine plus every configured baseline for every config, then stats.

    Existing report rows are reused unless ``force``; failures are recorded
    per cell and do not stop the sweep.
    """
    if not configs:
        raise ConfigError("no experiment configs to run")
    if out is not None:
        configs = [c.model_copy(update={"out": out}) for c in configs]
    out_root = configs[0].out

    work: list[tuple[ExperimentConfig, str]] = []
    rows: list[ReportRow] = []
    for config in configs:
        for method in ["vipcop"] + list(config.baselines):
            row_path = cell_dir(config, method) / "row.json"
            if row_path.exists() and not force:
                rows.append(ReportRow.model_validate_json(row_path.read_text("utf-8")))
            else:
                work.append((config, method))

    failures: list[str] = []

    def run_cell(config: ExperimentConfig, method: str) -> ReportRow:
        if method == "vipcop":
            row, _, _ = run_optimize_experiment(config)
            return row
        cell_rows, _ = run_baseline_experiment(config, method)
        return cell_rows[0]

    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(run_cell, config, method): (config, method)
                for config, method in work
            }
            for future in as_completed(futures):
                config, method = futures[future]
                try:
                    rows.append(future.result())
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    failures.append(f"{dataset_name(config)}/{config.setting}/{method}: {exc}")
    else:
        for config, method in work:
            try:
                rows.append(run_cell(config, method))
            except Exception as exc:  # noqa: BLE001 - cell isolation
                failures.append(f"{dataset_name(config)}/{config.setting}/{method}: {exc}")

    bundle = build_stats_bundle(rows, permutations=permutations)
    if bundle is not None:
        write_stats_outputs(out_root, bundle)
    return rows, failures, bundle, out_root
