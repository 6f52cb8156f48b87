"""Comparison methods sharing the evaluator and budget with the engine.

Heuristics: random contexts averaged over runs, probability-level
ensembling of random contexts, and oversized context with multiplicative
backoff on capacity errors. Optimized: k-means representatives and
decision-tree routing / tree-based feature selection.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cluster import kmeans, nearest_unique_representatives
from .evaluators import (
    Budget,
    ContextCapacityError,
    ContextSelection,
    EvaluationError,
    Evaluator,
    score_subset,
)
from .metrics import balanced_accuracy
from .tables import Table
from .tree import collect_split_features, fit_tree, route

BASELINE_KINDS = ("random_mean", "ensemble", "xl_context", "kmeans_reps", "dt_router")


@dataclass(frozen=True)
class BaselineSpec:
    """Method choice plus its knobs; unset counts fall back to the
    method's default (15 runs for random_mean, 20 for ensemble, 5 inits)."""

    kind: str
    runs: int | None = None
    backoff: float = 0.9
    inits: int = 5
    min_leaf: int | None = None
    max_depth: int = 50
    top_splits: int = 3
    seed: int = 42

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.runs is not None and self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0.0 < self.backoff < 1.0:
            raise ValueError("backoff must lie in (0, 1)")
        if self.inits < 1:
            raise ValueError("inits must be >= 1")
        if self.min_leaf is not None and self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass
class BaselineReport:
    method: str
    score: float
    context_size: int
    wall_time: float
    seed: int
    per_run_scores: list[float] | None = None
    details: dict = field(default_factory=dict)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _random_context(
    train: Table, budget: Budget, rng: np.random.Generator
) -> ContextSelection:
    """Uniform context: subsample only the axes that exceed the budget."""
    n, d = train.n_rows, train.n_cols
    if n > budget.max_samples:
        samples = np.sort(rng.choice(n, size=budget.max_samples, replace=False))
    else:
        samples = np.arange(n)
    if d > budget.max_features:
        features = np.sort(rng.choice(d, size=budget.max_features, replace=False))
    else:
        features = np.arange(d)
    return ContextSelection(sample_indices=samples, feature_indices=features)


def random_mean(
    train: Table,
    val: Table,
    test: Table,
    evaluator: Evaluator,
    budget: Budget,
    spec: BaselineSpec,
) -> BaselineReport:
    """Mean test balanced accuracy over independent uniform contexts."""
    runs = spec.runs if spec.runs is not None else 15
    started = time.perf_counter()
    scores = []
    size = 0
    for r in range(runs):
        ctx = _random_context(train, budget, _stream(spec.seed, 0, r))
        size = ctx.n_samples
        scores.append(score_subset(evaluator, train, ctx, test, "balanced_accuracy"))
    return BaselineReport(
        method="random_mean",
        score=float(np.mean(scores)),
        context_size=size,
        wall_time=time.perf_counter() - started,
        seed=spec.seed,
        per_run_scores=[float(s) for s in scores],
        details={"runs": runs},
    )


def ensemble(
    train: Table,
    val: Table,
    test: Table,
    evaluator: Evaluator,
    budget: Budget,
    spec: BaselineSpec,
) -> BaselineReport:
    """Average member probabilities elementwise, then score once."""
    runs = spec.runs if spec.runs is not None else 20
    started = time.perf_counter()
    total = np.zeros((test.n_rows, train.class_count))
    member_scores = []
    size = 0
    for r in range(runs):
        ctx = _random_context(train, budget, _stream(spec.seed, 1, r))
        size = ctx.n_samples
        proba = evaluator.predict(train, ctx, test.x)
        member_scores.append(float(balanced_accuracy(proba, test.y)))
        total += proba
    averaged = total / runs
    return BaselineReport(
        method="ensemble",
        score=float(balanced_accuracy(averaged, test.y)),
        context_size=size,
        wall_time=time.perf_counter() - started,
        seed=spec.seed,
        per_run_scores=member_scores,
        details={"runs": runs},
    )


def xl_context(
    train: Table,
    val: Table,
    test: Table,
    evaluator: Evaluator,
    budget: Budget,
    spec: BaselineSpec,
) -> BaselineReport:
    """Feed the full training set; on capacity errors shrink the sample
    count to floor(backoff^k * n), resampling uniformly, until accepted."""
    started = time.perf_counter()
    n, d = train.n_rows, train.n_cols
    if d > budget.max_features:
        features = np.sort(
            _stream(spec.seed, 2).choice(d, size=budget.max_features, replace=False)
        )
    else:
        features = np.arange(d)
    samples = np.arange(n)
    retries = 0
    while True:
        ctx = ContextSelection(sample_indices=samples, feature_indices=features)
        try:
            score = score_subset(evaluator, train, ctx, test, "balanced_accuracy")
            break
        except ContextCapacityError:
            retries += 1
            size = int(n * spec.backoff**retries)
            if size < 1:
                raise EvaluationError(
                    "xl_context: capacity never satisfied, even at size 1"
                ) from None
            samples = np.sort(
                _stream(spec.seed, 3, retries).choice(n, size=size, replace=False)
            )
    return BaselineReport(
        method="xl_context",
        score=float(score),
        context_size=ctx.n_samples,
        wall_time=time.perf_counter() - started,
        seed=spec.seed,
        details={"retries": retries, "final_size": ctx.n_samples},
    )


def kmeans_reps(
    train: Table,
    val: Table,
    test: Table,
    evaluator: Evaluator,
    budget: Budget,
    spec: BaselineSpec,
) -> BaselineReport:
    """Cluster representatives: features first (k-means on the transposed
    matrix), then samples on the feature-reduced matrix; per stage the best
    of ``inits`` seeded initializations by validation balanced accuracy."""
    started = time.perf_counter()
    n, d = train.n_rows, train.n_cols
    details: dict = {}

    # a fixed subsample keeps feature-stage scoring within capacity
    if n > budget.max_samples:
        eval_samples = np.sort(
            _stream(spec.seed, 4).choice(n, size=budget.max_samples, replace=False)
        )
    else:
        eval_samples = np.arange(n)

    if d > budget.max_features:
        best_features = None
        best_score = -np.inf
        stage_scores = []
        for i in range(spec.inits):
            centers, _, _ = kmeans(train.x.T, budget.max_features, _stream(spec.seed, 5, i))
            picks = np.sort(nearest_unique_representatives(train.x.T, centers))
            ctx = ContextSelection(sample_indices=eval_samples, feature_indices=picks)
            val_score = score_subset(evaluator, train, ctx, val, "balanced_accuracy")
            stage_scores.append(float(val_score))
            if val_score > best_score:
                best_score = val_score
                best_features = picks
        features = best_features
        details["feature_init_scores"] = stage_scores
    else:
        features = np.arange(d)

    if n > budget.max_samples:
        reduced = train.x[:, features]
        best_samples = None
        best_score = -np.inf
        stage_scores = []
        for i in range(spec.inits):
            centers, _, _ = kmeans(reduced, budget.max_samples, _stream(spec.seed, 6, i))
            picks = np.sort(nearest_unique_representatives(reduced, centers))
            ctx = ContextSelection(sample_indices=picks, feature_indices=features)
            val_score = score_subset(evaluator, train, ctx, val, "balanced_accuracy")
            stage_scores.append(float(val_score))
            if val_score > best_score:
                best_score = val_score
                best_samples = picks
        samples = best_samples
        details["sample_init_scores"] = stage_scores
    else:
        samples = np.arange(n)

    ctx = ContextSelection(sample_indices=samples, feature_indices=features)
    score = score_subset(evaluator, train, ctx, test, "balanced_accuracy")
    return BaselineReport(
        method="kmeans_reps",
        score=float(score),
        context_size=ctx.n_samples,
        wall_time=time.perf_counter() - started,
        seed=spec.seed,
        details=details,
    )


def _routed_score(
    train: Table,
    queries: Table,
    evaluator: Evaluator,
    features: np.ndarray,
    tree_root,
    max_context: int,
) -> tuple[float, int]:
    """Score queries routed through the tree, each leaf using its own
    training rows (first ``max_context`` of them) as context."""
    proba = np.zeros((queries.n_rows, train.class_count))
    largest = 0
    for leaf, rows in route(tree_root, queries.x[:, features]):
        ctx_samples = leaf.indices[:max_context]
        largest = max(largest, ctx_samples.size)
        ctx = ContextSelection(sample_indices=ctx_samples, feature_indices=features)
        proba[rows] = evaluator.predict(train, ctx, queries.x[rows])
    return float(balanced_accuracy(proba, queries.y)), largest


def dt_router(
    train: Table,
    val: Table,
    test: Table,
    evaluator: Evaluator,
    budget: Budget,
    spec: BaselineSpec,
) -> BaselineReport:
    """Decision-tree context construction.

    When samples exceed the budget: a deterministic Gini tree with
    min_leaf at the sample budget routes every query to a leaf whose
    training rows form its context (features subsampled uniformly first
    if they exceed the budget). When only features exceed the budget:
    randomized top-gain trees propose split features level by level; the
    best of ``inits`` trees by validation balanced accuracy wins.
    """
    started = time.perf_counter()
    n, d = train.n_rows, train.n_cols
    details: dict = {}

    if n > budget.max_samples:
        if d > budget.max_features:
            features = np.sort(
                _stream(spec.seed, 7).choice(d, size=budget.max_features, replace=False)
            )
        else:
            features = np.arange(d)
        min_leaf = spec.min_leaf if spec.min_leaf is not None else budget.max_samples
        tree_root = fit_tree(
            train.x[:, features], train.y, train.class_count, min_leaf=min_leaf
        )
        score, largest = _routed_score(
            train, test, evaluator, features, tree_root, budget.max_samples
        )
        details.update(
            variant="sample_routing",
            n_leaves=len(route(tree_root, train.x[:, features])),
        )
        context_size = largest
    elif d > budget.max_features:
        best_feats = None
        best_score = -np.inf
        stage_scores = []
        samples = np.arange(n)
        for i in range(spec.inits):
            tree_root = fit_tree(
                train.x,
                train.y,
                train.class_count,
                min_leaf=1,
                max_depth=spec.max_depth,
                rng=_stream(spec.seed, 8, i),
                top_k_features=spec.top_splits,
            )
            feats = collect_split_features(tree_root, budget.max_features)
            if not feats:
                feats = list(range(min(d, budget.max_features)))
            feats = np.sort(np.array(feats, dtype=np.int64))
            ctx = ContextSelection(sample_indices=samples, feature_indices=feats)
            val_score = score_subset(evaluator, train, ctx, val, "balanced_accuracy")
            stage_scores.append(float(val_score))
            if val_score > best_score:
                best_score = val_score
                best_feats = feats
        ctx = ContextSelection(sample_indices=samples, feature_indices=best_feats)
        score = score_subset(evaluator, train, ctx, test, "balanced_accuracy")
        details.update(variant="feature_selection", init_scores=stage_scores)
        context_size = n
    else:
        ctx = ContextSelection(
            sample_indices=np.arange(n), feature_indices=np.arange(d)
        )
        score = score_subset(evaluator, train, ctx, test, "balanced_accuracy")
        details.update(variant="single_leaf")
        context_size = n

    return BaselineReport(
        method="dt_router",
        score=float(score),
        context_size=context_size,
        wall_time=time.perf_counter() - started,
        seed=spec.seed,
        details=details,
    )


_RUNNERS = {
    "random_mean": random_mean,
    "ensemble": ensemble,
    "xl_context": xl_context,
    "kmeans_reps": kmeans_reps,
    "dt_router": dt_router,
}


def run_baseline(
    train: Table,
    val: Table,
    test: Table,
    evaluator: Evaluator,
    budget: Budget,
    spec: BaselineSpec,
) -> BaselineReport:
    return _RUNNERS[spec.kind](train, val, test, evaluator, budget, spec)
