"""Context optimization by online least-squares value estimation.

Per-item importance values are fit by mini-batch SGD on scored context
subsets; subsets are drawn by temperature-scaled softmax importance
sampling from the current values; several temperature schedules run
independently and the selection with the best estimated validation
performance wins.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .evaluators import (
    Budget,
    ContextSelection,
    EvaluationError,
    Evaluator,
    score_subset,
)
from .tables import Table


class EngineError(RuntimeError):
    """Engine misconfiguration or unrecoverable optimization failure."""


@dataclass(frozen=True)
class ItemUniverse:
    """Index space of optimizable items.

    Samples are optimized only when the table has more rows than the
    budget allows, and likewise for features. Active sample items occupy
    item indices [0, n); active feature items follow.
    """

    n: int
    d: int
    max_samples: int
    max_features: int

    @classmethod
    def from_table(cls, table: Table, budget: Budget) -> "ItemUniverse":
        return cls(
            n=table.n_rows,
            d=table.n_cols,
            max_samples=budget.max_samples,
            max_features=budget.max_features,
        )

    @property
    def optimize_samples(self) -> bool:
        return self.n > self.max_samples

    @property
    def optimize_features(self) -> bool:
        return self.d > self.max_features

    @property
    def size(self) -> int:
        return self.n * self.optimize_samples + self.d * self.optimize_features

    @property
    def sample_slice(self) -> slice:
        return slice(0, self.n if self.optimize_samples else 0)

    @property
    def feature_slice(self) -> slice:
        start = self.n if self.optimize_samples else 0
        return slice(start, start + (self.d if self.optimize_features else 0))

    @property
    def sample_draw_count(self) -> int:
        return min(self.max_samples, self.n)

    @property
    def feature_draw_count(self) -> int:
        return min(self.max_features, self.d)

    def check(self) -> None:
        if self.size < 1:
            raise EngineError(
                "nothing to optimize: the table fits the context budget on both axes"
            )

    def selection_items(self, selection: ContextSelection) -> np.ndarray:
        """Item indices (into the value vector) covered by a selection."""
        parts = []
        if self.optimize_samples:
            parts.append(selection.sample_indices)
        if self.optimize_features:
            parts.append(self.feature_slice.start + selection.feature_indices)
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def membership_to_selection(self, membership: np.ndarray) -> ContextSelection:
        if self.optimize_samples:
            samples = np.flatnonzero(membership[self.sample_slice])
        else:
            samples = np.arange(self.n)
        if self.optimize_features:
            features = np.flatnonzero(membership[self.feature_slice])
        else:
            features = np.arange(self.d)
        return ContextSelection(sample_indices=samples, feature_indices=features)


@dataclass(frozen=True)
class EngineConfig:
    """Optimizer knobs. ``rounds`` is the SGD budget per temperature run."""

    rounds: int = 100
    eta: float = 2.0
    batch: int = 32
    learning_rate: float = 0.1
    seed: int = 42
    metric: str = "balanced_accuracy"
    intercept: bool = False
    class_coverage_fixup: bool = True
    parallel_eval: int = 1
    early_stop: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise EngineError("rounds must be >= 1")
        if self.batch < 1:
            raise EngineError("batch must be >= 1")
        if self.learning_rate <= 0:
            raise EngineError("learning_rate must be positive")
        if self.eta <= 1:
            raise EngineError("eta must exceed 1")
        if self.parallel_eval < 1:
            raise EngineError("parallel_eval must be >= 1")


@dataclass
class SubsetObservation:
    """One scored context: item membership bits plus its performance."""

    membership: np.ndarray
    performance: float
    run_id: int = 0
    round: int = 0
    slot: int = 0

    def check(self, universe: ItemUniverse) -> None:
        memb = np.asarray(self.membership, dtype=bool)
        if memb.shape != (universe.size,):
            raise EngineError("membership length does not match the item universe")
        if universe.optimize_samples:
            if memb[universe.sample_slice].sum() != universe.sample_draw_count:
                raise EngineError("membership has the wrong sample cardinality")
        if universe.optimize_features:
            if memb[universe.feature_slice].sum() != universe.feature_draw_count:
                raise EngineError("membership has the wrong feature cardinality")
        if not 0.0 <= self.performance <= 1.0:
            raise EngineError("performance must lie in [0, 1]")


@dataclass
class RunResult:
    """Outcome of one temperature run."""

    tau: float
    values: np.ndarray
    selection: ContextSelection | None
    estimated_val: float
    trajectory: list[float]
    round_seconds: list[float]
    rounds_completed: int
    intercept: float | None = None
    error: str | None = None


def temperature_schedule(rounds: int, eta: float) -> list[float]:
    """Descending temperatures eta^(2k - r_max) for k = r_max..0 where
    r_max = floor(log_eta(rounds)); the schedule has r_max + 1 entries."""
    if rounds < 1:
        raise EngineError("rounds must be >= 1")
    if eta <= 1:
        raise EngineError("eta must exceed 1")
    r_max = 0
    while eta ** (r_max + 1) <= rounds:
        r_max += 1
    return [float(eta ** (2 * k - r_max)) for k in range(r_max, -1, -1)]


def sampling_distribution(values: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-scaled softmax over item values, max-shifted for
    numerical stability."""
    if tau <= 0:
        raise EngineError("temperature must be positive")
    z = np.asarray(values, dtype=np.float64) / tau
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def _memberships_from_uniforms(
    probs: np.ndarray, universe: ItemUniverse, uniforms: np.ndarray
) -> np.ndarray:
    """Draw fixed-size subsets per kind via exponential keys.

    For kind-restricted, renormalized weights w the keys u^(1/w) are
    compared by their logs; the top-count keys form the subset, which
    realizes weighted sampling without replacement. ``uniforms`` has one
    row per subset to draw.
    """
    batch = uniforms.shape[0]
    memberships = np.zeros((batch, universe.size), dtype=bool)
    rows = np.arange(batch)[:, None]
    for sl, count in (
        (universe.sample_slice, universe.sample_draw_count),
        (universe.feature_slice, universe.feature_draw_count),
    ):
        width = sl.stop - sl.start
        if width == 0:
            continue
        if count >= width:
            memberships[:, sl] = True
            continue
        w = probs[sl]
        w = np.maximum(w / w.sum(), 1e-300)
        keys = np.log(np.maximum(uniforms[:, sl], 1e-300)) / w
        top = np.argpartition(keys, width - count, axis=1)[:, width - count :]
        memberships[rows, sl.start + top] = True
    return memberships


def draw_subset(
    probs: np.ndarray, universe: ItemUniverse, rng: np.random.Generator
) -> ContextSelection:
    """Sample one context: the required count per active kind, without
    replacement, with inclusion tendency proportional to the kind-restricted
    renormalized probabilities. Inactive kinds take every index."""
    uniforms = rng.random((1, universe.size))
    membership = _memberships_from_uniforms(probs, universe, uniforms)[0]
    return universe.membership_to_selection(membership)


def _sgd_arrays(
    values: np.ndarray,
    memberships: np.ndarray,
    performances: np.ndarray,
    learning_rate: float,
    intercept: float | None,
) -> tuple[np.ndarray, float | None]:
    batch = memberships.shape[0]
    design = memberships.astype(np.float64)
    residual = design @ values - performances
    if intercept is not None:
        residual = residual + intercept
    grad = (2.0 / batch) * (design.T @ residual)
    new_values = values - learning_rate * grad
    new_intercept = intercept
    if intercept is not None:
        new_intercept = intercept - learning_rate * (2.0 / batch) * residual.sum()
    return new_values, new_intercept


def sgd_step(
    values: np.ndarray,
    batch: list[SubsetObservation],
    learning_rate: float,
    intercept: float | None = None,
) -> tuple[np.ndarray, float | None]:
    """One mini-batch gradient step on the squared subset-score residuals."""
    if not batch:
        raise EngineError("sgd_step needs a non-empty batch")
    memberships = np.stack([np.asarray(o.membership, dtype=bool) for o in batch])
    performances = np.array([o.performance for o in batch], dtype=np.float64)
    return _sgd_arrays(
        np.asarray(values, dtype=np.float64),
        memberships,
        performances,
        learning_rate,
        intercept,
    )


def _kind_estimate(kind_values: np.ndarray, count: int) -> float:
    """Value sum of the would-be selection for one kind (ties do not
    affect the sum, so a partition suffices)."""
    if count >= kind_values.size:
        top = kind_values
    else:
        top = np.partition(kind_values, -count)[-count:]
    positive = top[top > 0]
    return float(positive.sum()) if positive.size else float(top.sum())


def _kind_select(kind_values: np.ndarray, count: int) -> np.ndarray:
    """Local indices of the selected items for one kind: the largest
    positive values capped at ``count``; all ties break toward the lowest
    index; a kind with no positive value falls back to top-count raw."""
    order = np.argsort(-kind_values, kind="stable")
    top = order[: min(count, order.size)]
    positive = top[kind_values[top] > 0]
    return np.sort(positive if positive.size else top)


def selection_estimate(
    values: np.ndarray, universe: ItemUniverse, intercept: float | None = None
) -> float:
    """Estimated validation performance of the current would-be selection."""
    total = 0.0 if intercept is None else float(intercept)
    if universe.optimize_samples:
        total += _kind_estimate(values[universe.sample_slice], universe.sample_draw_count)
    if universe.optimize_features:
        total += _kind_estimate(values[universe.feature_slice], universe.feature_draw_count)
    return total


def select_context(values: np.ndarray, universe: ItemUniverse) -> ContextSelection:
    """Per-kind top positive values capped at the kind budget."""
    if universe.optimize_samples:
        samples = _kind_select(values[universe.sample_slice], universe.sample_draw_count)
    else:
        samples = np.arange(universe.n)
    if universe.optimize_features:
        features = _kind_select(values[universe.feature_slice], universe.feature_draw_count)
    else:
        features = np.arange(universe.d)
    return ContextSelection(sample_indices=samples, feature_indices=features)


def class_coverage_fixup(
    selection: ContextSelection,
    train: Table,
    values: np.ndarray,
    universe: ItemUniverse,
) -> ContextSelection:
    """Swap in the best sample of every class missing from the selection.

    Missing classes are served in order of their best candidate's value;
    each one evicts the lowest-valued selected sample whose class keeps at
    least one other representative. Stops when no sample can be evicted
    (the budget then covers as many distinct classes as it can hold).
    """
    if not universe.optimize_samples:
        return selection
    sample_values = values[universe.sample_slice]
    selected = list(selection.sample_indices)
    covered = set(train.y[selection.sample_indices].tolist())
    present = set(np.unique(train.y).tolist())
    missing = [c for c in sorted(present) if c not in covered]
    if not missing:
        return selection

    def best_candidate(cls: int) -> int:
        rows = np.flatnonzero(train.y == cls)
        return int(rows[np.argmax(sample_values[rows])])

    missing.sort(key=lambda c: -sample_values[best_candidate(c)])
    for cls in missing:
        counts: dict[int, int] = {}
        for i in selected:
            counts[int(train.y[i])] = counts.get(int(train.y[i]), 0) + 1
        evictable = [i for i in selected if counts[int(train.y[i])] >= 2]
        if not evictable:
            break
        evict = min(evictable, key=lambda i: (sample_values[i], i))
        selected.remove(evict)
        selected.append(best_candidate(cls))
    return ContextSelection(
        sample_indices=np.array(sorted(selected)), feature_indices=selection.feature_indices
    )


def _round_rng(seed: int, run_index: int, round_index: int) -> np.random.Generator:
    """Positional sub-stream: one generator per (run, round); slot b of the
    round consumes row b of its uniform block, so dispatch order cannot
    change results."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(run_index, round_index))
    )


def run_single(
    train: Table,
    val: Table,
    evaluator: Evaluator,
    budget: Budget,
    config: EngineConfig,
    tau: float,
    run_index: int = 0,
    universe: ItemUniverse | None = None,
    initial_values: np.ndarray | None = None,
) -> RunResult:
    """One temperature run: ``rounds`` iterations of sample-score-update,
    then positive-value top-k selection."""
    if universe is None:
        universe = ItemUniverse.from_table(train, budget)
    universe.check()
    size = universe.size
    if initial_values is None:
        values = np.full(size, 1.0 / size)
    else:
        values = np.asarray(initial_values, dtype=np.float64).copy()
        if values.shape != (size,):
            raise EngineError("initial values have the wrong length")
    intercept = 0.0 if config.intercept else None

    trajectory: list[float] = []
    round_seconds: list[float] = []
    best = -math.inf
    stale_rounds = 0
    patience = math.ceil(config.rounds / 4)
    error: str | None = None
    pool = (
        ThreadPoolExecutor(max_workers=config.parallel_eval)
        if config.parallel_eval > 1
        else None
    )

    try:
        for t in range(config.rounds):
            started = time.perf_counter()
            probs = sampling_distribution(values, tau)
            rng = _round_rng(config.seed, run_index, t)
            uniforms = rng.random((config.batch, size))
            memberships = _memberships_from_uniforms(probs, universe, uniforms)
            selections = [
                universe.membership_to_selection(memberships[b])
                for b in range(config.batch)
            ]

            def _score(sel: ContextSelection) -> float:
                return score_subset(evaluator, train, sel, val, config.metric)

            try:
                if pool is not None:
                    performances = np.array(list(pool.map(_score, selections)))
                else:
                    performances = np.array([_score(sel) for sel in selections])
            except EvaluationError as exc:
                error = str(exc)
                break

            values, intercept = _sgd_arrays(
                values, memberships, performances, config.learning_rate, intercept
            )
            estimate = selection_estimate(values, universe, intercept)
            if estimate > best:
                best = estimate
                stale_rounds = 0
            else:
                stale_rounds += 1
            trajectory.append(best)
            round_seconds.append(time.perf_counter() - started)
            if config.early_stop and stale_rounds >= patience:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    if error is not None:
        return RunResult(
            tau=tau,
            values=values,
            selection=None,
            estimated_val=-math.inf,
            trajectory=trajectory,
            round_seconds=round_seconds,
            rounds_completed=len(trajectory),
            intercept=intercept,
            error=error,
        )

    selection = select_context(values, universe)
    if config.class_coverage_fixup and universe.optimize_samples:
        selection = class_coverage_fixup(selection, train, values, universe)
    estimated = float(values[universe.selection_items(selection)].sum())
    if intercept is not None:
        estimated += intercept
    return RunResult(
        tau=tau,
        values=values,
        selection=selection,
        estimated_val=estimated,
        trajectory=trajectory,
        round_seconds=round_seconds,
        rounds_completed=len(trajectory),
        intercept=intercept,
    )


def optimize(
    train: Table,
    val: Table,
    evaluator: Evaluator,
    budget: Budget,
    config: EngineConfig,
    initial_values: np.ndarray | None = None,
) -> tuple[ContextSelection, list[RunResult]]:
    """Run every temperature schedule and return the selection whose
    estimated validation performance is largest (ties keep the earlier,
    hotter run). All run results are returned for reporting."""
    universe = ItemUniverse.from_table(train, budget)
    universe.check()
    temperatures = temperature_schedule(config.rounds, config.eta)
    results = [
        run_single(
            train,
            val,
            evaluator,
            budget,
            config,
            tau,
            run_index=k,
            universe=universe,
            initial_values=initial_values,
        )
        for k, tau in enumerate(temperatures)
    ]
    winner: RunResult | None = None
    for result in results:
        if result.error is not None:
            continue
        if winner is None or result.estimated_val > winner.estimated_val:
            winner = result
    if winner is None:
        first = next(r.error for r in results if r.error is not None)
        raise EngineError(f"all temperature runs failed; first error: {first}")
    return winner.selection, results
