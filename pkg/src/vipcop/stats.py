"""Cross-dataset method comparison: paired permutation tests, average
ranks, the critical-difference statistic, and improvement percentages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import midranks


class StatsError(ValueError):
    """Bad inputs to the benchmark statistics."""


@dataclass(frozen=True)
class ScoreMatrix:
    """Scores per (dataset, method); no missing cells allowed."""

    scores: np.ndarray
    dataset_ids: tuple[str, ...]
    method_ids: tuple[str, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise StatsError("scores must be a 2-D matrix")
        if scores.shape != (len(self.dataset_ids), len(self.method_ids)):
            raise StatsError("scores shape does not match the id lists")
        if len(self.method_ids) < 2:
            raise StatsError("need at least 2 methods to compare")
        if not np.all(np.isfinite(scores)):
            raise StatsError("scores contain missing or non-finite cells")
        object.__setattr__(self, "scores", scores)

    def column(self, method: str) -> np.ndarray:
        try:
            j = self.method_ids.index(method)
        except ValueError:
            raise StatsError(f"unknown method {method!r}") from None
        return self.scores[:, j]


# enumerating all sign patterns is cheap up to 2^20
EXACT_LIMIT = 20
_CHUNK = 1 << 16


def paired_permutation_test(
    a: np.ndarray,
    b: np.ndarray,
    permutations: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Two-sided sign-flip test of mean(a - b) against zero.

    Exact enumeration of all 2^n sign patterns when n <= 20, otherwise
    Monte Carlo with ``permutations`` draws plus the identity flip. The
    returned p lies in (0, 1]; identical vectors give exactly 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise StatsError("need two equal-length vectors with at least 2 entries")
    diffs = a - b
    observed = abs(float(diffs.mean()))
    if np.all(diffs == 0.0):
        return 1.0
    threshold = observed - 1e-12  # tolerate float noise on exact ties

    n = diffs.size
    if n <= EXACT_LIMIT:
        total = 1 << n
        hits = 0
        bit_index = np.arange(n, dtype=np.uint32)
        for start in range(0, total, _CHUNK):
            block = np.arange(start, min(start + _CHUNK, total), dtype=np.uint32)
            signs = 1.0 - 2.0 * ((block[:, None] >> bit_index) & 1)
            stats = np.abs(signs @ diffs) / n
            hits += int((stats >= threshold).sum())
        return hits / total

    hits = 0
    done = 0
    chunk_id = 0
    while done < permutations:
        take = min(_CHUNK, permutations - done)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk_id,)))
        signs = rng.integers(0, 2, size=(take, n)) * 2.0 - 1.0
        stats = np.abs(signs @ diffs) / n
        hits += int((stats >= threshold).sum())
        done += take
        chunk_id += 1
    return (1 + hits) / (1 + permutations)


def average_ranks(matrix: ScoreMatrix) -> np.ndarray:
    """Mean rank per method, rank 1 best, midranks for ties."""
    ranks = np.vstack([midranks(-row) for row in matrix.scores])
    return ranks.mean(axis=0)


# Nemenyi critical values q_alpha for 2..10 methods
_Q_TABLE = {
    0.05: {
        2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850,
        7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164,
    },
    0.10: {
        2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589,
        7: 2.693, 8: 2.780, 9: 2.855, 10: 2.920,
    },
}


def critical_difference(k_methods: int, n_datasets: int, alpha: float = 0.05) -> float:
    """Rank gap beyond which two of k methods differ significantly over n
    datasets: q_alpha * sqrt(k (k + 1) / (6 n))."""
    if n_datasets < 2:
        raise StatsError("need at least 2 datasets")
    try:
        q = _Q_TABLE[alpha][k_methods]
    except KeyError:
        raise StatsError(
            f"no tabulated critical value for k={k_methods}, alpha={alpha}"
        ) from None
    return float(q * np.sqrt(k_methods * (k_methods + 1) / (6.0 * n_datasets)))


def improvement_report(
    matrix: ScoreMatrix, reference_method: str
) -> dict[str, dict[str, float]]:
    """Mean percentage improvement of the reference over each other method,
    per dataset, excluding (and counting) division-by-zero cells."""
    ref = matrix.column(reference_method)
    out: dict[str, dict[str, float]] = {}
    for j, method in enumerate(matrix.method_ids):
        if method == reference_method:
            continue
        base = matrix.scores[:, j]
        usable = base != 0.0
        excluded = int((~usable).sum())
        if usable.any():
            pct = float(np.mean(100.0 * (ref[usable] - base[usable]) / base[usable]))
        else:
            pct = float("nan")
        out[method] = {"mean_improvement_pct": pct, "excluded_cells": excluded}
    return out


def pairwise_p_matrix(
    matrix: ScoreMatrix, permutations: int = 1_000_000, seed: int = 0
) -> np.ndarray:
    """Symmetric matrix of paired permutation p-values between methods."""
    k = len(matrix.method_ids)
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            p[i, j] = p[j, i] = paired_permutation_test(
                matrix.scores[:, i], matrix.scores[:, j], permutations, seed
            )
    return p
