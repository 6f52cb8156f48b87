import numpy as np
import pytest

from vipcop.stats import (
    ScoreMatrix,
    StatsError,
    average_ranks,
    critical_difference,
    improvement_report,
    paired_permutation_test,
    pairwise_p_matrix,
)


class TestPermutationTest:
    def test_identical_vectors_give_one(self):
        a = np.array([0.3, 0.5, 0.9])
        assert paired_permutation_test(a, a.copy()) == 1.0

    def test_three_positive_units_give_quarter(self):
        # 8 sign patterns, |mean| >= 1 only for +++ and ---
        a = np.array([1.0, 1.0, 1.0])
        b = np.zeros(3)
        assert paired_permutation_test(a, b) == pytest.approx(0.25)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a, b = rng.random(12), rng.random(12)
        assert paired_permutation_test(a, b) == paired_permutation_test(b, a)

    def test_exact_agrees_with_monte_carlo(self):
        rng = np.random.default_rng(4)
        a = rng.random(15)
        b = rng.random(15)
        exact = paired_permutation_test(a, b)
        mc = _mc_reference(a, b, 1_000_000, seed=1)
        assert abs(exact - mc) < 0.005

    def test_monte_carlo_path_deterministic(self):
        rng = np.random.default_rng(9)
        a = rng.random(25)
        b = rng.random(25)
        p1 = paired_permutation_test(a, b, permutations=20_000, seed=5)
        p2 = paired_permutation_test(a, b, permutations=20_000, seed=5)
        assert p1 == p2
        assert 0.0 < p1 <= 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(StatsError):
            paired_permutation_test(np.ones(3), np.ones(4))


def _mc_reference(a, b, n_draws, seed):
    """Independent Monte-Carlo sign-flip estimate used as a cross-check."""
    diffs = a - b
    obs = abs(diffs.mean())
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(n_draws, diffs.size)) * 2 - 1
    stats = np.abs((signs * diffs).mean(axis=1))
    return (1 + int((stats >= obs - 1e-12).sum())) / (1 + n_draws)


class TestAverageRanks:
    def test_total_dominance(self):
        matrix = ScoreMatrix(
            scores=np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.4]]),
            dataset_ids=("d1", "d2", "d3"),
            method_ids=("A", "B"),
        )
        assert average_ranks(matrix).tolist() == [1.0, 2.0]

    def test_tie_contributes_midrank(self):
        matrix = ScoreMatrix(
            scores=np.array([[0.5, 0.5], [0.9, 0.1]]),
            dataset_ids=("d1", "d2"),
            method_ids=("A", "B"),
        )
        assert average_ranks(matrix).tolist() == [1.25, 1.75]

    def test_rank_sum_conservation(self):
        rng = np.random.default_rng(3)
        k, n = 6, 38
        matrix = ScoreMatrix(
            scores=rng.random((n, k)),
            dataset_ids=tuple(f"d{i}" for i in range(n)),
            method_ids=tuple(f"m{j}" for j in range(k)),
        )
        ranks = average_ranks(matrix)
        assert ranks.sum() * n == pytest.approx(n * k * (k + 1) / 2)


class TestCriticalDifference:
    def test_two_methods_closed_form(self):
        for n in (5, 38, 200):
            assert critical_difference(2, n) == pytest.approx(1.960 / np.sqrt(n), abs=1e-9)

    def test_k6_n38_formula(self):
        expect = 2.850 * np.sqrt(6 * 7 / (6.0 * 38))
        assert critical_difference(6, 38) == pytest.approx(expect, abs=1e-12)

    def test_limit_vanishes_with_many_datasets(self):
        assert critical_difference(4, 10_000_000) < 1e-2

    def test_alpha_010_table(self):
        assert critical_difference(2, 100, alpha=0.10) == pytest.approx(1.645 / 10.0)

    def test_out_of_table_rejected(self):
        with pytest.raises(StatsError):
            critical_difference(11, 10)


class TestImprovementReport:
    def make(self, scores):
        return ScoreMatrix(
            scores=np.asarray(scores, dtype=float),
            dataset_ids=tuple(f"d{i}" for i in range(len(scores))),
            method_ids=("ref", "base"),
        )

    def test_reference_vs_itself_is_zero(self):
        matrix = ScoreMatrix(
            scores=np.array([[0.5, 0.5], [0.7, 0.7]]),
            dataset_ids=("a", "b"),
            method_ids=("ref", "base"),
        )
        out = improvement_report(matrix, "ref")
        assert out["base"]["mean_improvement_pct"] == pytest.approx(0.0)

    def test_hand_percentage(self):
        out = improvement_report(self.make([[0.6, 0.5]]), "ref")
        assert out["base"]["mean_improvement_pct"] == pytest.approx(20.0)

    def test_zero_baseline_cells_excluded_and_counted(self):
        out = improvement_report(self.make([[0.6, 0.0], [0.6, 0.5]]), "ref")
        assert out["base"]["excluded_cells"] == 1
        assert out["base"]["mean_improvement_pct"] == pytest.approx(20.0)


def test_pairwise_matrix_symmetric_unit_diagonal():
    rng = np.random.default_rng(8)
    matrix = ScoreMatrix(
        scores=rng.random((10, 3)),
        dataset_ids=tuple(f"d{i}" for i in range(10)),
        method_ids=("a", "b", "c"),
    )
    p = pairwise_p_matrix(matrix, permutations=5_000, seed=0)
    assert np.allclose(p, p.T)
    assert np.all(np.diag(p) == 1.0)
    assert np.all((p > 0) & (p <= 1))
