import numpy as np
import pytest

from vipcop.metrics import MetricError, auroc, balanced_accuracy, midranks


class TestBalancedAccuracy:
    def test_perfect_predictions(self):
        proba = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]])
        assert balanced_accuracy(proba, np.array([0, 1, 0])) == 1.0

    def test_hand_confusion_075(self):
        # class 0: 2/2 recall, class 1: 1/2 recall -> (1.0 + 0.5) / 2
        proba = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.6, 0.4]])
        truth = np.array([0, 0, 1, 1])
        assert balanced_accuracy(proba, truth) == pytest.approx(0.75)

    def test_classes_absent_from_truth_excluded(self):
        proba = np.array([[0.9, 0.1], [0.8, 0.2]])
        assert balanced_accuracy(proba, np.array([0, 0])) == 1.0

    def test_argmax_tie_goes_to_lower_class(self):
        proba = np.array([[0.5, 0.5]])
        assert balanced_accuracy(proba, np.array([0])) == 1.0
        assert balanced_accuracy(proba, np.array([1])) == 0.0

    def test_invariant_to_class_relabeling(self):
        rng = np.random.default_rng(0)
        proba = rng.dirichlet(np.ones(3), size=40)
        truth = rng.integers(0, 3, size=40)
        perm = np.array([2, 0, 1])  # class c renamed to perm[c]
        direct = balanced_accuracy(proba, truth)
        relabeled = balanced_accuracy(proba[:, np.argsort(perm)], perm[truth])
        assert direct == pytest.approx(relabeled)

    def test_empty_truth_rejected(self):
        with pytest.raises(MetricError):
            balanced_accuracy(np.empty((0, 2)), np.empty(0, dtype=int))


class TestAuroc:
    def test_perfect_separation(self):
        proba = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
        assert auroc(proba, np.array([0, 0, 1, 1])) == 1.0

    def test_all_equal_scores_give_half(self):
        proba = np.full((6, 2), 0.5)
        assert auroc(proba, np.array([0, 0, 0, 1, 1, 1])) == 0.5

    def test_hand_counted_pairs(self):
        # concordant pairs 3 of 4 -> 0.75
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        proba = np.column_stack([1 - scores, scores])
        assert auroc(proba, np.array([0, 0, 1, 1])) == pytest.approx(0.75)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            auroc(np.array([[0.5, 0.5]]), np.array([1]))

    def test_multiclass_one_vs_rest_average(self):
        rng = np.random.default_rng(1)
        proba = rng.dirichlet(np.ones(3), size=60)
        truth = rng.integers(0, 3, size=60)
        value = auroc(proba, truth)
        per_class = []
        for cls in range(3):
            pos = truth == cls
            scores = proba[:, cls]
            # brute-force pair counting as an independent check
            wins = ties = 0
            for s_pos in scores[pos]:
                for s_neg in scores[~pos]:
                    wins += s_pos > s_neg
                    ties += s_pos == s_neg
            per_class.append((wins + 0.5 * ties) / (pos.sum() * (~pos).sum()))
        assert value == pytest.approx(np.mean(per_class))


def test_midranks_average_ties():
    assert midranks(np.array([10.0, 20.0, 20.0, 30.0])).tolist() == [1.0, 2.5, 2.5, 4.0]
