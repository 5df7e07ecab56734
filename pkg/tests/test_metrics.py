import numpy as np
import pytest
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score, precision_recall_fscore_support

from egoact.core.exceptions import DimensionMismatchError, EgoActError
from egoact.core.metrics import ConfusionMatrix, class_weights, evaluate, mean_reports, normalize_confusion

ALL = list(range(21))


class TestEvaluate:
    def test_perfect_predictions(self):
        labels = [0, 3, 3, 7, 20]
        report = evaluate(labels, labels, active_only=True)
        assert report.accuracy == 1.0
        assert report.macro_precision == report.macro_recall == report.macro_f1 == 1.0

    def test_two_active_classes(self):
        report = evaluate([0, 0, 1, 1], [0, 0, 0, 1], active_only=True)
        np.testing.assert_array_equal(report.confusion.counts[:2, :2], [[2, 0], [1, 1]])
        assert report.macro_precision == pytest.approx(0.8333, abs=1e-4)
        assert report.macro_recall == pytest.approx(0.75)
        assert report.macro_f1 == pytest.approx(0.7333, abs=1e-4)

    def test_absent_classes_count_as_zero_without_active_only(self):
        report = evaluate([0, 0, 1, 1], [0, 0, 0, 1])
        assert report.macro_recall == pytest.approx(1.5 / 21)

    def test_single_predicted_class(self):
        report = evaluate([0, 1, 0, 1], [1, 1, 1, 1])
        assert report.accuracy == 0.5
        assert report.precision[0] == 0.0

    def test_matches_scikit_learn(self):
        rng = np.random.default_rng(0)
        true = rng.integers(0, 21, size=500)
        predicted = np.where(rng.random(500) < 0.6, true, rng.integers(0, 21, size=500))
        report = evaluate(true, predicted)

        precision, recall, f1, support = precision_recall_fscore_support(
            true, predicted, labels=ALL, zero_division=0
        )
        np.testing.assert_allclose(report.precision, precision, atol=1e-12)
        np.testing.assert_allclose(report.recall, recall, atol=1e-12)
        np.testing.assert_allclose(report.f1, f1, atol=1e-12)
        np.testing.assert_array_equal(report.support, support)
        np.testing.assert_array_equal(report.confusion.counts, confusion_matrix(true, predicted, labels=ALL))
        assert report.accuracy == pytest.approx(accuracy_score(true, predicted))
        assert report.macro_f1 == pytest.approx(f1_score(true, predicted, labels=ALL, average="macro", zero_division=0))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        true = rng.integers(0, 5, size=60)
        predicted = rng.integers(0, 5, size=60)
        order = rng.permutation(60)
        a = evaluate(true, predicted, active_only=True)
        b = evaluate(true[order], predicted[order], active_only=True)
        assert (a.accuracy, a.macro_precision, a.macro_recall, a.macro_f1) == (
            b.accuracy, b.macro_precision, b.macro_recall, b.macro_f1,
        )
        np.testing.assert_array_equal(a.confusion.counts, b.confusion.counts)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            evaluate([0, 1], [0])

    def test_nothing_to_evaluate(self):
        with pytest.raises(EgoActError):
            evaluate([], [])

    def test_mean_reports(self):
        reports = [evaluate([0, 1], [0, 1], active_only=True), evaluate([0, 1], [1, 1], active_only=True)]
        assert mean_reports(reports)["accuracy"] == 0.75


class TestClassWeights:
    def test_two_classes(self):
        np.testing.assert_allclose(class_weights([10, 30]), [2.0, 2.0 / 3.0])

    def test_balanced(self):
        np.testing.assert_allclose(class_weights([7] * 21), np.ones(21))

    def test_rare_class(self):
        weights = class_weights([1, 99])
        np.testing.assert_allclose(weights, [50.0, 100 / 198])
        assert weights @ np.array([1, 99]) == pytest.approx(100)

    def test_absent_classes_weigh_zero(self):
        weights = class_weights([4, 0, 12])
        assert weights[1] == 0.0
        assert weights[0] == pytest.approx(2.0)

    def test_total_is_conserved(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            counts = rng.integers(0, 50, size=21) * (rng.random(21) < 0.7)
            if counts.sum() == 0:
                continue
            assert class_weights(counts) @ counts == pytest.approx(counts.sum())

    def test_no_labels(self):
        with pytest.raises(ValueError):
            class_weights([0, 0])


class TestNormalizeConfusion:
    def test_identity(self):
        normalized, empty = normalize_confusion(ConfusionMatrix(np.eye(3, dtype=int) * 4))
        np.testing.assert_array_equal(normalized, np.eye(3))
        assert not empty.any()

    def test_rows_and_empty_flags(self):
        normalized, empty = normalize_confusion(ConfusionMatrix(np.array([[2, 2], [0, 0]])))
        np.testing.assert_array_equal(normalized, [[0.5, 0.5], [0.0, 0.0]])
        np.testing.assert_array_equal(empty, [False, True])

    def test_diagonal_is_recall(self):
        rng = np.random.default_rng(3)
        true = rng.integers(0, 21, size=300)
        predicted = rng.integers(0, 21, size=300)
        report = evaluate(true, predicted)
        normalized, empty = normalize_confusion(report.confusion)
        np.testing.assert_allclose(np.diag(normalized)[~empty], report.per_class_recall[~empty], atol=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(DimensionMismatchError):
            ConfusionMatrix(np.zeros((2, 3), dtype=int))
