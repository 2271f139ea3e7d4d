import numpy as np
import pytest

from gatomics.metrics import ConfusionMatrix, accuracy, confusion, macro_prf


def brute_force_metrics(y_true, y_pred, k):
    """Independent tally: per-class TP/FP/FN by direct counting loops."""
    n = len(y_true)
    correct = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    precisions, recalls, f1s = [], [], []
    for c in range(k):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    return (100.0 * correct / n, sum(precisions) / k, sum(recalls) / k,
            sum(f1s) / k)


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        cm = confusion([0, 1, 2], [0, 1, 2], 3)
        assert np.array_equal(cm.counts, np.eye(3, dtype=int))

    def test_hand_tally(self):
        cm = confusion([0, 0, 1, 2], [0, 1, 1, 2], 3)
        expected = np.zeros((3, 3), dtype=int)
        expected[0, 0] = 1
        expected[0, 1] = 1
        expected[1, 1] = 1
        expected[2, 2] = 1
        assert np.array_equal(cm.counts, expected)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError, match="no samples"):
            confusion([], [], 3)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            confusion([0, 3], [0, 1], 3)


class TestAccuracy:
    def test_perfect(self):
        assert accuracy(confusion([0, 1], [0, 1], 2)) == 100.0

    def test_worked_example(self):
        assert accuracy(confusion([0, 0, 1, 2], [0, 1, 1, 2], 3)) == 75.0

    def test_uniform_random_predictions_near_chance(self):
        rng = np.random.default_rng(0)
        k, n = 7, 100_000
        y_true = rng.integers(0, k, size=n)
        y_pred = rng.integers(0, k, size=n)
        assert accuracy(confusion(y_true, y_pred, k)) == pytest.approx(100.0 / k,
                                                                       abs=1.0)


class TestMacroPrf:
    def test_perfect(self):
        assert macro_prf(confusion([0, 1, 2], [0, 1, 2], 3)) == (1.0, 1.0, 1.0)

    def test_worked_example(self):
        # per-class P = [1, .5, 1], R = [.5, 1, 1], F1 = [2/3, 2/3, 1]
        prec, rec, f1 = macro_prf(confusion([0, 0, 1, 2], [0, 1, 1, 2], 3))
        assert prec == pytest.approx(0.83333, abs=1e-4)
        assert rec == pytest.approx(0.83333, abs=1e-4)
        assert f1 == pytest.approx(0.77778, abs=1e-4)

    def test_absent_class_contributes_zero(self):
        # class 2 never true and never predicted: P = R = F1 = 0 for it
        prec, rec, f1 = macro_prf(confusion([0, 1], [0, 1], 3))
        assert prec == pytest.approx(2.0 / 3.0)
        assert rec == pytest.approx(2.0 / 3.0)
        assert f1 == pytest.approx(2.0 / 3.0)

    def test_thousand_random_instances_match_brute_force_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k = int(rng.integers(2, 11))
            n = int(rng.integers(1, 201))
            y_true = rng.integers(0, k, size=n)
            y_pred = rng.integers(0, k, size=n)
            cm = confusion(y_true, y_pred, k)
            acc_o, prec_o, rec_o, f1_o = brute_force_metrics(
                y_true.tolist(), y_pred.tolist(), k)
            prec, rec, f1 = macro_prf(cm)
            assert accuracy(cm) == acc_o
            assert prec == prec_o
            assert rec == rec_o
            assert f1 == f1_o

    def test_invariant_under_class_permutation(self):
        rng = np.random.default_rng(2)
        k, n = 6, 300
        y_true = rng.integers(0, k, size=n)
        y_pred = rng.integers(0, k, size=n)
        base = macro_prf(confusion(y_true, y_pred, k))
        base_acc = accuracy(confusion(y_true, y_pred, k))
        perm = rng.permutation(k)
        got = macro_prf(confusion(perm[y_true], perm[y_pred], k))
        got_acc = accuracy(confusion(perm[y_true], perm[y_pred], k))
        assert got == pytest.approx(base, abs=1e-15)
        assert got_acc == base_acc

    def test_f1_bounded_by_max_of_precision_recall(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = int(rng.integers(2, 8))
            n = int(rng.integers(5, 100))
            cm = confusion(rng.integers(0, k, n), rng.integers(0, k, n), k)
            counts = cm.counts
            tp = np.diag(counts).astype(float)
            fp = counts.sum(axis=0) - tp
            fn = counts.sum(axis=1) - tp
            with np.errstate(invalid="ignore"):
                prec = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
                rec = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
                f1 = np.where(prec + rec > 0,
                              2 * prec * rec / np.maximum(prec + rec, 1e-300), 0.0)
            assert np.all(f1 <= np.maximum(prec, rec) + 1e-12)
