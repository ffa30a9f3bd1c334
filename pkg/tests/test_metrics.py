import numpy as np
import pytest

from mlgad.metrics import auprc, auroc, macro_f1


def pairwise_auroc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def enumerated_auprc(s, y):
    """Walk every distinct threshold from high to low; sum precision x recall step."""
    n_pos = (y == 1).sum()
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = (pred & (y == 1)).sum()
        precision = tp / pred.sum()
        recall = tp / n_pos
        total += (recall - prev_recall) * precision
        prev_recall = recall
    return total


def random_instance(rng):
    n = int(rng.integers(2, 60))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.random(n)
    if rng.random() < 0.5:
        s = np.round(s, 1)  # plenty of ties
    return s, y


def test_trivial_examples():
    assert auroc([0.9, 0.1], [1, 0]) == 1.0
    assert macro_f1([1, 0], [1, 0]) == 1.0
    assert auprc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0


def test_constant_scores_give_half():
    assert auroc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5


def test_all_negative_predictions_macro_f1():
    assert macro_f1([0, 0, 0, 0], [1, 1, 0, 0]) == pytest.approx(1 / 3)


def test_single_class_is_undefined():
    assert auroc([0.1, 0.2], [0, 0]) is None
    assert auprc([0.1, 0.2], [1, 1]) is None
    assert macro_f1([0, 0], [0, 0]) == 0.5


def test_length_mismatch():
    with pytest.raises(ValueError):
        auroc([0.1], [0, 1])


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s, y = random_instance(rng)
        assert abs(auroc(s, y) - pairwise_auroc(s, y)) <= 1e-12


def test_auprc_matches_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        s, y = random_instance(rng)
        assert abs(auprc(s, y) - enumerated_auprc(s, y)) <= 1e-12


def test_metrics_in_unit_interval():
    rng = np.random.default_rng(2)
    for _ in range(50):
        s, y = random_instance(rng)
        for v in (auroc(s, y), auprc(s, y), macro_f1(s > 0.5, y)):
            assert 0.0 <= v <= 1.0
