import random

import numpy as np
import pytest

from figforge.errors import GoldMismatch, KOutOfRange, NoGroundTruth
from figforge.metrics import (
    DetectionSet,
    alignment_accuracy,
    average_precision,
    iou,
    precision_recall,
    recall_at_k,
    retrieval_report,
)
from figforge.panels import SubfigureBox


def test_iou_examples():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)


def test_iou_properties():
    rng = random.Random(1)
    for _ in range(100):
        a = (rng.randrange(50), rng.randrange(50), rng.randrange(1, 30), rng.randrange(1, 30))
        b = (rng.randrange(50), rng.randrange(50), rng.randrange(1, 30), rng.randrange(1, 30))
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)
        assert iou(a, a) == 1.0


def _det(preds, gts):
    return DetectionSet(
        predictions={"img": [SubfigureBox(*p) for p in preds]},
        ground_truth={"img": gts})


def test_precision_recall_perfect():
    det = _det([(0, 0, 10, 10, 0.9), (20, 20, 10, 10, 0.8)],
               [(0, 0, 10, 10), (20, 20, 10, 10)])
    assert precision_recall(det, conf_threshold=0.5) == (1.0, 1.0)


def test_precision_recall_two_tp_one_fp():
    det = _det([(0, 0, 10, 10, 0.9), (50, 50, 10, 10, 0.8), (20, 20, 10, 10, 0.7)],
               [(0, 0, 10, 10), (20, 20, 10, 10)])
    precision, recall = precision_recall(det, conf_threshold=0.5)
    assert precision == pytest.approx(2 / 3)
    assert recall == 1.0


def test_precision_recall_empty_conventions():
    det = _det([(0, 0, 10, 10, 0.6)], [(0, 0, 10, 10)])
    assert precision_recall(det, conf_threshold=0.99) == (1.0, 0.0)
    empty = DetectionSet(predictions={"img": []}, ground_truth={"img": []})
    assert precision_recall(empty, conf_threshold=0.5) == (1.0, 1.0)


def test_precision_recall_monotone_in_threshold():
    rng = random.Random(2)
    gts = [(i * 30, 0, 20, 20) for i in range(5)]
    preds = [(i * 30 + rng.randrange(-2, 3), rng.randrange(-2, 3), 20, 20,
              rng.random()) for i in range(5)]
    preds += [(200 + i * 25, 100, 15, 15, rng.random()) for i in range(4)]
    det = _det(preds, gts)
    last_p, last_r = 0.0, 1.0
    for threshold in (0.0, 0.25, 0.5, 0.75, 1.0):
        p, r = precision_recall(det, conf_threshold=threshold)
        assert p >= last_p - 1e-12
        assert r <= last_r + 1e-12
        last_p, last_r = p, r


def test_average_precision_perfect():
    det = _det([(0, 0, 10, 10, 0.9), (20, 20, 10, 10, 0.8)],
               [(0, 0, 10, 10), (20, 20, 10, 10)])
    assert average_precision(det) == 1.0


def test_average_precision_interpolated_example():
    det = _det([(0, 0, 10, 10, 0.9), (50, 50, 10, 10, 0.8), (20, 20, 10, 10, 0.7)],
               [(0, 0, 10, 10), (20, 20, 10, 10)])
    assert average_precision(det) == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3))


def test_average_precision_no_predictions():
    det = DetectionSet(predictions={"img": []}, ground_truth={"img": [(0, 0, 5, 5)]})
    assert average_precision(det) == 0.0


def test_average_precision_no_ground_truth():
    det = DetectionSet(predictions={}, ground_truth={"img": []})
    with pytest.raises(NoGroundTruth):
        average_precision(det)


def test_average_precision_trailing_fp_never_helps():
    rng = random.Random(4)
    for _ in range(20):
        gts = [(i * 40, 0, 20, 20) for i in range(3)]
        preds = [(i * 40, 0, 20, 20, 0.5 + 0.1 * i) for i in range(3)]
        det = _det(list(preds), gts)
        base = average_precision(det)
        worse = _det(preds + [(500, 500, 10, 10, 0.01 * rng.random())], gts)
        assert average_precision(worse) <= base + 1e-12


def _oracle_recall(sim: np.ndarray, k: int) -> tuple[float, float]:
    """Full-sort oracle with the same deterministic tie rule."""
    n = sim.shape[0]

    def direction(mat):
        hits = 0
        for i in range(n):
            order = sorted(range(n), key=lambda j: (-mat[i][j], j))
            if order.index(i) < k:
                hits += 1
        return hits / n

    return direction(sim), direction(sim.T)


def test_recall_at_k_identity_dominant():
    sim = np.eye(3) + 0.01
    assert recall_at_k(sim, 1) == (1.0, 1.0)


def test_recall_at_k_diagonal_second():
    sim = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 2.0], [2.0, 0.0, 1.0]])
    assert recall_at_k(sim, 1) == (0.0, 0.0)
    assert recall_at_k(sim, 2) == (1.0, 1.0)


def test_recall_at_k_matches_oracle():
    rng = np.random.default_rng(123)
    for _ in range(30):
        sim = rng.normal(size=(12, 12))
        for k in (1, 3, 7, 12):
            assert recall_at_k(sim, k) == _oracle_recall(sim, k)


def test_recall_at_k_tie_prefers_lower_index():
    sim = np.zeros((2, 2))  # all tied; diagonal of row 1 ranks second
    assert recall_at_k(sim, 1) == (0.5, 0.5)


def test_recall_at_k_monotone_and_clamped():
    rng = np.random.default_rng(7)
    sim = rng.normal(size=(9, 9))
    values = [recall_at_k(sim, k) for k in range(1, 10)]
    for (a_i, a_t), (b_i, b_t) in zip(values, values[1:]):
        assert b_i >= a_i and b_t >= a_t
    assert recall_at_k(sim, 9) == (1.0, 1.0)
    assert recall_at_k(sim, 50) == (1.0, 1.0)  # K > n clamps
    with pytest.raises(KOutOfRange):
        recall_at_k(sim, 0)


def test_retrieval_report_shape():
    sim = np.eye(16) + 0.1
    report = retrieval_report(sim)
    assert set(report.recall_at) == {1, 5, 10}
    assert report.as_dict()["1"]["i2t"] == 1.0


def test_alignment_accuracy():
    gold = [(0, 0), (1, 1), (2, 2), (3, 3)]
    assert alignment_accuracy([(0, 0), (1, 1), (2, 2), (3, 3)], gold) == 1.0
    assert alignment_accuracy([(0, 0), (1, 1), (2, 2), (3, 0)], gold) == 0.75
    with pytest.raises(GoldMismatch):
        alignment_accuracy([(9, 0)], gold)
