"""Evaluation arithmetic: IoU, detection precision/recall, average
precision, retrieval Recall@K and alignment accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GoldMismatch, KOutOfRange, NoGroundTruth
from .panels import SubfigureBox, box_iou

Box = tuple[int, int, int, int]

iou = box_iou


@dataclass
class DetectionSet:
    """Per-image predictions and ground-truth boxes, keyed by image id."""

    predictions: dict[str, list[SubfigureBox]] = field(default_factory=dict)
    ground_truth: dict[str, list[Box]] = field(default_factory=dict)

    def __post_init__(self):
        extra = set(self.predictions) - set(self.ground_truth)
        if extra:
            raise ValueError(f"predictions for images without ground truth: {sorted(extra)}")


def _match_predictions(det: DetectionSet, conf_threshold: float,
                       iou_threshold: float) -> tuple[list[bool], int]:
    """Greedy confidence-ordered matching over all images.

    Returns a TP/FP flag per kept prediction (in global descending
    confidence order, ties broken by image key then insertion index) and
    the total ground-truth count.
    """
    pool = []
    for key in sorted(det.predictions):
        for idx, box in enumerate(det.predictions[key]):
            if box.confidence >= conf_threshold:
                pool.append((key, idx, box))
    pool.sort(key=lambda t: (-t[2].confidence, t[0], t[1]))
    matched: dict[str, set[int]] = {k: set() for k in det.ground_truth}
    flags = []
    for key, _, box in pool:
        gt_boxes = det.ground_truth.get(key, [])
        best, best_iou = None, 0.0
        for gi, gt in enumerate(gt_boxes):
            if gi in matched[key]:
                continue
            overlap = box_iou(box, gt)
            if overlap >= iou_threshold and overlap > best_iou:
                best, best_iou = gi, overlap
        if best is not None:
            matched[key].add(best)
            flags.append(True)
        else:
            flags.append(False)
    total_gt = sum(len(v) for v in det.ground_truth.values())
    return flags, total_gt


def precision_recall(det: DetectionSet, conf_threshold: float,
                     iou_threshold: float = 0.5) -> tuple[float, float]:
    """Precision and recall of kept predictions at a confidence cut.

    Empty denominators follow the usual convention: precision is 1.0 with
    no kept predictions, recall is 1.0 with no ground truth.
    """
    flags, total_gt = _match_predictions(det, conf_threshold, iou_threshold)
    tp = sum(flags)
    fp = len(flags) - tp
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if total_gt == 0 else tp / total_gt
    return precision, recall


def average_precision(det: DetectionSet, iou_threshold: float = 0.5) -> float:
    """All-point interpolated AP (single class) at the given IoU cut."""
    flags, total_gt = _match_predictions(det, conf_threshold=0.0,
                                         iou_threshold=iou_threshold)
    if total_gt == 0:
        raise NoGroundTruth("average precision undefined without ground truth")
    if not flags:
        return 0.0
    tps = np.cumsum([1 if f else 0 for f in flags])
    fps = np.cumsum([0 if f else 1 for f in flags])
    recalls = tps / total_gt
    precisions = tps / (tps + fps)
    # Monotone envelope from the right, then sum over recall increments.
    env = np.maximum.accumulate(precisions[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, env):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def recall_at_k(sim: np.ndarray, k: int) -> tuple[float, float]:
    """Recall@K over a square similarity matrix.

    Row i pairs with column i.  i2t ranks each row's columns, t2i each
    column's rows, both descending with ties resolved in favor of the
    lower index.  K above n clamps to n.
    """
    if k < 1:
        raise KOutOfRange(f"K must be >= 1, got {k}")
    mat = np.asarray(sim, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
        raise ValueError("similarity matrix must be square and nonempty")
    n = mat.shape[0]
    k = min(k, n)

    def _hits(matrix: np.ndarray) -> float:
        hits = 0
        for i in range(n):
            row = matrix[i]
            target = row[i]
            # Rank = 1 + competitors that strictly beat the diagonal, plus
            # earlier-indexed ties.
            better = int(np.sum(row > target))
            tied_before = int(np.sum(row[:i] == target))
            if better + tied_before < k:
                hits += 1
        return hits / n

    return _hits(mat), _hits(mat.T)


@dataclass(frozen=True)
class RetrievalResult:
    """Recall@K for K in {1, 5, 10}, both retrieval directions."""

    recall_at: dict[int, tuple[float, float]]

    def as_dict(self) -> dict:
        return {str(k): {"i2t": v[0], "t2i": v[1]} for k, v in sorted(self.recall_at.items())}


def retrieval_report(sim: np.ndarray, ks: tuple[int, ...] = (1, 5, 10)) -> RetrievalResult:
    return RetrievalResult({k: recall_at_k(sim, k) for k in ks})


def alignment_accuracy(predicted, gold: list[tuple[int, int]]) -> float:
    """Fraction of subfigures whose predicted subcaption matches gold.

    ``predicted`` is an Alignment or a bare list of (subfigure, subcaption)
    index pairs; ``gold`` must cover every predicted subfigure.
    """
    predicted_pairs = getattr(predicted, "pairs", predicted)
    gold_map = dict(gold)
    correct = 0
    for subfig, subcap in predicted_pairs:
        if subfig not in gold_map:
            raise GoldMismatch(f"subfigure {subfig} missing from gold annotations")
        if gold_map[subfig] == subcap:
            correct += 1
    if not predicted_pairs:
        return 1.0
    return correct / len(predicted_pairs)
