"""Acceptance suite: one test per acceptance criterion, each printing a
single pass/fail line (run with ``pytest -s tests/test_acceptance.py``
to see them).  The whole module runs without any inference sidecar.
"""

import json
import math
import random
import time

import numpy as np
import pytest

from figforge.captions import scan_labels, split_caption
from figforge.config import build_config
from figforge.emit import compute_stats, read_jsonl
from figforge.metrics import (
    DetectionSet,
    alignment_accuracy,
    average_precision,
    recall_at_k,
)
from figforge.modelmath import (
    EmbeddingBatch,
    itc_loss,
    mask_tokens,
    mlm_loss,
    total_loss,
)
from figforge.alignment import Alignment, align_label_order, align_similarity
from figforge.panels import SubfigureBox, filter_detections, reading_order, split_gutters
from figforge.pipeline import run_pipeline
from figforge.synth import generate_mini_corpus, generate_separation_suite
from tests.test_captions import load_gold


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {detail} -> {'PASS' if ok else 'FAIL'}")
    assert ok, f"{name}: {detail}"


def test_synthetic_separation_suite():
    t0 = time.perf_counter()
    suite = generate_separation_suite(200, seed=20240916)
    det = DetectionSet()
    for idx, item in enumerate(suite):
        key = f"fig{idx:03d}"
        det.ground_truth[key] = [tuple(b) for b in item["boxes"]]
        det.predictions[key] = split_gutters(item["image"])
    ap = average_precision(det, iou_threshold=0.5)
    elapsed = time.perf_counter() - t0
    _verdict("separation-suite",
             ap >= 0.98 and elapsed < 60.0,
             f"AP@0.5={ap:.4f} (>=0.98), {elapsed:.1f}s single-threaded (<60s)")


def test_detection_threshold_semantics():
    rng = random.Random(7)
    mismatches = 0
    for _ in range(1000):
        # Boxes on a coarse grid so they never overlap; NMS then cannot
        # interfere and the 0.7 cut is the only active rule.
        n = rng.randrange(0, 12)
        cells = rng.sample(range(64), n) if n else []
        raw = [SubfigureBox(x=(c % 8) * 50, y=(c // 8) * 50,
                            w=rng.randrange(10, 40), h=rng.randrange(10, 40),
                            confidence=rng.random())
               for c in cells]
        kept = filter_detections(raw, conf_threshold=0.7, nms_iou=0.5)
        oracle = {b.as_tuple() + (b.confidence,) for b in raw if b.confidence >= 0.7}
        got = {b.as_tuple() + (b.confidence,) for b in kept}
        if got != oracle:
            mismatches += 1
    _verdict("detection-threshold",
             mismatches == 0,
             f"exact >=0.7 subset on 1000 random box sets, {mismatches} mismatches")


def test_caption_grammar_gold_corpus():
    gold = load_gold()
    separable = [g for g in gold if g["expected"] is not None]
    unseparable = [g for g in gold if g["expected"] is None]
    exact = 0
    for item in separable:
        result = split_caption(item["caption"])
        got = ([{"label": s.label, "text": s.text} for s in result.subcaptions]
               if result.separable else None)
        exact += got == item["expected"]
    rejected = sum(1 for item in unseparable
                   if not split_caption(item["caption"]).separable)

    partition_ok = True
    for item in separable:
        caption = item["caption"]
        result = split_caption(caption, share_preamble=False)
        tokens = scan_labels(caption)
        intervals = [(0, tokens[0].span[0])] if tokens[0].span[0] > 0 else []
        intervals += [t.span for t in tokens]
        intervals += list(dict.fromkeys(s.span for s in result.subcaptions))
        intervals.sort()
        cursor, rebuilt = 0, []
        for a, b in intervals:
            partition_ok &= (a == cursor)
            rebuilt.append(caption[a:b])
            cursor = b
        partition_ok &= (cursor == len(caption) and "".join(rebuilt) == caption)

    _verdict("caption-grammar",
             exact == 38 and rejected == 12 and partition_ok,
             f"{exact}/38 exact splits, {rejected}/12 unseparable, "
             f"span partition {'holds' if partition_ok else 'BROKEN'}")


def test_alignment_label_order_and_similarity_oracle():
    # Label-order accuracy on matched-count synthetic figures.
    letters = "abcdefghijklmnop"
    total_pairs, correct_figures = 0, 0
    suite = generate_separation_suite(60, seed=99)
    for item in suite:
        boxes = split_gutters(item["image"])
        order = reading_order(boxes)
        boxes = [boxes[i] for i in order]
        caption = " ".join(f"({letters[k]}) panel {letters[k]}."
                           for k in range(len(boxes)))
        split = split_caption(caption)
        result = align_label_order(len(boxes), list(split.subcaptions))
        assert isinstance(result, Alignment)
        gold = [(k, k) for k in range(len(boxes))]
        total_pairs += len(boxes)
        correct_figures += alignment_accuracy(result, gold) == 1.0
    label_ok = correct_figures == len(suite)

    # Similarity argmax against a brute-force row-max oracle.
    rng = np.random.default_rng(123)
    argmax_mismatch = 0
    for _ in range(1000):
        sim = rng.normal(size=(rng.integers(1, 9), rng.integers(1, 7)))
        result = align_similarity(sim)
        for i in range(sim.shape[0]):
            best = max(range(sim.shape[1]), key=lambda j: (sim[i][j], -j))
            if result.pairs[i] != (i, best):
                argmax_mismatch += 1
    _verdict("alignment",
             label_ok and argmax_mismatch == 0,
             f"label-order accuracy 1.0 on {correct_figures}/{len(suite)} figures "
             f"({total_pairs} pairs); similarity argmax exact on 1000 matrices "
             f"({argmax_mismatch} mismatches)")


def test_loss_arithmetic():
    row = np.array([[3.0, 1.0, 2.0]])
    all_equal = EmbeddingBatch(np.tile(row, (4, 1)), np.tile(row, (4, 1)))
    v1 = itc_loss(all_equal, temperature=0.07)
    ok1 = abs(v1 - 2 * math.log(4)) <= 1e-9

    eye = np.eye(2)
    v2 = itc_loss(EmbeddingBatch(eye, eye), temperature=1.0)
    ok2 = abs(v2 - 0.62652) <= 1e-4

    seq = mask_tokens([1, 2, 3, 4, 5], p=1.0, seed=0)
    v3 = mlm_loss(np.full((5, 100), 0.01), seq)
    ok3 = abs(v3 - math.log(100)) <= 1e-9

    v4 = total_loss(1.0, 2.0, 0.5)
    ok4 = v4 == 2.0
    _verdict("loss-math", ok1 and ok2 and ok3 and ok4,
             f"itc(all-equal,b=4)={v1:.6f} (2ln4 +-1e-9), itc(2x2)={v2:.5f} "
             f"(0.62652 +-1e-4), mlm(uniform-100)={v3:.6f} (ln100 +-1e-9), "
             f"total(1,2,0.5)={v4} (==2)")


def test_masking_statistics():
    tokens = list(range(100_000))
    seq = mask_tokens(tokens, p=0.15, seed=20230305)
    fraction = len(seq.mask_positions) / len(tokens)
    again = mask_tokens(tokens, p=0.15, seed=20230305)
    _verdict("masking-statistics",
             0.14 <= fraction <= 0.16 and seq == again,
             f"masked fraction {fraction:.4f} in [0.14, 0.16], "
             f"seed determinism {'exact' if seq == again else 'BROKEN'}")


def test_retrieval_recall_oracle():
    rng = np.random.default_rng(31337)
    mismatches = 0
    monotone = True
    for _ in range(100):
        sim = rng.normal(size=(32, 32))
        previous = (0.0, 0.0)
        for k in (1, 5, 10, 32):
            got = recall_at_k(sim, k)
            n = sim.shape[0]
            oracle_i2t = sum(
                sorted(range(n), key=lambda j: (-sim[i][j], j)).index(i) < k
                for i in range(n)) / n
            oracle_t2i = sum(
                sorted(range(n), key=lambda j: (-sim[j][i], j)).index(i) < k
                for i in range(n)) / n
            if got != (oracle_i2t, oracle_t2i):
                mismatches += 1
            monotone &= got[0] >= previous[0] and got[1] >= previous[1]
            previous = got
    _verdict("retrieval-recall",
             mismatches == 0 and monotone,
             f"recall@K equals full-sort oracle on 100 random 32x32 matrices "
             f"({mismatches} mismatches), monotone in K: {monotone}")


def test_stats_arithmetic_corpus_scale_ledger():
    stats = compute_stats([], (1_646_592, 378_717))
    avg = stats.avg_subfigs_per_caption
    _verdict("stats-arithmetic",
             round(avg, 3) == 4.348 and round(avg, 1) == 4.3,
             f"avg subfigures/caption {avg:.6f} -> {round(avg, 3)} (4.348), "
             f"one decimal {round(avg, 1)} (4.3)")


def test_end_to_end_determinism(tmp_path):
    corpus = tmp_path / "corpus"
    ledger = generate_mini_corpus(corpus, seed=0)
    outputs = []
    for name in ("out_a", "out_b"):
        cfg = build_config({"archive_root": "archive", "output_dir": name,
                            "exclusion_hash_file": "exclusions.txt", "seed": 0,
                            "render_figures": False},
                           base_dir=corpus)
        run_pipeline(cfg)
        outputs.append(cfg.output_dir)
    identical = all(
        (outputs[0] / f).read_bytes() == (outputs[1] / f).read_bytes()
        for f in ("dataset.jsonl", "stats.json", "eval.json"))
    entries = read_jsonl(outputs[0] / "dataset.jsonl")
    expected = ledger["expected"]["entries"]
    _verdict("end-to-end-determinism",
             identical and len(entries) == expected,
             f"two runs byte-identical: {identical}; entries {len(entries)} "
             f"== ledger {expected}; no sidecar used")
