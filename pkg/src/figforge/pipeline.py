"""Six-stage pipeline orchestration with resumable per-stage checkpoints.

Stage outputs are cached as JSON under ``<output_dir>/stages/`` keyed by
the semantic config hash; a stage recomputes only when its checkpoint is
missing or was produced under a different configuration.  All stage
processing is ordered by (package_id, figure_id) so reruns are
byte-deterministic in dataset.jsonl, stats.json and eval.json.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import alignment as align_mod
from . import emit as emit_mod
from . import metrics as metrics_mod
from .captions import SplitResult, Subcaption, split_caption
from .client import InferenceClient
from .config import PipelineConfig
from .errors import FigforgeError
from .filtering import gate_medical, load_keywords, load_taxonomy, match_caption
from .ingest import FigureRecord, decode_image, extract_pairs, parse_package, scan_archive
from .panels import GutterParams, SubfigureBox, crop_panels, filter_detections, \
    reading_order, split_gutters

log = logging.getLogger(__name__)

STAGES = ("ingest", "filter", "split", "parse", "align", "emit", "eval")


class StageError(FigforgeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _stage_path(config: PipelineConfig, stage: str) -> Path:
    return config.output_dir / "stages" / f"{stage}.json"


def _load_checkpoint(config: PipelineConfig, stage: str):
    path = _stage_path(config, stage)
    if not path.is_file():
        return None
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError:
        return None
    if data.get("config_hash") != config.config_hash():
        return None
    return data["items"]


def _write_checkpoint(config: PipelineConfig, stage: str, items) -> None:
    path = _stage_path(config, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"stage": stage, "config_hash": config.config_hash(), "items": items}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _client_for(config: PipelineConfig) -> InferenceClient | None:
    if config.inference_endpoint:
        return InferenceClient(config.inference_endpoint)
    return None


# ---------------------------------------------------------------- stages

def stage_ingest(config: PipelineConfig) -> list[dict]:
    cached = _load_checkpoint(config, "ingest")
    if cached is not None:
        return cached
    items = []
    for pkg_path in scan_archive(config.archive_root):
        pkg = parse_package(pkg_path)
        for record in extract_pairs(pkg):
            items.append({
                "package_id": record.package_id,
                "figure_id": record.figure_id,
                "image_path": str(record.source_path),
                "caption": record.caption,
                "caption_missing": record.caption_missing,
            })
    items.sort(key=lambda r: (r["package_id"], r["figure_id"]))
    _write_checkpoint(config, "ingest", items)
    return items


def stage_filter(config: PipelineConfig, ingest_items: list[dict]) -> list[dict]:
    cached = _load_checkpoint(config, "filter")
    if cached is not None:
        return cached
    keywords = load_keywords(config.keyword_file)
    client = _client_for(config)
    items = []
    for rec in ingest_items:
        result = match_caption(rec["caption"], keywords)
        if not result.matched:
            continue
        gated = None
        if client is not None:
            scores = client.classify(Path(rec["image_path"]).read_bytes())
            gated = gate_medical(scores, k=config.gate_top_k)
            if not gated:
                continue
        items.append({**rec,
                      "keyword_hits": [[h.term, h.offset] for h in result.hits],
                      "classifier_gated": gated})
    _write_checkpoint(config, "filter", items)
    return items


def _split_one(rec: dict, config: PipelineConfig,
               client: InferenceClient | None) -> dict:
    image = decode_image(rec["image_path"])
    if config.split_mode == "detector" and client is not None:
        raw = client.detect(Path(rec["image_path"]).read_bytes())
    else:
        raw = split_gutters(image, GutterParams())
    boxes = filter_detections(raw, conf_threshold=config.conf_threshold, nms_iou=0.5)
    h, w = image.shape[0], image.shape[1]
    boxes = [b for b in boxes
             if b.x >= 0 and b.y >= 0 and b.x + b.w <= w and b.y + b.h <= h]
    if boxes:
        order = reading_order(boxes)
        boxes = [boxes[i] for i in order]
    return {**rec, "boxes": [[b.x, b.y, b.w, b.h, b.confidence] for b in boxes]}


def stage_split(config: PipelineConfig, filter_items: list[dict]) -> list[dict]:
    cached = _load_checkpoint(config, "split")
    if cached is not None:
        return cached
    client = _client_for(config)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(lambda r: _split_one(r, config, client), filter_items))

    crops_root = config.output_dir / "crops"
    items = []
    for rec in results:
        image = decode_image(rec["image_path"])
        boxes = [SubfigureBox(x=b[0], y=b[1], w=b[2], h=b[3], confidence=b[4])
                 for b in rec["boxes"]]
        crops = crop_panels(image, boxes)
        kept_boxes, crop_paths = [], []
        for idx, (box, crop) in enumerate(zip(boxes, crops)):
            path = crops_root / rec["package_id"] / rec["figure_id"] / f"panel_{idx:03d}.png"
            path.parent.mkdir(parents=True, exist_ok=True)
            if crop.ndim == 3 and crop.shape[2] == 1:
                Image.fromarray(crop[:, :, 0], mode="L").save(path, format="PNG")
            else:
                Image.fromarray(crop, mode="RGB").save(path, format="PNG")
            if client is not None:
                # Re-gate subfigures through the classifier, mirroring the
                # figure-level gate.
                scores = client.classify(path.read_bytes())
                if not gate_medical(scores, k=config.gate_top_k):
                    path.unlink()
                    continue
            kept_boxes.append(box)
            crop_paths.append(str(path))
        # Renumber panels after any re-gate drops so indices stay dense.
        if len(kept_boxes) != len(boxes):
            for new_idx, old_path in enumerate(list(crop_paths)):
                target = crops_root / rec["package_id"] / rec["figure_id"] / f"panel_{new_idx:03d}.png"
                if str(target) != old_path:
                    Path(old_path).rename(target)
                    crop_paths[new_idx] = str(target)
        items.append({
            "package_id": rec["package_id"],
            "figure_id": rec["figure_id"],
            "image_path": rec["image_path"],
            "caption": rec["caption"],
            "boxes": [[b.x, b.y, b.w, b.h, b.confidence] for b in kept_boxes],
            "crop_paths": crop_paths,
            "compound": len(kept_boxes) >= 2,
            "regated": client is not None,
        })
    _write_checkpoint(config, "split", items)
    return items


def stage_parse(config: PipelineConfig, split_items: list[dict]) -> list[dict]:
    cached = _load_checkpoint(config, "parse")
    if cached is not None:
        return cached
    items = []
    for rec in split_items:
        result = split_caption(rec["caption"])
        items.append({
            "package_id": rec["package_id"],
            "figure_id": rec["figure_id"],
            "separable": result.separable,
            "reason": result.reason,
            "subcaptions": ([{"label": s.label, "text": s.text,
                              "span": list(s.span)} for s in result.subcaptions]
                            if result.separable else []),
        })
    _write_checkpoint(config, "parse", items)
    return items


def _split_result_from_item(item: dict) -> SplitResult:
    if not item["separable"]:
        return SplitResult.failed(item["reason"] or "no_labels")
    subs = [Subcaption(label=s["label"], text=s["text"], span=tuple(s["span"]))
            for s in item["subcaptions"]]
    return SplitResult.ok(subs)


def stage_align(config: PipelineConfig, split_items: list[dict],
                parse_items: list[dict]) -> list[dict]:
    cached = _load_checkpoint(config, "align")
    if cached is not None:
        return cached
    parse_by_key = {(p["package_id"], p["figure_id"]): p for p in parse_items}
    client = _client_for(config)
    use_scorer = config.align_mode in ("similarity",) or \
        (config.align_mode == "auto" and client is not None)
    scorer = client if use_scorer else None

    items = []
    for rec in split_items:
        boxes = [SubfigureBox(x=b[0], y=b[1], w=b[2], h=b[3], confidence=b[4])
                 for b in rec["boxes"]]
        if not boxes:
            continue
        parse_item = parse_by_key[(rec["package_id"], rec["figure_id"])]
        split = _split_result_from_item(parse_item)
        if config.align_mode == "fallback":
            split = SplitResult.failed("forced_fallback")
        record = FigureRecord(package_id=rec["package_id"],
                              figure_id=rec["figure_id"],
                              image=decode_image(rec["image_path"]),
                              caption=rec["caption"])
        entries = align_mod.resolve(record, boxes, split, scorer=scorer)
        for entry, crop_path in zip(entries, rec["crop_paths"]):
            entry.image_path = crop_path
            items.append(entry.to_json_dict())
    items.sort(key=lambda e: e["entry_id"])
    _write_checkpoint(config, "align", items)
    return items


def stage_emit(config: PipelineConfig, align_items: list[dict],
               split_items: list[dict]) -> dict:
    taxonomy = load_taxonomy(config.taxonomy_file)
    from .filtering import tag_modality

    entries = [emit_mod.DatasetEntry.from_json_dict(e) for e in align_items]
    for entry in entries:
        entry.modality_tags = tag_modality(entry.text, taxonomy)
        entry.demographics = emit_mod.extract_demographics(entry.text)

    exclusions = (emit_mod.load_exclusion_hashes(config.exclusion_hash_file)
                  if config.exclusion_hash_file else frozenset())
    kept, removed = emit_mod.dedup(entries, exclusions)

    # Crop paths are emitted relative to the output directory so the
    # dataset is relocatable and reruns are byte-comparable.
    for entry in kept:
        if entry.image_path is not None:
            entry.image_path = str(Path(entry.image_path).relative_to(config.output_dir))

    dataset_path = config.output_dir / "dataset.jsonl"
    manifest = emit_mod.write_jsonl(kept, dataset_path,
                                    config_hash=config.config_hash())
    manifest["removed"] = removed
    (config.output_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

    compound = [s for s in split_items if s["compound"]]
    n_compound = len(compound)
    n_sub_compound = sum(len(s["boxes"]) for s in compound)
    if n_compound > 0:
        stats = emit_mod.compute_stats(kept, (n_sub_compound, n_compound))
    else:
        stats = emit_mod.StatsReport(
            total_entries=len(kept),
            separable_fraction=0.0,
            avg_subfigs_per_caption=None,
            modality_histogram={}, term_frequency=[], sex_ratio=None,
            age_histogram={})
    (config.output_dir / "stats.json").write_text(
        json.dumps(stats.to_json_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return {"kept": [e.to_json_dict() for e in kept], "removed": removed,
            "stats": stats, "manifest": manifest}


def _find_fixture_ledger(config: PipelineConfig) -> dict | None:
    for candidate in (config.archive_root / "ledger.json",
                      config.archive_root.parent / "ledger.json"):
        if candidate.is_file():
            try:
                return json.loads(candidate.read_text(encoding="utf-8"))
            except ValueError:
                return None
    return None


def stage_eval(config: PipelineConfig, split_items: list[dict],
               align_items: list[dict]) -> dict:
    ledger = _find_fixture_ledger(config)
    report: dict = {"detection": None, "alignment": None, "retrieval": None}

    if ledger is not None:
        truth = {(f["package_id"], f["figure_id"]): f for f in ledger["figures"]}
        det = metrics_mod.DetectionSet()
        for rec in split_items:
            key = (rec["package_id"], rec["figure_id"])
            if key not in truth:
                continue
            name = f"{key[0]}:{key[1]}"
            det.ground_truth[name] = [tuple(b) for b in truth[key]["boxes"]]
            det.predictions[name] = [SubfigureBox(x=b[0], y=b[1], w=b[2], h=b[3],
                                                  confidence=b[4])
                                     for b in rec["boxes"]]
        if det.ground_truth:
            precision, recall = metrics_mod.precision_recall(
                det, conf_threshold=config.conf_threshold, iou_threshold=0.5)
            report["detection"] = {
                "average_precision": metrics_mod.average_precision(det, 0.5),
                "iou_threshold": 0.5,
                "precision": precision,
                "recall": recall,
                "conf_threshold": config.conf_threshold,
            }

        predicted, gold, offset = [], [], 0
        for rec in split_items:
            key = (rec["package_id"], rec["figure_id"])
            fig = truth.get(key)
            if fig is None:
                continue
            expected = fig.get("expected_texts") or [fig["caption"]] * len(rec["boxes"])
            fig_entries = [e for e in align_items
                           if (e["package_id"], e["figure_id"]) == key]
            if len(expected) != len(fig_entries):
                continue
            for e in sorted(fig_entries, key=lambda x: x["panel_index"]):
                idx = e["panel_index"]
                # Replicated texts (range labels) make several positions
                # correct; credit the panel's own position first.
                if e["text"] == expected[idx]:
                    pred_idx = idx
                elif e["text"] in expected:
                    pred_idx = expected.index(e["text"])
                else:
                    pred_idx = -1
                predicted.append((offset + idx, (offset + pred_idx) if pred_idx >= 0 else -1))
                gold.append((offset + idx, offset + idx))
            offset += len(expected)
        if predicted:
            report["alignment"] = {
                "accuracy": metrics_mod.alignment_accuracy(predicted, gold),
                "pairs": len(predicted),
            }

    client = _client_for(config)
    if client is not None and align_items:
        vecs_i, vecs_t = [], []
        for e in sorted(align_items, key=lambda x: x["entry_id"]):
            vecs_i.append(client.embed_image(Path(e["image_path"]).read_bytes()))
            vecs_t.append(client.embed_text(e["text"]))
        imgs = np.stack(vecs_i)
        txts = np.stack(vecs_t)
        sim = imgs @ txts.T
        ks = tuple(k for k in (1, 5, 10) if k <= sim.shape[0]) or (1,)
        report["retrieval"] = metrics_mod.retrieval_report(sim, ks).as_dict()

    (config.output_dir / "eval.json").write_text(
        json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    return report


# ------------------------------------------------------------------ run

def run_pipeline(config: PipelineConfig) -> dict:
    """Execute ingest through eval, returning the run report dict.

    The report lands in ``<output_dir>/report.json``; a stage failure
    raises StageError after writing the partial report.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {"config_hash": config.config_hash(), "stages": {}, "funnel": {}}
    state: dict = {}

    def _timed(stage: str, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            report["failed_stage"] = stage
            _write_report(config, report)
            raise StageError(stage, exc) from exc
        report["stages"][stage] = {"wall_time_s": round(time.perf_counter() - t0, 6)}
        return result

    state["ingest"] = _timed("ingest", lambda: stage_ingest(config))
    state["filter"] = _timed("filter", lambda: stage_filter(config, state["ingest"]))
    state["split"] = _timed("split", lambda: stage_split(config, state["filter"]))
    state["parse"] = _timed("parse", lambda: stage_parse(config, state["split"]))
    state["align"] = _timed("align", lambda: stage_align(config, state["split"],
                                                         state["parse"]))
    state["emit"] = _timed("emit", lambda: stage_emit(config, state["align"],
                                                      state["split"]))
    state["eval"] = _timed("eval", lambda: stage_eval(config, state["split"],
                                                      state["align"]))

    by_mode: dict[str, int] = {}
    for e in state["emit"]["kept"]:
        by_mode[e["alignment_mode"]] = by_mode.get(e["alignment_mode"], 0) + 1
    compound = [s for s in state["split"] if s["compound"]]
    report["funnel"] = {
        "figures_in": len(state["ingest"]),
        "figures_kept": len(state["filter"]),
        "compound_figures": len(compound),
        "subfigures": sum(len(s["boxes"]) for s in state["split"]),
        "separable_captions": sum(1 for p in state["parse"] if p["separable"]),
        "subcaptions": sum(len(p["subcaptions"]) for p in state["parse"]),
        "aligned_pairs": len(state["align"]),
        "dedup_removed": len(state["emit"]["removed"]),
        "entries_emitted": len(state["emit"]["kept"]),
    }
    report["entries_by_mode"] = by_mode

    if config.render_figures:
        try:
            from .figures import render_report_figures
            render_report_figures(state["emit"]["stats"], report["funnel"],
                                  config.output_dir)
        except Exception as exc:  # pragma: no cover - best effort
            log.warning("figure rendering failed: %s", exc)

    _write_report(config, report)
    return report


def _write_report(config: PipelineConfig, report: dict) -> None:
    (config.output_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")


def run_single_stage(config: PipelineConfig, stage: str) -> None:
    """Run one stage against the previous stage's checkpoint."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    config.output_dir.mkdir(parents=True, exist_ok=True)

    def need(name: str):
        data = _load_checkpoint(config, name)
        if data is None:
            raise FigforgeError(
                f"stage {stage!r} needs the {name!r} checkpoint; run it first")
        return data

    if stage == "ingest":
        stage_ingest(config)
    elif stage == "filter":
        stage_filter(config, need("ingest"))
    elif stage == "split":
        stage_split(config, need("filter"))
    elif stage == "parse":
        stage_parse(config, need("split"))
    elif stage == "align":
        stage_align(config, need("split"), need("parse"))
    elif stage == "emit":
        stage_emit(config, need("align"), need("split"))
    elif stage == "eval":
        stage_eval(config, need("split"), need("align"))
