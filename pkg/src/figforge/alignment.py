"""Assign each subfigure its subcaption: by label order when counts
match, by embedding similarity when a scorer is available, with
full-caption fallback otherwise."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .captions import SplitResult, sort_label_indices
from .emit import DatasetEntry
from .errors import EmptyMatrix, InferenceClientError
from .ingest import FigureRecord
from .panels import SubfigureBox, crop_panels

MODE_LABEL_ORDER = "label_order"
MODE_SIMILARITY = "similarity"
MODE_FALLBACK = "full_caption_fallback"

FALLBACK_CONFIDENCE = 0.5


@dataclass(frozen=True)
class Alignment:
    pairs: tuple[tuple[int, int], ...]  # (subfigure index, subcaption index)
    mode: str
    confidence: tuple[float, ...]


@dataclass(frozen=True)
class CountMismatch:
    n_subfigs: int
    n_subcaps: int


def align_label_order(n_subfigs: int, subcaps) -> Alignment | CountMismatch:
    """Pair subfigure k (reading order) with the k-th subcaption after
    sorting subcaptions by label.  Bijective; confidence 1.0."""
    if n_subfigs < 1:
        raise ValueError("need at least one subfigure")
    if n_subfigs != len(subcaps):
        return CountMismatch(n_subfigs=n_subfigs, n_subcaps=len(subcaps))
    order = sort_label_indices([s.label for s in subcaps])
    pairs = tuple((k, order[k]) for k in range(n_subfigs))
    return Alignment(pairs=pairs, mode=MODE_LABEL_ORDER,
                     confidence=tuple(1.0 for _ in pairs))


def align_similarity(sim: np.ndarray) -> Alignment:
    """Pair each subfigure with the argmax of its similarity row.

    Ties go to the lowest column index; several subfigures may share a
    subcaption.  Confidence is the row softmax at the chosen column.
    """
    mat = np.asarray(sim, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0 or mat.shape[1] == 0:
        raise EmptyMatrix("similarity matrix must be nonempty")
    if not np.isfinite(mat).all():
        raise ValueError("similarity entries must be finite")
    pairs = []
    confidences = []
    for i in range(mat.shape[0]):
        row = mat[i]
        j = int(np.argmax(row))  # argmax returns the first maximum
        shifted = row - row.max()
        softmax = np.exp(shifted) / np.exp(shifted).sum()
        pairs.append((i, j))
        confidences.append(float(softmax[j]))
    return Alignment(pairs=tuple(pairs), mode=MODE_SIMILARITY,
                     confidence=tuple(confidences))


def _crop_png_bytes(record: FigureRecord, boxes: list[SubfigureBox]) -> list[bytes]:
    payloads = []
    for crop in crop_panels(record.image, boxes):
        if crop.ndim == 3 and crop.shape[2] == 1:
            img = Image.fromarray(crop[:, :, 0], mode="L")
        else:
            img = Image.fromarray(crop, mode="RGB")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        payloads.append(buf.getvalue())
    return payloads


def _cosine_matrix(image_vecs: list[np.ndarray], text_vecs: list[np.ndarray]) -> np.ndarray:
    imgs = np.stack([v / max(np.linalg.norm(v), 1e-12) for v in image_vecs])
    txts = np.stack([v / max(np.linalg.norm(v), 1e-12) for v in text_vecs])
    return imgs @ txts.T


def resolve(record: FigureRecord, boxes: list[SubfigureBox], split: SplitResult,
            scorer=None) -> list[DatasetEntry]:
    """Produce one dataset entry per subfigure box.

    Policy: separable caption plus a scorer uses embedding similarity
    between panel crops and subcaption texts; separable without a scorer
    uses label order when counts match; everything else falls back to
    the full caption at confidence 0.5.  ``boxes`` must already be in
    reading order.
    """
    n = len(boxes)
    subcaps = list(split.subcaptions) if split.separable else []
    alignment: Alignment | None = None
    if split.separable and scorer is not None and n > 0:
        try:
            image_vecs = [np.asarray(scorer.embed_image(p), dtype=np.float64)
                          for p in _crop_png_bytes(record, boxes)]
            text_vecs = [np.asarray(scorer.embed_text(s.text), dtype=np.float64)
                         for s in subcaps]
        except InferenceClientError as exc:
            raise InferenceClientError(
                f"{record.package_id}/{record.figure_id}: {exc}") from exc
        alignment = align_similarity(_cosine_matrix(image_vecs, text_vecs))
    elif split.separable and scorer is None:
        candidate = align_label_order(n, subcaps) if n > 0 else None
        if isinstance(candidate, Alignment):
            alignment = candidate

    entries = []
    for idx in range(n):
        if alignment is not None:
            subcap_idx = alignment.pairs[idx][1]
            text = subcaps[subcap_idx].text
            mode = alignment.mode
            confidence = alignment.confidence[idx]
        else:
            text = record.caption
            mode = MODE_FALLBACK
            confidence = FALLBACK_CONFIDENCE
        entries.append(DatasetEntry(
            entry_id=f"{record.package_id}:{record.figure_id}:{idx:03d}",
            package_id=record.package_id,
            figure_id=record.figure_id,
            panel_index=idx,
            image_path=None,
            text=text,
            alignment_mode=mode,
            confidence=confidence,
        ))
    return entries
