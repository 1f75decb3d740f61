"""Deterministic stub backend.

Every response is a pure function of the request payload bytes: scores
and embeddings are seeded from a content hash, and detection runs the
same gutter splitter the pipeline ships, at confidence 0.9.  Identical
payloads therefore always produce identical responses, which is the
property the pipeline's integration tests rely on.
"""

from __future__ import annotations

import hashlib
import io

import numpy as np
from PIL import Image, UnidentifiedImageError

from figforge.panels import GutterParams, split_gutters

# 28 document-figure categories served by the classifier route.  The
# Medical logit carries a fixed bias so stub-gated pipelines keep their
# figures; everything else is hash-random per image.
CATEGORIES = (
    "Medical", "Bar plot", "Line plot", "Scatter plot", "Pie chart",
    "Table", "Flowchart", "Block diagram", "Geographic map", "Heat map",
    "Venn diagram", "Box plot", "Histogram", "Network graph",
    "Tree diagram", "Screenshot", "Natural photograph", "Sketch",
    "Equation", "Algorithm listing", "Radar plot", "Area plot",
    "Contour plot", "Surface plot", "Timeline", "Gantt chart",
    "Word cloud", "Circuit diagram",
)

MEDICAL_BIAS = 2.0
DETECT_CONFIDENCE = 0.9
DEFAULT_EMBED_DIM = 512


def _seed_from(payload: bytes, salt: bytes) -> int:
    digest = hashlib.sha256(salt + payload).digest()
    return int.from_bytes(digest[:8], "big")


def decode_image(payload: bytes) -> np.ndarray:
    """Decode request image bytes to an H x W x C uint8 array.

    Raises ValueError on anything that is not a decodable PNG/JPEG.
    """
    try:
        with Image.open(io.BytesIO(payload)) as img:
            if img.format not in ("PNG", "JPEG"):
                raise ValueError(f"unsupported image format {img.format}")
            if img.mode == "L":
                return np.asarray(img)[:, :, None]
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"undecodable image payload: {exc}") from exc


def classify(payload: bytes) -> tuple[list[float], list[str]]:
    """Softmax scores over the 28 categories, seeded by the image bytes."""
    decode_image(payload)
    rng = np.random.default_rng(_seed_from(payload, b"classify:"))
    logits = rng.uniform(0.0, 1.0, size=len(CATEGORIES))
    logits[0] += MEDICAL_BIAS
    shifted = np.exp(logits - logits.max())
    scores = shifted / shifted.sum()
    return [float(s) for s in scores], list(CATEGORIES)


def detect(payload: bytes) -> list[dict]:
    """Gutter-splitter boxes over the request image, confidence 0.9.

    The protocol caps responses at 32 boxes; extras past the cap are
    dropped in reading order.
    """
    image = decode_image(payload)
    boxes = split_gutters(image, GutterParams())[:32]
    return [{"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": DETECT_CONFIDENCE}
            for b in boxes]


def embed(payload: bytes, kind: str, dim: int = DEFAULT_EMBED_DIM) -> list[float]:
    """Unit-norm pseudo-random vector seeded by the payload content."""
    if kind == "image":
        decode_image(payload)
    rng = np.random.default_rng(_seed_from(payload, f"embed:{kind}:".encode()))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return [float(v) for v in vec]
