"""Deterministic training-objective arithmetic over given embeddings and
predictions: batch similarity, contrastive loss, token masking, masked
reconstruction loss and their weighted total.  No training happens here.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, NonNormalizedDistribution, ZeroNormRow


@dataclass(frozen=True)
class EmbeddingBatch:
    """Paired image/text embedding matrices; row i of each side belongs
    to the same sample."""

    image: np.ndarray  # b x d
    text: np.ndarray   # b x d

    def __post_init__(self):
        img, txt = np.asarray(self.image), np.asarray(self.text)
        if img.ndim != 2 or txt.ndim != 2 or img.shape != txt.shape:
            raise ValueError("image and text embeddings must share a b x d shape")
        if not (np.isfinite(img).all() and np.isfinite(txt).all()):
            raise ValueError("embeddings must be finite")

    @property
    def batch_size(self) -> int:
        return np.asarray(self.image).shape[0]


@dataclass(frozen=True)
class MaskedSequence:
    tokens: tuple[int, ...]
    mask_positions: tuple[int, ...]   # ascending
    original_ids: tuple[int, ...]     # aligned with mask_positions
    mask_token_id: int


@dataclass(frozen=True)
class LossConfig:
    """Contrastive temperature and masked-loss weight.

    The 0.07 temperature is a convention of this implementation; the
    masked-loss weight defaults to 0.5.
    """

    temperature: float = 0.07
    lambda_mlm: float = 0.5
    normalize: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.lambda_mlm < 0:
            raise ValueError("lambda_mlm must be non-negative")


def _l2_normalize(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ZeroNormRow("cannot normalize a zero-norm embedding row")
    return mat / norms[:, None]


def similarity(batch: EmbeddingBatch, temperature: float = 0.07,
               normalize: bool = True) -> np.ndarray:
    """Pre-softmax similarity logits S[i][j] = (v_i . t_j) / temperature.

    Rows are L2-normalized first unless ``normalize`` is off.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    img = np.asarray(batch.image, dtype=np.float64)
    txt = np.asarray(batch.text, dtype=np.float64)
    if normalize:
        img = _l2_normalize(img)
        txt = _l2_normalize(txt)
    return img @ txt.T / temperature


def _log_softmax(logits: np.ndarray, axis: int) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def itc_loss(batch: EmbeddingBatch, temperature: float = 0.07,
             normalize: bool = True) -> float:
    """Image-text contrastive loss: per sample, cross-entropy of the
    row softmax (image to text) plus the column softmax (text to image)
    against the diagonal target, averaged over the batch."""
    if batch.batch_size < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    logits = similarity(batch, temperature, normalize)
    diag = np.arange(batch.batch_size)
    i2t = -_log_softmax(logits, axis=1)[diag, diag]
    t2i = -_log_softmax(logits, axis=0)[diag, diag]
    return float(np.mean(i2t + t2i))


def mask_tokens(tokens: list[int], p: float = 0.15, seed: int = 0,
                mask_token_id: int = 0,
                special_ids: frozenset[int] | set[int] = frozenset()) -> MaskedSequence:
    """Mask each non-special position independently with probability p.

    Deterministic for a given seed; original ids are recorded at the
    masked positions so the reconstruction loss can score them.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("masking probability must be in [0, 1]")
    rng = random.Random(seed)
    out = list(tokens)
    positions = []
    originals = []
    for idx, tok in enumerate(tokens):
        if tok in special_ids:
            continue
        if rng.random() < p:
            positions.append(idx)
            originals.append(tok)
            out[idx] = mask_token_id
    return MaskedSequence(tokens=tuple(out), mask_positions=tuple(positions),
                          original_ids=tuple(originals), mask_token_id=mask_token_id)


def mlm_loss(predicted: np.ndarray, seq: MaskedSequence, atol: float = 1e-6) -> float:
    """Mean negative log-probability of the original token at each
    masked position.

    ``predicted`` holds one vocabulary distribution per masked position,
    ordered like ``seq.mask_positions``.
    """
    if not seq.mask_positions:
        raise EmptyMask("no masked positions to score")
    dists = np.asarray(predicted, dtype=np.float64)
    if dists.ndim != 2 or dists.shape[0] != len(seq.mask_positions):
        raise ValueError("need one distribution per masked position")
    sums = dists.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        raise NonNormalizedDistribution("distributions must sum to 1 within tolerance")
    probs = dists[np.arange(len(seq.original_ids)), list(seq.original_ids)]
    with np.errstate(divide="ignore"):
        return float(np.mean(-np.log(probs)))


def total_loss(itc: float, mlm: float, lambda_mlm: float = 0.5) -> float:
    """Weighted sum of the two objectives: itc + lambda * mlm."""
    if not (math.isfinite(itc) and math.isfinite(mlm) and math.isfinite(lambda_mlm)):
        raise ValueError("loss terms must be finite")
    return itc + lambda_mlm * mlm
