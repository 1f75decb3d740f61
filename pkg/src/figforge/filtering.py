"""Caption keyword filtering, modality tagging and classifier-score
gating (the pipeline's first stage).

Matching is case-insensitive and whole-word: a term matches only when
not flanked by alphanumerics, so "ct" never fires inside "Octopus".
Multi-word taxonomy terms ("mitotic figure") match as phrases under the
same boundary rule.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import EmptyKeywordList, MissingMedicalCategory

MEDICAL_CATEGORY = "Medical"


@dataclass(frozen=True)
class KeywordSet:
    terms: frozenset[str]
    source_note: str = ""


@dataclass(frozen=True)
class CategoryScores:
    scores: tuple[float, ...]
    category_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.scores) != 28 or len(self.category_names) != 28:
            raise ValueError("expected exactly 28 categories")
        if any(not math.isfinite(s) or s < 0 for s in self.scores):
            raise ValueError("scores must be finite and non-negative")


@dataclass(frozen=True)
class MatchHit:
    term: str
    offset: int


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    hits: tuple[MatchHit, ...]


def default_keyword_path() -> Path:
    return Path(resources.files("figforge").joinpath("data/keywords.txt"))


def default_taxonomy_path() -> Path:
    return Path(resources.files("figforge").joinpath("data/taxonomy.tsv"))


def load_keywords(path: str | Path) -> KeywordSet:
    """Load one term per line; ``#`` starts a comment; terms are
    lowercased and whitespace-trimmed."""
    text = Path(path).read_text(encoding="utf-8")
    terms = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            terms.add(line)
    if not terms:
        raise EmptyKeywordList(f"no usable terms in {path}")
    return KeywordSet(terms=frozenset(terms), source_note=str(path))


def load_taxonomy(path: str | Path) -> dict[str, str]:
    """Two-column tab-separated term -> tag mapping."""
    mapping: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        term, _, tag = line.partition("\t")
        term, tag = term.strip().lower(), tag.strip()
        if term and tag:
            mapping[term] = tag
    return mapping


def _term_pattern(term: str) -> re.Pattern:
    return re.compile(r"(?<![0-9A-Za-z])" + re.escape(term) + r"(?![0-9A-Za-z])",
                      re.IGNORECASE)


def normalize_caption(caption: str) -> str:
    return unicodedata.normalize("NFC", caption)


def match_caption(caption: str, kw: KeywordSet) -> MatchResult:
    """Whole-word, case-insensitive scan; hits come back sorted by
    offset (ties by term).  An empty caption matches nothing."""
    hits = []
    for term in kw.terms:
        for m in _term_pattern(term).finditer(caption):
            hits.append(MatchHit(term=term, offset=m.start()))
    hits.sort(key=lambda h: (h.offset, h.term))
    return MatchResult(matched=bool(hits), hits=tuple(hits))


def gate_medical(scores: CategoryScores, k: int = 4) -> bool:
    """True when the Medical category ranks within the top k of 28.

    Ranking is by descending score; ties resolve by ascending category
    index, so equal scores favor earlier-listed categories.
    """
    if not (1 <= k <= 28):
        raise ValueError("k must be in [1, 28]")
    try:
        medical_idx = scores.category_names.index(MEDICAL_CATEGORY)
    except ValueError:
        raise MissingMedicalCategory(
            f"{MEDICAL_CATEGORY!r} absent from categories") from None
    order = sorted(range(28), key=lambda i: (-scores.scores[i], i))
    rank = order.index(medical_idx) + 1
    return rank <= k


def tag_modality(caption: str, taxonomy: dict[str, str]) -> list[str]:
    """Deduplicated modality tags in first-occurrence order."""
    first_seen: dict[str, int] = {}
    for term, tag in taxonomy.items():
        m = _term_pattern(term).search(caption)
        if m is not None:
            offset = m.start()
            if tag not in first_seen or offset < first_seen[tag]:
                first_seen[tag] = offset
    return [tag for tag, _ in sorted(first_seen.items(), key=lambda kv: (kv[1], kv[0]))]
