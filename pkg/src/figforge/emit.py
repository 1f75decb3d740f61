"""Dataset emission: byte-hash deduplication, JSONL serialization and
corpus statistics (modality distribution, term frequency, demographics).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Serialized key order of dataset.jsonl records.
ENTRY_KEYS = ("entry_id", "package_id", "figure_id", "panel_index", "image_path",
              "text", "alignment_mode", "confidence", "modality_tags", "demographics")


@dataclass
class DatasetEntry:
    """One emitted image-text pair."""

    entry_id: str
    package_id: str
    figure_id: str
    panel_index: int
    image_path: str | Path | None
    text: str
    alignment_mode: str
    confidence: float
    modality_tags: list[str] = field(default_factory=list)
    demographics: tuple[int, str] | None = None  # (age, "M"|"F")

    def to_json_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "package_id": self.package_id,
            "figure_id": self.figure_id,
            "panel_index": self.panel_index,
            "image_path": str(self.image_path) if self.image_path else None,
            "text": self.text,
            "alignment_mode": self.alignment_mode,
            "confidence": self.confidence,
            "modality_tags": list(self.modality_tags),
            "demographics": ({"age": self.demographics[0], "sex": self.demographics[1]}
                             if self.demographics else None),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DatasetEntry":
        demo = data.get("demographics")
        return cls(
            entry_id=data["entry_id"], package_id=data["package_id"],
            figure_id=data["figure_id"], panel_index=data["panel_index"],
            image_path=data.get("image_path"), text=data["text"],
            alignment_mode=data["alignment_mode"], confidence=data["confidence"],
            modality_tags=list(data.get("modality_tags") or []),
            demographics=(demo["age"], demo["sex"]) if demo else None,
        )


def hash_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_exclusion_hashes(path: str | Path) -> frozenset[str]:
    """One lowercase hex hash per line; ``#`` comments allowed."""
    hashes = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            hashes.add(line)
    return frozenset(hashes)


def dedup(entries: list[DatasetEntry],
          exclusion_hashes: frozenset[str] | set[str] | None = None
          ) -> tuple[list[DatasetEntry], list[dict]]:
    """Exact byte-hash deduplication over crop images.

    Entries are visited in entry_id order; the first entry per hash is
    kept, later ones are removed, and entries whose hash appears in the
    exclusion set are removed regardless.  Entries with an unreadable
    image are kept with a warning.  Returns (kept, removal ledger).
    """
    exclusion_hashes = frozenset(exclusion_hashes or ())
    seen: dict[str, str] = {}
    kept: list[DatasetEntry] = []
    removed: list[dict] = []
    for entry in sorted(entries, key=lambda e: e.entry_id):
        if entry.image_path is None:
            kept.append(entry)
            continue
        try:
            digest = hash_file(entry.image_path)
        except OSError as exc:
            log.warning("%s: unreadable crop (%s), entry kept", entry.entry_id, exc)
            kept.append(entry)
            continue
        if digest in exclusion_hashes:
            removed.append({"entry_id": entry.entry_id, "reason": "excluded",
                            "hash": digest})
            continue
        if digest in seen:
            removed.append({"entry_id": entry.entry_id, "reason": "duplicate",
                            "hash": digest, "kept_entry_id": seen[digest]})
            continue
        seen[digest] = entry.entry_id
        kept.append(entry)
    return kept, removed


_AGE_SEX_RE = re.compile(
    r"\b(\d{1,3})(?:\s*-\s*|\s+)(?:years?[\s-]?old|y/o|yo)\s+([A-Za-z]+)",
    re.IGNORECASE)

_MALE_WORDS = {"male", "man", "boy"}
_FEMALE_WORDS = {"female", "woman", "girl"}


def extract_demographics(caption: str) -> tuple[int, str] | None:
    """Extract (age, sex) from phrases like "54-year-old male".

    Accepts "year old" spelling variants plus "y/o" and "yo"; sex words
    map male/man/boy -> M and female/woman/girl -> F, with bare M/F
    accepted only in uppercase.  Ages outside [0, 120] are ignored.
    First valid match wins; absent otherwise.
    """
    for m in _AGE_SEX_RE.finditer(caption):
        age = int(m.group(1))
        if not (0 <= age <= 120):
            continue
        word = m.group(2)
        if word.lower() in _MALE_WORDS or word == "M":
            return (age, "M")
        if word.lower() in _FEMALE_WORDS or word == "F":
            return (age, "F")
    return None


def write_jsonl(entries: list[DatasetEntry], path: str | Path,
                config_hash: str = "") -> dict:
    """Write one JSON object per line, ordered by entry_id.

    Returns the manifest dict (schema version, counts, config hash);
    rewriting the same entries yields byte-identical output.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(entries, key=lambda e: e.entry_id)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in ordered:
            fh.write(json.dumps(entry.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
    return {
        "schema_version": SCHEMA_VERSION,
        "count": len(ordered),
        "config_hash": config_hash,
        "path": path.name,
    }


def read_jsonl(path: str | Path) -> list[DatasetEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(DatasetEntry.from_json_dict(json.loads(line)))
    return entries


def load_stopwords() -> frozenset[str]:
    text = resources.files("figforge").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines()
                     if line.strip() and not line.startswith("#"))


@dataclass
class StatsReport:
    total_entries: int
    separable_fraction: float
    avg_subfigs_per_caption: float | None
    modality_histogram: dict[str, int]
    term_frequency: list[tuple[str, int]]
    sex_ratio: float | None
    age_histogram: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "total_entries": self.total_entries,
            "separable_fraction": self.separable_fraction,
            "avg_subfigs_per_caption": self.avg_subfigs_per_caption,
            "modality_histogram": dict(sorted(self.modality_histogram.items())),
            "term_frequency": [[t, c] for t, c in self.term_frequency],
            "sex_ratio": self.sex_ratio,
            "age_histogram": dict(sorted(self.age_histogram.items(),
                                         key=lambda kv: int(kv[0]))),
        }


def compute_stats(entries: list[DatasetEntry],
                  caption_ledger: tuple[int, int],
                  top_n_terms: int = 25) -> StatsReport:
    """Aggregate corpus statistics.

    ``caption_ledger`` is (number of subfigures, number of compound
    figures); their ratio is the average subfigures per caption and a
    zero compound count raises ZeroDivisionError.
    """
    n_subfigures, n_compound = caption_ledger
    if n_compound == 0:
        raise ZeroDivisionError("no compound figures in the caption ledger")
    avg = n_subfigures / n_compound

    histogram: Counter[str] = Counter()
    for entry in entries:
        for tag in dict.fromkeys(entry.modality_tags):
            histogram[tag] += 1

    demo = [e.demographics for e in entries if e.demographics is not None]
    sex_ratio = (sum(1 for _, sex in demo if sex == "M") / len(demo)) if demo else None
    ages: Counter[str] = Counter()
    for age, _ in demo:
        ages[str((age // 10) * 10)] += 1

    stopwords = load_stopwords()
    tokens: Counter[str] = Counter()
    for entry in entries:
        for tok in re.findall(r"[a-z]+", entry.text.lower()):
            if len(tok) >= 2 and tok not in stopwords:
                tokens[tok] += 1
    terms = sorted(tokens.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n_terms]

    separable = sum(1 for e in entries if e.alignment_mode != "full_caption_fallback")
    return StatsReport(
        total_entries=len(entries),
        separable_fraction=(separable / len(entries)) if entries else 0.0,
        avg_subfigs_per_caption=avg,
        modality_histogram=dict(histogram),
        term_frequency=terms,
        sex_ratio=sex_ratio,
        age_histogram=dict(ages),
    )
