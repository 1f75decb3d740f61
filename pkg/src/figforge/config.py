"""Pipeline configuration: a JSON file of documented keys, validated
into a PipelineConfig with defaults filled and contradictions rejected.

Relative paths resolve against the config file's directory (or the
current directory when the config is built programmatically).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .filtering import default_keyword_path, default_taxonomy_path

SPLIT_MODES = ("gutter", "detector")
ALIGN_MODES = ("auto", "label", "similarity", "fallback")

_KNOWN_KEYS = {
    "archive_root", "output_dir", "keyword_file", "taxonomy_file",
    "split_mode", "conf_threshold", "align_mode", "inference_endpoint",
    "seed", "exclusion_hash_file", "workers", "gate_top_k",
    "temperature", "lambda_mlm", "render_figures",
}


@dataclass
class PipelineConfig:
    archive_root: Path
    output_dir: Path
    keyword_file: Path
    taxonomy_file: Path
    split_mode: str = "gutter"
    conf_threshold: float = 0.7
    align_mode: str = "auto"
    inference_endpoint: str | None = None
    seed: int = 0
    exclusion_hash_file: Path | None = None
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    gate_top_k: int = 4
    temperature: float = 0.07
    lambda_mlm: float = 0.5
    render_figures: bool = True

    def semantic_dict(self) -> dict:
        """Everything that affects pipeline output (not where it lands)."""
        return {
            "archive_root": str(self.archive_root),
            "keyword_file": str(self.keyword_file),
            "taxonomy_file": str(self.taxonomy_file),
            "split_mode": self.split_mode,
            "conf_threshold": self.conf_threshold,
            "align_mode": self.align_mode,
            "inference_endpoint": self.inference_endpoint,
            "seed": self.seed,
            "exclusion_hash_file": (str(self.exclusion_hash_file)
                                    if self.exclusion_hash_file else None),
            "gate_top_k": self.gate_top_k,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def build_config(raw: dict, base_dir: str | Path = ".") -> PipelineConfig:
    """Validate a raw key-value mapping into a PipelineConfig."""
    base = Path(base_dir).resolve()
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for required in ("archive_root", "output_dir"):
        if not raw.get(required):
            raise ConfigError(f"{required}: required")

    archive_root = _resolve(base, str(raw["archive_root"]))
    if not archive_root.is_dir():
        raise ConfigError(f"archive_root: not a directory: {archive_root}")
    output_dir = _resolve(base, str(raw["output_dir"]))

    keyword_file = (_resolve(base, str(raw["keyword_file"]))
                    if raw.get("keyword_file") else default_keyword_path())
    if not keyword_file.is_file():
        raise ConfigError(f"keyword_file: not found: {keyword_file}")
    taxonomy_file = (_resolve(base, str(raw["taxonomy_file"]))
                     if raw.get("taxonomy_file") else default_taxonomy_path())
    if not taxonomy_file.is_file():
        raise ConfigError(f"taxonomy_file: not found: {taxonomy_file}")

    split_mode = str(raw.get("split_mode", "gutter"))
    if split_mode not in SPLIT_MODES:
        raise ConfigError(f"split_mode: must be one of {SPLIT_MODES}")
    align_mode = str(raw.get("align_mode", "auto"))
    if align_mode not in ALIGN_MODES:
        raise ConfigError(f"align_mode: must be one of {ALIGN_MODES}")

    try:
        conf_threshold = float(raw.get("conf_threshold", 0.7))
    except (TypeError, ValueError):
        raise ConfigError("conf_threshold: must be a number") from None
    if not (0.0 <= conf_threshold <= 1.0):
        raise ConfigError(f"conf_threshold: {conf_threshold} outside [0, 1]")

    endpoint = raw.get("inference_endpoint") or None
    if split_mode == "detector" and not endpoint:
        raise ConfigError("split_mode: detector mode requires inference_endpoint")
    if align_mode == "similarity" and not endpoint:
        raise ConfigError("align_mode: similarity mode requires inference_endpoint")

    exclusion = (_resolve(base, str(raw["exclusion_hash_file"]))
                 if raw.get("exclusion_hash_file") else None)
    if exclusion is not None and not exclusion.is_file():
        raise ConfigError(f"exclusion_hash_file: not found: {exclusion}")

    try:
        seed = int(raw.get("seed", 0))
        workers = int(raw.get("workers", os.cpu_count() or 1))
        gate_top_k = int(raw.get("gate_top_k", 4))
    except (TypeError, ValueError):
        raise ConfigError("seed/workers/gate_top_k: must be integers") from None
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    if not (1 <= gate_top_k <= 28):
        raise ConfigError("gate_top_k: must be in [1, 28]")

    try:
        temperature = float(raw.get("temperature", 0.07))
        lambda_mlm = float(raw.get("lambda_mlm", 0.5))
    except (TypeError, ValueError):
        raise ConfigError("temperature/lambda_mlm: must be numbers") from None
    if temperature <= 0:
        raise ConfigError("temperature: must be positive")
    if lambda_mlm < 0:
        raise ConfigError("lambda_mlm: must be non-negative")

    return PipelineConfig(
        archive_root=archive_root, output_dir=output_dir,
        keyword_file=keyword_file, taxonomy_file=taxonomy_file,
        split_mode=split_mode, conf_threshold=conf_threshold,
        align_mode=align_mode, inference_endpoint=endpoint,
        seed=seed, exclusion_hash_file=exclusion, workers=workers,
        gate_top_k=gate_top_k, temperature=temperature, lambda_mlm=lambda_mlm,
        render_figures=bool(raw.get("render_figures", True)),
    )


def validate_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Load and validate a JSON config file; overrides win over file keys."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return build_config(merged, base_dir=path.parent)
