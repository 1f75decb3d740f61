"""Archive ingestion: walk package directories, parse manifests and
decode figure rasters.

A package is any directory containing a ``package.json`` manifest:

    {"package_id": "...",
     "figures": [{"figure_id": "...", "image_path": "...", "caption": "..."}]}

``image_path`` is relative to the package directory; captions are UTF-8
and get NFC-normalized on load.  PNG and JPEG images are accepted.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import MalformedManifest

log = logging.getLogger(__name__)

MANIFEST_NAME = "package.json"


@dataclass(frozen=True)
class FigureEntry:
    figure_id: str
    image_path: Path
    caption: str
    caption_missing: bool


@dataclass(frozen=True)
class ArticlePackage:
    package_id: str
    manifest_path: Path
    figure_entries: tuple[FigureEntry, ...]
    dropped: tuple[str, ...] = ()  # figure_ids dropped at parse time


@dataclass
class FigureRecord:
    """One figure image with its caption and provenance."""

    package_id: str
    figure_id: str
    image: np.ndarray  # H x W x C, C in {1, 3}
    caption: str
    caption_missing: bool = False
    source_path: Path | None = None


def scan_archive(root: str | Path) -> list[Path]:
    """All directories under root containing a package manifest, sorted
    lexicographically by package_id.

    Unreadable subtrees or unparseable manifests are logged and the
    directory sorts by its name instead; scanning never raises for
    per-package problems.
    """
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"archive root does not exist: {root}")
    if not root.is_dir():
        raise NotADirectoryError(f"archive root is not a directory: {root}")
    found: list[tuple[str, Path]] = []
    for manifest in sorted(root.rglob(MANIFEST_NAME)):
        pkg_dir = manifest.parent
        try:
            data = json.loads(manifest.read_text(encoding="utf-8"))
            package_id = str(data.get("package_id") or pkg_dir.name)
        except (OSError, ValueError) as exc:
            log.warning("unreadable manifest in %s: %s", pkg_dir, exc)
            package_id = pkg_dir.name
        found.append((package_id, pkg_dir))
    found.sort(key=lambda t: (t[0], str(t[1])))
    return [path for _, path in found]


def parse_package(path: str | Path) -> ArticlePackage:
    """Parse a package manifest into entries, preserving manifest order.

    Entries whose declared image file is absent are dropped with a
    warning.  Figures without a caption are kept and flagged.
    """
    pkg_dir = Path(path)
    manifest_path = pkg_dir / MANIFEST_NAME
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedManifest(f"cannot read {manifest_path}: {exc}") from exc
    except ValueError as exc:
        raise MalformedManifest(f"invalid JSON in {manifest_path}: {exc}") from exc
    if not isinstance(data, dict) or "figures" not in data or "package_id" not in data:
        raise MalformedManifest(f"{manifest_path} lacks package_id/figures")
    package_id = str(data["package_id"])
    if not package_id:
        raise MalformedManifest(f"{manifest_path} has an empty package_id")

    entries: list[FigureEntry] = []
    dropped: list[str] = []
    seen: set[str] = set()
    for fig in data["figures"]:
        try:
            figure_id = str(fig["figure_id"])
            image_rel = str(fig["image_path"])
            caption = fig.get("caption", "")
        except (TypeError, KeyError) as exc:
            raise MalformedManifest(
                f"{manifest_path}: figure entry missing fields: {fig!r}") from exc
        if figure_id in seen:
            raise MalformedManifest(
                f"{manifest_path}: duplicate figure_id {figure_id!r}")
        seen.add(figure_id)
        image_path = pkg_dir / image_rel
        if not image_path.is_file():
            log.warning("%s/%s: image %s missing, entry dropped",
                        package_id, figure_id, image_rel)
            dropped.append(figure_id)
            continue
        caption = unicodedata.normalize("NFC", str(caption or ""))
        entries.append(FigureEntry(figure_id=figure_id, image_path=image_path,
                                   caption=caption,
                                   caption_missing=not caption.strip()))
    return ArticlePackage(package_id=package_id, manifest_path=manifest_path,
                          figure_entries=tuple(entries), dropped=tuple(dropped))


def decode_image(path: str | Path, promote_grayscale: bool = False) -> np.ndarray:
    """Decode PNG/JPEG into an H x W x C uint8 array, C in {1, 3}."""
    with Image.open(path) as img:
        if img.format not in ("PNG", "JPEG"):
            raise UnidentifiedImageError(f"unsupported format {img.format} for {path}")
        if img.mode in ("L",):
            arr = np.asarray(img.convert("L"))[:, :, None]
        else:
            arr = np.asarray(img.convert("RGB"))
    if arr.shape[2] == 1 and promote_grayscale:
        arr = np.repeat(arr, 3, axis=2)
    return arr


def extract_pairs(pkg: ArticlePackage, promote_grayscale: bool = False) -> list[FigureRecord]:
    """Decode every entry into a FigureRecord; undecodable images are
    dropped with a warning."""
    records: list[FigureRecord] = []
    for entry in pkg.figure_entries:
        try:
            image = decode_image(entry.image_path, promote_grayscale)
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            log.warning("%s/%s: undecodable image (%s), entry dropped",
                        pkg.package_id, entry.figure_id, exc)
            continue
        records.append(FigureRecord(package_id=pkg.package_id,
                                    figure_id=entry.figure_id,
                                    image=image,
                                    caption=entry.caption,
                                    caption_missing=entry.caption_missing,
                                    source_path=entry.image_path))
    return records
