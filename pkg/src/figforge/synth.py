"""Synthetic corpus generation.

Two generators live here: ``generate_separation_suite`` builds grid
figures with known panel layouts for detector-quality evaluation, and
``generate_mini_corpus`` writes a five-package archive to disk together
with a ledger of every count the pipeline is expected to reproduce.
The ledger is computed from construction knowledge, never by running
the pipeline, so it stays an independent oracle.
"""

from __future__ import annotations

import hashlib
import io
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

# Shade levels are sampled without replacement so no two panels collide
# by accident; duplicate crops are planted explicitly.
_SHADE_LO, _SHADE_HI = 30, 215


def compose_grid(rows: int, cols: int, shades: list[int], panel_w: int = 80,
                 panel_h: int = 80, gutter: int = 12, margin: int = 10) -> tuple[np.ndarray, list[tuple[int, int, int, int]]]:
    """Render a rows x cols grid of solid panels on white.

    Returns the RGB image and the panel rectangles (x, y, w, h) in
    reading order (row-major).
    """
    width = margin * 2 + cols * panel_w + (cols - 1) * gutter
    height = margin * 2 + rows * panel_h + (rows - 1) * gutter
    img = np.full((height, width, 3), 255, dtype=np.uint8)
    boxes = []
    k = 0
    for r in range(rows):
        for c in range(cols):
            x = margin + c * (panel_w + gutter)
            y = margin + r * (panel_h + gutter)
            img[y:y + panel_h, x:x + panel_w] = shades[k]
            boxes.append((x, y, panel_w, panel_h))
            k += 1
    return img, boxes


def generate_separation_suite(n_figures: int = 200, seed: int = 0) -> list[dict]:
    """Generate compound figures with grids from 1x2 up to 4x4.

    Each item carries the rendered image, the ground-truth panel boxes,
    and the grid shape.  Panel sizes, gutters and margins vary per figure
    but gutters always stay at or above the splitter's minimum fraction.
    """
    rng = random.Random(seed)
    grids = [(r, c) for r in range(1, 5) for c in range(1, 5) if r * c >= 2]
    suite = []
    for _ in range(n_figures):
        rows, cols = grids[rng.randrange(len(grids))]
        panel_w = rng.randint(60, 120)
        panel_h = rng.randint(60, 120)
        gutter = rng.randint(14, 22)
        margin = rng.randint(8, 16)
        shades = [rng.randint(_SHADE_LO, _SHADE_HI) for _ in range(rows * cols)]
        img, boxes = compose_grid(rows, cols, shades, panel_w, panel_h, gutter, margin)
        suite.append({"image": img, "boxes": boxes, "grid": (rows, cols)})
    return suite


def _png_bytes(array: np.ndarray, mode: str = "RGB") -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class _FigureSpec:
    package_id: str
    figure_id: str
    grid: tuple[int, int]
    caption: str
    kept: bool                      # survives keyword filtering
    separable: bool
    expected_texts: list[str] = field(default_factory=list)
    image_format: str = "png"       # png | jpeg | png-gray
    shades: list[int] = field(default_factory=list)
    boxes: list[tuple[int, int, int, int]] = field(default_factory=list)


_PREAMBLE_1 = "Imaging of a 54-year-old male patient."

_MINI_FIGURES: list[dict] = [
    dict(package_id="pkg001", figure_id="fig1", grid=(2, 2), kept=True, separable=True,
         caption=(_PREAMBLE_1 + " (a) Axial CT of the chest. (b) T2 MRI of the brain."
                  " (c) Chest X-ray at admission. (d) Abdominal ultrasound."),
         texts=[_PREAMBLE_1 + " Axial CT of the chest.",
                _PREAMBLE_1 + " T2 MRI of the brain.",
                _PREAMBLE_1 + " Chest X-ray at admission.",
                _PREAMBLE_1 + " Abdominal ultrasound."]),
    dict(package_id="pkg001", figure_id="fig2", grid=(1, 2), kept=True, separable=True,
         caption="(a) Preoperative MRI scan of the lesion. (b) Postoperative MRI scan of the lesion.",
         texts=["Preoperative MRI scan of the lesion.",
                "Postoperative MRI scan of the lesion."]),
    dict(package_id="pkg002", figure_id="fig1", grid=(2, 1), kept=True, separable=False,
         caption="Serial chest radiographs obtained before and after antibiotic treatment."),
    dict(package_id="pkg002", figure_id="fig2", grid=(1, 1), kept=True, separable=False,
         caption="Endoscopy revealing a bleeding gastric ulcer in a 63-year-old woman."),
    dict(package_id="pkg003", figure_id="fig1", grid=(2, 2), kept=True, separable=True,
         caption="(a-c) Sequential ultrasound images of the fetal heart. (d) Pulsed-wave Doppler waveform.",
         texts=["Sequential ultrasound images of the fetal heart.",
                "Sequential ultrasound images of the fetal heart.",
                "Sequential ultrasound images of the fetal heart.",
                "Pulsed-wave Doppler waveform."]),
    dict(package_id="pkg003", figure_id="fig2", grid=(1, 1), kept=False, separable=False,
         caption=""),
    dict(package_id="pkg003", figure_id="fig3", grid=(1, 2), kept=True, separable=False,
         caption="Histopathology of the resected specimen showing a mitotic figure (arrow)."),
    dict(package_id="pkg004", figure_id="fig1", grid=(1, 1), kept=False, separable=False,
         caption="Phylogenetic tree of sampled octopus species.", image_format="png-gray"),
    dict(package_id="pkg004", figure_id="fig2", grid=(2, 2), kept=False, separable=False,
         caption="Overview of the study enrollment and randomization workflow.",
         image_format="jpeg"),
    dict(package_id="pkg005", figure_id="fig1", grid=(1, 2), kept=True, separable=True,
         caption="(a) Baseline CT image of the thorax. (b) Follow-up CT image after therapy.",
         texts=["Baseline CT image of the thorax.", "Follow-up CT image after therapy."]),
    dict(package_id="pkg005", figure_id="fig2", grid=(1, 2), kept=True, separable=True,
         caption="(a) Baseline CT image retained for calibration. (b) Reference MRI section for registration.",
         texts=["Baseline CT image retained for calibration.",
                "Reference MRI section for registration."]),
    dict(package_id="pkg005", figure_id="fig3", grid=(1, 2), kept=True, separable=True,
         caption="(a) Intraoperative fluoroscopy of the fixation. (b) Postoperative lateral radiograph.",
         texts=["Intraoperative fluoroscopy of the fixation.",
                "Postoperative lateral radiograph."]),
]


def _build_specs(seed: int) -> list[_FigureSpec]:
    rng = random.Random(seed)
    total_panels = sum(r * c for f in _MINI_FIGURES for r, c in [f["grid"]])
    levels = rng.sample(range(_SHADE_LO, _SHADE_HI + 1), total_panels)
    specs = []
    cursor = 0
    for f in _MINI_FIGURES:
        rows, cols = f["grid"]
        n = rows * cols
        specs.append(_FigureSpec(
            package_id=f["package_id"], figure_id=f["figure_id"], grid=f["grid"],
            caption=f["caption"], kept=f["kept"], separable=f["separable"],
            expected_texts=list(f.get("texts", [])),
            image_format=f.get("image_format", "png"),
            shades=levels[cursor:cursor + n]))
        cursor += n
    by_key = {(s.package_id, s.figure_id): s for s in specs}
    # Planted byte-duplicates: pkg005/fig2 panel 0 copies pkg005/fig1 panel 0,
    # panel 1 copies pkg001/fig2 panel 0.  Identical shade + size -> identical
    # crop bytes.
    by_key[("pkg005", "fig2")].shades[0] = by_key[("pkg005", "fig1")].shades[0]
    by_key[("pkg005", "fig2")].shades[1] = by_key[("pkg001", "fig2")].shades[0]
    return specs


def generate_mini_corpus(out_dir: str | Path, seed: int = 0) -> dict:
    """Write the five-package mini corpus plus ledger and exclusion file.

    Layout: ``<out>/archive/<package_id>/package.json`` with images under
    ``images/``, ``<out>/ledger.json``, ``<out>/exclusions.txt`` and a
    ready-to-run ``<out>/config.json``.  Returns the ledger dict.
    """
    out = Path(out_dir)
    archive = out / "archive"
    archive.mkdir(parents=True, exist_ok=True)
    specs = _build_specs(seed)

    packages: dict[str, list[_FigureSpec]] = {}
    for spec in specs:
        packages.setdefault(spec.package_id, []).append(spec)

    for package_id, figs in packages.items():
        pkg_dir = archive / package_id
        (pkg_dir / "images").mkdir(parents=True, exist_ok=True)
        manifest_figures = []
        for spec in figs:
            rows, cols = spec.grid
            img, boxes = compose_grid(rows, cols, spec.shades)
            spec.boxes = boxes
            rel = f"images/{spec.figure_id}.{'jpg' if spec.image_format == 'jpeg' else 'png'}"
            path = pkg_dir / rel
            if spec.image_format == "jpeg":
                Image.fromarray(img).save(path, format="JPEG", quality=95)
            elif spec.image_format == "png-gray":
                Image.fromarray(img[:, :, 0], mode="L").save(path, format="PNG")
            else:
                Image.fromarray(img).save(path, format="PNG")
            manifest_figures.append({"figure_id": spec.figure_id,
                                     "image_path": rel,
                                     "caption": spec.caption})
        manifest = {"package_id": package_id, "figures": manifest_figures}
        (pkg_dir / "package.json").write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")

    # Exclusion target: first crop of pkg005/fig3, hashed exactly as the
    # emit stage hashes crop files (PNG bytes of the panel region).
    target = next(s for s in specs if (s.package_id, s.figure_id) == ("pkg005", "fig3"))
    panel = np.full((target.boxes[0][3], target.boxes[0][2], 3),
                    target.shades[0], dtype=np.uint8)
    exclusion_hash = hashlib.sha256(_png_bytes(panel)).hexdigest()
    (out / "exclusions.txt").write_text(exclusion_hash + "\n", encoding="utf-8")

    kept = [s for s in specs if s.kept]
    subfigures_total = sum(len(s.boxes) for s in kept)
    compound = [s for s in kept if len(s.boxes) >= 2]
    label_order_entries = sum(len(s.boxes) for s in kept if s.separable)
    dedup_removed = 3  # two planted duplicates + one exclusion
    ledger = {
        "seed": seed,
        "packages": len(packages),
        "figure_records": len(specs),
        "keyword_kept_figures": len(kept),
        "expected": {
            "subfigures_total": subfigures_total,
            "compound_figures": len(compound),
            "subfigures_from_compound": sum(len(s.boxes) for s in compound),
            "separable_captions": sum(1 for s in kept if s.separable),
            "subcaptions": sum(len(s.boxes) for s in kept if s.separable),
            "dedup_removed": dedup_removed,
            "entries": subfigures_total - dedup_removed,
            "entries_by_mode": {
                "label_order": label_order_entries - dedup_removed,
                "full_caption_fallback": subfigures_total - label_order_entries,
            },
        },
        "figures": [
            {
                "package_id": s.package_id,
                "figure_id": s.figure_id,
                "grid": list(s.grid),
                "kept": s.kept,
                "separable": s.separable,
                "caption": s.caption,
                "boxes": [list(b) for b in s.boxes],
                "expected_texts": s.expected_texts or None,
            }
            for s in specs
        ],
    }
    (out / "ledger.json").write_text(json.dumps(ledger, indent=2), encoding="utf-8")
    config = {
        "archive_root": "archive",
        "output_dir": "output",
        "exclusion_hash_file": "exclusions.txt",
        "seed": seed,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    return ledger
