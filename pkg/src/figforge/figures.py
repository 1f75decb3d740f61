"""Render the statistics report as figures next to the delimited output.

Figures land under ``<output_dir>/figures/``: modality distribution,
age-bucket histogram, top caption terms and the per-stage pipeline
funnel.  Rendering failures must never break a run, so callers treat
these as best-effort artifacts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .emit import StatsReport  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report_figures(stats: StatsReport, funnel: dict[str, int],
                          out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    written: list[Path] = []

    if stats.modality_histogram:
        items = sorted(stats.modality_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
        labels, counts = zip(*items)
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(range(len(labels)), counts, color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45, ha="right")
        ax.set_ylabel("entries")
        ax.set_title("Modality distribution")
        written.append(_save(fig, out / "figures" / "modality_distribution.png"))

    if stats.age_histogram:
        buckets = sorted(stats.age_histogram.items(), key=lambda kv: int(kv[0]))
        labels = [f"{b}-{int(b) + 9}" for b, _ in buckets]
        counts = [c for _, c in buckets]
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(labels, counts, color="#6aa46a")
        ax.set_xlabel("age bucket")
        ax.set_ylabel("entries with demographics")
        title = "Patient age distribution"
        if stats.sex_ratio is not None:
            title += f" (male fraction {stats.sex_ratio:.2f})"
        ax.set_title(title)
        written.append(_save(fig, out / "figures" / "age_distribution.png"))

    if stats.term_frequency:
        top = stats.term_frequency[:20][::-1]
        terms = [t for t, _ in top]
        counts = [c for _, c in top]
        fig, ax = plt.subplots(figsize=(7, max(3, 0.3 * len(terms))))
        ax.barh(range(len(terms)), counts, color="#a86a6a")
        ax.set_yticks(range(len(terms)))
        ax.set_yticklabels(terms)
        ax.set_xlabel("occurrences in aligned texts")
        ax.set_title("Frequent caption terms")
        written.append(_save(fig, out / "figures" / "term_frequency.png"))

    stage_counts = [(k, v) for k, v in funnel.items() if isinstance(v, int)]
    if stage_counts:
        labels = [k for k, _ in stage_counts]
        counts = [v for _, v in stage_counts]
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.bar(range(len(labels)), counts, color="#8a7cb8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("count")
        ax.set_title("Pipeline funnel")
        written.append(_save(fig, out / "figures" / "pipeline_funnel.png"))
    return written
