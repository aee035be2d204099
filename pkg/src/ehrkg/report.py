"""Rendered reports: relation and pair-category histograms as matplotlib
figures, with the same counts written alongside as CSV."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evidence import CandidatePair, category_histogram
from .kg import KnowledgeGraph, relation_histogram


def _write_counts_csv(counts: dict[str, int], path: Path, key_name: str) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([key_name, "count"])
        for key, n in counts.items():
            writer.writerow([key, n])


def _bar_figure(counts: dict[str, int], title: str, path: Path,
                log_y: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(counts)), 4))
    labels = list(counts)
    values = [counts[k] for k in labels]
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("count")
    ax.set_title(title)
    if log_y and any(values):
        ax.set_yscale("log")
    total = sum(values)
    for i, v in enumerate(values):
        pct = 0.0 if total == 0 else 100.0 * v / total
        ax.annotate(f"{pct:.1f}%", (i, v), ha="center", va="bottom", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def relation_report(kg: KnowledgeGraph, out_dir: str | Path) -> dict[str, int]:
    """Edge counts per relation label, as relation_histogram.csv/.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist = relation_histogram(kg)
    _write_counts_csv(hist, out / "relation_histogram.csv", "relation")
    _bar_figure(hist, "Relation label frequency", out / "relation_histogram.png",
                log_y=True)
    return hist


def category_report(pairs: list[CandidatePair], out_dir: str | Path) -> dict[str, int]:
    """Retained-pair counts per type-pair category, as pair_categories.csv/.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist = category_histogram(pairs)
    _write_counts_csv(hist, out / "pair_categories.csv", "category")
    _bar_figure(hist, "Evidence-supported code pairs by category",
                out / "pair_categories.png")
    return hist
