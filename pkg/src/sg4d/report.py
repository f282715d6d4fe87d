"""Evaluation report rendering: canonical JSON, delimited CSV, and figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .io import canonical_dumps
from .metrics import EvaluationReport, RecallSlice
from .model import Vocabulary


def _slice_to_doc(s: RecallSlice) -> dict:
    return {
        "matched": [list(m) for m in s.matched],
        "mean_recall": s.mean_recall,
        "per_predicate_recall": {str(p): r for p, r in sorted(s.per_predicate_recall.items())},
        "recall": s.recall,
    }


def report_to_doc(report: EvaluationReport) -> dict:
    return {
        "config": {"ks": list(report.ks), "viou_threshold": report.viou_threshold},
        "dataset": {str(k): _slice_to_doc(report.dataset[k]) for k in report.ks},
        "videos": {
            vid: {str(k): _slice_to_doc(slices[k]) for k in report.ks}
            for vid, slices in sorted(report.per_video.items())
        },
    }


def write_report_json(path: Path, report: EvaluationReport) -> None:
    Path(path).write_text(canonical_dumps(report_to_doc(report)), encoding="utf-8")


def write_report_csv(path: Path, report: EvaluationReport, vocab: Vocabulary) -> None:
    """Long-format table: one row per (scope, k, metric)."""
    rows = [["scope", "video_id", "k", "metric", "predicate", "value"]]

    def emit(scope: str, vid: str, k: int, s: RecallSlice):
        rows.append([scope, vid, k, "recall", "", s.recall])
        rows.append([scope, vid, k, "mean_recall", "", s.mean_recall])
        for pid, r in sorted(s.per_predicate_recall.items()):
            rows.append([scope, vid, k, "predicate_recall", vocab.predicate_name(pid), r])

    for k in report.ks:
        emit("dataset", "", k, report.dataset[k])
    for vid in sorted(report.per_video):
        for k in report.ks:
            emit("video", vid, k, report.per_video[vid][k])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


def render_report_figures(
    out_dir: Path, report: EvaluationReport, vocab: Vocabulary, stem: str = "report"
) -> list[Path]:
    """Render the recall-vs-K curve and the per-predicate bars as PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    ks = list(report.ks)
    recalls = [report.dataset[k].recall for k in ks]
    means = [report.dataset[k].mean_recall for k in ks]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, [r if r is not None else float("nan") for r in recalls], "o-", label="R@K")
    ax.plot(ks, [m if m is not None else float("nan") for m in means], "s--", label="mR@K")
    ax.set_xlabel("K")
    ax.set_ylabel("recall")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xticks(ks)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = out_dir / f"{stem}_recall.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    kmax = ks[-1]
    per_pred = report.dataset[kmax].per_predicate_recall
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if per_pred:
        names = [vocab.predicate_name(p) for p in sorted(per_pred)]
        values = [per_pred[p] for p in sorted(per_pred)]
        ax.bar(range(len(values)), values, color="#4878a8")
        ax.set_xticks(range(len(values)))
        ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel(f"recall @ K={kmax}")
    ax.set_ylim(0, 1.02)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    path = out_dir / f"{stem}_predicates.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
