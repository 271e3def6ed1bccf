"""Accuracy, macro recall/precision and confusion matrices over session traces."""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import LabelDictionary
from .errors import ComparisonError, ConfigError, ScoringError
from .simulator import SessionTrace

MODES = ("standalone", "corroborated")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = truth and columns = prediction."""

    counts: np.ndarray
    labels: LabelDictionary

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def recall(self) -> np.ndarray:
        """Per-class recall; classes absent from the truth get 0."""
        rows = self.counts.sum(axis=1)
        return np.divide(np.diag(self.counts), rows, out=np.zeros(len(rows)), where=rows > 0)

    def precision(self) -> np.ndarray:
        """Per-class precision; never-predicted classes get 0."""
        cols = self.counts.sum(axis=0)
        return np.divide(np.diag(self.counts), cols, out=np.zeros(len(cols)), where=cols > 0)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_recall: float
    macro_precision: float
    confusion: ConfusionMatrix
    mode: str

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "accuracy": self.accuracy,
            "macro_recall": self.macro_recall,
            "macro_precision": self.macro_precision,
            "n_decisions": self.confusion.total,
            "confusion": self.confusion.counts.tolist(),
        }


def confusion_from_pairs(truth, pred, labels: LabelDictionary) -> ConfusionMatrix:
    K = len(labels)
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return ConfusionMatrix(counts, labels)


def report_from_confusion(cm: ConfusionMatrix, mode: str) -> MetricsReport:
    return MetricsReport(
        accuracy=cm.accuracy(),
        macro_recall=float(cm.recall().mean()),
        macro_precision=float(cm.precision().mean()),
        confusion=cm,
        mode=mode,
    )


def score(traces: Sequence[SessionTrace], mode: str = "corroborated") -> MetricsReport:
    """Pool every decision of every trace and score the ``mode`` labels against truth.

    Macro metrics average over the whole label dictionary.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if not traces:
        raise ScoringError("no traces to score")
    labels = traces[0].labels
    truth, pred = [], []
    for tr in traces:
        if tr.labels != labels:
            raise ScoringError("traces use different label dictionaries")
        for d in tr.all_decisions():
            truth.append(tr.truth.id)
            pred.append(d.standalone_label if mode == "standalone" else d.corroborated_label)
    if not truth:
        raise ScoringError("traces contain no decisions")
    return report_from_confusion(confusion_from_pairs(truth, pred, labels), mode)


@dataclass(frozen=True)
class Ablation:
    """Accuracy change from standalone to corroborated.

    ``absolute`` is the difference in accuracy (fraction; x100 for points),
    ``relative`` is that difference divided by the standalone accuracy.
    """

    standalone: MetricsReport
    corroborated: MetricsReport
    absolute: float
    relative: float

    def to_dict(self) -> dict:
        return {
            "standalone": self.standalone.to_dict(),
            "corroborated": self.corroborated.to_dict(),
            "accuracy_delta_absolute": self.absolute,
            "accuracy_delta_points": self.absolute * 100,
            "accuracy_delta_relative": self.relative,
        }


def compare(standalone: MetricsReport, corroborated: MetricsReport) -> Ablation:
    if standalone.confusion.total != corroborated.confusion.total:
        raise ComparisonError(
            f"reports cover different decision counts: {standalone.confusion.total} "
            f"vs {corroborated.confusion.total}"
        )
    absolute = corroborated.accuracy - standalone.accuracy
    if standalone.accuracy > 0:
        relative = absolute / standalone.accuracy
    else:
        relative = 0.0 if absolute == 0 else float("inf")
    return Ablation(standalone, corroborated, absolute, relative)


def ablate(traces: Sequence[SessionTrace]) -> Ablation:
    return compare(score(traces, "standalone"), score(traces, "corroborated"))


def write_report(ablation: Ablation, path) -> None:
    doc = {"labels": list(ablation.standalone.confusion.labels.names), **ablation.to_dict()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_confusion_csv(reports: Sequence[MetricsReport], path) -> None:
    """Long-ish layout: one row per (mode, truth label), one column per predicted label."""
    names = reports[0].confusion.labels.names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["mode", "truth", *names])
        for rep in reports:
            for name, row in zip(names, rep.confusion.counts.tolist()):
                out.writerow([rep.mode, name, *row])


def write_ablation_csv(ablation: Ablation, path) -> None:
    """Two rows (standalone, corroborated) with the three headline metrics."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["mode", "accuracy", "macro_recall", "macro_precision"])
        for rep in (ablation.standalone, ablation.corroborated):
            out.writerow([rep.mode, *(repr(v) for v in (rep.accuracy, rep.macro_recall, rep.macro_precision))])


def format_table(ablation: Ablation) -> str:
    rows = [("", "standalone", "corroborated")]
    for name, attr in (
        ("Accuracy", "accuracy"),
        ("Recall (macro)", "macro_recall"),
        ("Precision (macro)", "macro_precision"),
    ):
        rows.append(
            (name, f"{getattr(ablation.standalone, attr):.4f}", f"{getattr(ablation.corroborated, attr):.4f}")
        )
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.append(
        f"accuracy delta: {ablation.absolute * 100:+.2f} points ({ablation.relative * 100:+.2f}% relative)"
    )
    return "\n".join(lines)
