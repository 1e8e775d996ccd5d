"""Accuracy, per-class precision/recall/F1 and macro-F1.

Predictions may be None (parse-failure). Failures land in a synthetic
prediction column: they count against accuracy and recall but never enter a
real label's precision denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold labels; columns are predicted labels plus one failure column."""

    n_labels: int
    cells: tuple[tuple[int, ...], ...]  # n_labels rows, n_labels + 1 columns

    def __post_init__(self):
        if self.n_labels < 1:
            raise EvaluationError("need at least one label")
        if len(self.cells) != self.n_labels:
            raise EvaluationError(f"expected {self.n_labels} rows, got {len(self.cells)}")
        for row in self.cells:
            if len(row) != self.n_labels + 1:
                raise EvaluationError(
                    f"expected {self.n_labels + 1} columns per row, got {len(row)}"
                )
            if any(c < 0 for c in row):
                raise EvaluationError("cell counts must be non-negative")

    def total(self) -> int:
        return sum(sum(row) for row in self.cells)

    def failure_count(self) -> int:
        return sum(row[self.n_labels] for row in self.cells)


@dataclass(frozen=True)
class ClassMetrics:
    label: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    macro_f1: float
    per_class: tuple[ClassMetrics, ...]
    confusion: ConfusionMatrix
    n_samples: int
    n_parse_failures: int


def confusion_matrix(preds: Sequence[int | None], gold: Sequence[int], n_labels: int) -> ConfusionMatrix:
    if len(preds) != len(gold):
        raise EvaluationError(f"{len(preds)} predictions for {len(gold)} gold labels")
    if not preds:
        raise EvaluationError("no samples to evaluate")
    cells = [[0] * (n_labels + 1) for _ in range(n_labels)]
    for i, (p, g) in enumerate(zip(preds, gold)):
        if not isinstance(g, int) or isinstance(g, bool) or not 0 <= g < n_labels:
            raise EvaluationError(f"sample {i}: gold label {g!r} out of range")
        if p is None:
            col = n_labels
        else:
            if not 0 <= p < n_labels:
                raise EvaluationError(f"sample {i}: predicted label {p} out of range")
            col = p
        cells[g][col] += 1
    return ConfusionMatrix(n_labels, tuple(tuple(row) for row in cells))


def accuracy(matrix: ConfusionMatrix) -> float:
    """Correct predictions over all samples (parse-failures included in the total)."""
    total = matrix.total()
    if total == 0:
        raise EvaluationError("empty confusion matrix")
    correct = sum(matrix.cells[i][i] for i in range(matrix.n_labels))
    return correct / total


def per_class_metrics(matrix: ConfusionMatrix) -> tuple[ClassMetrics, ...]:
    """Precision, recall, F1 per label; any zero denominator yields 0."""
    out = []
    for i in range(matrix.n_labels):
        tp = matrix.cells[i][i]
        col_sum = sum(matrix.cells[g][i] for g in range(matrix.n_labels))
        row_sum = sum(matrix.cells[i])
        precision = tp / col_sum if col_sum else 0.0
        recall = tp / row_sum if row_sum else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append(ClassMetrics(i, precision, recall, f1))
    return tuple(out)


def macro_f1(matrix: ConfusionMatrix) -> float:
    """Unweighted mean F1 over every catalog class, absent classes contributing 0."""
    metrics = per_class_metrics(matrix)
    return sum(m.f1 for m in metrics) / matrix.n_labels


def evaluate_predictions(
    preds: Sequence[int | None], gold: Sequence[int], n_labels: int
) -> EvaluationReport:
    matrix = confusion_matrix(preds, gold, n_labels)
    return EvaluationReport(
        accuracy=accuracy(matrix),
        macro_f1=macro_f1(matrix),
        per_class=per_class_metrics(matrix),
        confusion=matrix,
        n_samples=matrix.total(),
        n_parse_failures=matrix.failure_count(),
    )


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "per_class": [
            {"label": m.label, "precision": m.precision, "recall": m.recall, "f1": m.f1}
            for m in report.per_class
        ],
        "confusion": [list(row) for row in report.confusion.cells],
        "n_samples": report.n_samples,
        "n_parse_failures": report.n_parse_failures,
    }


def report_from_dict(raw: dict) -> EvaluationReport:
    matrix = ConfusionMatrix(len(raw["confusion"]), tuple(tuple(row) for row in raw["confusion"]))
    return EvaluationReport(
        accuracy=float(raw["accuracy"]),
        macro_f1=float(raw["macro_f1"]),
        per_class=tuple(
            ClassMetrics(int(m["label"]), float(m["precision"]), float(m["recall"]), float(m["f1"]))
            for m in raw["per_class"]
        ),
        confusion=matrix,
        n_samples=int(raw["n_samples"]),
        n_parse_failures=int(raw["n_parse_failures"]),
    )


def save_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(path) -> EvaluationReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
