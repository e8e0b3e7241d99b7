"""Accuracy reports, baselines, and confusion matrices over predictions.

``evaluate`` is a pure function of its prediction list: shuffling the
input changes nothing. Failed rooms are excluded from every denominator
but carried in the report so they stay visible. A label with zero
evaluated rooms gets no accuracy value at all (reported as undefined,
never 0 or 1, which would mislead for rare labels). Baselines are
recomputed from the evaluated subset rather than hardcoded, so subset and
synthetic runs stay meaningful: random is uniform over the room space,
majority is the most frequent ground-truth label's share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .inference import TrialCondition
from .scene_model import LabelSpace


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class LabelStats:
    correct: int
    total: int

    @property
    def accuracy(self) -> float | None:
        if self.total == 0:
            return None
        return self.correct / self.total


@dataclass(frozen=True)
class EvalReport:
    condition: TrialCondition | None
    room_labels: tuple[str, ...]
    overall_accuracy: float
    per_label: dict[str, LabelStats]
    confusion: tuple[tuple[int, ...], ...]  # rows = ground truth, cols = predicted
    baselines: dict[str, float]
    failed_rooms: tuple[str, ...]
    evaluated: int


def _labels_of(room_space) -> tuple[str, ...]:
    if isinstance(room_space, LabelSpace):
        return tuple(room_space.labels)
    return tuple(room_space)


def evaluate(
    predictions,
    room_space,
    failed_rooms=(),
) -> EvalReport:
    """Score a prediction set against its ground-truth labels."""
    predictions = list(predictions)
    if not predictions:
        raise EvaluationError("no successful predictions to evaluate")
    labels = _labels_of(room_space)
    index = {label: i for i, label in enumerate(labels)}

    matrix = [[0] * len(labels) for _ in labels]
    correct = {label: 0 for label in labels}
    total = {label: 0 for label in labels}
    for p in predictions:
        if p.gt_label not in index:
            raise EvaluationError(f"ground-truth label {p.gt_label!r} not in room space")
        if p.predicted_label not in index:
            raise EvaluationError(f"predicted label {p.predicted_label!r} not in room space")
        total[p.gt_label] += 1
        matrix[index[p.gt_label]][index[p.predicted_label]] += 1
        if p.predicted_label == p.gt_label:
            correct[p.gt_label] += 1

    evaluated = len(predictions)
    overall = sum(correct.values()) / evaluated
    condition = predictions[0].condition
    if any(p.condition != condition for p in predictions):
        condition = None

    return EvalReport(
        condition=condition,
        room_labels=labels,
        overall_accuracy=overall,
        per_label={label: LabelStats(correct[label], total[label]) for label in labels},
        confusion=tuple(tuple(row) for row in matrix),
        baselines={
            "random": 1.0 / len(labels),
            "majority": max(total.values()) / evaluated,
        },
        failed_rooms=tuple(failed_rooms),
        evaluated=evaluated,
    )


@dataclass(frozen=True)
class ConditionTable:
    """Accuracy per (co-occurrence provenance, object space) condition."""

    provenances: tuple[str, ...]  # rows
    object_spaces: tuple[str, ...]  # columns
    accuracy: dict[tuple[str, str], float]  # (provenance, object_space) -> value


def compare_conditions(reports) -> ConditionTable:
    """Arrange per-condition accuracies into a provenance x space grid."""
    reports = list(reports)
    if not reports:
        raise EvaluationError("need at least one report to compare")
    accuracy: dict[tuple[str, str], float] = {}
    provenances: list[str] = []
    spaces: list[str] = []
    for report in reports:
        if report.condition is None:
            raise EvaluationError("report has no single trial condition")
        key = (report.condition.provenance, report.condition.object_space)
        if key in accuracy:
            raise EvaluationError(f"duplicate condition {key!r}")
        accuracy[key] = report.overall_accuracy
        if key[0] not in provenances:
            provenances.append(key[0])
        if key[1] not in spaces:
            spaces.append(key[1])
    return ConditionTable(
        provenances=tuple(provenances),
        object_spaces=tuple(spaces),
        accuracy=accuracy,
    )


def format_condition_table(table: ConditionTable) -> str:
    width = max(
        [len("co-occurrence")]
        + [len(s) for s in table.object_spaces]
        + [len(p) for p in table.provenances]
    ) + 2
    lines = ["".join(["co-occurrence".ljust(width)] + [s.rjust(width) for s in table.object_spaces])]
    for provenance in table.provenances:
        cells = [provenance.ljust(width)]
        for space in table.object_spaces:
            value = table.accuracy.get((provenance, space))
            cells.append(("-" if value is None else f"{value * 100:.2f}%").rjust(width))
        lines.append("".join(cells))
    return "\n".join(lines)


def breakdown_rows(report: EvalReport) -> list[tuple[str, int, int, float | None]]:
    """Per-label (label, correct, total, accuracy) rows, room-space order."""
    return [
        (label, stats.correct, stats.total, stats.accuracy)
        for label, stats in report.per_label.items()
    ]


def emit_label_breakdown(report: EvalReport, path, manifest_id: str | None = None) -> None:
    """Write the per-label breakdown as a comma-separated file.

    One row per room label with accuracy and support; zero-support labels
    keep their row with an empty accuracy field. A single '#' comment line
    carries the manifest reference (strip or skip comments when loading).
    """
    lines = []
    if manifest_id:
        lines.append(f"# manifest: {manifest_id}")
    lines.append("room_label,correct,total,accuracy")
    for label, correct, total, accuracy in breakdown_rows(report):
        acc = "" if accuracy is None else repr(accuracy)
        lines.append(f"{label},{correct},{total},{acc}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_report(report: EvalReport) -> str:
    """Human-readable accuracy table."""
    lines = []
    if report.condition is not None:
        c = report.condition
        lines.append(
            f"condition: space={c.object_space} cooc={c.provenance} "
            f"k={c.k} template={c.template_version} backend={c.backend}"
        )
    lines.append(f"rooms evaluated: {report.evaluated}")
    if report.failed_rooms:
        lines.append(f"rooms failed: {len(report.failed_rooms)} {list(report.failed_rooms)}")
    lines.append(f"overall accuracy: {report.overall_accuracy * 100:.2f}%")
    lines.append(
        f"baselines: random {report.baselines['random'] * 100:.2f}%, "
        f"majority {report.baselines['majority'] * 100:.2f}%"
    )
    lines.append("")
    name_width = max(len(l) for l in report.room_labels) + 2
    lines.append(f"{'room label'.ljust(name_width)}{'correct':>9}{'total':>7}  accuracy")
    for label, correct, total, accuracy in breakdown_rows(report):
        acc = "-" if accuracy is None else f"{accuracy * 100:.2f}%"
        lines.append(f"{label.ljust(name_width)}{correct:>9}{total:>7}  {acc}")
    return "\n".join(lines)


def write_report(report: EvalReport, path, manifest_id: str | None = None) -> None:
    """Structured (JSON) form of the report."""
    payload = {
        "manifest": manifest_id,
        "condition": None
        if report.condition is None
        else {
            "object_space": report.condition.object_space,
            "provenance": report.condition.provenance,
            "k": report.condition.k,
            "template_version": report.condition.template_version,
            "backend": report.condition.backend,
        },
        "room_labels": list(report.room_labels),
        "overall_accuracy": report.overall_accuracy,
        "per_label": {
            label: {"correct": stats.correct, "total": stats.total, "accuracy": stats.accuracy}
            for label, stats in report.per_label.items()
        },
        "confusion": [list(row) for row in report.confusion],
        "baselines": report.baselines,
        "failed_rooms": list(report.failed_rooms),
        "evaluated": report.evaluated,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
