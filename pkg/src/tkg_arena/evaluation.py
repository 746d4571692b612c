"""Hits@1 evaluation with per-question-type and per-answer-type breakdowns.

A prediction is correct when it exact-matches any gold answer under the
shared answer normalization.  The overall score is the micro-average over
all samples; question-type columns follow the order types first appear in
the sample list, so the dataset's own taxonomy drives the report.
Samples without a prediction count as incorrect and are flagged.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .environment import AnswerType, QASample
from .rewards import outcome_reward


class EvalError(ValueError):
    pass


class ReportFormat(enum.Enum):
    TSV = "tsv"
    MARKDOWN = "markdown"


@dataclass
class Cell:
    correct: int = 0
    total: int = 0

    @property
    def value(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def add(self, is_correct: bool) -> None:
        self.total += 1
        self.correct += int(is_correct)


@dataclass
class EvalReport:
    overall: Cell = field(default_factory=Cell)
    by_question_type: dict[str, Cell] = field(default_factory=dict)
    by_answer_type: dict[str, Cell] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)


def evaluate(predictions: dict[str, str], samples: list[QASample]) -> EvalReport:
    """Score predictions against samples; duplicate sample qids are an error."""
    report = EvalReport(
        by_answer_type={"Entity": Cell(), "Time": Cell()},
    )
    seen: set[str] = set()
    for sample in samples:
        if sample.qid in seen:
            raise EvalError(f"duplicate qid in samples: {sample.qid!r}")
        seen.add(sample.qid)
        prediction = predictions.get(sample.qid)
        if prediction is None:
            report.missing.append(sample.qid)
            correct = False
        else:
            correct = outcome_reward(prediction, sample.gold_answers) == 1
        report.overall.add(correct)
        report.by_question_type.setdefault(sample.question_type, Cell()).add(correct)
        label = "Entity" if sample.answer_type is AnswerType.ENTITY else "Time"
        report.by_answer_type[label].add(correct)
    return report


def _columns(report: EvalReport) -> list[tuple[str, Cell]]:
    cols = [("Overall", report.overall)]
    cols.extend(report.by_question_type.items())
    cols.extend(report.by_answer_type.items())
    return cols


def render_report(report: EvalReport, fmt: ReportFormat = ReportFormat.TSV) -> str:
    """Deterministic table: Overall, question types in dataset order, answer
    types; Hits@1 cells use 4 decimal places."""
    cols = _columns(report)
    header = ["Metric"] + [name for name, _ in cols]
    rows = [
        ["Hits@1"] + [f"{cell.value:.4f}" for _, cell in cols],
        ["Correct"] + [str(cell.correct) for _, cell in cols],
        ["Count"] + [str(cell.total) for _, cell in cols],
    ]
    if fmt is ReportFormat.TSV:
        lines = ["\t".join(header)] + ["\t".join(row) for row in rows]
    else:
        lines = [
            "| " + " | ".join(header) + " |",
            "| " + " | ".join(["---"] * len(header)) + " |",
        ] + ["| " + " | ".join(row) + " |" for row in rows]
    if report.missing:
        lines.append(f"Missing predictions ({len(report.missing)}): " + ", ".join(report.missing))
    return "\n".join(lines) + "\n"


def load_samples(path: str | Path) -> list[QASample]:
    """Read a QASample JSONL file: {qid, question, answers, question_type, answer_type}."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(QASample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise EvalError(f"{path}: line {line_no}: {exc}") from exc
    return samples


def load_predictions(path: str | Path) -> dict[str, str]:
    """Read a predictions JSONL file: {qid, answer}."""
    predictions: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                predictions[str(row["qid"])] = str(row["answer"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise EvalError(f"{path}: line {line_no}: {exc}") from exc
    return predictions
