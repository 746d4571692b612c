"""Rejection sampling of recorded episodes into an SFT-ready dataset.

Two filter stages run strictly in order: episodes that break the
interaction format are dropped first, then episodes whose final answer
misses the gold label.  Survivors are serialized to one text blob per
episode with loss-mask spans over every environment-injected observation,
so a trainer optimizes only the model-generated tokens.

Mask spans index whitespace tokens of the serialized text (end-exclusive);
trainers with subword tokenizers re-derive spans from the observation
delimiters, which the spans are guaranteed to line up with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .environment import QASample
from .protocol import Trajectory, serialize_turn, validate_format
from .rewards import outcome_reward


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class SftRecord:
    qid: str
    text: str
    mask_spans: tuple[tuple[int, int], ...]
    question_type: str

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "text": self.text,
            "mask_spans": [list(span) for span in self.mask_spans],
            "question_type": self.question_type,
        }

    @staticmethod
    def from_dict(data: dict) -> "SftRecord":
        return SftRecord(
            qid=data["qid"],
            text=data["text"],
            mask_spans=tuple((int(s), int(e)) for s, e in data["mask_spans"]),
            question_type=data["question_type"],
        )


@dataclass
class FilterStats:
    """Per-question-type rejection accounting; every episode lands in
    exactly one of kept / rejected_format / rejected_answer."""

    per_type: dict[str, dict[str, int]]

    def _total(self, key: str) -> int:
        return sum(row[key] for row in self.per_type.values())

    @property
    def total(self) -> int:
        return self._total("total")

    @property
    def kept(self) -> int:
        return self._total("kept")

    @property
    def rejected_format(self) -> int:
        return self._total("rejected_format")

    @property
    def rejected_answer(self) -> int:
        return self._total("rejected_answer")

    def to_dict(self) -> dict:
        return {
            "per_type": self.per_type,
            "total": self.total,
            "kept": self.kept,
            "rejected_format": self.rejected_format,
            "rejected_answer": self.rejected_answer,
        }


def filter_trajectories(
    episodes: list[Trajectory],
    gold_lookup: dict[str, QASample],
    max_turns: int | None = None,
) -> tuple[list[Trajectory], FilterStats]:
    """Keep episodes that are format-valid and answer-correct.

    `gold_lookup` maps qid to its sample; an episode whose qid is missing
    there raises PipelineError naming the qid.
    """
    per_type: dict[str, dict[str, int]] = {}
    kept: list[Trajectory] = []
    for traj in episodes:
        if traj.qid is None or traj.qid not in gold_lookup:
            raise PipelineError(f"episode qid {traj.qid!r} not found in gold lookup")
        sample = gold_lookup[traj.qid]
        row = per_type.setdefault(
            sample.question_type,
            {"total": 0, "kept": 0, "rejected_format": 0, "rejected_answer": 0},
        )
        row["total"] += 1
        verdict = validate_format(traj, max_turns) if max_turns else validate_format(traj)
        if not verdict.valid:
            row["rejected_format"] += 1
            continue
        if outcome_reward(traj.answer_text, sample.gold_answers) != 1:
            row["rejected_answer"] += 1
            continue
        row["kept"] += 1
        kept.append(traj)
    return kept, FilterStats(per_type)


def episode_text_with_masks(traj: Trajectory) -> tuple[str, list[tuple[int, int]]]:
    """Serialize one episode to text plus whitespace-token mask spans.

    Segments are newline-joined so token boundaries never merge; each span
    covers exactly one recorded observation (which always begins with
    <observation> and ends with </observation>).
    """
    segments: list[str] = [f"Question: {traj.question}"]
    spans: list[tuple[int, int]] = []
    offset = len(segments[0].split())
    for turn in traj.turns:
        turn_text = serialize_turn(turn.thought, turn.action)
        segments.append(turn_text)
        offset += len(turn_text.split())
        if turn.observation is not None:
            obs_tokens = len(turn.observation.split())
            segments.append(turn.observation)
            spans.append((offset, offset + obs_tokens))
            offset += obs_tokens
    return "\n".join(segments), spans


def build_sft_record(traj: Trajectory, question_type: str) -> SftRecord:
    text, spans = episode_text_with_masks(traj)
    return SftRecord(traj.qid, text, tuple(spans), question_type)


def export_sft(
    kept: list[Trajectory],
    path: str | Path,
    gold_lookup: dict[str, QASample],
) -> int:
    """Write kept episodes as SFT JSONL, ordered by qid; returns count written."""
    records = []
    for traj in kept:
        sample = gold_lookup.get(traj.qid)
        if sample is None:
            raise PipelineError(f"episode qid {traj.qid!r} not found in gold lookup")
        records.append(build_sft_record(traj, sample.question_type))
    records.sort(key=lambda r: r.qid)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    return len(records)


def load_sft(path: str | Path) -> list[SftRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(SftRecord.from_dict(json.loads(line)))
    return records
