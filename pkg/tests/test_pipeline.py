import json

import pytest

from tkg_arena.environment import EpisodeConfig, create_episode
from tkg_arena.pipeline import (
    PipelineError,
    build_sft_record,
    episode_text_with_masks,
    export_sft,
    filter_trajectories,
    load_sft,
)
from tkg_arena.protocol import Terminal

PLAN = "<think>break it down</think><plan>search, then answer</plan>"


def _episode(store, sample, turns):
    ep = create_episode(sample, EpisodeConfig(), store)
    for raw in turns:
        result = ep.step(raw)
        if result.kind.value == "terminal":
            break
    return ep.trajectory


def _search(query="host Olympics", t="2010"):
    return f'<think>look</think><action>search_before("{query}", "{t}")</action>'


def _answer(text):
    return f"<think>settle</think><answer>{text}</answer>"


@pytest.fixture
def labeled_corpus(quad_store, samples, gold_replays):
    """50 episodes with construction-time labels: kept / format / answer."""
    episodes, labels = [], []
    for i in range(50):
        sample = samples[i % len(samples)]
        qid_tag = f"{sample.qid}#{i}"
        if i % 5 == 3:  # missing plan -> format reject
            turns = [_search(), _answer(sorted(sample.gold_answers)[0])]
            labels.append("rejected_format")
        elif i % 5 == 4:  # valid format, wrong answer
            turns = [PLAN, _search(), _answer("Atlantis")]
            labels.append("rejected_answer")
        else:
            turns = gold_replays[sample.qid]
            labels.append("kept")
        traj = _episode(quad_store, sample, turns)
        traj.qid = sample.qid  # lookup key
        episodes.append((qid_tag, traj))
        assert traj.terminal is not None
    return episodes, labels


class TestFilter:
    def test_labeled_corpus_reproduced(self, labeled_corpus, samples_by_qid):
        episodes, labels = labeled_corpus
        trajectories = [traj for _, traj in episodes]
        kept, stats = filter_trajectories(trajectories, samples_by_qid)
        expected_kept = [t for t, lab in zip(trajectories, labels) if lab == "kept"]
        assert kept == expected_kept
        assert stats.total == 50
        assert stats.kept == labels.count("kept")
        assert stats.rejected_format == labels.count("rejected_format")
        assert stats.rejected_answer == labels.count("rejected_answer")
        assert stats.kept + stats.rejected_format + stats.rejected_answer == stats.total
        for row in stats.per_type.values():
            assert row["kept"] + row["rejected_format"] + row["rejected_answer"] == row["total"]

    def test_all_invalid_yields_empty(self, quad_store, samples, samples_by_qid):
        sample = samples[0]
        traj = _episode(quad_store, sample, [_search(), _answer("x")])
        kept, stats = filter_trajectories([traj], samples_by_qid)
        assert kept == [] and stats.rejected_format == 1

    def test_stage_order_format_before_answer(self, quad_store, samples, samples_by_qid):
        sample = samples[0]
        # Both broken: no plan AND wrong answer; must be attributed to format.
        traj = _episode(quad_store, sample, [_search(), _answer("wrong")])
        _, stats = filter_trajectories([traj], samples_by_qid)
        assert stats.rejected_format == 1 and stats.rejected_answer == 0

    def test_valid_but_wrong_answer_rejected_at_stage_2(self, quad_store, samples, samples_by_qid):
        sample = samples[0]
        traj = _episode(quad_store, sample, [PLAN, _search(), _answer("Atlantis")])
        _, stats = filter_trajectories([traj], samples_by_qid)
        assert stats.rejected_answer == 1

    def test_unknown_qid_raises(self, quad_store, samples):
        traj = _episode(quad_store, samples[0], [PLAN, _answer("x")])
        traj.qid = "ghost"
        with pytest.raises(PipelineError, match="ghost"):
            filter_trajectories([traj], {})

    def test_idempotent(self, labeled_corpus, samples_by_qid):
        episodes, _ = labeled_corpus
        trajectories = [traj for _, traj in episodes]
        once, _ = filter_trajectories(trajectories, samples_by_qid)
        twice, _ = filter_trajectories(once, samples_by_qid)
        assert once == twice


class TestMaskSpans:
    def test_two_observations_two_spans(self, quad_store, samples):
        sample = samples[0]
        traj = _episode(
            quad_store, sample, [PLAN, _search(), _search("negotiate", "2014"),
                                 _answer(sorted(sample.gold_answers)[0])]
        )
        text, spans = episode_text_with_masks(traj)
        assert len(spans) == 2
        tokens = text.split()
        for start, end in spans:
            assert tokens[start].startswith("<observation>")
            assert tokens[end - 1].endswith("</observation>")

    def test_plan_answer_episode_has_no_spans(self, quad_store, samples):
        sample = samples[0]
        traj = _episode(quad_store, sample, [PLAN, _answer(sorted(sample.gold_answers)[0])])
        _, spans = episode_text_with_masks(traj)
        assert spans == []

    def test_spans_recover_observation_segments(self, quad_store, samples, gold_replays):
        for sample in samples[:8]:
            traj = _episode(quad_store, sample, gold_replays[sample.qid])
            record = build_sft_record(traj, sample.question_type)
            tokens = record.text.split()
            observations = traj.observations()
            assert len(record.mask_spans) == len(observations)
            for (start, end), obs in zip(record.mask_spans, observations):
                assert tokens[start:end] == obs.split()

    def test_spans_disjoint_and_in_bounds(self, quad_store, samples, gold_replays):
        sample = samples[1]
        traj = _episode(quad_store, sample, gold_replays[sample.qid])
        record = build_sft_record(traj, sample.question_type)
        n = len(record.text.split())
        prev_end = 0
        for start, end in record.mask_spans:
            assert 0 <= prev_end <= start < end <= n
            prev_end = end


class TestExport:
    def test_round_trip(self, tmp_path, labeled_corpus, samples_by_qid):
        episodes, _ = labeled_corpus
        trajectories = [traj for _, traj in episodes]
        kept, _ = filter_trajectories(trajectories, samples_by_qid)
        out = tmp_path / "sft.jsonl"
        written = export_sft(kept, out, samples_by_qid)
        assert written == len(kept)
        records = load_sft(out)
        assert len(records) == written
        rebuilt = sorted(
            (build_sft_record(t, samples_by_qid[t.qid].question_type) for t in kept),
            key=lambda r: r.qid,
        )
        assert records == rebuilt

    def test_jsonl_schema(self, tmp_path, quad_store, samples, samples_by_qid, gold_replays):
        sample = samples[0]
        traj = _episode(quad_store, sample, gold_replays[sample.qid])
        out = tmp_path / "one.jsonl"
        export_sft([traj], out, samples_by_qid)
        row = json.loads(out.read_text().splitlines()[0])
        assert set(row) == {"qid", "text", "mask_spans", "question_type"}
        assert row["question_type"] == sample.question_type
