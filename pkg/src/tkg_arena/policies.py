"""Built-in policies for offline rollouts: replay and seeded random.

Real LLM policies live outside the package and talk to the service; these
two exist so rollouts, filtering, and evaluation can run end to end
without any model.  The replay policy feeds pre-recorded raw turns; the
random policy emits grammar-valid actions drawn from the store vocabulary.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .environment import Episode, EpisodeConfig, QASample, StepKind, create_episode
from .store import FactStore


class RolloutError(ValueError):
    pass


def load_replay_turns(path: str | Path) -> dict[str, list[str]]:
    """Read a replay file: JSONL {qid, turns: [raw turn text, ...]}."""
    turns_by_qid: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                turns_by_qid[str(row["qid"])] = [str(t) for t in row["turns"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise RolloutError(f"{path}: line {line_no}: {exc}") from exc
    return turns_by_qid


class ReplayPolicy:
    """Feeds each sample's recorded turns verbatim."""

    def __init__(self, turns_by_qid: dict[str, list[str]]):
        self._turns = turns_by_qid

    def turns_for(self, sample: QASample) -> list[str]:
        turns = self._turns.get(sample.qid)
        if turns is None:
            raise RolloutError(f"no recorded turns for qid {sample.qid!r}")
        return turns


class RandomPolicy:
    """Seeded grammar-valid turns: plan, a few random searches, an answer."""

    def __init__(self, store: FactStore, seed: int = 0):
        self._rng = random.Random(seed)
        vocab: set[str] = set()
        for fact in store.facts[:2000]:
            vocab.update(store.verbalize(fact.id).split())
        self._vocab = sorted(vocab) or ["what"]
        years = sorted({f.interval.start.year for f in store.facts[:2000]}) or [2000]
        self._years = years

    def random_query(self) -> str:
        n = self._rng.randint(1, 3)
        return " ".join(self._rng.choice(self._vocab) for _ in range(n))

    def _stamp(self) -> str:
        year = self._rng.choice(self._years)
        form = self._rng.randint(0, 2)
        if form == 0:
            return f"{year:04d}"
        month = self._rng.randint(1, 12)
        if form == 1:
            return f"{year:04d}-{month:02d}"
        return f"{year:04d}-{month:02d}-{self._rng.randint(1, 28):02d}"

    def _search(self) -> str:
        kind = self._rng.choice(
            ["search_time", "search_specific", "search_before", "search_after", "search_between"]
        )
        q = self.random_query()
        if kind == "search_time":
            call = f'search_time("{q}")'
        elif kind == "search_between":
            a, b = sorted([self._stamp(), self._stamp()], key=lambda s: (s[:4], s))
            call = f'search_between("{q}", "{a}", "{b}")'
        else:
            call = f'{kind}("{q}", "{self._stamp()}")'
        return f"<think>Trying a lookup.</think><action>{call}</action>"

    def turns_for(self, sample: QASample) -> list[str]:
        turns = ["<think>Decompose the question.</think><plan>look up the facts, then answer</plan>"]
        for _ in range(self._rng.randint(1, 3)):
            turns.append(self._search())
        answer = self._rng.choice(self._vocab)
        turns.append(f"<think>Settling on an answer.</think><answer>{answer}</answer>")
        return turns


def run_episode_turns(episode: Episode, raw_turns: list[str]) -> Episode:
    """Feed raw turns until the episode terminates; unterminated replays error."""
    for raw in raw_turns:
        result = episode.step(raw)
        if result.kind is StepKind.TERMINAL:
            return episode
    raise RolloutError(
        f"replay for qid {episode.sample.qid!r} ran out of turns before the episode ended"
    )


def run_rollout(
    store: FactStore,
    samples: list[QASample],
    policy: ReplayPolicy | RandomPolicy,
    config: EpisodeConfig,
) -> list[Episode]:
    """One finished episode per sample, in sample order."""
    episodes = []
    for sample in samples:
        episode = create_episode(sample, config, store)
        episodes.append(run_episode_turns(episode, policy.turns_for(sample)))
    return episodes
