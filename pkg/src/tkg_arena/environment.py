"""Episode state machine: raw policy turns in, observations or terminals out.

An episode binds one question to the shared immutable store.  Each step
takes one raw policy emission, charges one unit of the turn budget, parses
it, executes any search against the store, and either returns the rendered
observation or ends the episode (answer given, budget exhausted, or the
emission failed the grammar).  Rewards are computed at every terminal so
failed rollouts score too.

Episodes are single-writer: one caller mutates an episode at a time, while
any number of episodes share a store concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from . import protocol
from .protocol import (
    Action,
    ActionKind,
    Terminal,
    Trajectory,
    Turn,
    TurnError,
    TurnParseError,
)
from .retriever import DEFAULT_TOP_K, ScorerSpec, VerbalizedFact, retrieve_topk
from .rewards import RewardBreakdown, RewardConfig, score_trajectory
from .store import FactStore, WindowMode
from .temporal import TimeInterval
from .textutil import truncate_ws_tokens


class AnswerType(enum.Enum):
    ENTITY = "entity"
    TIME = "time"


class EpisodeStatus(enum.Enum):
    RUNNING = "running"
    ANSWERED = "answered"
    BUDGET_EXHAUSTED = "budget_exhausted"
    PROTOCOL_ERROR = "protocol_error"


_TERMINAL_FOR_STATUS = {
    EpisodeStatus.ANSWERED: Terminal.ANSWERED,
    EpisodeStatus.BUDGET_EXHAUSTED: Terminal.BUDGET_EXHAUSTED,
    EpisodeStatus.PROTOCOL_ERROR: Terminal.PROTOCOL_ERROR,
}


class EpisodeTerminatedError(RuntimeError):
    """Caller stepped an episode that already reached a terminal."""


@dataclass(frozen=True)
class QASample:
    qid: str
    question: str
    gold_answers: frozenset[str]
    question_type: str = "unknown"
    answer_type: AnswerType = AnswerType.ENTITY

    def __post_init__(self) -> None:
        if not self.gold_answers:
            raise ValueError(f"sample {self.qid}: gold_answers must be non-empty")

    @staticmethod
    def from_dict(data: dict) -> "QASample":
        answers = data.get("answers") or data.get("gold_answers")
        if not answers:
            raise ValueError(f"sample {data.get('qid')!r} has no answers")
        return QASample(
            qid=str(data["qid"]),
            question=data["question"],
            gold_answers=frozenset(str(a) for a in answers),
            question_type=data.get("question_type", "unknown"),
            answer_type=AnswerType(data.get("answer_type", "entity")),
        )

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "question": self.question,
            "answers": sorted(self.gold_answers),
            "question_type": self.question_type,
            "answer_type": self.answer_type.value,
        }


@dataclass(frozen=True)
class EpisodeConfig:
    max_turns: int = protocol.DEFAULT_MAX_TURNS
    top_k: int = DEFAULT_TOP_K
    max_obs_tokens: int = protocol.DEFAULT_MAX_OBS_TOKENS
    max_turn_tokens: int = protocol.DEFAULT_MAX_TURN_TOKENS
    scorer: ScorerSpec = field(default_factory=ScorerSpec)
    reward_config: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self) -> None:
        for name in ("max_turns", "top_k", "max_obs_tokens", "max_turn_tokens"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")

    def with_overrides(self, overrides: dict) -> "EpisodeConfig":
        allowed = {"max_turns", "top_k", "max_obs_tokens", "max_turn_tokens"}
        unknown = set(overrides) - allowed
        if unknown:
            raise ValueError(f"unknown config overrides: {sorted(unknown)}")
        return replace(self, **overrides)


class StepKind(enum.Enum):
    OBSERVATION = "observation"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class StepResult:
    kind: StepKind
    observation: str | None = None
    status: EpisodeStatus | None = None
    reward: RewardBreakdown | None = None


_MODE_FOR_ACTION = {
    ActionKind.SEARCH_SPECIFIC: WindowMode.INTERSECTS,
    ActionKind.SEARCH_BEFORE: WindowMode.STRICTLY_BEFORE,
    ActionKind.SEARCH_AFTER: WindowMode.STRICTLY_AFTER,
    ActionKind.SEARCH_BETWEEN: WindowMode.CONTAINED,
}


def constraint_for_action(action: Action) -> tuple[WindowMode, TimeInterval] | None:
    """Temporal constraint a search action places on the candidate set."""
    if action.kind is ActionKind.SEARCH_TIME:
        return None
    mode = _MODE_FOR_ACTION[action.kind]
    if action.kind is ActionKind.SEARCH_BETWEEN:
        return mode, TimeInterval.spanning(action.t1, action.t2)
    return mode, action.t1.interval()


class Episode:
    """Mutable episode state; create via `create_episode`."""

    def __init__(self, sample: QASample, config: EpisodeConfig, store: FactStore):
        self.sample = sample
        self.config = config
        self.store = store
        self.trajectory = Trajectory(question=sample.question, qid=sample.qid)
        self.status = EpisodeStatus.RUNNING

    @property
    def turns_used(self) -> int:
        return len(self.trajectory.turns)

    def _finish(self, status: EpisodeStatus) -> StepResult:
        self.status = status
        self.trajectory.terminal = _TERMINAL_FOR_STATUS[status]
        reward = score_trajectory(
            self.trajectory,
            self.sample.gold_answers,
            self.config.reward_config,
            max_turns=self.config.max_turns,
        )
        self.reward = reward
        return StepResult(StepKind.TERMINAL, status=status, reward=reward)

    def _execute_search(self, action: Action) -> str:
        constraint = constraint_for_action(action)
        hits = retrieve_topk(
            self.store, self.config.scorer, action.text, constraint, self.config.top_k
        )
        if action.kind is ActionKind.SEARCH_TIME:
            results = [self.store.fact(h.fact_id).interval for h in hits]
        else:
            results = [
                (h, VerbalizedFact(h.fact_id, self.store.verbalize(h.fact_id))) for h in hits
            ]
        return protocol.render_observation(results, self.config.max_obs_tokens)

    def step(self, raw_turn: str) -> StepResult:
        """Consume one policy emission; see module docstring for semantics."""
        if self.status is not EpisodeStatus.RUNNING:
            raise EpisodeTerminatedError(
                f"episode for {self.sample.qid!r} already ended with {self.status.value}"
            )
        capped = truncate_ws_tokens(raw_turn, self.config.max_turn_tokens)
        try:
            thought, action = protocol.parse_turn(capped)
        except TurnParseError as exc:
            self.trajectory.error = TurnError(self.turns_used, exc.kind, str(exc))
            return self._finish(EpisodeStatus.PROTOCOL_ERROR)

        if action.kind is ActionKind.ANSWER:
            self.trajectory.turns.append(Turn(thought, action))
            return self._finish(EpisodeStatus.ANSWERED)

        observation: str | None = None
        if action.is_search:
            observation = self._execute_search(action)
            self.trajectory.turns.append(Turn(thought, action, observation))
        else:
            # Plan turns acknowledge with an empty observation and carry none
            # in the trajectory; planning anywhere but turn 0 is a format
            # violation picked up by validate_format, not a hard stop.
            observation = ""
            self.trajectory.turns.append(Turn(thought, action))

        if self.turns_used >= self.config.max_turns:
            return self._finish(EpisodeStatus.BUDGET_EXHAUSTED)
        return StepResult(StepKind.OBSERVATION, observation=observation)


def create_episode(sample: QASample, config: EpisodeConfig, store: FactStore) -> Episode:
    """Fresh RUNNING episode over `store`; raises on invalid config."""
    if not isinstance(config, EpisodeConfig):
        raise TypeError("config must be an EpisodeConfig")
    return Episode(sample, config, store)


def step(episode: Episode, raw_turn: str) -> StepResult:
    return episode.step(raw_turn)


def transcript_to_dict(episode: Episode) -> dict:
    """Trajectory wire format extended with episode status and reward."""
    out = protocol.trajectory_to_dict(episode.trajectory)
    out["status"] = episode.status.value
    reward = getattr(episode, "reward", None)
    out["reward"] = reward.to_dict() if reward is not None else None
    return out
