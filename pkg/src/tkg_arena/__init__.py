"""Temporal knowledge-graph interaction environment.

A policy-agnostic harness for time-sensitive question answering over
temporal knowledge graphs: an immutable fact store with five
time-constrained retrieval tools, a tagged turn protocol with format
validation, a verifiable multi-component reward, a rejection-sampling
pipeline for SFT data, a Hits@1 evaluation harness, and an HTTP service
plus CLI wrapping it all.
"""

from .environment import (
    AnswerType,
    Episode,
    EpisodeConfig,
    EpisodeStatus,
    EpisodeTerminatedError,
    QASample,
    StepKind,
    StepResult,
    create_episode,
    step,
    transcript_to_dict,
)
from .evaluation import EvalReport, ReportFormat, evaluate, render_report
from .pipeline import SftRecord, export_sft, filter_trajectories
from .protocol import (
    Action,
    ActionKind,
    FormatVerdict,
    Terminal,
    Trajectory,
    Turn,
    TurnParseError,
    ViolationKind,
    parse_turn,
    render_observation,
    serialize_turn,
    validate_format,
)
from .retriever import (
    RetrievalError,
    ScoredFact,
    ScorerKind,
    ScorerSpec,
    VerbalizedFact,
    retrieve_topk,
    verbalize,
)
from .rewards import RewardBreakdown, RewardConfig, combine, outcome_reward, retrieval_indicator
from .service import ArenaService, serve
from .store import (
    FactFormat,
    FactStore,
    LoadError,
    TemporalFact,
    WindowMode,
    facts_in_window,
    load_facts,
    load_store,
    lookup_entity,
    save_store,
)
from .temporal import Granularity, TimeInterval, TimeStamp, TimestampError, parse_timestamp

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "AnswerType",
    "ArenaService",
    "Episode",
    "EpisodeConfig",
    "EpisodeStatus",
    "EpisodeTerminatedError",
    "EvalReport",
    "FactFormat",
    "FactStore",
    "FormatVerdict",
    "Granularity",
    "LoadError",
    "QASample",
    "ReportFormat",
    "RetrievalError",
    "RewardBreakdown",
    "RewardConfig",
    "ScoredFact",
    "ScorerKind",
    "ScorerSpec",
    "SftRecord",
    "StepKind",
    "StepResult",
    "TemporalFact",
    "Terminal",
    "TimeInterval",
    "TimeStamp",
    "TimestampError",
    "Trajectory",
    "Turn",
    "TurnParseError",
    "VerbalizedFact",
    "ViolationKind",
    "WindowMode",
    "combine",
    "create_episode",
    "evaluate",
    "export_sft",
    "facts_in_window",
    "filter_trajectories",
    "load_facts",
    "load_store",
    "lookup_entity",
    "outcome_reward",
    "parse_timestamp",
    "parse_turn",
    "render_observation",
    "render_report",
    "retrieve_topk",
    "retrieval_indicator",
    "save_store",
    "serialize_turn",
    "serve",
    "step",
    "transcript_to_dict",
    "validate_format",
    "verbalize",
]
