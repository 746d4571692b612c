"""Turn grammar, trajectory structure, and whole-episode format validation.

A policy emission is one thought followed by exactly one body:

    <think>...</think><plan>...</plan>
    <think>...</think><action>search_specific("query", "2025-02-03")</action>
    <think>...</think><answer>...</answer>

Action arguments are double-quoted and comma-separated; time arguments are
ISO-prefix timestamps.  Grammar violations never raise out of an episode:
they are recorded on the trajectory and folded into the binary format
verdict, so every rollout stays scoreable.

A trajectory is well-formed when turn 0 is the plan, every middle turn is
a search carrying its observation, the final turn is the answer, every
emission parsed cleanly, and the turn count stays within budget.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .retriever import ScoredFact, VerbalizedFact
from .temporal import TimeInterval, TimeStamp, TimestampError, parse_timestamp
from .textutil import count_ws_tokens

DEFAULT_MAX_TURNS = 8
DEFAULT_MAX_OBS_TOKENS = 1024
DEFAULT_MAX_TURN_TOKENS = 512

NO_RESULTS_OBSERVATION = "<observation>No results found.</observation>"
TRUNCATION_SUFFIX = "[truncated]</observation>"


class ActionKind(enum.Enum):
    PLAN = "plan"
    SEARCH_TIME = "search_time"
    SEARCH_SPECIFIC = "search_specific"
    SEARCH_BEFORE = "search_before"
    SEARCH_AFTER = "search_after"
    SEARCH_BETWEEN = "search_between"
    ANSWER = "answer"


SEARCH_KINDS = frozenset(
    {
        ActionKind.SEARCH_TIME,
        ActionKind.SEARCH_SPECIFIC,
        ActionKind.SEARCH_BEFORE,
        ActionKind.SEARCH_AFTER,
        ActionKind.SEARCH_BETWEEN,
    }
)

_SEARCH_ARITY = {
    ActionKind.SEARCH_TIME: 1,
    ActionKind.SEARCH_SPECIFIC: 2,
    ActionKind.SEARCH_BEFORE: 2,
    ActionKind.SEARCH_AFTER: 2,
    ActionKind.SEARCH_BETWEEN: 3,
}


class ViolationKind(enum.Enum):
    # Per-emission grammar errors (parse_turn).
    MISSING_THINK = "missing_think"
    DUPLICATE_THINK = "duplicate_think"
    MISSING_BODY = "missing_body"
    MULTIPLE_BODIES = "multiple_bodies"
    STRAY_CONTENT = "stray_content"
    TRAILING_CONTENT = "trailing_content"
    MALFORMED_ACTION = "malformed_action"
    UNKNOWN_ACTION = "unknown_action"
    WRONG_ARITY = "wrong_arity"
    BAD_TIMESTAMP = "bad_timestamp"
    BAD_TIME_ORDER = "bad_time_order"
    EMPTY_ARGUMENT = "empty_argument"
    # Whole-trajectory structure errors (validate_format).
    EMPTY_TRAJECTORY = "empty_trajectory"
    MISSING_PLAN = "missing_plan"
    PLAN_AFTER_TURN_0 = "plan_after_turn_0"
    MISSING_OBSERVATION = "missing_observation"
    UNEXPECTED_OBSERVATION = "unexpected_observation"
    ACTION_AFTER_ANSWER = "action_after_answer"
    MISSING_ANSWER = "missing_answer"
    BUDGET_EXCEEDED = "budget_exceeded"
    BUDGET_EXHAUSTED = "budget_exhausted"


class TurnParseError(ValueError):
    """One emission failed the grammar; `kind` names the first violation."""

    def __init__(self, kind: ViolationKind, message: str):
        self.kind = kind
        super().__init__(message)


class Terminal(enum.Enum):
    ANSWERED = "answered"
    BUDGET_EXHAUSTED = "budget_exhausted"
    PROTOCOL_ERROR = "protocol_error"


@dataclass(frozen=True, slots=True)
class Action:
    kind: ActionKind
    text: str = ""
    t1: TimeStamp | None = None
    t2: TimeStamp | None = None

    @property
    def is_search(self) -> bool:
        return self.kind in SEARCH_KINDS

    def args(self) -> list[str]:
        """Canonical argument list as serialized on the wire."""
        if self.kind in (ActionKind.PLAN, ActionKind.ANSWER, ActionKind.SEARCH_TIME):
            return [self.text]
        if self.kind is ActionKind.SEARCH_BETWEEN:
            return [self.text, self.t1.canonical(), self.t2.canonical()]
        return [self.text, self.t1.canonical()]


@dataclass(slots=True)
class Turn:
    thought: str
    action: Action
    observation: str | None = None


@dataclass(slots=True)
class TurnError:
    """Parse failure recorded on a trajectory: which emission, what kind."""

    turn_index: int
    kind: ViolationKind
    message: str = ""


@dataclass(slots=True)
class Trajectory:
    question: str
    turns: list[Turn] = field(default_factory=list)
    terminal: Terminal | None = None
    qid: str | None = None
    error: TurnError | None = None

    @property
    def answer_text(self) -> str | None:
        if self.turns and self.turns[-1].action.kind is ActionKind.ANSWER:
            return self.turns[-1].action.text
        return None

    def observations(self) -> list[str]:
        return [t.observation for t in self.turns if t.observation is not None]


@dataclass(frozen=True, slots=True)
class FormatVerdict:
    valid: bool
    violation: tuple[int, ViolationKind] | None = None


_THINK_RE = re.compile(r"<think>(.*?)</think>", re.S)
_BODY_RES = {
    ActionKind.PLAN: re.compile(r"<plan>(.*?)</plan>", re.S),
    ActionKind.ANSWER: re.compile(r"<answer>(.*?)</answer>", re.S),
}
_ACTION_RE = re.compile(r"<action>(.*?)</action>", re.S)
_CALL_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$", re.S)


def _split_quoted_args(argtext: str) -> list[str]:
    """Split `"a", "b", ...`; raises MALFORMED_ACTION on anything else."""
    args: list[str] = []
    i = 0
    n = len(argtext)
    while i < n and argtext[i].isspace():
        i += 1
    if i == n:
        return args
    while True:
        if i >= n or argtext[i] != '"':
            raise TurnParseError(
                ViolationKind.MALFORMED_ACTION, "arguments must be double-quoted strings"
            )
        end = argtext.find('"', i + 1)
        if end < 0:
            raise TurnParseError(ViolationKind.MALFORMED_ACTION, "unterminated string argument")
        args.append(argtext[i + 1 : end])
        i = end + 1
        while i < n and argtext[i].isspace():
            i += 1
        if i == n:
            return args
        if argtext[i] != ",":
            raise TurnParseError(
                ViolationKind.MALFORMED_ACTION, "expected comma between arguments"
            )
        i += 1
        while i < n and argtext[i].isspace():
            i += 1


def _parse_stamp_arg(text: str) -> TimeStamp:
    try:
        return parse_timestamp(text)
    except TimestampError as exc:
        raise TurnParseError(ViolationKind.BAD_TIMESTAMP, str(exc)) from exc


def _parse_action_call(body: str) -> Action:
    call = _CALL_RE.match(body)
    if call is None:
        raise TurnParseError(
            ViolationKind.MALFORMED_ACTION, "action body must look like name(...)"
        )
    name, argtext = call.group(1), call.group(2)
    try:
        kind = ActionKind(name)
    except ValueError:
        raise TurnParseError(ViolationKind.UNKNOWN_ACTION, f"unknown action {name!r}") from None
    if kind not in SEARCH_KINDS:
        raise TurnParseError(ViolationKind.UNKNOWN_ACTION, f"{name!r} is not a search action")
    args = _split_quoted_args(argtext)
    want = _SEARCH_ARITY[kind]
    if len(args) != want:
        raise TurnParseError(
            ViolationKind.WRONG_ARITY, f"{name} takes {want} arguments, got {len(args)}"
        )
    query = args[0].strip()
    if not query:
        raise TurnParseError(ViolationKind.EMPTY_ARGUMENT, "empty query")
    if kind is ActionKind.SEARCH_TIME:
        return Action(kind, query)
    t1 = _parse_stamp_arg(args[1])
    if kind is ActionKind.SEARCH_BETWEEN:
        t2 = _parse_stamp_arg(args[2])
        if t1.interval().start > t2.interval().end:
            raise TurnParseError(
                ViolationKind.BAD_TIME_ORDER,
                f"{t1.canonical()} does not precede {t2.canonical()}",
            )
        return Action(kind, query, t1, t2)
    return Action(kind, query, t1)


def parse_turn(raw: str) -> tuple[str, Action]:
    """Parse one policy emission into (thought, action).

    Raises TurnParseError with a distinct ViolationKind for each grammar
    violation; callers fold these into the format verdict rather than
    aborting the episode.
    """
    thinks = list(_THINK_RE.finditer(raw))
    if not thinks:
        raise TurnParseError(ViolationKind.MISSING_THINK, "no <think> section")
    if len(thinks) > 1:
        raise TurnParseError(ViolationKind.DUPLICATE_THINK, "more than one <think> section")
    think = thinks[0]
    if raw[: think.start()].strip():
        raise TurnParseError(ViolationKind.STRAY_CONTENT, "content before <think>")

    bodies: list[tuple[ActionKind, re.Match]] = []
    for kind, rx in _BODY_RES.items():
        bodies.extend((kind, m) for m in rx.finditer(raw))
    bodies.extend((None, m) for m in _ACTION_RE.finditer(raw))
    if not bodies:
        raise TurnParseError(ViolationKind.MISSING_BODY, "no <plan>, <action>, or <answer>")
    if len(bodies) > 1:
        raise TurnParseError(
            ViolationKind.MULTIPLE_BODIES, "more than one <plan>/<action>/<answer>"
        )
    kind, body = bodies[0]
    if body.start() < think.end():
        raise TurnParseError(ViolationKind.STRAY_CONTENT, "body nested inside <think>")
    if raw[think.end() : body.start()].strip():
        raise TurnParseError(ViolationKind.STRAY_CONTENT, "content between think and body")
    if raw[body.end() :].strip():
        raise TurnParseError(ViolationKind.TRAILING_CONTENT, "content after closing tag")

    thought = think.group(1).strip()
    if kind is None:
        action = _parse_action_call(body.group(1))
    elif kind is ActionKind.PLAN:
        action = Action(ActionKind.PLAN, body.group(1).strip())
    else:
        answer = body.group(1).strip()
        if not answer:
            raise TurnParseError(ViolationKind.EMPTY_ARGUMENT, "empty answer")
        action = Action(ActionKind.ANSWER, answer)
    return thought, action


def serialize_action(action: Action) -> str:
    if action.kind is ActionKind.PLAN:
        return f"<plan>{action.text}</plan>"
    if action.kind is ActionKind.ANSWER:
        return f"<answer>{action.text}</answer>"
    rendered = ", ".join(f'"{a}"' for a in action.args())
    return f"<action>{action.kind.value}({rendered})</action>"


def serialize_turn(thought: str, action: Action) -> str:
    """Canonical text of one emission (no inter-tag whitespace)."""
    return f"<think>{thought}</think>{serialize_action(action)}"


def render_observation(
    results: list[tuple[ScoredFact, VerbalizedFact | str]] | list[TimeInterval],
    max_tokens: int = DEFAULT_MAX_OBS_TOKENS,
) -> str:
    """Wrap results in <observation> tags under a whitespace-token budget.

    Fact results render one numbered verbalization per line, interval
    results one canonical interval per line.  When the budget forces lines
    to be dropped, they are dropped whole from the tail and the output ends
    with the fixed "[truncated]</observation>" marker.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    lines: list[str] = []
    for i, item in enumerate(results, start=1):
        if isinstance(item, TimeInterval):
            lines.append(f"{i}. {item.canonical_text()}")
        else:
            _, rendered = item
            text = rendered.text if isinstance(rendered, VerbalizedFact) else rendered
            lines.append(f"{i}. {text}")
    if not lines:
        return NO_RESULTS_OBSERVATION

    budget = max_tokens - 2  # envelope: <observation> + closing token
    kept: list[str] = []
    used = 0
    for line in lines:
        cost = count_ws_tokens(line)
        if used + cost > budget:
            break
        kept.append(line)
        used += cost
    if len(kept) == len(lines):
        return "<observation>\n" + "\n".join(kept) + "\n</observation>"
    if kept:
        return "<observation>\n" + "\n".join(kept) + "\n" + TRUNCATION_SUFFIX
    return "<observation>\n" + TRUNCATION_SUFFIX


def validate_format(traj: Trajectory, max_turns: int = DEFAULT_MAX_TURNS) -> FormatVerdict:
    """Binary format verdict with first-violation attribution.

    Structural checks run turn by turn so the earliest offending index
    wins; a recorded parse error sits at the index of the emission that
    failed (always after the recorded turns); ending without an answer is
    attributed to the last turn, as BUDGET_EXHAUSTED when the episode ran
    out of budget and MISSING_ANSWER otherwise.
    """
    if not traj.turns:
        if traj.error is not None:
            return FormatVerdict(False, (traj.error.turn_index, traj.error.kind))
        return FormatVerdict(False, (0, ViolationKind.EMPTY_TRAJECTORY))

    n = len(traj.turns)
    for i, turn in enumerate(traj.turns):
        if i >= max_turns:
            return FormatVerdict(False, (i, ViolationKind.BUDGET_EXCEEDED))
        kind = turn.action.kind
        if i == 0 and kind is not ActionKind.PLAN:
            return FormatVerdict(False, (0, ViolationKind.MISSING_PLAN))
        if i > 0 and kind is ActionKind.PLAN:
            return FormatVerdict(False, (i, ViolationKind.PLAN_AFTER_TURN_0))
        if kind is ActionKind.ANSWER and i != n - 1:
            return FormatVerdict(False, (i + 1, ViolationKind.ACTION_AFTER_ANSWER))
        if turn.action.is_search and turn.observation is None:
            return FormatVerdict(False, (i, ViolationKind.MISSING_OBSERVATION))
        if not turn.action.is_search and turn.observation is not None:
            return FormatVerdict(False, (i, ViolationKind.UNEXPECTED_OBSERVATION))

    if traj.error is not None:
        return FormatVerdict(False, (traj.error.turn_index, traj.error.kind))
    if traj.turns[-1].action.kind is not ActionKind.ANSWER:
        if traj.terminal is Terminal.BUDGET_EXHAUSTED:
            return FormatVerdict(False, (n - 1, ViolationKind.BUDGET_EXHAUSTED))
        return FormatVerdict(False, (n - 1, ViolationKind.MISSING_ANSWER))
    return FormatVerdict(True, None)


def _action_from_wire(name: str, args: list[str]) -> Action:
    try:
        kind = ActionKind(name)
    except ValueError:
        raise ValueError(f"unknown action name {name!r}") from None
    if kind is ActionKind.PLAN:
        return Action(kind, args[0] if args else "")
    if kind is ActionKind.ANSWER:
        if len(args) != 1:
            raise ValueError("answer takes exactly one argument")
        return Action(kind, args[0])
    want = _SEARCH_ARITY[kind]
    if len(args) != want:
        raise ValueError(f"{name} takes {want} arguments, got {len(args)}")
    if kind is ActionKind.SEARCH_TIME:
        return Action(kind, args[0])
    t1 = parse_timestamp(args[1])
    if kind is ActionKind.SEARCH_BETWEEN:
        return Action(kind, args[0], t1, parse_timestamp(args[2]))
    return Action(kind, args[0], t1)


def trajectory_to_dict(traj: Trajectory) -> dict:
    """JSONL wire form: {question, turns, terminal, qid} plus error if any."""
    turns = []
    for turn in traj.turns:
        entry: dict = {
            "thought": turn.thought,
            "action": {"name": turn.action.kind.value, "args": turn.action.args()},
        }
        if turn.observation is not None:
            entry["observation"] = turn.observation
        turns.append(entry)
    out: dict = {
        "question": traj.question,
        "turns": turns,
        "terminal": traj.terminal.value if traj.terminal else None,
        "qid": traj.qid,
    }
    if traj.error is not None:
        out["error"] = {
            "turn": traj.error.turn_index,
            "kind": traj.error.kind.value,
            "message": traj.error.message,
        }
    return out


def trajectory_from_dict(data: dict) -> Trajectory:
    """Inverse of `trajectory_to_dict`; tolerates extra transcript keys."""
    turns = []
    for entry in data.get("turns", []):
        action = _action_from_wire(entry["action"]["name"], list(entry["action"]["args"]))
        turns.append(Turn(entry.get("thought", ""), action, entry.get("observation")))
    terminal = Terminal(data["terminal"]) if data.get("terminal") else None
    error = None
    if data.get("error"):
        error = TurnError(
            int(data["error"]["turn"]),
            ViolationKind(data["error"]["kind"]),
            data["error"].get("message", ""),
        )
    return Trajectory(
        question=data.get("question", ""),
        turns=turns,
        terminal=terminal,
        qid=data.get("qid"),
        error=error,
    )
