import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tkg_arena.protocol import (
    Action,
    ActionKind,
    Terminal,
    Trajectory,
    Turn,
    TurnError,
    TurnParseError,
    ViolationKind,
    parse_turn,
    render_observation,
    serialize_turn,
    trajectory_from_dict,
    trajectory_to_dict,
    validate_format,
)
from tkg_arena.retriever import ScoredFact
from tkg_arena.temporal import TimeInterval, TimeStamp, parse_timestamp
from tkg_arena.textutil import count_ws_tokens


class TestParseTurn:
    def test_search_specific(self):
        thought, action = parse_turn(
            '<think>Need his team that day.</think>'
            '<action>search_specific("Luka Dončić play for", "2025-02-03")</action>'
        )
        assert thought == "Need his team that day."
        assert action.kind is ActionKind.SEARCH_SPECIFIC
        assert action.text == "Luka Dončić play for"
        assert action.t1 == parse_timestamp("2025-02-03")

    def test_minimal_answer_turn(self):
        thought, action = parse_turn("<think>done</think><answer>Los_Angeles_Lakers</answer>")
        assert action == Action(ActionKind.ANSWER, "Los_Angeles_Lakers")

    def test_plan_turn(self):
        _, action = parse_turn("<think>t</think><plan>1. look up 2. answer</plan>")
        assert action.kind is ActionKind.PLAN

    def test_whitespace_between_tags_ok(self):
        _, action = parse_turn("<think>t</think>\n  <answer>x</answer>\n")
        assert action.kind is ActionKind.ANSWER

    def test_search_between(self):
        _, action = parse_turn(
            '<think>t</think><action>search_between("q", "2008", "2012")</action>'
        )
        assert action.kind is ActionKind.SEARCH_BETWEEN
        assert (action.t1.canonical(), action.t2.canonical()) == ("2008", "2012")

    @pytest.mark.parametrize(
        "raw,kind",
        [
            ('<action>search_before("x","2015")</action>', ViolationKind.MISSING_THINK),
            ("<think>a</think><think>b</think><answer>x</answer>", ViolationKind.DUPLICATE_THINK),
            ("<think>a</think>", ViolationKind.MISSING_BODY),
            ("<think>a</think><plan>p</plan><answer>x</answer>", ViolationKind.MULTIPLE_BODIES),
            ("<think>a</think><answer>x</answer><answer>y</answer>", ViolationKind.MULTIPLE_BODIES),
            ("<think>a</think><answer>x</answer> trailing", ViolationKind.TRAILING_CONTENT),
            ("junk <think>a</think><answer>x</answer>", ViolationKind.STRAY_CONTENT),
            ("<think>a</think> noise <answer>x</answer>", ViolationKind.STRAY_CONTENT),
            ("<think>a<plan>p</plan></think>", ViolationKind.STRAY_CONTENT),
            ("<think>a</think><action>fetch(\"q\")</action>", ViolationKind.UNKNOWN_ACTION),
            ("<think>a</think><action>plan(\"q\")</action>", ViolationKind.UNKNOWN_ACTION),
            ("<think>a</think><action>search_time()</action>", ViolationKind.WRONG_ARITY),
            (
                '<think>a</think><action>search_specific("q")</action>',
                ViolationKind.WRONG_ARITY,
            ),
            (
                '<think>a</think><action>search_before("q", "2015", "2016")</action>',
                ViolationKind.WRONG_ARITY,
            ),
            (
                '<think>a</think><action>search_before("q", "next year")</action>',
                ViolationKind.BAD_TIMESTAMP,
            ),
            (
                '<think>a</think><action>search_between("q", "2012", "2008")</action>',
                ViolationKind.BAD_TIME_ORDER,
            ),
            (
                "<think>a</think><action>search_time(unquoted)</action>",
                ViolationKind.MALFORMED_ACTION,
            ),
            ('<think>a</think><action>search_time("q" "r")</action>', ViolationKind.MALFORMED_ACTION),
            ("<think>a</think><action>nonsense</action>", ViolationKind.MALFORMED_ACTION),
            ('<think>a</think><action>search_time("  ")</action>', ViolationKind.EMPTY_ARGUMENT),
            ("<think>a</think><answer>   </answer>", ViolationKind.EMPTY_ARGUMENT),
        ],
    )
    def test_error_kinds(self, raw, kind):
        with pytest.raises(TurnParseError) as err:
            parse_turn(raw)
        assert err.value.kind is kind

    def test_between_same_stamp_allowed(self):
        _, action = parse_turn(
            '<think>t</think><action>search_between("q", "2012", "2012")</action>'
        )
        assert action.kind is ActionKind.SEARCH_BETWEEN


def _normalize_intertag(text: str) -> str:
    return re.sub(r">\s+<", "><", text.strip())


_QUERY_CHARS = st.text(
    alphabet=st.characters(
        whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" -"
    ),
    min_size=1,
    max_size=24,
).filter(lambda s: s.strip())

_STAMPS = st.builds(
    lambda y, m, d, g: TimeStamp(y, m if g > 0 else None, d if g > 1 else None),
    st.integers(min_value=1000, max_value=9999),
    st.integers(min_value=1, max_value=12),
    st.integers(min_value=1, max_value=28),
    st.integers(min_value=0, max_value=2),
)


@st.composite
def _actions(draw):
    kind = draw(st.sampled_from(list(ActionKind)))
    text = draw(_QUERY_CHARS).strip()
    if kind in (ActionKind.PLAN, ActionKind.ANSWER, ActionKind.SEARCH_TIME):
        return Action(kind, text)
    if kind is ActionKind.SEARCH_BETWEEN:
        a, b = sorted([draw(_STAMPS), draw(_STAMPS)], key=lambda t: t.interval().start)
        return Action(kind, text, a, b)
    return Action(kind, text, draw(_STAMPS))


class TestRoundTrip:
    @given(action=_actions(), thought=_QUERY_CHARS, pad=st.sampled_from(["", " ", "\n", "\n  "]))
    def test_serialize_parse_round_trip(self, action, thought, pad):
        thought = thought.strip()
        canonical = serialize_turn(thought, action)
        noisy = canonical.replace("</think><", f"</think>{pad}<")
        got_thought, got_action = parse_turn(noisy)
        assert got_thought == thought
        assert got_action == action
        assert serialize_turn(got_thought, got_action) == _normalize_intertag(noisy)


class TestRenderObservation:
    def test_empty_results(self):
        assert render_observation([], 100) == "<observation>No results found.</observation>"

    def test_single_fact_line(self):
        obs = render_observation([(ScoredFact(0, 1.0), "Luka Dončić play for Los Angeles Lakers on 2025-02-03")], 1024)
        assert obs.startswith("<observation>\n1. Luka Dončić")
        assert obs.endswith("\n</observation>")
        assert count_ws_tokens(obs) <= 1024

    def test_interval_lines(self):
        iv = TimeStamp(2013, 5).interval()
        obs = render_observation([iv], 100)
        assert "1. 2013-05-01 to 2013-05-31" in obs

    def test_truncation_drops_tail_lines(self):
        results = [(ScoredFact(i, 0.5), f"subject {i} relation object {i} on 2020-01-01 extra words here") for i in range(500)]
        obs = render_observation(results, 1024)
        assert obs.endswith("[truncated]</observation>")
        assert count_ws_tokens(obs) <= 1024
        assert "1. subject 0" in obs

    def test_no_partial_lines(self):
        results = [(ScoredFact(i, 0.5), "alpha beta gamma delta") for i in range(10)]
        obs = render_observation(results, 13)  # envelope 2 + two 5-token lines
        body = [l for l in obs.splitlines() if l.startswith(("1.", "2.", "3."))]
        assert len(body) == 2

    def test_max_tokens_validated(self):
        with pytest.raises(ValueError):
            render_observation([], 0)


def _plan_turn():
    return Turn("t0", Action(ActionKind.PLAN, "p"))


def _search_turn(with_obs=True):
    action = Action(ActionKind.SEARCH_SPECIFIC, "q", parse_timestamp("2020"))
    return Turn("t", action, "<observation>\n1. x\n</observation>" if with_obs else None)


def _answer_turn(obs=None):
    return Turn("t", Action(ActionKind.ANSWER, "a"), obs)


class TestValidateFormat:
    def test_valid_minimal(self):
        traj = Trajectory("Q?", [_plan_turn(), _search_turn(), _answer_turn()], Terminal.ANSWERED)
        verdict = validate_format(traj)
        assert verdict.valid and verdict.violation is None

    def test_plan_then_answer_valid(self):
        traj = Trajectory("Q?", [_plan_turn(), _answer_turn()], Terminal.ANSWERED)
        assert validate_format(traj).valid

    def test_missing_plan(self):
        traj = Trajectory("Q?", [_search_turn(), _answer_turn()], Terminal.ANSWERED)
        verdict = validate_format(traj)
        assert not verdict.valid
        assert verdict.violation == (0, ViolationKind.MISSING_PLAN)

    def test_empty_trajectory(self):
        verdict = validate_format(Trajectory("Q?"))
        assert verdict.violation == (0, ViolationKind.EMPTY_TRAJECTORY)

    def test_plan_after_turn_0(self):
        traj = Trajectory(
            "Q?", [_plan_turn(), _plan_turn(), _answer_turn()], Terminal.ANSWERED
        )
        assert validate_format(traj).violation == (1, ViolationKind.PLAN_AFTER_TURN_0)

    def test_action_after_answer(self):
        traj = Trajectory(
            "Q?", [_plan_turn(), _answer_turn(), _search_turn()], Terminal.ANSWERED
        )
        assert validate_format(traj).violation == (2, ViolationKind.ACTION_AFTER_ANSWER)

    def test_search_missing_observation(self):
        traj = Trajectory(
            "Q?", [_plan_turn(), _search_turn(with_obs=False), _answer_turn()], Terminal.ANSWERED
        )
        assert validate_format(traj).violation == (1, ViolationKind.MISSING_OBSERVATION)

    def test_answer_with_observation_invalid(self):
        traj = Trajectory(
            "Q?", [_plan_turn(), _answer_turn(obs="<observation>x</observation>")],
            Terminal.ANSWERED,
        )
        assert validate_format(traj).violation == (1, ViolationKind.UNEXPECTED_OBSERVATION)

    def test_budget_exhausted_invalid(self):
        turns = [_plan_turn()] + [_search_turn() for _ in range(7)]
        traj = Trajectory("Q?", turns, Terminal.BUDGET_EXHAUSTED)
        verdict = validate_format(traj, max_turns=8)
        assert not verdict.valid
        assert verdict.violation == (7, ViolationKind.BUDGET_EXHAUSTED)

    def test_over_budget_turn_count(self):
        turns = [_plan_turn()] + [_search_turn() for _ in range(8)] + [_answer_turn()]
        verdict = validate_format(Trajectory("Q?", turns, Terminal.ANSWERED), max_turns=8)
        assert verdict.violation == (8, ViolationKind.BUDGET_EXCEEDED)

    def test_parse_error_attributed(self):
        traj = Trajectory(
            "Q?",
            [_plan_turn(), _search_turn()],
            Terminal.PROTOCOL_ERROR,
            error=TurnError(2, ViolationKind.UNKNOWN_ACTION, "fetch"),
        )
        assert validate_format(traj).violation == (2, ViolationKind.UNKNOWN_ACTION)

    def test_no_answer_without_budget_terminal(self):
        traj = Trajectory("Q?", [_plan_turn(), _search_turn()], None)
        assert validate_format(traj).violation == (1, ViolationKind.MISSING_ANSWER)

    def test_determinism(self):
        traj = Trajectory("Q?", [_plan_turn(), _search_turn(), _answer_turn()], Terminal.ANSWERED)
        assert validate_format(traj) == validate_format(traj)


class TestWireFormat:
    def test_trajectory_round_trip(self):
        traj = Trajectory(
            "Q?",
            [
                _plan_turn(),
                Turn("t", Action(ActionKind.SEARCH_BETWEEN, "q",
                                 parse_timestamp("2008"), parse_timestamp("2012")),
                     "<observation>\n1. y\n</observation>"),
                _answer_turn(),
            ],
            Terminal.ANSWERED,
            qid="q9",
        )
        data = trajectory_to_dict(traj)
        back = trajectory_from_dict(data)
        assert trajectory_to_dict(back) == data
        assert back.turns[1].action.t2 == parse_timestamp("2012")

    def test_error_survives_round_trip(self):
        traj = Trajectory(
            "Q?", [], Terminal.PROTOCOL_ERROR,
            qid="q1", error=TurnError(0, ViolationKind.MISSING_THINK, "no think"),
        )
        back = trajectory_from_dict(trajectory_to_dict(traj))
        assert back.error.kind is ViolationKind.MISSING_THINK
