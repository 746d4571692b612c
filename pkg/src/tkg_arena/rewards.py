"""Verifiable reward components and their combination.

Three signals, all computable from a finished trajectory and the gold
answer set with no model in the loop:

  format    -- binary: the whole episode follows the interaction pattern.
  retrieval -- binary: some observation the policy actually saw contains a
               gold answer (whole-token containment, post-truncation text).
  outcome   -- binary: the final answer exact-matches a gold element after
               normalization.

The combined score is

  r_all = r_out * (1 - (1 - i_fmt) * lambda)
        + (1 - r_out) * (alpha * i_fmt + gamma * i_ret)
        + (1 - r_out) * delta * (1 - i_fmt)

so a correct answer earns 1.0 (minus the lambda penalty when its format is
broken), a wrong answer collects the partial format/retrieval credits, and
delta is the fallback floor when both answer and format fail.  Note the
retrieval credit is deliberately not gated on format validity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .protocol import Trajectory, validate_format
from .textutil import contains_token_sequence, normalize_answer, normalize_surface

DEFAULT_ALPHA = 0.2
DEFAULT_GAMMA = 0.1
DEFAULT_LAMBDA = 0.4
DEFAULT_DELTA = 0.1


@dataclass(frozen=True)
class RewardConfig:
    """Coefficients (alpha, gamma, lambda, delta); defaults keep r_all in [0, 1]."""

    alpha: float = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA
    lambda_pen: float = DEFAULT_LAMBDA
    delta_fb: float = DEFAULT_DELTA

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if not 0.0 < self.lambda_pen <= 1.0:
            raise ValueError(f"lambda must be in (0,1], got {self.lambda_pen}")
        if self.delta_fb <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta_fb}")
        if self.alpha + self.gamma > 1.0:
            raise ValueError("alpha + gamma must not exceed 1")
        if self.gamma + self.delta_fb > 1.0:
            raise ValueError("gamma + delta must not exceed 1")
        # Keeps valid format always at least as rewarding as the fallback.
        if self.delta_fb > self.alpha:
            raise ValueError("delta must not exceed alpha")


@dataclass(frozen=True)
class RewardBreakdown:
    i_fmt: int
    i_ret: int
    r_fmt: float
    r_ret: float
    r_out: int
    r_all: float

    def to_dict(self) -> dict:
        return {
            "i_fmt": self.i_fmt,
            "i_ret": self.i_ret,
            "r_fmt": self.r_fmt,
            "r_ret": self.r_ret,
            "r_out": self.r_out,
            "r_all": self.r_all,
        }


def outcome_reward(prediction: str | None, gold: frozenset[str] | set[str]) -> int:
    """1 iff the prediction exact-matches any gold element after normalization.

    Normalization case-folds, trims, collapses whitespace, and treats
    underscores as spaces; timestamp-shaped strings are canonicalized to
    ISO-prefix form, so "2025-2" matches "2025-02" but "2025-02-03" never
    matches the coarser "2025-02".
    """
    if not gold:
        raise ValueError("gold answer set must be non-empty")
    if prediction is None:
        return 0
    pred_norm = normalize_answer(prediction)
    return int(any(pred_norm == normalize_answer(g) for g in gold))


def retrieval_indicator(traj: Trajectory, gold: frozenset[str] | set[str]) -> int:
    """1 iff any observation contains a gold element at token boundaries.

    Both sides get the answer normalization; containment is a contiguous
    token-sequence match, so "Japan" never fires inside "Japanese".  Only
    the post-truncation observation text the policy actually saw counts.
    """
    needles = [normalize_answer(g).split() for g in gold]
    needles = [n for n in needles if n]
    if not needles:
        return 0
    for obs in traj.observations():
        hay = normalize_surface(obs).split()
        for needle in needles:
            if contains_token_sequence(hay, needle):
                return 1
    return 0


def combine(i_fmt: int, i_ret: int, r_out: int, config: RewardConfig) -> RewardBreakdown:
    """Populate the full breakdown from the three binary indicators."""
    for name, v in (("i_fmt", i_fmt), ("i_ret", i_ret), ("r_out", r_out)):
        if v not in (0, 1):
            raise ValueError(f"{name} must be 0 or 1, got {v!r}")
    r_fmt = config.alpha * i_fmt
    r_ret = config.gamma * i_ret
    r_all = (
        r_out * (1.0 - (1.0 - i_fmt) * config.lambda_pen)
        + (1 - r_out) * (r_fmt + r_ret)
        + (1 - r_out) * config.delta_fb * (1 - i_fmt)
    )
    return RewardBreakdown(i_fmt, i_ret, r_fmt, r_ret, r_out, r_all)


def score_trajectory(
    traj: Trajectory,
    gold: frozenset[str] | set[str],
    config: RewardConfig,
    max_turns: int | None = None,
) -> RewardBreakdown:
    """Full reward for a finished trajectory against its gold answers."""
    if max_turns is None:
        verdict = validate_format(traj)
    else:
        verdict = validate_format(traj, max_turns=max_turns)
    i_fmt = int(verdict.valid)
    i_ret = retrieval_indicator(traj, gold)
    r_out = outcome_reward(traj.answer_text, gold)
    return combine(i_fmt, i_ret, r_out, config)
