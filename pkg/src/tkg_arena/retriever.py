"""Top-k relevance ranking over temporally pre-filtered facts.

The scorer is pluggable: the default is the deterministic in-process
TF-IDF scorer (no model weights, fully reproducible), and EXTERNAL routes
scoring to an embedding service over HTTP.  Either way the contract is the
same: candidates are whatever the temporal constraint admits, ranked by
score descending with ties broken by ascending fact id, and the result is
a prefix of the full candidate ranking.
"""

from __future__ import annotations

import enum
import json
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from .lexical import score_lexical as _score_lexical_pair
from .store import FactStore, WindowMode
from .temporal import TimeInterval

DEFAULT_TOP_K = 15


class ScorerKind(enum.Enum):
    LEXICAL_TFIDF = "lexical"
    EXTERNAL = "external"


class RetrievalError(RuntimeError):
    """External scorer unreachable, timed out, or returned garbage."""


@dataclass(frozen=True, slots=True)
class ScoredFact:
    fact_id: int
    score: float


@dataclass(frozen=True, slots=True)
class VerbalizedFact:
    """A fact's deterministic text rendering, tagged with its id."""

    fact_id: int
    text: str


@dataclass(frozen=True)
class ScorerSpec:
    """Which scorer to use; EXTERNAL carries the endpoint and score range.

    External providers declare the range their raw scores live in; replies
    are min-max normalized into [0, 1] and clamped.
    """

    kind: ScorerKind = ScorerKind.LEXICAL_TFIDF
    endpoint: str | None = None
    score_range: tuple[float, float] = (0.0, 1.0)
    timeout: float = 5.0

    def __post_init__(self) -> None:
        if self.kind is ScorerKind.EXTERNAL and not self.endpoint:
            raise ValueError("EXTERNAL scorer requires an endpoint")
        lo, hi = self.score_range
        if not lo < hi:
            raise ValueError(f"score_range must be increasing, got {self.score_range}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @staticmethod
    def parse(text: str) -> "ScorerSpec":
        """Parse the CLI/env syntax "lexical" or "external:URL"."""
        if text == "lexical":
            return ScorerSpec()
        if text.startswith("external:"):
            return ScorerSpec(kind=ScorerKind.EXTERNAL, endpoint=text[len("external:"):])
        raise ValueError(f"unknown scorer spec {text!r} (expected lexical or external:URL)")


def score_lexical(query: str, doc: str, stats) -> float:
    """TF-IDF cosine of query and doc under the store's corpus statistics."""
    return _score_lexical_pair(query, doc, stats)


def verbalize(store: FactStore, fact) -> str:
    """Text rendering of a fact or fact id (see FactStore.verbalize)."""
    return store.verbalize(fact if isinstance(fact, int) else fact.id)


def _external_scores(spec: ScorerSpec, query: str, docs: list[str]) -> list[float]:
    payload = json.dumps({"query": query, "docs": docs}).encode("utf-8")
    request = urllib.request.Request(
        spec.endpoint,
        data=payload,
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=spec.timeout) as resp:
            body = json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, json.JSONDecodeError, ValueError) as exc:
        raise RetrievalError(f"external scorer at {spec.endpoint} failed: {exc}") from exc
    scores = body.get("scores") if isinstance(body, dict) else None
    if not isinstance(scores, list) or len(scores) != len(docs):
        raise RetrievalError(
            f"external scorer returned {0 if not isinstance(scores, list) else len(scores)} "
            f"scores for {len(docs)} docs"
        )
    lo, hi = spec.score_range
    span = hi - lo
    return [min(max((float(s) - lo) / span, 0.0), 1.0) for s in scores]


def retrieve_topk(
    store: FactStore,
    scorer: ScorerSpec,
    query: str,
    constraint: tuple[WindowMode, TimeInterval] | None = None,
    k: int = DEFAULT_TOP_K,
) -> list[ScoredFact]:
    """Rank the temporally admissible facts against `query`, return top k.

    Ordering is score descending, ties by ascending fact id; the result is
    always the k-prefix of the full candidate ranking.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if constraint is None:
        candidates = store.candidate_ids(None, None)
    else:
        mode, window = constraint
        candidates = store.candidate_ids(window, mode)
    if len(candidates) == 0:
        return []

    if scorer.kind is ScorerKind.LEXICAL_TFIDF:
        scores = store.stats.bulk_scores(query, candidates)
    else:
        docs = [store.verbalize(int(i)) for i in candidates]
        scores = np.asarray(_external_scores(scorer, query, docs), dtype=np.float64)

    positive = scores != 0.0
    ranked: list[ScoredFact] = []
    if positive.any():
        pos_ids = candidates[positive]
        pos_scores = scores[positive]
        order = np.lexsort((pos_ids, -pos_scores))
        for idx in order[:k]:
            ranked.append(ScoredFact(int(pos_ids[idx]), float(pos_scores[idx])))
    if len(ranked) < k:
        for cid in candidates[~positive][: k - len(ranked)]:
            ranked.append(ScoredFact(int(cid), 0.0))
    return ranked
