"""Deterministic TF-IDF cosine scoring over fact verbalizations.

The built-in scorer needs no model weights: term weight is
``count * idf`` with ``idf = 1 + ln(N / df)`` for in-corpus tokens and 0
for unseen ones, and the score is the cosine of the two weight vectors,
clamped into [0, 1].

Two scoring paths exist and must agree bit-for-bit: `score_lexical`
computes one (query, doc) pair from scratch, while `CorpusStats.bulk_scores`
accumulates the same partial sums over precomputed postings for a whole
candidate set.  Both iterate query terms in first-occurrence order and
perform the identical float64 operations in the identical order, so the
batched path is an exact accelerator, not an approximation.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from .textutil import token_counts, tokenize


def _weighted_norm(counts: dict[str, int], idf: dict[str, float]) -> float:
    acc = 0.0
    for tok, cnt in counts.items():
        w = cnt * idf.get(tok, 0.0)
        acc += w * w
    return math.sqrt(acc)


@dataclass
class CorpusStats:
    """Document frequencies plus the derived postings used for fast scoring.

    doc_count: number of documents (fact verbalizations).
    df: token -> number of documents containing it.
    idf: token -> inverse document frequency (0 for unseen tokens).
    doc_norms: per-document weight-vector norms, indexed by doc id.
    postings: token -> (doc id array, weight array), ids ascending.
    """

    doc_count: int
    df: dict[str, int]
    idf: dict[str, float]
    doc_norms: np.ndarray
    postings: dict[str, tuple[np.ndarray, np.ndarray]]

    def query_weights(self, query: str) -> tuple[dict[str, float], float]:
        """Per-token weights (first-occurrence order) and the query norm."""
        weights: dict[str, float] = {}
        acc = 0.0
        for tok, cnt in token_counts(query).items():
            w = cnt * self.idf.get(tok, 0.0)
            weights[tok] = w
            acc += w * w
        return weights, math.sqrt(acc)

    def bulk_scores(self, query: str, candidates: np.ndarray) -> np.ndarray:
        """Scores for every candidate doc id, aligned with `candidates`.

        Exactly equal to calling `score_lexical` per pair.
        """
        scores = np.zeros(len(candidates), dtype=np.float64)
        if len(candidates) == 0 or self.doc_count == 0:
            return scores
        weights, qnorm = self.query_weights(query)
        if qnorm == 0.0:
            return scores
        accum = np.zeros(self.doc_count, dtype=np.float64)
        for tok, qw in weights.items():
            if qw == 0.0:
                continue
            posting = self.postings.get(tok)
            if posting is None:
                continue
            ids, doc_w = posting
            accum[ids] += qw * doc_w
        dots = accum[candidates]
        hit = dots != 0.0
        if hit.any():
            denom = qnorm * self.doc_norms[candidates[hit]]
            scores[hit] = np.minimum(dots[hit] / denom, 1.0)
        return scores


def build_corpus_stats(docs: list[str] | tuple[str, ...]) -> CorpusStats:
    """Compute document frequencies, norms, and postings for a fixed corpus."""
    intern = sys.intern
    doc_tokens: list[list[str]] = [[intern(t) for t in tokenize(d)] for d in docs]
    n = len(doc_tokens)

    df: dict[str, int] = {}
    for toks in doc_tokens:
        for tok in set(toks):
            df[tok] = df.get(tok, 0) + 1
    idf = {tok: 1.0 + math.log(n / d) for tok, d in df.items()}

    norms = np.zeros(n, dtype=np.float64)
    raw_postings: dict[str, tuple[list[int], list[float]]] = {}
    for doc_id, toks in enumerate(doc_tokens):
        counts: dict[str, int] = {}
        for tok in toks:
            counts[tok] = counts.get(tok, 0) + 1
        acc = 0.0
        for tok, cnt in counts.items():
            w = cnt * idf[tok]
            acc += w * w
            ids, ws = raw_postings.setdefault(tok, ([], []))
            ids.append(doc_id)
            ws.append(w)
        norms[doc_id] = math.sqrt(acc)

    postings = {
        tok: (np.asarray(ids, dtype=np.int64), np.asarray(ws, dtype=np.float64))
        for tok, (ids, ws) in raw_postings.items()
    }
    return CorpusStats(doc_count=n, df=df, idf=idf, doc_norms=norms, postings=postings)


def score_lexical(query: str, doc: str, stats: CorpusStats) -> float:
    """TF-IDF cosine similarity of `query` and `doc` under `stats`, in [0, 1].

    Disjoint vocabularies score 0.0; tokens outside the corpus contribute
    nothing (idf 0).
    """
    q_counts = token_counts(query)
    d_counts = token_counts(doc)
    idf = stats.idf
    dot = 0.0
    for tok, qc in q_counts.items():
        dc = d_counts.get(tok)
        if dc is None:
            continue
        w = idf.get(tok, 0.0)
        dot += (qc * w) * (dc * w)
    if dot == 0.0:
        return 0.0
    qnorm = _weighted_norm(q_counts, idf)
    dnorm = _weighted_norm(d_counts, idf)
    if qnorm == 0.0 or dnorm == 0.0:
        return 0.0
    return min(dot / (qnorm * dnorm), 1.0)
