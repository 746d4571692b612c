"""Shared text normalization, tokenization, and whitespace-token budgets.

One normalization convention is used everywhere surface text is compared
(entity lookup, answer matching, evidence containment): case-fold, treat
underscores as spaces, collapse runs of whitespace, trim.
"""

from __future__ import annotations

import re

from .temporal import try_parse_timestamp

_WORD_RE = re.compile(r"[\w\-]+")
_WS_RE = re.compile(r"\s+")
_NONWS_RE = re.compile(r"\S+")


def normalize_surface(text: str) -> str:
    """Case-fold, map underscores to spaces, collapse whitespace, trim."""
    return _WS_RE.sub(" ", text.casefold().replace("_", " ")).strip()


def normalize_answer(text: str) -> str:
    """Normalization used for exact-match answer comparison.

    Timestamp-shaped answers are canonicalized to ISO-prefix form at their
    own granularity ("2025-2" becomes "2025-02"); everything else gets the
    plain surface normalization.
    """
    cleaned = text.strip()
    ts = try_parse_timestamp(cleaned)
    if ts is not None:
        return ts.canonical()
    return normalize_surface(cleaned)


def tokenize(text: str) -> list[str]:
    """Case-folded word tokens; underscores split, hyphens kept ("2025-02-03")."""
    return _WORD_RE.findall(text.casefold().replace("_", " "))


def token_counts(text: str) -> dict[str, int]:
    """Token -> occurrence count, keys in first-occurrence order."""
    counts: dict[str, int] = {}
    for tok in tokenize(text):
        counts[tok] = counts.get(tok, 0) + 1
    return counts


def count_ws_tokens(text: str) -> int:
    """Number of whitespace-separated tokens."""
    return len(text.split())


def truncate_ws_tokens(text: str, max_tokens: int) -> str:
    """Cut `text` after its max_tokens-th whitespace token, preserving spacing."""
    if max_tokens <= 0:
        return ""
    count = 0
    for m in _NONWS_RE.finditer(text):
        count += 1
        if count == max_tokens:
            return text[: m.end()]
    return text


def contains_token_sequence(haystack: list[str], needle: list[str]) -> bool:
    """True when `needle` occurs as a contiguous run inside `haystack`."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and haystack[i : i + n] == needle:
            return True
    return False
