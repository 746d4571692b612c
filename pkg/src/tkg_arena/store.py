"""Immutable temporal fact store: loading, interning, and window queries.

Facts arrive as timestamped quadruples or interval quintuples and are
normalized to one representation: (subject, relation, object, closed day
interval).  After load the store is frozen and safe for any number of
concurrent readers.

The temporal index is a pair of id-aligned ordinal arrays (interval start
and end per fact); window queries are vectorized comparisons over them and
are required to agree with a plain linear scan.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lexical import CorpusStats, build_corpus_stats
from .temporal import Granularity, TimeInterval, TimestampError, parse_timestamp
from .textutil import normalize_surface


class FactFormat(enum.Enum):
    QUAD_TSV = "quad"
    QUINT_TSV = "quint"


class WindowMode(enum.Enum):
    INTERSECTS = "intersects"
    CONTAINED = "contained"
    STRICTLY_BEFORE = "strictly_before"
    STRICTLY_AFTER = "strictly_after"


class LoadError(ValueError):
    """Malformed fact file; carries the 1-based offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


_GRAN_RANK = {Granularity.YEAR: 0, Granularity.MONTH: 1, Granularity.DAY: 2}


@dataclass(frozen=True, slots=True)
class TemporalFact:
    """One (subject, relation, object, interval) assertion.

    Identifier fields index into the owning store's symbol tables; `id` is
    assigned densely in file order starting at 0.
    """

    id: int
    subject: int
    relation: int
    object: int
    interval: TimeInterval
    source_granularity: Granularity


class _Interner:
    """Bidirectional surface text <-> dense id map with normalized lookup."""

    def __init__(self) -> None:
        self.surfaces: list[str] = []
        self._by_surface: dict[str, int] = {}
        self._by_norm: dict[str, int] = {}

    def intern(self, surface: str) -> int:
        ident = self._by_surface.get(surface)
        if ident is not None:
            return ident
        ident = len(self.surfaces)
        self.surfaces.append(surface)
        self._by_surface[surface] = ident
        # First surface to claim a normalized key wins.
        self._by_norm.setdefault(normalize_surface(surface), ident)
        return ident

    def lookup(self, surface: str) -> int | None:
        ident = self._by_surface.get(surface)
        if ident is not None:
            return ident
        return self._by_norm.get(normalize_surface(surface))

    def __len__(self) -> int:
        return len(self.surfaces)


class FactStore:
    """Interned facts plus the temporal index and lexical corpus statistics."""

    def __init__(
        self,
        facts: list[TemporalFact],
        entities: _Interner,
        relations: _Interner,
    ) -> None:
        self._facts = tuple(facts)
        self._entities = entities
        self._relations = relations
        self._starts = np.fromiter(
            (f.interval.start.toordinal() for f in facts), dtype=np.int64, count=len(facts)
        )
        self._ends = np.fromiter(
            (f.interval.end.toordinal() for f in facts), dtype=np.int64, count=len(facts)
        )
        self._all_ids = np.arange(len(facts), dtype=np.int64)
        self._stats = build_corpus_stats([self.verbalize(f.id) for f in facts])

    def __len__(self) -> int:
        return len(self._facts)

    @property
    def facts(self) -> tuple[TemporalFact, ...]:
        return self._facts

    @property
    def stats(self) -> CorpusStats:
        return self._stats

    def fact(self, fact_id: int) -> TemporalFact:
        return self._facts[fact_id]

    def entity_surface(self, entity_id: int) -> str:
        return self._entities.surfaces[entity_id]

    def relation_surface(self, relation_id: int) -> str:
        return self._relations.surfaces[relation_id]

    def entity_count(self) -> int:
        return len(self._entities)

    def lookup_entity(self, surface: str) -> int | None:
        """Entity id for `surface`, tolerant of case and underscore/space."""
        return self._entities.lookup(surface)

    def verbalize(self, fact_id: int) -> str:
        """Deterministic text rendering of one fact.

        Single-day facts read "{s} {r} {o} on {date}", interval facts
        "{s} {r} {o} from {start} to {end}"; underscores become spaces.
        """
        f = self._facts[fact_id]
        subj = self.entity_surface(f.subject).replace("_", " ")
        rel = self.relation_surface(f.relation).replace("_", " ")
        obj = self.entity_surface(f.object).replace("_", " ")
        iv = f.interval
        if iv.single_day:
            return f"{subj} {rel} {obj} on {iv.start.isoformat()}"
        return f"{subj} {rel} {obj} from {iv.start.isoformat()} to {iv.end.isoformat()}"

    def candidate_ids(self, window: TimeInterval | None, mode: WindowMode | None) -> np.ndarray:
        """Ascending fact ids satisfying the temporal predicate (all if None)."""
        if window is None or mode is None:
            return self._all_ids
        ws = window.start.toordinal()
        we = window.end.toordinal()
        if mode is WindowMode.INTERSECTS:
            mask = (self._starts <= we) & (self._ends >= ws)
        elif mode is WindowMode.CONTAINED:
            mask = (self._starts >= ws) & (self._ends <= we)
        elif mode is WindowMode.STRICTLY_BEFORE:
            mask = self._ends < ws
        elif mode is WindowMode.STRICTLY_AFTER:
            mask = self._starts > we
        else:  # pragma: no cover - enum is closed
            raise ValueError(f"unknown window mode: {mode}")
        return np.flatnonzero(mask).astype(np.int64, copy=False)


def facts_in_window(store: FactStore, window: TimeInterval, mode: WindowMode) -> set[int]:
    """Ids of facts whose interval satisfies `mode` relative to `window`."""
    return {int(i) for i in store.candidate_ids(window, mode)}


def lookup_entity(store: FactStore, surface: str) -> int | None:
    return store.lookup_entity(surface)


def _parse_fields(line: str, line_no: int, arity: int) -> list[str]:
    fields = line.split("\t")
    if len(fields) != arity:
        raise LoadError(f"expected {arity} tab-separated fields, got {len(fields)}", line_no)
    for field in fields:
        if not field.strip():
            raise LoadError("empty field", line_no)
    return fields


def _parse_stamp(text: str, line_no: int):
    try:
        return parse_timestamp(text)
    except TimestampError as exc:
        raise LoadError(str(exc), line_no) from exc


def load_facts(path: str | Path, fact_format: FactFormat) -> FactStore:
    """Load a QUAD_TSV or QUINT_TSV file into an immutable store.

    Malformed lines (wrong arity, unparseable date, start after end) raise
    LoadError with the line number; an empty file yields an empty store.
    """
    entities = _Interner()
    relations = _Interner()
    facts: list[TemporalFact] = []
    arity = 4 if fact_format is FactFormat.QUAD_TSV else 5

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = _parse_fields(line, line_no, arity)
            subj = entities.intern(fields[0])
            rel = relations.intern(fields[1])
            obj = entities.intern(fields[2])
            if fact_format is FactFormat.QUAD_TSV:
                stamp = _parse_stamp(fields[3], line_no)
                interval = stamp.interval()
                gran = stamp.granularity
            else:
                start = _parse_stamp(fields[3], line_no)
                end = _parse_stamp(fields[4], line_no)
                lo = start.interval().start
                hi = end.interval().end
                if lo > hi:
                    raise LoadError(
                        f"interval start {fields[3]!r} is after end {fields[4]!r}", line_no
                    )
                interval = TimeInterval(lo, hi)
                if _GRAN_RANK[start.granularity] <= _GRAN_RANK[end.granularity]:
                    gran = start.granularity
                else:
                    gran = end.granularity
            facts.append(TemporalFact(len(facts), subj, rel, obj, interval, gran))

    return FactStore(facts, entities, relations)


_STORE_HEADER_KEY = "tkg_store"
_STORE_VERSION = 1


def save_store(store: FactStore, path: str | Path) -> None:
    """Write the portable store file: a JSON header line plus 6-column TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({_STORE_HEADER_KEY: _STORE_VERSION, "facts": len(store)}) + "\n")
        for f in store.facts:
            fh.write(
                "\t".join(
                    (
                        store.entity_surface(f.subject),
                        store.relation_surface(f.relation),
                        store.entity_surface(f.object),
                        f.interval.start.isoformat(),
                        f.interval.end.isoformat(),
                        f.source_granularity.value,
                    )
                )
                + "\n"
            )


def load_store(path: str | Path) -> FactStore:
    """Load a store file produced by `save_store`."""
    entities = _Interner()
    relations = _Interner()
    facts: list[TemporalFact] = []
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            if header.get(_STORE_HEADER_KEY) != _STORE_VERSION:
                raise ValueError("wrong store version")
        except (json.JSONDecodeError, ValueError, AttributeError) as exc:
            raise LoadError(f"not a tkg store file: {exc}", 1) from exc
        for line_no, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = _parse_fields(line, line_no, 6)
            subj = entities.intern(fields[0])
            rel = relations.intern(fields[1])
            obj = entities.intern(fields[2])
            start = _parse_stamp(fields[3], line_no)
            end = _parse_stamp(fields[4], line_no)
            if start.granularity is not Granularity.DAY or end.granularity is not Granularity.DAY:
                raise LoadError("store file dates must be full days", line_no)
            try:
                gran = Granularity(fields[5])
            except ValueError as exc:
                raise LoadError(f"bad granularity {fields[5]!r}", line_no) from exc
            lo = start.interval().start
            hi = end.interval().end
            if lo > hi:
                raise LoadError("interval start after end", line_no)
            facts.append(TemporalFact(len(facts), subj, rel, obj, TimeInterval(lo, hi), gran))
    declared = header.get("facts")
    if declared is not None and declared != len(facts):
        raise LoadError(f"header declares {declared} facts, file has {len(facts)}", 1)
    return FactStore(facts, entities, relations)


