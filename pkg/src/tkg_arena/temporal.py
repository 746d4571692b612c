"""Granular timestamps and closed day-resolution intervals.

Every timestamp, regardless of granularity, denotes a closed interval of
whole days (a year spans Jan 1 to Dec 31, a month spans its first to last
day, a date spans itself).  This makes "strictly before", "strictly after",
overlap and containment well-defined between values of different
granularity.  Dates use the proleptic Gregorian calendar with no time
zones; anything finer than a day is rejected.
"""

from __future__ import annotations

import calendar
import enum
import re
from dataclasses import dataclass
from datetime import date
from functools import lru_cache


class Granularity(enum.Enum):
    YEAR = "year"
    MONTH = "month"
    DAY = "day"


class TimestampError(ValueError):
    """Raised for text that is not a valid ISO-prefix timestamp."""


_TIMESTAMP_RE = re.compile(r"^(\d{4})(?:-(\d{1,2})(?:-(\d{1,2}))?)?$")


@dataclass(frozen=True, slots=True)
class TimeInterval:
    """Closed interval of days, start <= end."""

    start: date
    end: date

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"interval start {self.start} is after end {self.end}")

    @property
    def single_day(self) -> bool:
        return self.start == self.end

    def canonical_text(self) -> str:
        """Render as "2025-02-03" for a single day, "A to B" otherwise."""
        if self.single_day:
            return self.start.isoformat()
        return f"{self.start.isoformat()} to {self.end.isoformat()}"

    @staticmethod
    def spanning(first: "TimeStamp", second: "TimeStamp") -> "TimeInterval":
        """Interval from the start of `first` to the end of `second`."""
        return TimeInterval(first.interval().start, second.interval().end)


@dataclass(frozen=True, slots=True)
class TimeStamp:
    """A year, year-month, or full date; day present implies month present."""

    year: int
    month: int | None = None
    day: int | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.year <= 9999:
            raise TimestampError(f"year out of range: {self.year}")
        if self.day is not None and self.month is None:
            raise TimestampError("day given without month")
        if self.month is not None and not 1 <= self.month <= 12:
            raise TimestampError(f"month out of range: {self.month}")
        if self.day is not None:
            last = calendar.monthrange(self.year, self.month)[1]
            if not 1 <= self.day <= last:
                raise TimestampError(
                    f"day out of range for {self.year:04d}-{self.month:02d}: {self.day}"
                )

    @property
    def granularity(self) -> Granularity:
        if self.day is not None:
            return Granularity.DAY
        if self.month is not None:
            return Granularity.MONTH
        return Granularity.YEAR

    def canonical(self) -> str:
        """ISO-prefix rendering: "2025", "2025-02", or "2025-02-03"."""
        if self.day is not None:
            return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"
        if self.month is not None:
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}"

    def interval(self) -> TimeInterval:
        """Expand to the closed day interval this timestamp denotes."""
        if self.day is not None:
            d = date(self.year, self.month, self.day)
            return TimeInterval(d, d)
        if self.month is not None:
            last = calendar.monthrange(self.year, self.month)[1]
            return TimeInterval(date(self.year, self.month, 1), date(self.year, self.month, last))
        return TimeInterval(date(self.year, 1, 1), date(self.year, 12, 31))


@lru_cache(maxsize=65536)
def parse_timestamp(text: str) -> TimeStamp:
    """Parse an ISO-prefix timestamp ("2025", "2025-02", "2025-02-03").

    One- or two-digit month/day components are accepted and canonicalized;
    anything else (time-of-day suffixes, slashes, words) raises
    TimestampError.
    """
    m = _TIMESTAMP_RE.match(text.strip())
    if m is None:
        raise TimestampError(f"not an ISO-prefix timestamp: {text!r}")
    year = int(m.group(1))
    month = int(m.group(2)) if m.group(2) else None
    day = int(m.group(3)) if m.group(3) else None
    return TimeStamp(year, month, day)


def try_parse_timestamp(text: str) -> TimeStamp | None:
    try:
        return parse_timestamp(text)
    except TimestampError:
        return None
