"""Calendar-aligned day/week binning shared by statistics, rareness, and
similarity so every analysis sees the same epoch boundaries."""

from __future__ import annotations

from datetime import date, datetime, timedelta, timezone
from enum import Enum
from typing import Iterable

from .events import EventRecord

DAYS_PER_WEEK = 7


class Epoch(str, Enum):
    DAY = "day"
    WEEK = "week"


def corpus_origin(events: Iterable[EventRecord]) -> datetime:
    """Midnight UTC of the earliest event's day; the anchor for all bins."""
    first = min(e.ts for e in events)
    return datetime.combine(first.date(), datetime.min.time(), tzinfo=timezone.utc)


def day_index(ts: datetime, origin: datetime) -> int:
    return (ts.astimezone(timezone.utc).date() - origin.date()).days


def week_index(ts: datetime, origin: datetime) -> int:
    return day_index(ts, origin) // DAYS_PER_WEEK


def epoch_index(ts: datetime, origin: datetime, epoch: Epoch) -> int:
    if epoch is Epoch.DAY:
        return day_index(ts, origin)
    return week_index(ts, origin)


def epoch_start(index: int, origin: datetime, epoch: Epoch) -> datetime:
    days = index if epoch is Epoch.DAY else index * DAYS_PER_WEEK
    return origin + timedelta(days=days)


def origin_from_date(day: date) -> datetime:
    return datetime.combine(day, datetime.min.time(), tzinfo=timezone.utc)
