"""Descriptive server-behavior statistics: weekly logon metrics per server
category and user role, and per-kind activity counts with work-hours splits."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

from .epochs import week_index
from .errors import DataError
from .events import EventKind, EventRecord, ServerMeta, UserRole
from .ingest import LogonSession

ACTIVITY_KINDS = (EventKind.PROCESS, EventKind.FILE, EventKind.NETWORK, EventKind.REGISTRY)


@dataclass(frozen=True)
class WeeklyLogonStats:
    category: int
    user_role: UserRole
    week_index: int
    avg_logons_per_user: float
    avg_distinct_users: float
    avg_duration_minutes: float


@dataclass(frozen=True)
class WorkHours:
    """Work-hours window: [start_hour, end_hour) on the given weekdays
    (Monday=0). Defaults to 09:00-17:00, Monday through Friday."""

    start_hour: int = 9
    end_hour: int = 17
    weekdays: frozenset[int] = frozenset({0, 1, 2, 3, 4})

    def contains(self, ts: datetime) -> bool:
        return ts.weekday() in self.weekdays and self.start_hour <= ts.hour < self.end_hour


def weekly_logon_stats(
    sessions: Sequence[LogonSession],
    metas: Sequence[ServerMeta],
    origin: datetime,
    roles: Sequence[UserRole] = (UserRole.ADMIN, UserRole.STANDARD),
    all_users_denominator: bool = False,
    populations: dict[tuple[int, UserRole], int] | None = None,
) -> list[WeeklyLogonStats]:
    """Per (category, role, week) logon metrics.

    avg_logons_per_user averages over users with at least one logon that week;
    with all_users_denominator, totals are divided by the provisioned
    population instead (populations maps (category, role) to a head count).
    avg_distinct_users averages the per-server distinct-user count over the
    servers of the category. Durations average over closed sessions only.
    Weeks with no sessions still produce a row of zeros.
    """
    if all_users_denominator and not populations:
        raise DataError("all_users_denominator requires a populations table")
    meta_by_id = {m.server_id: m for m in metas}
    categories = sorted({m.category for m in metas})
    servers_per_category = {
        c: [m.server_id for m in metas if m.category == c] for c in categories
    }

    # (category, role, week) -> per-user logon counts / per-server user sets / durations
    user_logons: dict[tuple[int, UserRole, int], dict[str, int]] = {}
    server_users: dict[tuple[int, UserRole, int], dict[str, set[str]]] = {}
    durations: dict[tuple[int, UserRole, int], list[float]] = {}
    max_week = 0
    for s in sessions:
        meta = meta_by_id.get(s.server_id)
        if meta is None:
            raise DataError(f"session references unknown server {s.server_id!r}")
        week = week_index(s.logon_ts, origin)
        if week < 0:
            raise DataError(f"session at {s.logon_ts} precedes the corpus origin")
        max_week = max(max_week, week)
        cell = (meta.category, s.user_role, week)
        user_logons.setdefault(cell, {})
        user_logons[cell][s.user_id] = user_logons[cell].get(s.user_id, 0) + 1
        server_users.setdefault(cell, {}).setdefault(s.server_id, set()).add(s.user_id)
        if s.duration_minutes is not None:
            durations.setdefault(cell, []).append(s.duration_minutes)

    rows: list[WeeklyLogonStats] = []
    for category in categories:
        n_servers = len(servers_per_category[category])
        for role in roles:
            for week in range(max_week + 1):
                cell = (category, role, week)
                counts = user_logons.get(cell, {})
                if all_users_denominator:
                    population = populations.get((category, role), 0)
                    avg_logons = sum(counts.values()) / population if population else 0.0
                else:
                    avg_logons = sum(counts.values()) / len(counts) if counts else 0.0
                per_server = server_users.get(cell, {})
                distinct_total = sum(len(users) for users in per_server.values())
                avg_distinct = distinct_total / n_servers if n_servers else 0.0
                durs = durations.get(cell, [])
                avg_duration = sum(durs) / len(durs) if durs else 0.0
                rows.append(
                    WeeklyLogonStats(
                        category=category,
                        user_role=role,
                        week_index=week,
                        avg_logons_per_user=avg_logons,
                        avg_distinct_users=avg_distinct,
                        avg_duration_minutes=avg_duration,
                    )
                )
    return rows


@dataclass(frozen=True)
class ActivityCounts:
    server_id: str
    week_index: int
    counts: dict[EventKind, int]

    def total(self) -> int:
        return sum(self.counts.values())


def _count_table(events: Iterable[EventRecord], origin: datetime) -> list[ActivityCounts]:
    cells: dict[tuple[str, int], dict[EventKind, int]] = {}
    for event in events:
        week = week_index(event.ts, origin)
        counts = cells.setdefault((event.server_id, week), {k: 0 for k in ACTIVITY_KINDS})
        counts[event.kind] += 1
    return [
        ActivityCounts(server_id=sid, week_index=week, counts=counts)
        for (sid, week), counts in sorted(cells.items())
    ]


def activity_counts(
    events: Sequence[EventRecord],
    origin: datetime,
    split: WorkHours | None = None,
) -> list[ActivityCounts] | tuple[list[ActivityCounts], list[ActivityCounts]]:
    """Per server per week counts of process/file/network/registry events.

    With a work-hours split, returns (inside, outside) tables that partition
    the unsplit counts cell by cell.
    """
    ops = [e for e in events if e.kind in ACTIVITY_KINDS]
    if split is None:
        return _count_table(ops, origin)
    inside = _count_table((e for e in ops if split.contains(e.ts)), origin)
    outside = _count_table((e for e in ops if not split.contains(e.ts)), origin)
    return inside, outside
