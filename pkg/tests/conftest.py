"""Shared fixtures and event-construction helpers."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from serverprof.events import (
    EntityRef,
    EntityType,
    EventKind,
    EventRecord,
    LogSource,
    ServerMeta,
    UserRole,
)

ORIGIN = datetime(2019, 1, 7, tzinfo=timezone.utc)  # a Monday

_OBJ_TYPE = {
    EventKind.FILE: EntityType.FILE,
    EventKind.PROCESS: EntityType.PROCESS,
    EventKind.NETWORK: EntityType.NETWORK_SOCKET,
    EventKind.REGISTRY: EntityType.REGISTRY_KEY,
    EventKind.LOGON: EntityType.PROCESS,
    EventKind.LOGOFF: EntityType.PROCESS,
}

_counter = iter(range(10**9))


def at(days: float = 0, hours: float = 0, minutes: float = 0) -> datetime:
    return ORIGIN + timedelta(days=days, hours=hours, minutes=minutes)


def mk_event(
    ts: datetime,
    server: str = "s1",
    kind: EventKind = EventKind.FILE,
    subject: str = "C:\\app\\proc.exe",
    relation: str = "read",
    obj: str = "C:\\data\\f.dat",
    role: UserRole = UserRole.SERVICE,
    user: str | None = "svc-1",
    source: LogSource = LogSource.SYSMON,
    attrs: dict | None = None,
    event_id: str | None = None,
) -> EventRecord:
    return EventRecord(
        event_id=event_id or f"t{next(_counter):07d}",
        ts=ts,
        server_id=server,
        kind=kind,
        subject=EntityRef(EntityType.PROCESS, subject),
        relation=relation,
        object=EntityRef(_OBJ_TYPE[kind], obj),
        user_id=user,
        user_role=role,
        source=source,
        attrs=attrs or {},
    )


def mk_logon(
    ts: datetime,
    server: str = "s1",
    user: str = "alice",
    role: UserRole = UserRole.STANDARD,
    off: bool = False,
    attrs: dict | None = None,
) -> EventRecord:
    principal = EntityRef(EntityType.PROCESS, user)
    return EventRecord(
        event_id=f"t{next(_counter):07d}",
        ts=ts,
        server_id=server,
        kind=EventKind.LOGOFF if off else EventKind.LOGON,
        subject=principal,
        relation="logoff" if off else "logon",
        object=EntityRef(EntityType.PROCESS, "lsass.exe"),
        user_id=user,
        user_role=role,
        source=LogSource.ETW,
        attrs=attrs or {},
    )


@pytest.fixture
def one_server_meta() -> list[ServerMeta]:
    return [ServerMeta("s1", "SQL", "A", 1)]
