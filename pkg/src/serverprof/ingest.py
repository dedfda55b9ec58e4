"""Line-delimited event ingestion, include/exclude filter rules, and
logon/logoff sessionization.

Wire format: UTF-8, one JSON object per line with fields exactly
event_id, ts, server_id, kind, subject, relation, object, user_id,
user_role, source, attrs. subject/object are {"entity_type", "identity"}
objects; ts is ISO-8601 UTC with millisecond precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import IO, Iterable

from .errors import ConfigError, DataError
from .events import (
    EntityRef,
    EntityType,
    EventKind,
    EventRecord,
    LogSource,
    UserRole,
    format_ts,
    parse_ts,
)

_REQUIRED_FIELDS = (
    "event_id",
    "ts",
    "server_id",
    "kind",
    "subject",
    "relation",
    "object",
    "user_role",
    "source",
)


@dataclass(frozen=True)
class ParseError:
    line_no: int
    reason: str


@dataclass
class ParseResult:
    records: list[EventRecord]
    errors: list[ParseError]


def _entity_from_obj(obj: object, role: str) -> EntityRef:
    if not isinstance(obj, dict):
        raise DataError(f"{role} must be an object")
    try:
        etype = EntityType(obj["entity_type"])
    except KeyError:
        raise DataError(f"{role} missing entity_type") from None
    except ValueError:
        raise DataError(f"{role} has unknown entity_type {obj.get('entity_type')!r}") from None
    identity = obj.get("identity")
    if not isinstance(identity, str) or not identity:
        raise DataError(f"{role} identity must be a non-empty string")
    return EntityRef(etype, identity)


def record_from_line(line: str) -> EventRecord:
    """Parse one wire-format line into an EventRecord."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DataError("line is not a JSON object")
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise DataError(f"missing field {name!r}")
    try:
        kind = EventKind(obj["kind"])
    except ValueError:
        raise DataError(f"unknown kind {obj['kind']!r}") from None
    try:
        role = UserRole(obj["user_role"])
    except ValueError:
        raise DataError(f"unknown user_role {obj['user_role']!r}") from None
    try:
        source = LogSource(obj["source"])
    except ValueError:
        raise DataError(f"unknown source {obj['source']!r}") from None
    attrs = obj.get("attrs") or {}
    if not isinstance(attrs, dict) or any(
        not isinstance(k, str) or not isinstance(v, str) for k, v in attrs.items()
    ):
        raise DataError("attrs must be a flat string map")
    relation = obj["relation"]
    if not isinstance(relation, str) or not relation:
        raise DataError("relation must be a non-empty string")
    user_id = obj.get("user_id")
    if user_id is not None and not isinstance(user_id, str):
        raise DataError("user_id must be a string or null")
    return EventRecord(
        event_id=str(obj["event_id"]),
        ts=parse_ts(str(obj["ts"])),
        server_id=str(obj["server_id"]),
        kind=kind,
        subject=_entity_from_obj(obj["subject"], "subject"),
        relation=relation,
        object=_entity_from_obj(obj["object"], "object"),
        user_id=user_id,
        user_role=role,
        source=source,
        attrs=dict(attrs),
    )


def record_to_line(record: EventRecord) -> str:
    """Serialize a record to its wire-format line (no trailing newline)."""
    return json.dumps(
        {
            "event_id": record.event_id,
            "ts": format_ts(record.ts),
            "server_id": record.server_id,
            "kind": record.kind.value,
            "subject": {
                "entity_type": record.subject.entity_type.value,
                "identity": record.subject.identity,
            },
            "relation": record.relation,
            "object": {
                "entity_type": record.object.entity_type.value,
                "identity": record.object.identity,
            },
            "user_id": record.user_id,
            "user_role": record.user_role.value,
            "source": record.source.value,
            "attrs": record.attrs,
        },
        separators=(",", ":"),
        ensure_ascii=False,
    )


def parse_events(stream: IO[str] | Iterable[str], strict: bool = False) -> ParseResult:
    """Parse a line stream; lenient mode (default) collects malformed lines
    into the error report, strict mode raises on the first one."""
    records: list[EventRecord] = []
    errors: list[ParseError] = []
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            records.append(record_from_line(text))
        except DataError as exc:
            if strict:
                raise DataError(f"line {line_no}: {exc}") from None
            errors.append(ParseError(line_no, str(exc)))
    return ParseResult(records, errors)


def emit_events(records: Iterable[EventRecord], fh: IO[str]) -> int:
    """Write records in wire format; returns the number written."""
    n = 0
    for record in records:
        fh.write(record_to_line(record) + "\n")
        n += 1
    return n


# --------------------------------------------------------------------------
# Filter rules


class FilterAction(str, Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"


class MatchMode(str, Enum):
    EXACT = "exact"
    PREFIX = "prefix"
    CONTAINS = "contains"


_RULE_FIELDS = ("subject", "relation", "object", "user_role")


@dataclass(frozen=True)
class FilterRule:
    """One include/exclude rule; rules apply in file order, first match wins.

    A rule with no field/pattern matches every event of its kind (kind-only
    rule); otherwise the pattern is tested against the named field.
    """

    rule_id: str
    action: FilterAction
    kind: EventKind | None = None
    field: str | None = None
    match: MatchMode | None = None
    pattern: str | None = None

    def __post_init__(self) -> None:
        has_pattern = (self.field, self.match, self.pattern) != (None, None, None)
        if has_pattern:
            if self.field is None or self.match is None or self.pattern is None:
                raise ConfigError(f"rule {self.rule_id}: field, match, pattern must be given together")
            if not self.pattern:
                raise ConfigError(f"rule {self.rule_id}: pattern must be non-empty")
            if self.field not in _RULE_FIELDS and not self.field.startswith("attrs."):
                raise ConfigError(f"rule {self.rule_id}: unknown field {self.field!r}")
        elif self.kind is None:
            raise ConfigError(f"rule {self.rule_id}: needs a kind or a field pattern")

    def matches(self, event: EventRecord) -> bool:
        if self.kind is not None and event.kind is not self.kind:
            return False
        if self.field is None:
            return True
        if self.field == "subject":
            value = event.subject.identity
        elif self.field == "object":
            value = event.object.identity
        elif self.field == "relation":
            value = event.relation
        elif self.field == "user_role":
            value = event.user_role.value
        else:  # attrs.<key>; missing keys never match
            key = self.field[len("attrs."):]
            if key not in event.attrs:
                return False
            value = event.attrs[key]
        if self.match is MatchMode.EXACT:
            return value == self.pattern
        if self.match is MatchMode.PREFIX:
            return value.startswith(self.pattern)
        return self.pattern in value


def load_filter_rules(fh: IO[str]) -> list[FilterRule]:
    """Load rules from a JSON array; validation errors surface at load time."""
    try:
        raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"filter rule file is not valid JSON: {exc.msg}") from None
    if not isinstance(raw, list):
        raise ConfigError("filter rule file must hold a JSON array of rules")
    rules = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ConfigError(f"rule #{i}: not an object")
        try:
            rules.append(
                FilterRule(
                    rule_id=str(entry.get("rule_id", f"rule-{i}")),
                    action=FilterAction(entry["action"]),
                    kind=EventKind(entry["kind"]) if entry.get("kind") else None,
                    field=entry.get("field"),
                    match=MatchMode(entry["match"]) if entry.get("match") else None,
                    pattern=entry.get("pattern"),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"rule #{i}: missing {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"rule #{i}: {exc}") from None
    return rules


@dataclass
class FilterReport:
    kept: list[EventRecord]
    drops_by_rule: dict[str, int]
    total_in: int

    @property
    def total_dropped(self) -> int:
        return self.total_in - len(self.kept)


def apply_filters(rules: list[FilterRule], events: Iterable[EventRecord]) -> FilterReport:
    """Evaluate rules in order against each event; first match decides, the
    default action is include. Output preserves input order."""
    kept: list[EventRecord] = []
    drops = {rule.rule_id: 0 for rule in rules if rule.action is FilterAction.EXCLUDE}
    total = 0
    for event in events:
        total += 1
        for rule in rules:
            if rule.matches(event):
                if rule.action is FilterAction.EXCLUDE:
                    drops[rule.rule_id] += 1
                else:
                    kept.append(event)
                break
        else:
            kept.append(event)
    return FilterReport(kept=kept, drops_by_rule=drops, total_in=total)


# --------------------------------------------------------------------------
# Sessionization


class LogonType(str, Enum):
    NETWORK = "network"
    INTERACTIVE = "interactive"
    OTHER = "other"


@dataclass(frozen=True)
class LogonSession:
    server_id: str
    user_id: str
    user_role: UserRole
    logon_ts: datetime
    logoff_ts: datetime | None
    logon_type: LogonType

    @property
    def duration_minutes(self) -> float | None:
        if self.logoff_ts is None:
            return None
        return (self.logoff_ts - self.logon_ts).total_seconds() / 60.0


@dataclass(frozen=True)
class OrphanLogoff:
    event_id: str
    server_id: str
    user_id: str
    ts: datetime


@dataclass
class SessionizeResult:
    sessions: list[LogonSession]
    orphans: list[OrphanLogoff]


def _logon_type(event: EventRecord) -> LogonType:
    raw = event.attrs.get("logon_type", "").lower()
    if raw == "network":
        return LogonType.NETWORK
    if raw == "interactive":
        return LogonType.INTERACTIVE
    return LogonType.OTHER


def sessionize(events: Iterable[EventRecord]) -> SessionizeResult:
    """Pair logon/logoff events into sessions per (server, user).

    Pairing is LIFO: a logoff closes the most recent still-open logon for the
    same server and user. Service and system accounts are excluded. Logoffs
    with no open logon are reported as orphans; logons never closed yield
    sessions without a logoff timestamp.
    """
    ordered = sorted(
        (e for e in events if e.kind in (EventKind.LOGON, EventKind.LOGOFF)),
        key=lambda e: e.ts,
    )
    open_stacks: dict[tuple[str, str], list[EventRecord]] = {}
    sessions: list[LogonSession] = []
    orphans: list[OrphanLogoff] = []
    for event in ordered:
        if event.user_role in (UserRole.SERVICE, UserRole.SYSTEM):
            continue
        if event.user_id is None:
            raise DataError(f"event {event.event_id}: {event.kind.value} without user_id")
        key = (event.server_id, event.user_id)
        if event.kind is EventKind.LOGON:
            open_stacks.setdefault(key, []).append(event)
        else:
            stack = open_stacks.get(key)
            if not stack:
                orphans.append(
                    OrphanLogoff(event.event_id, event.server_id, event.user_id, event.ts)
                )
                continue
            logon = stack.pop()
            sessions.append(
                LogonSession(
                    server_id=logon.server_id,
                    user_id=logon.user_id,
                    user_role=logon.user_role,
                    logon_ts=logon.ts,
                    logoff_ts=event.ts,
                    logon_type=_logon_type(logon),
                )
            )
    for stack in open_stacks.values():
        for logon in stack:
            sessions.append(
                LogonSession(
                    server_id=logon.server_id,
                    user_id=logon.user_id,
                    user_role=logon.user_role,
                    logon_ts=logon.ts,
                    logoff_ts=None,
                    logon_type=_logon_type(logon),
                )
            )
    sessions.sort(key=lambda s: (s.logon_ts, s.server_id, s.user_id))
    return SessionizeResult(sessions=sessions, orphans=orphans)
