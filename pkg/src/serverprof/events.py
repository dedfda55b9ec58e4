"""Canonical event and entity representations shared by every analysis stage.

All types here are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .errors import DataError, NormalizationError


class EventKind(str, Enum):
    PROCESS = "process"
    FILE = "file"
    NETWORK = "network"
    REGISTRY = "registry"
    LOGON = "logon"
    LOGOFF = "logoff"


class EntityType(str, Enum):
    PROCESS = "process"
    FILE = "file"
    REGISTRY_KEY = "registry_key"
    NETWORK_SOCKET = "network_socket"


class UserRole(str, Enum):
    ADMIN = "admin"
    STANDARD = "standard"
    SERVICE = "service"
    SYSTEM = "system"


class LogSource(str, Enum):
    ETW = "etw"
    SYSMON = "sysmon"


class GroupingScheme(str, Enum):
    """Server-partition policies used when pooling reference history."""

    SERVER_LEVEL = "server-level"
    SAME_TYPE_AND_LOCATION = "same-type-location"
    SAME_TYPE = "same-type"
    ALL_SERVERS = "all-servers"


#: Kinds whose subject is an operating process rather than a logon principal.
OPERATION_KINDS = frozenset(
    {EventKind.PROCESS, EventKind.FILE, EventKind.NETWORK, EventKind.REGISTRY}
)

USER_PLACEHOLDER = "<USER>"
HOST_PLACEHOLDER = "<HOST>"

# Path segments are delimited by either separator; identities such as
# "srcIP→dstIP:port" contain neither, so they pass through whole.
_SEGMENT_SPLIT = re.compile(r"([\\/]+)")


@dataclass(frozen=True)
class EntityRef:
    """A normalized system entity: process/file path, registry key, or socket."""

    entity_type: EntityType
    identity: str

    def __post_init__(self) -> None:
        if not self.identity:
            raise DataError("entity identity must be non-empty")


def socket_identity(src_ip: str, dst_ip: str, dst_port: int | str) -> str:
    """Stable identity for a network socket; the ephemeral source port is
    deliberately excluded (it belongs in attrs)."""
    return f"{src_ip}→{dst_ip}:{dst_port}"


def registry_identity(key_path: str, value_name: str | None = None) -> str:
    """Registry identity: full key path, with the value name after '::'."""
    return f"{key_path}::{value_name}" if value_name else key_path


def normalize_identity(
    raw: str,
    usernames: frozenset[str] | set[str] = frozenset(),
    hostnames: frozenset[str] | set[str] = frozenset(),
) -> str:
    """Replace user and host names in a path-like identity with placeholders.

    Matching is per whole path segment and case-insensitive; substrings inside
    a segment are never touched. Idempotent for any fixed context.
    """
    if not raw:
        raise NormalizationError("cannot normalize an empty identity")
    if not usernames and not hostnames:
        return raw
    users = {u.lower() for u in usernames}
    hosts = {h.lower() for h in hostnames}
    parts = _SEGMENT_SPLIT.split(raw)
    out = []
    for part in parts:
        low = part.lower()
        if low in users:
            out.append(USER_PLACEHOLDER)
        elif low in hosts:
            out.append(HOST_PLACEHOLDER)
        else:
            out.append(part)
    return "".join(out)


def parse_ts(value: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp, truncated to millisecond precision."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"bad timestamp {value!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=(ts.microsecond // 1000) * 1000)


def format_ts(ts: datetime) -> str:
    """Millisecond-precision ISO-8601 UTC rendering, inverse of parse_ts."""
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


@dataclass(frozen=True)
class EventRecord:
    """One audit event as a (subject, relation, object) tuple with metadata."""

    event_id: str
    ts: datetime
    server_id: str
    kind: EventKind
    subject: EntityRef
    relation: str
    object: EntityRef
    user_role: UserRole
    source: LogSource
    user_id: str | None = None
    attrs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind in OPERATION_KINDS and self.subject.entity_type is not EntityType.PROCESS:
            raise DataError(
                f"event {self.event_id}: subject of a {self.kind.value} event must be a process"
            )

    def tuple_key(self) -> str:
        """Deterministic serialization of the (subject, relation, object)
        3-tuple; injective over distinct identity triples."""
        return json.dumps(
            [self.subject.identity, self.relation, self.object.identity],
            separators=(",", ":"),
        )

    def context_key(self) -> str:
        """Serialization of the (subject, relation) 2-tuple used for
        contextual rareness denominators."""
        return json.dumps([self.subject.identity, self.relation], separators=(",", ":"))


@dataclass(frozen=True)
class ServerMeta:
    """Service and categorization metadata for one server."""

    server_id: str
    service_name: str
    location: str
    category: int

    def __post_init__(self) -> None:
        if self.category not in (1, 2, 3):
            raise DataError(f"server {self.server_id}: category must be 1, 2, or 3")


def group_key(meta: ServerMeta, scheme: GroupingScheme) -> tuple:
    """Key identifying the group a server falls into under a scheme."""
    if scheme is GroupingScheme.SERVER_LEVEL:
        return (meta.server_id,)
    if scheme is GroupingScheme.SAME_TYPE_AND_LOCATION:
        return (meta.service_name, meta.location)
    if scheme is GroupingScheme.SAME_TYPE:
        return (meta.service_name,)
    return ("*",)


def partition_servers(
    metas: list[ServerMeta], scheme: GroupingScheme
) -> dict[str, frozenset[str]]:
    """Map each server_id to its group (a frozenset of server_ids).

    Every server belongs to exactly one group; groups cover the whole table.
    """
    groups: dict[tuple, set[str]] = {}
    for m in metas:
        groups.setdefault(group_key(m, scheme), set()).add(m.server_id)
    out: dict[str, frozenset[str]] = {}
    for members in groups.values():
        frozen = frozenset(members)
        for sid in members:
            out[sid] = frozen
    return out
