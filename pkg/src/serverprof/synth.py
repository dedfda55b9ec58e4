"""Deterministic multi-server, multi-week synthetic event corpora.

Each server-week draws logon sessions (Poisson counts, log-normal durations)
and operation events from a per-kind core vocabulary, with never-seen-before
tuples injected at a configurable novelty rate and same-service servers
sharing a configurable fraction of their vocabulary. Novel tuples displace
random core slots at the end of their week, so the novelty rate doubles as a
concept-drift rate: vocabularies of weeks further apart overlap less. A
manifest records ground truth (realized counts, first occurrences, novelty
flags, contextual object multisets) so every downstream statistic can be
verified exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import IO

import numpy as np

from .epochs import origin_from_date
from .errors import ConfigError, DataError
from .events import (
    EntityRef,
    EntityType,
    EventKind,
    EventRecord,
    LogSource,
    ServerMeta,
    UserRole,
    registry_identity,
    socket_identity,
)

WEEK_MS = 7 * 24 * 3600 * 1000

ACTIVITY_KINDS = (EventKind.PROCESS, EventKind.FILE, EventKind.NETWORK, EventKind.REGISTRY)

_KIND_RELATIONS = {
    EventKind.PROCESS: ("spawn", "exec"),
    EventKind.FILE: ("read", "write", "create", "modify"),
    EventKind.NETWORK: ("connect", "send"),
    EventKind.REGISTRY: ("read", "write", "modify"),
}

_KIND_ENTITY = {
    EventKind.PROCESS: EntityType.PROCESS,
    EventKind.FILE: EntityType.FILE,
    EventKind.NETWORK: EntityType.NETWORK_SOCKET,
    EventKind.REGISTRY: EntityType.REGISTRY_KEY,
}


@dataclass(frozen=True)
class RoleRates:
    logons_per_user: float
    distinct_users: float
    duration_minutes: float


def table2_logon_rates() -> dict[int, dict[UserRole, RoleRates]]:
    """Default per-category weekly logon rates (admin-only category 1)."""
    return {
        1: {UserRole.ADMIN: RoleRates(9.68, 0.84, 7.82)},
        2: {
            UserRole.STANDARD: RoleRates(37.7, 1.85, 17.57),
            UserRole.ADMIN: RoleRates(11.95, 0.99, 21.38),
        },
        3: {
            UserRole.STANDARD: RoleRates(173.25, 1219.0, 4.07),
            UserRole.ADMIN: RoleRates(247.15, 14.99, 4.02),
        },
    }


def default_kind_weights() -> dict[EventKind, float]:
    return {EventKind.FILE: 6.0, EventKind.NETWORK: 3.0, EventKind.PROCESS: 2.0, EventKind.REGISTRY: 1.0}


@dataclass
class SynthProfile:
    weeks: int
    servers: list[ServerMeta]
    events_per_server_week: int = 200
    kind_weights: dict[EventKind, float] = field(default_factory=default_kind_weights)
    core_vocabulary: dict[EventKind, int] = field(
        default_factory=lambda: {k: 60 for k in ACTIVITY_KINDS}
    )
    novelty_rate: dict[EventKind, float] = field(
        default_factory=lambda: {k: 0.0 for k in ACTIVITY_KINDS}
    )
    shared_vocabulary_fraction: float = 0.5
    logon_rates: dict[int, dict[UserRole, RoleRates]] = field(default_factory=table2_logon_rates)
    duration_sigma: float = 0.5
    fresh_subject_prob: float = 0.2
    subjects_per_server: int = 8
    rng_seed: int = 0
    start_date: date = date(2019, 1, 7)

    def validate(self) -> None:
        if self.weeks < 1:
            raise ConfigError("weeks must be >= 1")
        if not self.servers:
            raise ConfigError("profile needs at least one server")
        ids = [m.server_id for m in self.servers]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate server_id in profile")
        for kind in ACTIVITY_KINDS:
            if self.core_vocabulary.get(kind, 0) < 1:
                raise ConfigError(f"core vocabulary for {kind.value} must be >= 1")
            nu = self.novelty_rate.get(kind, 0.0)
            if not 0.0 <= nu < 1.0:
                raise ConfigError(f"novelty rate for {kind.value} must be in [0, 1)")
        if not 0.0 <= self.shared_vocabulary_fraction <= 1.0:
            raise ConfigError("shared_vocabulary_fraction must be in [0, 1]")
        if self.events_per_server_week < 0:
            raise ConfigError("events_per_server_week must be >= 0")
        if any(w < 0 for w in self.kind_weights.values()) or sum(self.kind_weights.values()) <= 0:
            raise ConfigError("kind weights must be non-negative and not all zero")
        if self.duration_sigma <= 0:
            raise ConfigError("duration_sigma must be positive")
        if self.subjects_per_server < 1:
            raise ConfigError("subjects_per_server must be >= 1")


def load_profile(fh: IO[str]) -> SynthProfile:
    """Read a profile from its JSON configuration file."""
    try:
        raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profile file is not valid JSON: {exc.msg}") from None
    try:
        servers = [
            ServerMeta(
                server_id=s["server_id"],
                service_name=s["service_name"],
                location=s["location"],
                category=int(s["category"]),
            )
            for s in raw["servers"]
        ]
        profile = SynthProfile(weeks=int(raw["weeks"]), servers=servers)
        if "events_per_server_week" in raw:
            profile.events_per_server_week = int(raw["events_per_server_week"])
        if "kind_weights" in raw:
            profile.kind_weights = {EventKind(k): float(v) for k, v in raw["kind_weights"].items()}
        if "core_vocabulary" in raw:
            profile.core_vocabulary = {
                EventKind(k): int(v) for k, v in raw["core_vocabulary"].items()
            }
        if "novelty_rate" in raw:
            profile.novelty_rate = {EventKind(k): float(v) for k, v in raw["novelty_rate"].items()}
        if "shared_vocabulary_fraction" in raw:
            profile.shared_vocabulary_fraction = float(raw["shared_vocabulary_fraction"])
        if "logon_rates" in raw:
            profile.logon_rates = {
                int(cat): {
                    UserRole(role): RoleRates(*[float(x) for x in rates])
                    for role, rates in roles.items()
                }
                for cat, roles in raw["logon_rates"].items()
            }
        if "duration_sigma" in raw:
            profile.duration_sigma = float(raw["duration_sigma"])
        if "fresh_subject_prob" in raw:
            profile.fresh_subject_prob = float(raw["fresh_subject_prob"])
        if "subjects_per_server" in raw:
            profile.subjects_per_server = int(raw["subjects_per_server"])
        if "seed" in raw:
            profile.rng_seed = int(raw["seed"])
        if "start_date" in raw:
            profile.start_date = date.fromisoformat(raw["start_date"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad profile: {exc}") from None
    profile.validate()
    return profile


@dataclass
class CorpusManifest:
    """Ground truth for one generated corpus.

    event_counts and logon_counts hold realized per-server-week totals;
    events maps each operation event id to its key, placement, first
    occurrence week on its server, and novelty flag under the reference
    definition in the header (window 1, weekly epochs, server-level groups);
    pair_objects holds the per-(subject, relation) object multisets per
    server-week; unseen aggregates distinct-unit novelty per kind.
    """

    header: dict
    event_counts: dict[str, dict[int, dict[str, int]]]
    logon_counts: dict[str, dict[int, int]]
    events: dict[str, dict]
    pair_objects: dict[str, dict[int, dict[str, dict[str, int]]]]
    unseen: dict[str, dict[int, dict[str, dict[str, int]]]]

    def to_json(self, fh: IO[str]) -> None:
        json.dump(
            {
                "header": self.header,
                "event_counts": self.event_counts,
                "logon_counts": self.logon_counts,
                "events": self.events,
                "pair_objects": self.pair_objects,
                "unseen": self.unseen,
            },
            fh,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, fh: IO[str]) -> "CorpusManifest":
        raw = json.load(fh)

        def intweeks(table: dict) -> dict:
            return {sid: {int(w): v for w, v in weeks.items()} for sid, weeks in table.items()}

        return cls(
            header=raw["header"],
            event_counts=intweeks(raw["event_counts"]),
            logon_counts=intweeks(raw["logon_counts"]),
            events=raw["events"],
            pair_objects=intweeks(raw["pair_objects"]),
            unseen=intweeks(raw["unseen"]),
        )


class _Vocabulary:
    """Core tuples for one server, partly shared with same-service servers."""

    def __init__(
        self,
        profile: SynthProfile,
        meta: ServerMeta,
        shared: dict[EventKind, list[tuple[str, str, str]]],
        rng: np.random.Generator,
    ) -> None:
        tag = meta.server_id
        self.subjects = [f"C:\\Program Files\\{tag}\\svc{i:02d}.exe" for i in range(profile.subjects_per_server)]
        shared_subjects = shared.get("subjects", [])
        self.core: dict[EventKind, list[tuple[str, str, str]]] = {}
        for kind in ACTIVITY_KINDS:
            size = profile.core_vocabulary[kind]
            n_shared = min(size, round(profile.shared_vocabulary_fraction * size))
            triples = list(shared[kind][:n_shared])
            for i in range(size - n_shared):
                subject = self.subjects[int(rng.integers(len(self.subjects)))]
                relation = _KIND_RELATIONS[kind][int(rng.integers(len(_KIND_RELATIONS[kind])))]
                triples.append((subject, relation, _object_identity(kind, tag, i, rng)))
            self.core[kind] = triples
        if shared_subjects:
            self.subjects = self.subjects + list(shared_subjects)


def _object_identity(kind: EventKind, tag: str, i: int, rng: np.random.Generator) -> str:
    if kind is EventKind.FILE:
        return f"C:\\data\\{tag}\\f{i:04d}.dat"
    if kind is EventKind.PROCESS:
        return f"C:\\Program Files\\{tag}\\tool{i:03d}.exe"
    if kind is EventKind.REGISTRY:
        return registry_identity(f"HKLM\\SOFTWARE\\{tag}\\K{i:03d}", f"V{i % 7}")
    return socket_identity(
        f"10.{int(rng.integers(256))}.{int(rng.integers(256))}.{int(rng.integers(256))}",
        f"10.200.{i // 250}.{i % 250}",
        int(rng.integers(1024, 49151)),
    )


def _shared_vocabulary(
    profile: SynthProfile, service: str, rng: np.random.Generator
) -> dict[EventKind, list[tuple[str, str, str]]]:
    tag = f"shared-{service}"
    subjects = [f"C:\\Program Files\\{tag}\\svc{i:02d}.exe" for i in range(profile.subjects_per_server)]
    out: dict = {"subjects": subjects}
    for kind in ACTIVITY_KINDS:
        size = profile.core_vocabulary[kind]
        n_shared = min(size, round(profile.shared_vocabulary_fraction * size))
        triples = []
        for i in range(n_shared):
            subject = subjects[int(rng.integers(len(subjects)))]
            relation = _KIND_RELATIONS[kind][int(rng.integers(len(_KIND_RELATIONS[kind])))]
            triples.append((subject, relation, _object_identity(kind, tag, i, rng)))
        out[kind] = triples
    return out


def generate(profile: SynthProfile) -> tuple[list[EventRecord], CorpusManifest]:
    """Generate the corpus and its manifest; byte-identical for a fixed
    profile and seed. Events come back sorted by timestamp."""
    profile.validate()
    origin = origin_from_date(profile.start_date)
    corpus_end = origin + timedelta(days=7 * profile.weeks)
    root = np.random.SeedSequence(profile.rng_seed)
    services = sorted({m.service_name for m in profile.servers})
    service_seeds = dict(zip(services, root.spawn(len(services))))
    server_seeds = root.spawn(len(profile.servers) + len(services))[len(services):]

    shared_vocab = {
        service: _shared_vocabulary(profile, service, np.random.default_rng(service_seeds[service]))
        for service in services
    }

    events: list[EventRecord] = []
    manifest_events: dict[str, dict] = {}
    event_counts: dict[str, dict[int, dict[str, int]]] = {}
    logon_counts: dict[str, dict[int, int]] = {}
    pair_objects: dict[str, dict[int, dict[str, dict[str, int]]]] = {}
    unseen: dict[str, dict[int, dict[str, dict[str, int]]]] = {}

    kind_order = list(ACTIVITY_KINDS)
    weights = np.array([profile.kind_weights.get(k, 0.0) for k in kind_order], dtype=float)
    probs = weights / weights.sum()

    for meta, seed in zip(profile.servers, server_seeds):
        rng = np.random.default_rng(seed)
        vocab = _Vocabulary(profile, meta, shared_vocab[meta.service_name], rng)
        seq = 0
        novel_counter = 0
        week_keys: dict[int, set[str]] = {w: set() for w in range(profile.weeks)}
        week_kind_keys: dict[int, dict[EventKind, set[str]]] = {
            w: {k: set() for k in ACTIVITY_KINDS} for w in range(profile.weeks)
        }
        server_events: list[tuple[EventRecord, int]] = []
        event_counts[meta.server_id] = {}
        logon_counts[meta.server_id] = {}
        pair_objects[meta.server_id] = {}
        unseen[meta.server_id] = {}
        user_pools = {
            role: [f"{role.value}-{meta.server_id}-{i:04d}" for i in range(max(1, int(np.ceil(rates.distinct_users * 1.5))))]
            for role, rates in profile.logon_rates.get(meta.category, {}).items()
        }

        for week in range(profile.weeks):
            week_start = origin + timedelta(days=7 * week)
            counts = {k.value: 0 for k in ACTIVITY_KINDS}
            pair_table: dict[str, dict[str, int]] = {}

            # logon sessions
            n_sessions = 0
            for role, rates in sorted(
                profile.logon_rates.get(meta.category, {}).items(), key=lambda kv: kv[0].value
            ):
                pool = user_pools[role]
                n_active = min(len(pool), int(rng.poisson(rates.distinct_users)))
                chosen = rng.choice(len(pool), size=n_active, replace=False)
                logon_counts_per_user = rng.poisson(rates.logons_per_user, size=n_active)
                mu = float(np.log(rates.duration_minutes) - profile.duration_sigma**2 / 2)
                for user_pos, n_logons in zip(chosen, logon_counts_per_user):
                    if n_logons == 0:
                        continue
                    user = pool[int(user_pos)]
                    offsets = rng.integers(0, WEEK_MS, size=n_logons)
                    durations = rng.lognormal(mu, profile.duration_sigma, size=n_logons)
                    for off, dur in zip(offsets, durations):
                        logon_ts = week_start + timedelta(milliseconds=int(off))
                        principal = EntityRef(EntityType.PROCESS, user)
                        session_obj = EntityRef(EntityType.PROCESS, "lsass.exe")
                        events_here = [
                            EventRecord(
                                event_id=f"e-{meta.server_id}-{seq:07d}",
                                ts=logon_ts,
                                server_id=meta.server_id,
                                kind=EventKind.LOGON,
                                subject=principal,
                                relation="logon",
                                object=session_obj,
                                user_id=user,
                                user_role=role,
                                source=LogSource.ETW,
                                attrs={"logon_type": "network"},
                            )
                        ]
                        seq += 1
                        logoff_ts = logon_ts + timedelta(minutes=float(dur))
                        if logoff_ts < corpus_end:
                            events_here.append(
                                EventRecord(
                                    event_id=f"e-{meta.server_id}-{seq:07d}",
                                    ts=logoff_ts,
                                    server_id=meta.server_id,
                                    kind=EventKind.LOGOFF,
                                    subject=principal,
                                    relation="logoff",
                                    object=session_obj,
                                    user_id=user,
                                    user_role=role,
                                    source=LogSource.ETW,
                                    attrs={},
                                )
                            )
                            seq += 1
                        for ev in events_here:
                            server_events.append((ev, week))
                        n_sessions += 1
            logon_counts[meta.server_id][week] = n_sessions

            # operation events: core draws are coverage-first (a permutation
            # pass over the vocabulary, then uniform extras), so any kind
            # whose weekly budget reaches its core size re-emits the whole
            # vocabulary every epoch and zero novelty implies zero unseen
            if profile.events_per_server_week > 0:
                kind_totals = rng.multinomial(profile.events_per_server_week, probs)
                for kind, n_k in zip(kind_order, kind_totals):
                    if n_k == 0:
                        continue
                    relations = _KIND_RELATIONS[kind]
                    core = vocab.core[kind]
                    n_novel = int(rng.binomial(n_k, profile.novelty_rate.get(kind, 0.0)))
                    n_core = n_k - n_novel
                    coverage = list(rng.permutation(len(core))[: min(n_core, len(core))])
                    extras = rng.integers(0, len(core), size=max(0, n_core - len(core)))
                    core_picks = coverage + [int(x) for x in extras]
                    fresh_subject = rng.random(n_novel) < profile.fresh_subject_prob
                    subj_idx = rng.integers(0, len(vocab.subjects), size=n_novel)
                    rel_idx = rng.integers(0, len(relations), size=n_novel)
                    offsets = rng.integers(0, WEEK_MS, size=n_k)

                    triples = [core[int(i)] for i in core_picks]
                    novel_this_week: list[tuple[str, str, str]] = []
                    for j in range(n_novel):
                        novel_counter += 1
                        obj_identity = _object_identity(
                            kind, f"novel-{meta.server_id}", novel_counter, rng
                        )
                        if fresh_subject[j]:
                            subject_identity = (
                                f"C:\\Users\\<USER>\\tmp\\{meta.server_id}-x{novel_counter:05d}.exe"
                            )
                        else:
                            subject_identity = vocab.subjects[int(subj_idx[j])]
                        triple = (subject_identity, relations[int(rel_idx[j])], obj_identity)
                        triples.append(triple)
                        novel_this_week.append(triple)

                    for i, (subject_identity, relation, obj_identity) in enumerate(triples):
                        ts = week_start + timedelta(milliseconds=int(offsets[i]))
                        record = EventRecord(
                            event_id=f"e-{meta.server_id}-{seq:07d}",
                            ts=ts,
                            server_id=meta.server_id,
                            kind=kind,
                            subject=EntityRef(EntityType.PROCESS, subject_identity),
                            relation=relation,
                            object=EntityRef(_KIND_ENTITY[kind], obj_identity),
                            user_id=f"svc-{meta.service_name.lower()}",
                            user_role=UserRole.SERVICE,
                            source=LogSource.SYSMON if kind is not EventKind.PROCESS else LogSource.ETW,
                            attrs={},
                        )
                        seq += 1
                        server_events.append((record, week))
                        counts[kind.value] += 1
                        key = record.tuple_key()
                        week_keys[week].add(key)
                        week_kind_keys[week][kind].add(key)
                        pair = pair_table.setdefault(record.context_key(), {})
                        pair[obj_identity] = pair.get(obj_identity, 0) + 1
                    # concept drift: this week's novel tuples displace random
                    # core slots, so later weeks keep drifting away
                    for triple in novel_this_week:
                        core[int(rng.integers(len(core)))] = triple

            event_counts[meta.server_id][week] = counts
            pair_objects[meta.server_id][week] = pair_table

        # annotate novelty and first occurrences now that all weeks exist
        first_week: dict[str, int] = {}
        for week in range(profile.weeks):
            for key in week_kind_keys[week][EventKind.PROCESS] | week_kind_keys[week][
                EventKind.FILE
            ] | week_kind_keys[week][EventKind.NETWORK] | week_kind_keys[week][EventKind.REGISTRY]:
                first_week.setdefault(key, week)
        for record, week in server_events:
            if record.kind not in ACTIVITY_KINDS:
                continue
            key = record.tuple_key()
            is_novel = None if week == 0 else key not in week_keys[week - 1]
            manifest_events[record.event_id] = {
                "key": key,
                "kind": record.kind.value,
                "server": record.server_id,
                "week": week,
                "first_week": first_week[key],
                "is_novel": is_novel,
            }
        for week in range(1, profile.weeks):
            table: dict[str, dict[str, int]] = {}
            for kind in ACTIVITY_KINDS:
                keys = week_kind_keys[week][kind]
                if not keys:
                    continue
                novel = sum(1 for key in keys if key not in week_keys[week - 1])
                table[kind.value] = {"units": len(keys), "unseen": novel}
            unseen[meta.server_id][week] = table

        events.extend(record for record, _ in server_events)

    events.sort(key=lambda e: (e.ts, e.event_id))
    manifest = CorpusManifest(
        header={
            "seed": profile.rng_seed,
            "weeks": profile.weeks,
            "origin": profile.start_date.isoformat(),
            "servers": [m.server_id for m in profile.servers],
            "reference_definition": {"window": 1, "epoch": "week", "grouping": "server-level"},
            "distributions": {
                "logons": "poisson",
                "durations": "lognormal",
                "duration_sigma": profile.duration_sigma,
            },
        },
        event_counts=event_counts,
        logon_counts=logon_counts,
        events=manifest_events,
        pair_objects=pair_objects,
        unseen=unseen,
    )
    _self_check(events, manifest)
    return events, manifest


def _self_check(events: list[EventRecord], manifest: CorpusManifest) -> None:
    """Manifest counts must match the emitted corpus exactly."""
    recounted: dict[str, dict[int, dict[str, int]]] = {}
    origin = origin_from_date(date.fromisoformat(manifest.header["origin"]))
    for e in events:
        if e.kind not in ACTIVITY_KINDS:
            continue
        week = (e.ts.date() - origin.date()).days // 7
        table = recounted.setdefault(e.server_id, {}).setdefault(
            week, {k.value: 0 for k in ACTIVITY_KINDS}
        )
        table[e.kind.value] += 1
        if e.event_id not in manifest.events:
            raise DataError(f"manifest is missing event {e.event_id}")
    for sid, weeks in recounted.items():
        for week, counts in weeks.items():
            if manifest.event_counts[sid][week] != counts:
                raise DataError(f"manifest count mismatch for {sid} week {week}")
    n_ops = sum(1 for e in events if e.kind in ACTIVITY_KINDS)
    if n_ops != len(manifest.events):
        raise DataError("manifest event table does not cover the corpus exactly")
