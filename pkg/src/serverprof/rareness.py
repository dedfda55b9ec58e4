"""Event rareness scoring over configurable reference windows.

Two scores are provided. Frequency rareness divides the number of
(epoch, server) cells in which the event occurred by the window capacity
W*S, where W is the window length in epochs and S the size of the queried
server's group; an event counts at most once per cell no matter how often it
repeats. Contextual rareness replaces the capacity with the number of cells
in which the event's (subject, relation) pair touched any object. Both are
subtracted from 1, so unseen events score exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Iterable, Sequence

from .epochs import Epoch, corpus_origin, epoch_index
from .errors import DataError, WindowError
from .events import (
    EventKind,
    EventRecord,
    GroupingScheme,
    ServerMeta,
    partition_servers,
)


class WindowFallback(str, Enum):
    USE_FUTURE_EPOCHS = "future"
    FAIL = "fail"


@dataclass(frozen=True)
class RarenessConfig:
    window_length: int = 9
    epoch: Epoch = Epoch.WEEK
    grouping: GroupingScheme = GroupingScheme.SAME_TYPE_AND_LOCATION
    fallback: WindowFallback = WindowFallback.USE_FUTURE_EPOCHS

    def __post_init__(self) -> None:
        if self.window_length < 1:
            raise DataError("window_length must be >= 1")


@dataclass(frozen=True)
class RarenessScore:
    event_key: str
    kind: EventKind
    score: float
    occurrences: int
    capacity: int


class ReferenceIndex:
    """Immutable per-(epoch, server) occurrence sets for one test epoch.

    Reference epochs are the window_length epochs immediately before the test
    epoch; when history is short, later epochs (skipping the test epoch) fill
    the window if the fallback allows, mirroring evaluation over early weeks.
    Build once, then score any number of queries concurrently.
    """

    def __init__(
        self,
        events: Sequence[EventRecord],
        metas: Sequence[ServerMeta],
        cfg: RarenessConfig,
        test_epoch: int,
        origin: datetime | None = None,
    ) -> None:
        if not events:
            raise DataError("reference corpus is empty")
        self.cfg = cfg
        self.origin = corpus_origin(events) if origin is None else origin
        self.test_epoch = test_epoch
        self.groups = partition_servers(list(metas), cfg.grouping)
        known = set(self.groups)
        last_epoch = max(epoch_index(e.ts, self.origin, cfg.epoch) for e in events)
        self.reference_epochs = _select_reference_epochs(
            test_epoch, last_epoch, cfg.window_length, cfg.fallback
        )
        ref_set = frozenset(self.reference_epochs)

        self._triple_cells: dict[str, set[tuple[int, str]]] = {}
        self._pair_cells: dict[str, set[tuple[int, str]]] = {}
        for e in events:
            if e.server_id not in known:
                raise DataError(f"event {e.event_id} references unknown server {e.server_id!r}")
            idx = epoch_index(e.ts, self.origin, cfg.epoch)
            if idx not in ref_set:
                continue
            cell = (idx, e.server_id)
            self._triple_cells.setdefault(e.tuple_key(), set()).add(cell)
            self._pair_cells.setdefault(e.context_key(), set()).add(cell)

    def group_of(self, server_id: str) -> frozenset[str]:
        try:
            return self.groups[server_id]
        except KeyError:
            raise DataError(f"unknown server {server_id!r}") from None

    def triple_occurrences(self, key: str, group: frozenset[str]) -> int:
        cells = self._triple_cells.get(key)
        if not cells:
            return 0
        return sum(1 for (_, sid) in cells if sid in group)

    def pair_occurrences(self, key: str, group: frozenset[str]) -> int:
        cells = self._pair_cells.get(key)
        if not cells:
            return 0
        return sum(1 for (_, sid) in cells if sid in group)


def _select_reference_epochs(
    test_epoch: int, last_epoch: int, window: int, fallback: WindowFallback
) -> list[int]:
    history = [i for i in range(max(0, test_epoch - window), test_epoch)]
    if len(history) >= window:
        return history
    if fallback is WindowFallback.FAIL:
        raise WindowError(
            f"only {len(history)} epochs precede test epoch {test_epoch}, need {window}"
        )
    future = []
    candidate = test_epoch + 1
    while len(history) + len(future) < window and candidate <= last_epoch:
        future.append(candidate)
        candidate += 1
    if len(history) + len(future) < window:
        raise WindowError(
            f"corpus spans too few epochs to assemble a window of {window} around epoch {test_epoch}"
        )
    return history + future


def eq1_rareness(query: EventRecord, reference: ReferenceIndex, cfg: RarenessConfig | None = None) -> RarenessScore:
    """Frequency rareness: 1 - occurrences / (W * S)."""
    if cfg is not None and cfg != reference.cfg:
        raise DataError("cfg disagrees with the configuration the reference index was built with")
    cfg = reference.cfg
    group = reference.group_of(query.server_id)
    key = query.tuple_key()
    occurrences = reference.triple_occurrences(key, group)
    capacity = cfg.window_length * len(group)
    return RarenessScore(
        event_key=key,
        kind=query.kind,
        score=1.0 - occurrences / capacity,
        occurrences=occurrences,
        capacity=capacity,
    )


def eq2_contextual(query: EventRecord, reference: ReferenceIndex, cfg: RarenessConfig | None = None) -> RarenessScore:
    """Contextual rareness: 1 - occurrences / cells where the (subject,
    relation) pair was active. A pair never seen in the reference scores 1."""
    if cfg is not None and cfg != reference.cfg:
        raise DataError("cfg disagrees with the configuration the reference index was built with")
    group = reference.group_of(query.server_id)
    key = query.tuple_key()
    occurrences = reference.triple_occurrences(key, group)
    capacity = reference.pair_occurrences(query.context_key(), group)
    if capacity == 0:
        return RarenessScore(event_key=key, kind=query.kind, score=1.0, occurrences=0, capacity=0)
    if occurrences > capacity:
        raise DataError("triple occurrences exceeded pair occurrences; index is inconsistent")
    return RarenessScore(
        event_key=key,
        kind=query.kind,
        score=1.0 - occurrences / capacity,
        occurrences=occurrences,
        capacity=capacity,
    )


def occurrence_probability(query: EventRecord, reference: ReferenceIndex) -> float:
    """P(e) from the contextual definition; 0 when the pair is unseen."""
    return 1.0 - eq2_contextual(query, reference).score


def chain_rareness(e1: EventRecord, e2: EventRecord, reference: ReferenceIndex) -> float:
    """Rareness of a two-event chain: 1 - P(e1) * P(e2).

    The events must be dataflow-adjacent: e1's object is e2's subject and e1
    does not happen after e2.
    """
    if e1.object != e2.subject:
        raise DataError("chain events are not connected: object(e1) != subject(e2)")
    if e1.ts > e2.ts:
        raise DataError("chain events are out of order: ts(e1) > ts(e2)")
    return 1.0 - occurrence_probability(e1, reference) * occurrence_probability(e2, reference)


# --------------------------------------------------------------------------
# Epoch-level reports


@dataclass(frozen=True)
class UnseenRatios:
    per_kind: dict[EventKind, float]
    per_server: dict[str, float]
    kind_units: dict[EventKind, tuple[int, int]]  # kind -> (unseen, total)
    server_units: dict[str, tuple[int, int]]


def distinct_test_units(events: Iterable[EventRecord]) -> list[EventRecord]:
    """First occurrence of each (server, 3-tuple) unit, in stream order.

    Rareness counts an event once per epoch, so epoch-level reports score
    distinct units rather than raw occurrences.
    """
    seen: set[tuple[str, str]] = set()
    units = []
    for e in events:
        unit = (e.server_id, e.tuple_key())
        if unit not in seen:
            seen.add(unit)
            units.append(e)
    return units


def unseen_ratio(test_events: Sequence[EventRecord], reference: ReferenceIndex) -> UnseenRatios:
    """Fraction of distinct test units that score exactly 1 under Eq.-style
    frequency rareness, reported per kind and per server."""
    kind_counts: dict[EventKind, list[int]] = {}
    server_counts: dict[str, list[int]] = {}
    for unit in distinct_test_units(test_events):
        score = eq1_rareness(unit, reference)
        novel = score.occurrences == 0
        kind_counts.setdefault(unit.kind, [0, 0])
        kind_counts[unit.kind][0] += int(novel)
        kind_counts[unit.kind][1] += 1
        server_counts.setdefault(unit.server_id, [0, 0])
        server_counts[unit.server_id][0] += int(novel)
        server_counts[unit.server_id][1] += 1
    return UnseenRatios(
        per_kind={k: c[0] / c[1] for k, c in kind_counts.items()},
        per_server={s: c[0] / c[1] for s, c in server_counts.items()},
        kind_units={k: (c[0], c[1]) for k, c in kind_counts.items()},
        server_units={s: (c[0], c[1]) for s, c in server_counts.items()},
    )


@dataclass(frozen=True)
class ScoreHistogram:
    bins: int
    edges: list[float]
    counts: dict[EventKind, list[int]]


def score_distribution(scores: Sequence[RarenessScore], bins: int) -> ScoreHistogram:
    """Equal-width histogram of scores over [0, 1] per kind; the last bin is
    closed on the right so a score of exactly 1 lands in it."""
    if bins < 2:
        raise DataError("histogram needs at least 2 bins")
    edges = [i / bins for i in range(bins + 1)]
    counts: dict[EventKind, list[int]] = {}
    for s in scores:
        if not 0.0 <= s.score <= 1.0:
            raise DataError(f"score {s.score} outside [0, 1]")
        idx = min(int(s.score * bins), bins - 1)
        counts.setdefault(s.kind, [0] * bins)[idx] += 1
    return ScoreHistogram(bins=bins, edges=edges, counts=counts)


def score_epoch(
    test_events: Sequence[EventRecord],
    reference: ReferenceIndex,
    equation: int = 1,
) -> list[RarenessScore]:
    """Score every distinct (server, 3-tuple) unit of a test epoch."""
    if equation not in (1, 2):
        raise DataError(f"unknown rareness equation {equation}")
    scorer = eq1_rareness if equation == 1 else eq2_contextual
    return [scorer(unit, reference) for unit in distinct_test_units(test_events)]
