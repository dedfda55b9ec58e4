"""Normalized min-max similarity between sketch histograms and the series
analyses built on it: consecutive-period self-similarity, merged-reference
and gap (concept drift) variants, and cross-server comparisons."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

from .epochs import Epoch, corpus_origin, epoch_index
from .errors import DataError
from .events import EventKind, EventRecord, OPERATION_KINDS
from .provgraph import ProvenanceGraph, SketchHistogram, build_graph, khop_histogram, union_histograms


def minmax_similarity(h1: SketchHistogram, h2: SketchHistogram) -> float:
    """Sum of per-label minima over sum of per-label maxima, across the label
    union. 1 for identical histograms, 0 for disjoint ones; two empty
    histograms count as identical."""
    if h1.hop != h2.hop:
        raise DataError(f"hop mismatch: {h1.hop} vs {h2.hop}")
    if not h1.labels and not h2.labels:
        return 1.0
    min_sum = 0
    max_sum = 0
    for label in h1.labels.keys() | h2.labels.keys():
        a = h1.labels.get(label, 0)
        b = h2.labels.get(label, 0)
        min_sum += a if a < b else b
        max_sum += a if a > b else b
    return min_sum / max_sum


@dataclass(frozen=True)
class SeriesPoint:
    period_index: int
    similarity: float


@dataclass(frozen=True)
class SimilaritySeries:
    server_id: str
    hop: int
    period: Epoch
    kind: str  # consecutive | merged-<n> | gap-<n>
    points: list[SeriesPoint]


def period_histograms(
    events: Sequence[EventRecord],
    server_id: str,
    period: Epoch,
    hop: int,
    origin: datetime | None = None,
    kind_filter: EventKind | None = None,
) -> dict[int, SketchHistogram]:
    """One graph and histogram per period for a server; periods with no
    activity yield empty histograms so series stay index-aligned."""
    if origin is None:
        origin = corpus_origin(events)
    ops = [
        e
        for e in events
        if e.server_id == server_id
        and e.kind in OPERATION_KINDS
        and (kind_filter is None or e.kind is kind_filter)
    ]
    last = max((epoch_index(e.ts, origin, period) for e in events), default=-1)
    by_period: dict[int, list[EventRecord]] = {}
    for e in ops:
        by_period.setdefault(epoch_index(e.ts, origin, period), []).append(e)
    out: dict[int, SketchHistogram] = {}
    for idx in range(last + 1):
        bucket = by_period.get(idx)
        if bucket:
            graph = build_graph(bucket)
        else:
            graph = ProvenanceGraph(server_id=server_id, span=None)
        out[idx] = khop_histogram(graph, hop)
    return out


def similarity_series(
    events: Sequence[EventRecord],
    server_id: str,
    period: Epoch,
    hop: int,
    origin: datetime | None = None,
) -> SimilaritySeries:
    """Similarity between each period's histogram and the next period's."""
    hists = period_histograms(events, server_id, period, hop, origin)
    points = [
        SeriesPoint(i, minmax_similarity(hists[i], hists[i + 1]))
        for i in range(len(hists) - 1)
    ]
    return SimilaritySeries(server_id, hop, period, "consecutive", points)


def merged_reference_similarity(
    events: Sequence[EventRecord],
    server_id: str,
    merge_weeks: int,
    hop: int,
    origin: datetime | None = None,
) -> SimilaritySeries:
    """Combine merge_weeks consecutive weekly histograms into one reference
    (label-wise maximum) and compare it against the following week."""
    if merge_weeks < 2:
        raise DataError("merge_weeks must be >= 2")
    hists = period_histograms(events, server_id, Epoch.WEEK, hop, origin)
    points = []
    for i in range(len(hists) - merge_weeks):
        merged = union_histograms(hists[i + k] for k in range(merge_weeks))
        points.append(SeriesPoint(i, minmax_similarity(merged, hists[i + merge_weeks])))
    return SimilaritySeries(server_id, hop, Epoch.WEEK, f"merged-{merge_weeks}", points)


def gap_similarity(
    events: Sequence[EventRecord],
    server_id: str,
    gap_weeks: int,
    hop: int,
    origin: datetime | None = None,
) -> SimilaritySeries:
    """Compare week i against week i + gap_weeks + 1 to expose concept drift."""
    if gap_weeks < 0:
        raise DataError("gap_weeks must be >= 0")
    hists = period_histograms(events, server_id, Epoch.WEEK, hop, origin)
    stride = gap_weeks + 1
    points = [
        SeriesPoint(i, minmax_similarity(hists[i], hists[i + stride]))
        for i in range(len(hists) - stride)
    ]
    return SimilaritySeries(server_id, hop, Epoch.WEEK, f"gap-{gap_weeks}", points)


@dataclass(frozen=True)
class CrossServerRow:
    server_a: str
    server_b: str
    hop: int
    period: Epoch
    period_index: int
    similarity: float


def cross_server_similarity(
    events: Sequence[EventRecord],
    pairs: Sequence[tuple[str, str]],
    hop: int,
    period: Epoch = Epoch.WEEK,
    kind_filter: EventKind | None = None,
    origin: datetime | None = None,
) -> list[CrossServerRow]:
    """Same-period histogram similarity for each server pair, optionally
    restricted to one event kind (process-only reproduces the paper-style
    process analysis)."""
    if origin is None:
        origin = corpus_origin(events)
    servers = {e.server_id for e in events}
    rows: list[CrossServerRow] = []
    for a, b in pairs:
        for sid in (a, b):
            if sid not in servers:
                raise DataError(f"unknown server {sid!r} in cross-server pair")
        hists_a = period_histograms(events, a, period, hop, origin, kind_filter)
        hists_b = period_histograms(events, b, period, hop, origin, kind_filter)
        for idx in sorted(hists_a):
            rows.append(
                CrossServerRow(
                    server_a=a,
                    server_b=b,
                    hop=hop,
                    period=period,
                    period_index=idx,
                    similarity=minmax_similarity(hists_a[idx], hists_b[idx]),
                )
            )
    return rows
