"""Provenance DAG construction from audit events and k-hop neighborhood
label histograms.

Edges point along information flow: read-like relations flow object to
subject, write-like relations subject to object. An edge that would close a
cycle targets a fresh version node of its destination entity instead, so the
graph stays acyclic by construction.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterable, Sequence

from .errors import ConfigError, DataError
from .events import EntityType, EventRecord, OPERATION_KINDS, format_ts

#: Information-flow direction per relation verb. "in" flows object->subject
#: (the subject observes the object), "out" flows subject->object. This table
#: is configuration, not a property of the data; unknown verbs are rejected.
DEFAULT_RELATION_FLOW: dict[str, str] = {
    "read": "in",
    "load": "in",
    "exec": "in",
    "query": "in",
    "receive": "in",
    "write": "out",
    "create": "out",
    "modify": "out",
    "delete": "out",
    "connect": "out",
    "send": "out",
    "spawn": "out",
}

MAX_HOP = 3


@dataclass(frozen=True)
class GraphNode:
    entity_type: EntityType
    identity: str
    first_seen_ts: datetime


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    relation: str
    ts: datetime


@dataclass
class ProvenanceGraph:
    server_id: str
    span: tuple[datetime, datetime] | None
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    edges: list[GraphEdge] = field(default_factory=list)

    def incoming(self) -> dict[str, list[GraphEdge]]:
        inc: dict[str, list[GraphEdge]] = {nid: [] for nid in self.nodes}
        for edge in self.edges:
            inc[edge.dst].append(edge)
        return inc

    def outgoing_ids(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for edge in self.edges:
            out[edge.src].append(edge.dst)
        return out


def build_graph(
    events: Sequence[EventRecord],
    span: tuple[datetime, datetime] | None = None,
    relation_flow: dict[str, str] | None = None,
) -> ProvenanceGraph:
    """Build the provenance DAG for one server from its operation events.

    Events must belong to a single server and carry operation kinds; they are
    processed in timestamp order (stable on ties). One node exists per active
    version of a distinct (entity_type, identity); each event adds one edge.
    """
    flow = DEFAULT_RELATION_FLOW if relation_flow is None else relation_flow
    servers = {e.server_id for e in events}
    if len(servers) > 1:
        raise DataError(f"build_graph expects one server, got {sorted(servers)}")
    for e in events:
        if e.kind not in OPERATION_KINDS:
            raise DataError(f"event {e.event_id}: {e.kind.value} events do not enter the graph")
        if e.relation not in flow:
            raise ConfigError(f"relation {e.relation!r} has no flow direction configured")
        if span is not None and not (span[0] <= e.ts < span[1]):
            raise DataError(f"event {e.event_id} at {e.ts} lies outside the span")

    graph = ProvenanceGraph(server_id=next(iter(servers), ""), span=span)
    current: dict[tuple[EntityType, str], str] = {}
    versions: dict[tuple[EntityType, str], int] = {}
    out_adj: dict[str, list[str]] = {}

    def node_for(ref_type: EntityType, identity: str, ts: datetime) -> str:
        key = (ref_type, identity)
        nid = current.get(key)
        if nid is None:
            nid = _fresh_node(key, ts)
        return nid

    def _fresh_node(key: tuple[EntityType, str], ts: datetime) -> str:
        version = versions.get(key, 0) + 1
        versions[key] = version
        nid = f"{key[0].value}:{key[1]}#v{version}"
        current[key] = nid
        graph.nodes[nid] = GraphNode(entity_type=key[0], identity=key[1], first_seen_ts=ts)
        out_adj[nid] = []
        return nid

    def reaches(start: str, target: str) -> bool:
        stack = [start]
        seen = {start}
        while stack:
            nid = stack.pop()
            if nid == target:
                return True
            for nxt in out_adj[nid]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    for event in sorted(events, key=lambda e: e.ts):
        subj = node_for(event.subject.entity_type, event.subject.identity, event.ts)
        obj = node_for(event.object.entity_type, event.object.identity, event.ts)
        if flow[event.relation] == "in":
            src, dst = obj, subj
            dst_key = (event.subject.entity_type, event.subject.identity)
        else:
            src, dst = subj, obj
            dst_key = (event.object.entity_type, event.object.identity)
        if src == dst or reaches(dst, src):
            dst = _fresh_node(dst_key, event.ts)
        graph.edges.append(GraphEdge(src=src, dst=dst, relation=event.relation, ts=event.ts))
        out_adj[src].append(dst)
    return graph


def is_acyclic(graph: ProvenanceGraph) -> bool:
    """Kahn topological sort; True iff every node can be ordered."""
    indegree = {nid: 0 for nid in graph.nodes}
    adj = graph.outgoing_ids()
    for edge in graph.edges:
        indegree[edge.dst] += 1
    queue = [nid for nid, deg in indegree.items() if deg == 0]
    ordered = 0
    while queue:
        nid = queue.pop()
        ordered += 1
        for nxt in adj[nid]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                queue.append(nxt)
    return ordered == len(graph.nodes)


# --------------------------------------------------------------------------
# k-hop neighborhood histograms


@dataclass(frozen=True)
class SketchHistogram:
    hop: int
    labels: dict[str, int]
    node_total: int

    def canonical_bytes(self) -> bytes:
        """Stable serialization used for byte-identity comparisons."""
        return json.dumps(
            {"hop": self.hop, "labels": dict(sorted(self.labels.items())), "node_total": self.node_total},
            separators=(",", ":"),
        ).encode()


def _digest64(payload: str) -> str:
    return hashlib.blake2b(payload.encode(), digest_size=8).hexdigest()


def khop_labels(graph: ProvenanceGraph, hop: int) -> dict[str, str]:
    """Iteratively relabel every node with a digest of its k-hop neighborhood.

    label(v, 0) digests (entity_type, identity); label(v, k) digests
    label(v, k-1) together with the node's incoming edges sorted by timestamp
    (ties broken by relation then source label), each contributing
    (relation, label(source, k-1)).
    """
    if not 0 <= hop <= MAX_HOP:
        raise DataError(f"hop must be between 0 and {MAX_HOP}")
    labels = {
        nid: _digest64(json.dumps([node.entity_type.value, node.identity]))
        for nid, node in graph.nodes.items()
    }
    incoming = graph.incoming()
    for _ in range(hop):
        prev = labels
        labels = {}
        for nid in graph.nodes:
            neighborhood = sorted(
                ((format_ts(e.ts), e.relation, prev[e.src]) for e in incoming[nid]),
            )
            payload = json.dumps(
                [prev[nid], [[relation, src_label] for _, relation, src_label in neighborhood]],
                separators=(",", ":"),
            )
            labels[nid] = _digest64(payload)
    return labels


def khop_histogram(graph: ProvenanceGraph, hop: int) -> SketchHistogram:
    """Count k-hop neighborhood labels over all nodes of the graph."""
    counts = Counter(khop_labels(graph, hop).values())
    return SketchHistogram(hop=hop, labels=dict(counts), node_total=len(graph.nodes))


def merge_histograms(histograms: Iterable[SketchHistogram]) -> SketchHistogram:
    """Label-wise count sum of same-hop histograms (pooled population)."""
    hists = list(histograms)
    if not hists:
        raise DataError("cannot merge zero histograms")
    hops = {h.hop for h in hists}
    if len(hops) != 1:
        raise DataError(f"cannot merge histograms of different hops {sorted(hops)}")
    counts: Counter[str] = Counter()
    total = 0
    for h in hists:
        counts.update(h.labels)
        total += h.node_total
    return SketchHistogram(hop=hops.pop(), labels=dict(counts), node_total=total)


def union_histograms(histograms: Iterable[SketchHistogram]) -> SketchHistogram:
    """Label-wise count maximum of same-hop histograms.

    This is the reference-combination semantics: a stream identical to every
    merged period still scores 1 against the union, so only genuinely new or
    missing labels move the similarity.
    """
    hists = list(histograms)
    if not hists:
        raise DataError("cannot merge zero histograms")
    hops = {h.hop for h in hists}
    if len(hops) != 1:
        raise DataError(f"cannot merge histograms of different hops {sorted(hops)}")
    counts: dict[str, int] = {}
    for h in hists:
        for label, count in h.labels.items():
            if count > counts.get(label, 0):
                counts[label] = count
    return SketchHistogram(hop=hops.pop(), labels=counts, node_total=sum(counts.values()))


def dump_edges(graph: ProvenanceGraph, fh: IO[str]) -> int:
    """Write the edge list as tab-separated (src, dst, relation, ts) lines."""
    n = 0
    for edge in graph.edges:
        fh.write(f"{edge.src}\t{edge.dst}\t{edge.relation}\t{format_ts(edge.ts)}\n")
        n += 1
    return n
