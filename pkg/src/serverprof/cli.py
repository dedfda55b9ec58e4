"""Command-line entry point.

Subcommands compose through files: synth writes a corpus + manifest, ingest
parses/filters, and the analysis subcommands read the corpus and emit CSV
artifacts plus a run-metadata file. Exit codes: 0 ok, 1 usage/configuration,
2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from pathlib import Path
from typing import IO, Sequence

from . import __version__
from .epochs import Epoch, corpus_origin, epoch_index
from .errors import ConfigError, DataError
from .events import EventKind, GroupingScheme, ServerMeta, format_ts
from .ingest import apply_filters, emit_events, load_filter_rules, parse_events, sessionize
from .rareness import (
    RarenessConfig,
    ReferenceIndex,
    WindowFallback,
    distinct_test_units,
    score_distribution,
    score_epoch,
    unseen_ratio,
)
from .similarity import (
    cross_server_similarity,
    gap_similarity,
    merged_reference_similarity,
    period_histograms,
    similarity_series,
)
from .stats import WorkHours, activity_counts, weekly_logon_stats
from .synth import generate, load_profile

OUT_ENV = "SERVERPROF_OUT"

_GROUPING_FLAGS = {
    "server": GroupingScheme.SERVER_LEVEL,
    "same-type-location": GroupingScheme.SAME_TYPE_AND_LOCATION,
    "same-type": GroupingScheme.SAME_TYPE,
    "all": GroupingScheme.ALL_SERVERS,
}


def load_server_meta(fh: IO[str]) -> list[ServerMeta]:
    try:
        raw = json.load(fh)
        return [
            ServerMeta(
                server_id=m["server_id"],
                service_name=m["service_name"],
                location=m["location"],
                category=int(m["category"]),
            )
            for m in raw
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad server metadata file: {exc}") from None


class ArtifactWriter:
    """Tracks files written during one run so failures leave no partial
    artifacts behind, and records row counts for the run metadata."""

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []
        self.row_counts: dict[str, int] = {}

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.written.append(p)
        return p

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> None:
        with self.path(name).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        self.row_counts[name] = len(rows)

    def cleanup(self) -> None:
        for p in self.written:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass

    def write_metadata(self, subcommand: str, config: dict, extra: dict | None = None) -> None:
        meta = {
            "tool": "serverprof",
            "version": __version__,
            "subcommand": subcommand,
            "config": config,
            "row_counts": self.row_counts,
        }
        if extra:
            meta.update(extra)
        with self.path(f"run_{subcommand}.meta.json").open("w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _corpus_span(events) -> dict:
    if not events:
        return {"events": 0}
    origin = corpus_origin(events)
    return {
        "events": len(events),
        "first_ts": format_ts(min(e.ts for e in events)),
        "last_ts": format_ts(max(e.ts for e in events)),
        "weeks": epoch_index(max(e.ts for e in events), origin, Epoch.WEEK) + 1,
    }


def _read_corpus(path: Path, strict: bool = False):
    with path.open("r", encoding="utf-8") as fh:
        result = parse_events(fh, strict=strict)
    if not result.records:
        raise DataError(f"no events parsed from {path}")
    return result


def _parse_work_hours(spec: str | None, weekdays: str | None) -> WorkHours | None:
    if spec is None:
        return None
    try:
        start, end = spec.split("-")
        hours = WorkHours(start_hour=int(start), end_hour=int(end))
    except ValueError:
        raise ConfigError(f"bad work-hours window {spec!r}; expected e.g. 9-17") from None
    if weekdays:
        day_names = {"mon": 0, "tue": 1, "wed": 2, "thu": 3, "fri": 4, "sat": 5, "sun": 6}
        try:
            days = frozenset(day_names[d.strip().lower()] for d in weekdays.split(","))
        except KeyError as exc:
            raise ConfigError(f"unknown weekday {exc}") from None
        hours = WorkHours(hours.start_hour, hours.end_hour, days)
    return hours


# --------------------------------------------------------------------------
# Subcommands


def cmd_synth(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    with open(args.profile, "r", encoding="utf-8") as fh:
        profile = load_profile(fh)
    if args.seed is not None:
        profile.rng_seed = args.seed
    events, manifest = generate(profile)
    with writer.path("events.jsonl").open("w", encoding="utf-8") as fh:
        n = emit_events(events, fh)
    writer.row_counts["events.jsonl"] = n
    with writer.path("manifest.json").open("w", encoding="utf-8") as fh:
        manifest.to_json(fh)
    writer.write_metadata(
        "synth",
        {"profile": str(args.profile), "seed": profile.rng_seed},
        {"corpus": _corpus_span(events)},
    )


def cmd_ingest(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    result = _read_corpus(Path(args.input), strict=args.strict)
    writer.write_csv(
        "parse_errors.csv",
        ["line_no", "reason"],
        [[e.line_no, e.reason] for e in result.errors],
    )
    events = result.records
    drops_rows: list[list] = []
    if args.rules:
        with open(args.rules, "r", encoding="utf-8") as fh:
            rules = load_filter_rules(fh)
        report = apply_filters(rules, events)
        events = report.kept
        actions = {r.rule_id: r.action.value for r in rules}
        drops_rows = [
            [rule_id, actions[rule_id], count] for rule_id, count in report.drops_by_rule.items()
        ]
    writer.write_csv("filter_stats.csv", ["rule_id", "action", "drops"], drops_rows)
    with writer.path("filtered.jsonl").open("w", encoding="utf-8") as fh:
        n = emit_events(events, fh)
    writer.row_counts["filtered.jsonl"] = n
    writer.write_metadata(
        "ingest",
        {"input": str(args.input), "rules": args.rules, "strict": args.strict},
        {"corpus": _corpus_span(events), "parse_errors": len(result.errors)},
    )


def cmd_logon_stats(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    result = _read_corpus(Path(args.input))
    with open(args.meta, "r", encoding="utf-8") as fh:
        metas = load_server_meta(fh)
    origin = corpus_origin(result.records)
    sessions = sessionize(result.records)
    rows = weekly_logon_stats(sessions.sessions, metas, origin)
    writer.write_csv(
        "logon_stats.csv",
        [
            "category",
            "user_role",
            "week_index",
            "avg_logons_per_user",
            "avg_distinct_users",
            "avg_duration_minutes",
        ],
        [
            [r.category, r.user_role.value, r.week_index, r.avg_logons_per_user, r.avg_distinct_users, r.avg_duration_minutes]
            for r in rows
        ],
    )
    writer.write_csv(
        "orphan_logoffs.csv",
        ["event_id", "server_id", "user_id", "ts"],
        [[o.event_id, o.server_id, o.user_id, format_ts(o.ts)] for o in sessions.orphans],
    )
    writer.write_metadata(
        "logon-stats",
        {"input": str(args.input), "meta": str(args.meta)},
        {"corpus": _corpus_span(result.records), "sessions": len(sessions.sessions)},
    )


def _activity_rows(tables: dict[str, list]) -> list[list]:
    rows = []
    for segment, table in tables.items():
        for entry in table:
            rows.append(
                [
                    entry.server_id,
                    entry.week_index,
                    segment,
                    entry.counts[EventKind.PROCESS],
                    entry.counts[EventKind.FILE],
                    entry.counts[EventKind.NETWORK],
                    entry.counts[EventKind.REGISTRY],
                ]
            )
    return rows


def cmd_activity(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    result = _read_corpus(Path(args.input))
    origin = corpus_origin(result.records)
    hours = _parse_work_hours(args.work_hours, args.workdays)
    tables = {"all": activity_counts(result.records, origin)}
    if hours is not None:
        inside, outside = activity_counts(result.records, origin, split=hours)
        tables["in"] = inside
        tables["out"] = outside
    writer.write_csv(
        "activity_counts.csv",
        ["server_id", "week_index", "segment", "process", "file", "network", "registry"],
        _activity_rows(tables),
    )
    writer.write_metadata(
        "activity",
        {"input": str(args.input), "work_hours": args.work_hours, "workdays": args.workdays},
        {"corpus": _corpus_span(result.records)},
    )


def _rareness_config(args: argparse.Namespace) -> RarenessConfig:
    return RarenessConfig(
        window_length=args.window,
        epoch=Epoch(args.epoch),
        grouping=_GROUPING_FLAGS[args.grouping],
        fallback=WindowFallback.FAIL if args.fallback == "fail" else WindowFallback.USE_FUTURE_EPOCHS,
    )


def cmd_rareness(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    result = _read_corpus(Path(args.input))
    with open(args.meta, "r", encoding="utf-8") as fh:
        metas = load_server_meta(fh)
    events = [e for e in result.records if e.kind in
              (EventKind.PROCESS, EventKind.FILE, EventKind.NETWORK, EventKind.REGISTRY)]
    if not events:
        raise DataError("corpus holds no operation events to score")
    cfg = _rareness_config(args)
    origin = corpus_origin(events)
    last_epoch = max(epoch_index(e.ts, origin, cfg.epoch) for e in events)
    test_epoch = args.test_epoch if args.test_epoch is not None else last_epoch
    index = ReferenceIndex(events, metas, cfg, test_epoch, origin)
    test_events = [e for e in events if epoch_index(e.ts, origin, cfg.epoch) == test_epoch]
    units = distinct_test_units(test_events)
    scores = score_epoch(test_events, index, equation=args.eq)
    writer.write_csv(
        "rareness_scores.csv",
        ["server_id", "kind", "event_key", "score", "occurrences", "capacity"],
        [
            [u.server_id, s.kind.value, s.event_key, s.score, s.occurrences, s.capacity]
            for u, s in zip(units, scores)
        ],
    )
    ratios = unseen_ratio(test_events, index)
    ratio_rows = [
        ["kind", kind.value, ratios.kind_units[kind][0], ratios.kind_units[kind][1], ratio]
        for kind, ratio in sorted(ratios.per_kind.items(), key=lambda kv: kv[0].value)
    ] + [
        ["server", sid, ratios.server_units[sid][0], ratios.server_units[sid][1], ratio]
        for sid, ratio in sorted(ratios.per_server.items())
    ]
    writer.write_csv("unseen_ratios.csv", ["scope", "name", "unseen", "units", "ratio"], ratio_rows)
    hist = score_distribution(scores, bins=args.bins)
    hist_rows = [
        [kind.value, i, hist.edges[i], hist.edges[i + 1], count]
        for kind, counts in sorted(hist.counts.items(), key=lambda kv: kv[0].value)
        for i, count in enumerate(counts)
    ]
    writer.write_csv("score_histogram.csv", ["kind", "bin_index", "bin_low", "bin_high", "count"], hist_rows)
    writer.write_metadata(
        "rareness",
        {
            "input": str(args.input),
            "meta": str(args.meta),
            "eq": args.eq,
            "window": args.window,
            "epoch": args.epoch,
            "grouping": args.grouping,
            "test_epoch": test_epoch,
            "bins": args.bins,
            "fallback": args.fallback,
        },
        {"corpus": _corpus_span(events), "reference_epochs": index.reference_epochs},
    )


def _parse_hops(spec: str) -> list[int]:
    try:
        hops = sorted({int(h) for h in spec.split(",")})
    except ValueError:
        raise ConfigError(f"bad hops list {spec!r}") from None
    if any(h < 0 or h > 3 for h in hops):
        raise ConfigError("hops must lie between 0 and 3")
    return hops


def _top_label_servers(events, servers, period, origin, n: int) -> list[str]:
    """The n servers whose weekly/daily hop-0 histograms carry the most
    distinct labels; stands in for any hand-picked high-activity subset."""
    totals = {}
    for sid in servers:
        hists = period_histograms(events, sid, period, 0, origin)
        totals[sid] = sum(len(h.labels) for h in hists.values())
    ranked = sorted(servers, key=lambda sid: (-totals[sid], sid))
    return ranked[:n]


def _dump_period_graphs(events, servers, period, origin, writer: ArtifactWriter) -> None:
    from .events import OPERATION_KINDS
    from .provgraph import build_graph, dump_edges

    graph_dir = writer.out_dir / "graphs"
    graph_dir.mkdir(exist_ok=True)
    for sid in servers:
        buckets: dict[int, list] = {}
        for e in events:
            if e.server_id == sid and e.kind in OPERATION_KINDS:
                buckets.setdefault(epoch_index(e.ts, origin, period), []).append(e)
        for idx, bucket in sorted(buckets.items()):
            path = graph_dir / f"{sid}_{period.value}{idx}.tsv"
            writer.written.append(path)
            with path.open("w", encoding="utf-8") as fh:
                dump_edges(build_graph(bucket), fh)


def cmd_similarity(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    result = _read_corpus(Path(args.input))
    events = result.records
    origin = corpus_origin(events)
    period = Epoch(args.period)
    hops = _parse_hops(args.hops)
    servers = sorted({e.server_id for e in events})
    if args.top_labels is not None:
        servers = _top_label_servers(events, servers, period, origin, args.top_labels)
    if args.dump_graphs:
        _dump_period_graphs(events, servers, period, origin, writer)
    series_rows: list[list] = []
    for server_id in servers:
        for hop in hops:
            for series in [similarity_series(events, server_id, period, hop, origin)]:
                series_rows += [
                    [series.server_id, series.hop, series.period.value, series.kind, p.period_index, p.similarity]
                    for p in series.points
                ]
            if args.merge:
                merged = merged_reference_similarity(events, server_id, args.merge, hop, origin)
                series_rows += [
                    [merged.server_id, merged.hop, merged.period.value, merged.kind, p.period_index, p.similarity]
                    for p in merged.points
                ]
            if args.gap is not None:
                gapped = gap_similarity(events, server_id, args.gap, hop, origin)
                series_rows += [
                    [gapped.server_id, gapped.hop, gapped.period.value, gapped.kind, p.period_index, p.similarity]
                    for p in gapped.points
                ]
    writer.write_csv(
        "similarity_series.csv",
        ["server_id", "hop", "period", "series", "index", "value"],
        series_rows,
    )
    cross_rows: list[list] = []
    if args.pairs:
        pairs = []
        for chunk in args.pairs.split(","):
            try:
                a, b = chunk.split(":")
            except ValueError:
                raise ConfigError(f"bad pair {chunk!r}; expected a:b") from None
            pairs.append((a, b))
        kind_filter = EventKind(args.kind) if args.kind else None
        for hop in hops:
            rows = cross_server_similarity(events, pairs, hop, period, kind_filter, origin)
            cross_rows += [
                [r.server_a, r.server_b, r.hop, r.period.value, r.period_index, r.similarity]
                for r in rows
            ]
    writer.write_csv(
        "cross_server.csv",
        ["server_a", "server_b", "hop", "period", "index", "value"],
        cross_rows,
    )
    writer.write_metadata(
        "similarity",
        {
            "input": str(args.input),
            "period": args.period,
            "hops": args.hops,
            "merge": args.merge,
            "gap": args.gap,
            "pairs": args.pairs,
            "kind": args.kind,
            "top_labels": args.top_labels,
            "dump_graphs": args.dump_graphs,
        },
        {"corpus": _corpus_span(events), "servers": servers},
    )


def cmd_report(args: argparse.Namespace, writer: ArtifactWriter) -> None:
    """Run the full analysis pipeline into one artifact directory."""
    cmd_logon_stats(args, writer)
    cmd_activity(args, writer)
    cmd_rareness(args, writer)
    cmd_similarity(args, writer)
    writer.write_metadata("report", {"input": str(args.input), "meta": str(args.meta)})


# --------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="serverprof",
        description="Profile server behavior from audit event logs.",
    )
    parser.add_argument("--version", action="version", version=f"serverprof {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    default_out = os.environ.get(OUT_ENV, "out")

    def add_out(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default=default_out, help="output directory (env SERVERPROF_OUT)")

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus + manifest")
    p_synth.add_argument("--profile", required=True)
    p_synth.add_argument("--seed", type=int, default=None, help="override the profile seed")
    add_out(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_ingest = sub.add_parser("ingest", help="parse, filter, and re-emit a corpus")
    p_ingest.add_argument("--input", required=True)
    p_ingest.add_argument("--rules", default=None, help="filter rule JSON file")
    p_ingest.add_argument("--strict", action="store_true", help="abort on the first malformed line")
    add_out(p_ingest)
    p_ingest.set_defaults(func=cmd_ingest)

    p_logon = sub.add_parser("logon-stats", help="weekly logon statistics per category and role")
    p_logon.add_argument("--input", required=True)
    p_logon.add_argument("--meta", required=True, help="server metadata JSON file")
    add_out(p_logon)
    p_logon.set_defaults(func=cmd_logon_stats)

    p_act = sub.add_parser("activity", help="per-kind weekly activity counts")
    p_act.add_argument("--input", required=True)
    p_act.add_argument("--work-hours", default=None, help="e.g. 9-17 to add an in/out split")
    p_act.add_argument("--workdays", default=None, help="e.g. mon,tue,wed,thu,fri")
    add_out(p_act)
    p_act.set_defaults(func=cmd_activity)

    p_rare = sub.add_parser("rareness", help="rareness scores, unseen ratios, distribution")
    p_rare.add_argument("--input", required=True)
    p_rare.add_argument("--meta", required=True)
    p_rare.add_argument("--eq", type=int, choices=(1, 2), default=1)
    p_rare.add_argument("--window", type=int, default=9)
    p_rare.add_argument("--epoch", choices=("day", "week"), default="week")
    p_rare.add_argument("--grouping", choices=sorted(_GROUPING_FLAGS), default="same-type-location")
    p_rare.add_argument("--test-epoch", type=int, default=None, help="defaults to the last epoch")
    p_rare.add_argument("--fallback", choices=("future", "fail"), default="future")
    p_rare.add_argument("--bins", type=int, default=20)
    add_out(p_rare)
    p_rare.set_defaults(func=cmd_rareness)

    p_sim = sub.add_parser("similarity", help="sketch-histogram similarity series")
    p_sim.add_argument("--input", required=True)
    p_sim.add_argument("--period", choices=("day", "week"), default="week")
    p_sim.add_argument("--hops", default="0,1,2,3")
    p_sim.add_argument("--merge", type=int, default=None, help="merge N weeks into the reference")
    p_sim.add_argument("--gap", type=int, default=None, help="skip N weeks between compared weeks")
    p_sim.add_argument("--pairs", default=None, help="cross-server pairs a:b,c:d")
    p_sim.add_argument("--kind", default=None, help="restrict cross-server graphs to one kind")
    p_sim.add_argument("--top-labels", type=int, default=None,
                       help="only the N servers with the most distinct sketch labels")
    p_sim.add_argument("--dump-graphs", action="store_true",
                       help="write per-period edge lists under <out>/graphs/")
    add_out(p_sim)
    p_sim.set_defaults(func=cmd_similarity)

    p_rep = sub.add_parser("report", help="full pipeline: stats, rareness, similarity")
    p_rep.add_argument("--input", required=True)
    p_rep.add_argument("--meta", required=True)
    p_rep.add_argument("--eq", type=int, choices=(1, 2), default=1)
    p_rep.add_argument("--window", type=int, default=1)
    p_rep.add_argument("--epoch", choices=("day", "week"), default="week")
    p_rep.add_argument("--grouping", choices=sorted(_GROUPING_FLAGS), default="server")
    p_rep.add_argument("--test-epoch", type=int, default=None)
    p_rep.add_argument("--fallback", choices=("future", "fail"), default="future")
    p_rep.add_argument("--bins", type=int, default=20)
    p_rep.add_argument("--period", choices=("day", "week"), default="week")
    p_rep.add_argument("--hops", default="0,1,2")
    p_rep.add_argument("--merge", type=int, default=None)
    p_rep.add_argument("--gap", type=int, default=None)
    p_rep.add_argument("--pairs", default=None)
    p_rep.add_argument("--kind", default=None)
    p_rep.add_argument("--top-labels", type=int, default=None)
    p_rep.add_argument("--dump-graphs", action="store_true")
    p_rep.add_argument("--work-hours", default=None)
    p_rep.add_argument("--workdays", default=None)
    add_out(p_rep)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    writer = ArtifactWriter(Path(args.out))
    try:
        args.func(args, writer)
    except ConfigError as exc:
        writer.cleanup()
        print(f"serverprof: configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        writer.cleanup()
        print(f"serverprof: data error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        writer.cleanup()
        traceback.print_exc()
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
