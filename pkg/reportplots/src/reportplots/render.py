"""Render static figures from a serverprof CSV artifact directory.

Each figure family reads one documented CSV schema and produces one PNG.
Missing or empty CSVs skip their figure with a warning; malformed CSVs fail
that figure. Rendering never touches the inputs and is deterministic for a
fixed artifact directory.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

# ============================================================================
# Configuration
# ============================================================================

KIND_COLORS = {
    "process": "#3B82F6",
    "file": "#F97316",
    "network": "#10B981",
    "registry": "#8B5CF6",
}
FALLBACK_COLOR = "#6B7280"

FIGURE_DPI = 110
PNG_METADATA = {"Software": None}  # keep output bytes reproducible


def _color(kind: str) -> str:
    return KIND_COLORS.get(kind, FALLBACK_COLOR)


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: tuple[str, ...]
    output_name: str


FIGURES = [
    FigureSpec("logon-stats", ("logon_stats.csv",), "logon_stats.png"),
    FigureSpec("activity", ("activity_counts.csv",), "activity_counts.png"),
    FigureSpec("unseen-ratios", ("unseen_ratios.csv",), "unseen_ratios.png"),
    FigureSpec("score-histogram", ("score_histogram.csv",), "score_histogram.png"),
    FigureSpec("similarity-series", ("similarity_series.csv",), "similarity_series.png"),
    FigureSpec("cross-server", ("cross_server.csv",), "cross_server.png"),
]

FIGURE_IDS = [spec.figure_id for spec in FIGURES]


class FigureError(Exception):
    """A requested figure could not be rendered from its CSV."""


@dataclass
class FigureResult:
    figure_id: str
    path: Path
    rows: int
    bars: int = 0
    lines: int = 0
    points: int = 0


@dataclass
class RenderReport:
    rendered: dict[str, FigureResult] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed


def _warn(message: str) -> None:
    print(f"reportplots: warning: {message}", file=sys.stderr)


def _load_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in required if col not in header]
        if missing:
            raise FigureError(f"{path.name} lacks columns {missing}")
        try:
            return list(reader)
        except csv.Error as exc:
            raise FigureError(f"{path.name} is not parseable CSV: {exc}") from None


def _save(fig, out_path: Path) -> None:
    fig.savefig(out_path, dpi=FIGURE_DPI, metadata=PNG_METADATA)
    plt.close(fig)


# ============================================================================
# Figure families
# ============================================================================


def _render_logon_stats(rows: list[dict], out_path: Path) -> FigureResult:
    measures = [
        ("avg_logons_per_user", "logons per user"),
        ("avg_distinct_users", "distinct users per server"),
        ("avg_duration_minutes", "session minutes"),
    ]
    groups = sorted({(r["category"], r["user_role"]) for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(14, 4), sharex=True)
    n_lines = 0
    for ax, (column, label) in zip(axes, measures):
        for category, role in groups:
            series = sorted(
                (int(r["week_index"]), float(r[column]))
                for r in rows
                if r["category"] == category and r["user_role"] == role
            )
            if not series:
                continue
            ax.plot(
                [w for w, _ in series],
                [v for _, v in series],
                marker="o",
                markersize=3,
                label=f"cat {category} / {role}",
            )
            n_lines += 1
        ax.set_xlabel("week")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=7)
    fig.suptitle("Weekly logon statistics")
    fig.tight_layout()
    _save(fig, out_path)
    return FigureResult("logon-stats", out_path, rows=len(rows), lines=n_lines)


def _render_activity(rows: list[dict], out_path: Path) -> FigureResult:
    rows = [r for r in rows if r.get("segment", "all") == "all"]
    if not rows:
        raise FigureError("activity_counts.csv holds no 'all' segment rows")
    kinds = ("process", "file", "network", "registry")
    servers = sorted({r["server_id"] for r in rows})
    fig, axes = plt.subplots(2, 2, figsize=(12, 7), sharex=True)
    n_lines = 0
    for ax, kind in zip(axes.flat, kinds):
        for server in servers:
            series = sorted(
                (int(r["week_index"]), int(r[kind])) for r in rows if r["server_id"] == server
            )
            ax.plot([w for w, _ in series], [v for _, v in series], marker=".", label=server)
            n_lines += 1
        ax.set_title(kind)
        ax.set_xlabel("week")
        ax.set_ylabel("events")
        ax.grid(alpha=0.3)
    axes.flat[0].legend(fontsize=7)
    fig.suptitle("Weekly activity by operation kind")
    fig.tight_layout()
    _save(fig, out_path)
    return FigureResult("activity", out_path, rows=len(rows), lines=n_lines)


def _render_unseen_ratios(rows: list[dict], out_path: Path) -> FigureResult:
    kind_rows = [r for r in rows if r["scope"] == "kind"]
    server_rows = [r for r in rows if r["scope"] == "server"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(13, 4.5))
    n_bars = 0
    if kind_rows:
        names = [r["name"] for r in kind_rows]
        ax1.bar(names, [float(r["ratio"]) for r in kind_rows], color=[_color(n) for n in names])
        n_bars += len(kind_rows)
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("unseen ratio")
    ax1.set_title("by event kind")
    if server_rows:
        names = [r["name"] for r in server_rows]
        ax2.bar(names, [float(r["ratio"]) for r in server_rows], color=FALLBACK_COLOR)
        ax2.tick_params(axis="x", rotation=60, labelsize=7)
        n_bars += len(server_rows)
    ax2.set_ylim(0, 1.05)
    ax2.set_title("by server")
    fig.suptitle("Previously unseen events in the test epoch")
    fig.tight_layout()
    _save(fig, out_path)
    return FigureResult("unseen-ratios", out_path, rows=len(rows), bars=n_bars)


def _render_score_histogram(rows: list[dict], out_path: Path) -> FigureResult:
    kinds = sorted({r["kind"] for r in rows})
    fig, ax = plt.subplots(figsize=(10, 4.5))
    width = 1.0 / (len(kinds) + 1) if kinds else 1.0
    n_bars = 0
    for k_i, kind in enumerate(kinds):
        kind_rows = [r for r in rows if r["kind"] == kind]
        xs = [int(r["bin_index"]) + k_i * width for r in kind_rows]
        ax.bar(
            xs,
            [int(r["count"]) for r in kind_rows],
            width=width,
            color=_color(kind),
            label=kind,
        )
        n_bars += len(kind_rows)
    ax.set_xlabel("score bin")
    ax.set_ylabel("events")
    ax.set_title("Rareness score distribution")
    if kinds:
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)
    return FigureResult("score-histogram", out_path, rows=len(rows), bars=n_bars)


def _render_similarity_series(rows: list[dict], out_path: Path) -> FigureResult:
    hops = sorted({int(r["hop"]) for r in rows})
    fig, axes = plt.subplots(1, len(hops), figsize=(4.5 * len(hops), 4), squeeze=False)
    n_lines = 0
    n_points = 0
    for ax, hop in zip(axes[0], hops):
        hop_rows = [r for r in rows if int(r["hop"]) == hop]
        combos = sorted({(r["server_id"], r["series"]) for r in hop_rows})
        for server, series_kind in combos:
            series = sorted(
                (int(r["index"]), float(r["value"]))
                for r in hop_rows
                if r["server_id"] == server and r["series"] == series_kind
            )
            style = "-" if series_kind == "consecutive" else "--"
            ax.plot(
                [i for i, _ in series],
                [v for _, v in series],
                style,
                marker="o",
                markersize=3,
                label=f"{server} ({series_kind})",
            )
            n_lines += 1
            n_points += len(series)
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"{hop}-hop")
        ax.set_xlabel("period index")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("min-max similarity")
    axes[0][0].legend(fontsize=6)
    fig.suptitle("Sketch self-similarity per period")
    fig.tight_layout()
    _save(fig, out_path)
    return FigureResult("similarity-series", out_path, rows=len(rows), lines=n_lines, points=n_points)


def _render_cross_server(rows: list[dict], out_path: Path) -> FigureResult:
    hops = sorted({int(r["hop"]) for r in rows})
    fig, axes = plt.subplots(1, len(hops), figsize=(4.5 * len(hops), 4), squeeze=False)
    n_lines = 0
    n_points = 0
    for ax, hop in zip(axes[0], hops):
        hop_rows = [r for r in rows if int(r["hop"]) == hop]
        pairs = sorted({(r["server_a"], r["server_b"]) for r in hop_rows})
        for a, b in pairs:
            series = sorted(
                (int(r["index"]), float(r["value"]))
                for r in hop_rows
                if r["server_a"] == a and r["server_b"] == b
            )
            ax.plot(
                [i for i, _ in series],
                [v for _, v in series],
                marker="s",
                markersize=3,
                label=f"{a} vs {b}",
            )
            n_lines += 1
            n_points += len(series)
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"{hop}-hop")
        ax.set_xlabel("period index")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("min-max similarity")
    axes[0][0].legend(fontsize=6)
    fig.suptitle("Cross-server similarity")
    fig.tight_layout()
    _save(fig, out_path)
    return FigureResult("cross-server", out_path, rows=len(rows), lines=n_lines, points=n_points)


_RENDERERS = {
    "logon-stats": (_render_logon_stats, ("category", "user_role", "week_index")),
    "activity": (_render_activity, ("server_id", "week_index", "process", "file", "network", "registry")),
    "unseen-ratios": (_render_unseen_ratios, ("scope", "name", "ratio")),
    "score-histogram": (_render_score_histogram, ("kind", "bin_index", "count")),
    "similarity-series": (_render_similarity_series, ("server_id", "hop", "series", "index", "value")),
    "cross-server": (_render_cross_server, ("server_a", "server_b", "hop", "index", "value")),
}


# ============================================================================
# Entry point
# ============================================================================


def render(csv_dir: Path | str, out_dir: Path | str, figure_ids: list[str] | None = None) -> RenderReport:
    """Render the requested figure families (all by default) from csv_dir
    into out_dir; one PNG per figure."""
    csv_dir = Path(csv_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    requested = FIGURE_IDS if figure_ids is None else list(figure_ids)
    unknown = [f for f in requested if f not in FIGURE_IDS]
    if unknown:
        raise ValueError(f"unknown figure ids {unknown}; known: {FIGURE_IDS}")

    report = RenderReport()
    for spec in FIGURES:
        if spec.figure_id not in requested:
            continue
        source = csv_dir / spec.inputs[0]
        if not source.exists():
            report.skipped[spec.figure_id] = f"{spec.inputs[0]} not found"
            _warn(f"skipping {spec.figure_id}: {spec.inputs[0]} not found in {csv_dir}")
            continue
        renderer, required = _RENDERERS[spec.figure_id]
        try:
            rows = _load_rows(source, required)
            if not rows:
                report.skipped[spec.figure_id] = f"{spec.inputs[0]} is empty"
                _warn(f"skipping {spec.figure_id}: {spec.inputs[0]} has no data rows")
                continue
            result = renderer(rows, out_dir / spec.output_name)
        except FigureError as exc:
            report.failed[spec.figure_id] = str(exc)
            print(f"reportplots: error: {spec.figure_id}: {exc}", file=sys.stderr)
            continue
        report.rendered[spec.figure_id] = result
    return report
