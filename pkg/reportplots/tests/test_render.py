"""Figure rendering from fixture and pipeline-produced artifact directories."""

import csv
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from reportplots.cli import main
from reportplots.render import FIGURE_IDS, render


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture
def artifact_dir(tmp_path):
    """Small but complete artifact directory in the documented schemas."""
    art = tmp_path / "artifacts"
    art.mkdir()
    _write_csv(
        art / "logon_stats.csv",
        ["category", "user_role", "week_index", "avg_logons_per_user",
         "avg_distinct_users", "avg_duration_minutes"],
        [[1, "admin", w, 9.0 + w, 1.0, 8.0] for w in range(4)]
        + [[3, "standard", w, 170.0, 12.0, 4.0] for w in range(4)],
    )
    _write_csv(
        art / "activity_counts.csv",
        ["server_id", "week_index", "segment", "process", "file", "network", "registry"],
        [[sid, w, seg, 10, 60, 30, 5]
         for sid in ("sql-a", "dc-a") for w in range(4) for seg in ("all", "in", "out")],
    )
    _write_csv(
        art / "unseen_ratios.csv",
        ["scope", "name", "unseen", "units", "ratio"],
        [["kind", "file", 30, 50, 0.6], ["kind", "process", 5, 20, 0.25],
         ["server", "sql-a", 20, 40, 0.5], ["server", "dc-a", 15, 30, 0.5]],
    )
    _write_csv(
        art / "score_histogram.csv",
        ["kind", "bin_index", "bin_low", "bin_high", "count"],
        [["file", i, i / 20, (i + 1) / 20, i % 5] for i in range(20)],
    )
    _write_csv(
        art / "similarity_series.csv",
        ["server_id", "hop", "period", "series", "index", "value"],
        [[sid, hop, "week", "consecutive", i, 0.8 - 0.1 * hop]
         for sid in ("sql-a", "dc-a") for hop in (0, 1) for i in range(3)],
    )
    _write_csv(
        art / "cross_server.csv",
        ["server_a", "server_b", "hop", "period", "index", "value"],
        [["sql-a", "sql-b", hop, "week", i, 0.4] for hop in (0, 1) for i in range(4)],
    )
    return art


def test_complete_directory_renders_six_figures(artifact_dir, tmp_path):
    out = tmp_path / "figs"
    report = render(artifact_dir, out)
    assert report.ok
    assert report.skipped == {}
    assert sorted(report.rendered) == sorted(FIGURE_IDS)
    files = sorted(p.name for p in out.glob("*.png"))
    assert len(files) == 6
    for result in report.rendered.values():
        assert result.path.exists()
        assert result.path.stat().st_size > 0


def test_histogram_bar_count_equals_row_count(artifact_dir, tmp_path):
    report = render(artifact_dir, tmp_path / "figs", ["score-histogram"])
    result = report.rendered["score-histogram"]
    assert result.rows == 20
    assert result.bars == 20


def test_unseen_bar_count_equals_row_count(artifact_dir, tmp_path):
    report = render(artifact_dir, tmp_path / "figs", ["unseen-ratios"])
    result = report.rendered["unseen-ratios"]
    assert result.bars == result.rows == 4


def test_series_lengths_equal_row_counts(artifact_dir, tmp_path):
    report = render(artifact_dir, tmp_path / "figs")
    sim = report.rendered["similarity-series"]
    assert sim.points == sim.rows == 12
    assert sim.lines == 4  # 2 servers x 2 hops
    cross = report.rendered["cross-server"]
    assert cross.points == cross.rows == 8
    assert cross.lines == 2


def test_empty_similarity_csv_skipped_gracefully(artifact_dir, tmp_path, capsys):
    _write_csv(artifact_dir / "similarity_series.csv",
               ["server_id", "hop", "period", "series", "index", "value"], [])
    report = render(artifact_dir, tmp_path / "figs")
    assert report.ok
    assert "similarity-series" in report.skipped
    assert not (tmp_path / "figs" / "similarity_series.png").exists()
    assert "skipping similarity-series" in capsys.readouterr().err


def test_missing_csv_skips_with_warning(artifact_dir, tmp_path, capsys):
    (artifact_dir / "cross_server.csv").unlink()
    report = render(artifact_dir, tmp_path / "figs")
    assert report.ok
    assert "cross-server" in report.skipped
    assert "not found" in capsys.readouterr().err


def test_malformed_csv_fails_that_figure_only(artifact_dir, tmp_path):
    _write_csv(artifact_dir / "score_histogram.csv", ["wrong", "columns"], [[1, 2]])
    report = render(artifact_dir, tmp_path / "figs")
    assert not report.ok
    assert "score-histogram" in report.failed
    assert "logon-stats" in report.rendered  # others still render


def test_rendering_is_idempotent_and_input_preserving(artifact_dir, tmp_path):
    before = {p.name: p.read_bytes() for p in artifact_dir.glob("*.csv")}
    out = tmp_path / "figs"
    render(artifact_dir, out)
    first = {p.name: p.read_bytes() for p in out.glob("*.png")}
    render(artifact_dir, out)
    second = {p.name: p.read_bytes() for p in out.glob("*.png")}
    assert first == second
    assert {p.name: p.read_bytes() for p in artifact_dir.glob("*.csv")} == before


def test_unknown_figure_id_rejected(artifact_dir, tmp_path):
    with pytest.raises(ValueError):
        render(artifact_dir, tmp_path / "figs", ["nope"])


def test_cli_exit_codes(artifact_dir, tmp_path):
    assert main(["--input", str(artifact_dir), "--output", str(tmp_path / "f1")]) == 0
    assert main(["--input", str(artifact_dir), "--output", str(tmp_path / "f2"),
                 "--figures", "bogus"]) == 1
    _write_csv(artifact_dir / "logon_stats.csv", ["bad"], [[1]])
    assert main(["--input", str(artifact_dir), "--output", str(tmp_path / "f3")]) == 2


@pytest.mark.skipif(shutil.which("serverprof") is None, reason="serverprof CLI not installed")
def test_acceptance_render_from_pipeline_artifacts(tmp_path):
    """End-to-end: a corpus generated and analyzed through the serverprof CLI
    yields a complete artifact directory; every figure family renders with
    zero errors and element counts match the CSV row counts."""
    profile = {
        "weeks": 4,
        "seed": 3,
        "events_per_server_week": 150,
        "novelty_rate": {"file": 0.2, "process": 0.1, "network": 0.1, "registry": 0.2},
        "servers": [
            {"server_id": "sql-a", "service_name": "SQL", "location": "A", "category": 1},
            {"server_id": "sql-b", "service_name": "SQL", "location": "A", "category": 1},
        ],
        "logon_rates": {"1": {"admin": [8.0, 2.0, 7.0]}},
    }
    profile_path = tmp_path / "profile.json"
    profile_path.write_text(json.dumps(profile))
    meta_path = tmp_path / "servers.json"
    meta_path.write_text(json.dumps(profile["servers"]))
    corpus = tmp_path / "corpus"
    art = tmp_path / "artifacts"
    subprocess.run(
        ["serverprof", "synth", "--profile", str(profile_path), "--out", str(corpus)],
        check=True,
    )
    subprocess.run(
        ["serverprof", "report", "--input", str(corpus / "events.jsonl"),
         "--meta", str(meta_path), "--hops", "0,1", "--pairs", "sql-a:sql-b",
         "--out", str(art)],
        check=True,
    )
    out = tmp_path / "figs"
    report = render(art, out)
    assert report.ok
    assert report.failed == {}
    assert sorted(report.rendered) == sorted(FIGURE_IDS)

    def rows_of(name: str) -> int:
        with (art / name).open() as fh:
            return sum(1 for _ in csv.DictReader(fh))

    hist = report.rendered["score-histogram"]
    assert hist.bars == rows_of("score_histogram.csv")
    sim = report.rendered["similarity-series"]
    assert sim.points == rows_of("similarity_series.csv")
    cross = report.rendered["cross-server"]
    assert cross.points == rows_of("cross_server.csv")
