"""Acceptance gate: every primary criterion at its stated tolerance.

Each criterion prints one `[ACCEPTANCE] <name>: PASS|FAIL (t=...)` line; run
with `pytest tests/test_acceptance.py -v -s` to watch them. Runtime budgets
are asserted alongside the functional checks.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import pytest

from serverprof.epochs import Epoch, corpus_origin, epoch_index
from serverprof.events import EventKind, GroupingScheme, ServerMeta, UserRole
from serverprof.ingest import FilterAction, FilterRule, apply_filters, sessionize
from serverprof.provgraph import SketchHistogram, build_graph, is_acyclic, khop_histogram
from serverprof.rareness import (
    RarenessConfig,
    ReferenceIndex,
    chain_rareness,
    eq1_rareness,
    eq2_contextual,
    unseen_ratio,
)
from serverprof.similarity import minmax_similarity, period_histograms, similarity_series
from serverprof.stats import weekly_logon_stats
from serverprof.synth import RoleRates, SynthProfile, generate
from conftest import ORIGIN, at, mk_event
from oracles import (
    brute_chain,
    brute_eq1,
    brute_eq2,
    brute_minmax,
    brute_unseen_ratios,
)

KINDS = (EventKind.PROCESS, EventKind.FILE, EventKind.NETWORK, EventKind.REGISTRY)
SCHEMES = (
    GroupingScheme.SERVER_LEVEL,
    GroupingScheme.SAME_TYPE_AND_LOCATION,
    GroupingScheme.SAME_TYPE,
    GroupingScheme.ALL_SERVERS,
)


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.monotonic()
    try:
        yield
    except Exception:
        print(f"\n[ACCEPTANCE] {name}: FAIL (t={time.monotonic() - start:.2f}s)")
        raise
    elapsed = time.monotonic() - start
    print(f"\n[ACCEPTANCE] {name}: PASS (t={elapsed:.2f}s)")
    assert elapsed < budget_seconds, f"{name} exceeded its {budget_seconds}s budget"


def test_resolution_worked_example(one_server_meta):
    """Weekly epoch scores 0, daily epoch 1 - 9/63, within 1e-3."""
    with criterion("resolution-worked-example", budget_seconds=1.0):
        events = [mk_event(at(7 * w + 2, hours=10)) for w in range(10)]
        query = events[-1]
        weekly = ReferenceIndex(
            events, one_server_meta,
            RarenessConfig(9, Epoch.WEEK, GroupingScheme.SERVER_LEVEL), 9, ORIGIN,
        )
        assert abs(eq1_rareness(query, weekly).score - 0.0) <= 1e-3
        daily = ReferenceIndex(
            events, one_server_meta,
            RarenessConfig(63, Epoch.DAY, GroupingScheme.SERVER_LEVEL), 65, ORIGIN,
        )
        assert abs(eq1_rareness(query, daily).score - (1 - 9 / 63)) <= 1e-3


def _oracle_profile(seed: int) -> SynthProfile:
    return SynthProfile(
        weeks=4,
        servers=[
            ServerMeta("sql-a", "SQL", "A", 1),
            ServerMeta("sql-b", "SQL", "A", 1),
            ServerMeta("dc-a", "DC", "B", 3),
        ],
        events_per_server_week=200,
        core_vocabulary={
            EventKind.FILE: 40,
            EventKind.PROCESS: 25,
            EventKind.NETWORK: 25,
            EventKind.REGISTRY: 15,
        },
        novelty_rate={k: 0.1 + 0.02 * (seed % 3) for k in KINDS},
        shared_vocabulary_fraction=0.3,
        logon_rates={},
        rng_seed=seed,
    )


def _plant_chain(events: list, seed: int) -> tuple:
    """Append a deterministic two-event chain pattern so chain scores are
    non-degenerate: e1 spawns a stage binary, e2 is the stage writing out."""
    rnd = random.Random(seed)
    present1 = sorted(rnd.sample(range(3), 2))  # weeks where the exact e1 triple occurs
    events = list(events)
    for w in range(3):
        child = "C:\\stage.exe" if w in present1 else f"C:\\other{w}.exe"
        events.append(
            mk_event(at(7 * w, hours=23), server="sql-a", kind=EventKind.PROCESS,
                     subject="C:\\loader.exe", relation="spawn", obj=child)
        )
        target = "C:\\out.dat" if w % 2 == 0 else "C:\\alt.dat"
        events.append(
            mk_event(at(7 * w, hours=23, minutes=30), server="sql-a",
                     subject="C:\\stage.exe", relation="write", obj=target)
        )
    e1 = mk_event(at(21), server="sql-a", kind=EventKind.PROCESS,
                  subject="C:\\loader.exe", relation="spawn", obj="C:\\stage.exe")
    e2 = mk_event(at(21, hours=1), server="sql-a",
                  subject="C:\\stage.exe", relation="write", obj="C:\\out.dat")
    return events, e1, e2


def test_oracle_equivalence_on_seeded_corpora(one_server_meta):
    """eq1, eq2, chain, unseen_ratio, and min-max similarity agree with the
    brute-force implementations to 1e-12 on 20 seeded corpora."""
    with criterion("oracle-equivalence-20-corpora", budget_seconds=60.0):
        for seed in range(20):
            profile = _oracle_profile(seed)
            generated, _ = generate(profile)
            ops = [e for e in generated if e.kind in KINDS]
            assert len(ops) <= 50_000
            events, e1, e2 = _plant_chain(ops, seed)
            scheme = SCHEMES[seed % 4]
            window, test_epoch = 2, 3
            cfg = RarenessConfig(window, Epoch.WEEK, scheme)
            index = ReferenceIndex(events, profile.servers, cfg, test_epoch, ORIGIN)
            test_slice = [
                e for e in events if epoch_index(e.ts, ORIGIN, Epoch.WEEK) == test_epoch
            ]

            rnd = random.Random(1000 + seed)
            sample = rnd.sample(test_slice, min(80, len(test_slice)))
            for q in sample:
                got = eq1_rareness(q, index).score
                want = brute_eq1(q, events, profile.servers, scheme.value,
                                 window, "week", test_epoch, ORIGIN)
                assert abs(got - want) <= 1e-12
                got2 = eq2_contextual(q, index).score
                want2 = brute_eq2(q, events, profile.servers, scheme.value,
                                  window, "week", test_epoch, ORIGIN)
                assert abs(got2 - want2) <= 1e-12

            got_chain = chain_rareness(e1, e2, index)
            want_chain = brute_chain(e1, e2, events, profile.servers, scheme.value,
                                     window, "week", test_epoch, ORIGIN)
            assert abs(got_chain - want_chain) <= 1e-12
            assert got_chain < 1.0  # planted pattern keeps the chain non-degenerate

            ratios = unseen_ratio(test_slice, index)
            want_kind, want_server = brute_unseen_ratios(
                test_slice, events, profile.servers, scheme.value,
                window, "week", test_epoch, ORIGIN,
            )
            assert set(want_kind) == {k.value for k in ratios.per_kind}
            for kind, ratio in ratios.per_kind.items():
                assert abs(ratio - want_kind[kind.value]) <= 1e-12
            for sid, ratio in ratios.per_server.items():
                assert abs(ratio - want_server[sid]) <= 1e-12

            hists = period_histograms(events, "sql-a", Epoch.WEEK, 1, ORIGIN)
            for i in range(len(hists) - 1):
                got_sim = minmax_similarity(hists[i], hists[i + 1])
                want_sim = brute_minmax(hists[i].labels, hists[i + 1].labels)
                assert abs(got_sim - want_sim) <= 1e-12


def test_hop_count_trend_on_drifting_corpora():
    """Mean consecutive-week similarity never increases from hop 0 to hop 3
    on drifting corpora, for at least 19 of 20 seeds."""
    with criterion("hop-count-trend", budget_seconds=120.0):
        passes = 0
        for seed in range(20):
            profile = SynthProfile(
                weeks=6,
                servers=[ServerMeta("a", "APP", "A", 1), ServerMeta("b", "APP", "A", 1)],
                events_per_server_week=200,
                novelty_rate={k: 0.1 + 0.01 * (seed % 5) for k in KINDS},
                shared_vocabulary_fraction=0.4,
                logon_rates={},
                rng_seed=seed,
            )
            events, _ = generate(profile)
            means = []
            for hop in range(4):
                points = []
                for sid in ("a", "b"):
                    series = similarity_series(events, sid, Epoch.WEEK, hop, ORIGIN)
                    points += [p.similarity for p in series.points]
                means.append(sum(points) / len(points))
            if all(means[i] >= means[i + 1] for i in range(3)):
                passes += 1
        assert passes >= 19, f"only {passes}/20 seeds were monotone"


def _grouping_meta() -> list[ServerMeta]:
    metas = []
    for s, service in enumerate(("SQL", "WEB", "DC", "EX", "APP")):
        for i in range(4):
            location = "A" if i < 2 else "B"
            metas.append(ServerMeta(f"{service.lower()}-{i}", service, location, (s % 3) + 1))
    return metas


def test_grouping_trend_mostly_disjoint_vocabularies():
    """Mean frequency rareness never decreases along ServerLevel ->
    SameTypeAndLocation -> SameType -> AllServers for >=19 of 20 seeds, and
    the AllServers mean stays at or above 0.95 at <=5% vocabulary overlap."""
    with criterion("grouping-trend", budget_seconds=120.0):
        metas = _grouping_meta()
        passes = 0
        all_servers_means = []
        for seed in range(20):
            profile = SynthProfile(
                weeks=4,
                servers=metas,
                events_per_server_week=120,
                core_vocabulary={
                    EventKind.FILE: 25,
                    EventKind.PROCESS: 15,
                    EventKind.NETWORK: 15,
                    EventKind.REGISTRY: 10,
                },
                novelty_rate={k: 0.15 for k in KINDS},
                shared_vocabulary_fraction=0.04,
                logon_rates={},
                rng_seed=100 + seed,
            )
            events, _ = generate(profile)
            test_epoch, window = 3, 2
            test_slice = [
                e for e in events if epoch_index(e.ts, ORIGIN, Epoch.WEEK) == test_epoch
            ]
            means = []
            for scheme in SCHEMES:
                cfg = RarenessConfig(window, Epoch.WEEK, scheme)
                index = ReferenceIndex(events, metas, cfg, test_epoch, ORIGIN)
                seen = set()
                scores = []
                for q in test_slice:
                    unit = (q.server_id, q.tuple_key())
                    if unit in seen:
                        continue
                    seen.add(unit)
                    scores.append(eq1_rareness(q, index).score)
                means.append(sum(scores) / len(scores))
            if all(means[i] <= means[i + 1] for i in range(3)):
                passes += 1
            all_servers_means.append(means[-1])
        assert passes >= 19, f"only {passes}/20 seeds were monotone"
        assert all(m >= 0.95 for m in all_servers_means), min(all_servers_means)


def test_logon_estimator_recovery():
    """Category-3 admin rates (247.15 logons/user/week, 4.02 minutes) with
    100 user replicas over 10 weeks are each recovered within 10%."""
    with criterion("logon-estimator-recovery", budget_seconds=30.0):
        metas = [ServerMeta("dc-0", "DC", "A", 3)]
        profile = SynthProfile(
            weeks=10,
            servers=metas,
            events_per_server_week=0,
            logon_rates={3: {UserRole.ADMIN: RoleRates(247.15, 100.0, 4.02)}},
            rng_seed=31,
        )
        events, _ = generate(profile)
        sessions = sessionize(events).sessions
        rows = weekly_logon_stats(sessions, metas, corpus_origin(events))
        admin = [r for r in rows if r.user_role is UserRole.ADMIN]
        assert len(admin) == 10
        logons = sum(r.avg_logons_per_user for r in admin) / len(admin)
        distinct = sum(r.avg_distinct_users for r in admin) / len(admin)
        duration = sum(r.avg_duration_minutes for r in admin) / len(admin)
        assert abs(logons - 247.15) / 247.15 <= 0.10, logons
        assert abs(distinct - 100.0) / 100.0 <= 0.10, distinct
        assert abs(duration - 4.02) / 4.02 <= 0.10, duration


def test_structural_invariants():
    """Acyclicity of every built graph; byte-identical histograms across
    repeats and 4-way parallel execution; min-max property suite over 1,000
    random histogram pairs."""
    with criterion("structural-invariants", budget_seconds=30.0):
        rnd = random.Random(77)
        graphs = []
        for g in range(30):
            events = [
                mk_event(
                    at(0, minutes=i),
                    subject=f"p{rnd.randrange(6)}",
                    relation=rnd.choice(("read", "write", "modify", "create")),
                    obj=f"f{rnd.randrange(9)}",
                )
                for i in range(60)
            ]
            graphs.append(build_graph(events))
        profile = SynthProfile(
            weeks=2,
            servers=[ServerMeta("x", "X", "A", 1)],
            events_per_server_week=300,
            novelty_rate={k: 0.2 for k in KINDS},
            logon_rates={},
            rng_seed=3,
        )
        synth_events, _ = generate(profile)
        for week in range(2):
            bucket = [
                e for e in synth_events
                if e.kind in KINDS and epoch_index(e.ts, ORIGIN, Epoch.WEEK) == week
            ]
            graphs.append(build_graph(bucket))
        assert all(is_acyclic(g) for g in graphs)

        jobs = [(g, hop) for g in graphs for hop in range(4)]
        serial = [khop_histogram(g, hop).canonical_bytes() for g, hop in jobs]
        repeat = [khop_histogram(g, hop).canonical_bytes() for g, hop in jobs]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(pool.map(lambda job: khop_histogram(*job).canonical_bytes(), jobs))
        assert serial == repeat == parallel

        labels = [f"l{i}" for i in range(16)]
        for _ in range(1000):
            c1 = {l: rnd.randrange(1, 20) for l in rnd.sample(labels, rnd.randrange(0, 10))}
            c2 = {l: rnd.randrange(1, 20) for l in rnd.sample(labels, rnd.randrange(0, 10))}
            h1 = SketchHistogram(1, c1, sum(c1.values()))
            h2 = SketchHistogram(1, c2, sum(c2.values()))
            s = minmax_similarity(h1, h2)
            assert 0.0 <= s <= 1.0
            assert s == minmax_similarity(h2, h1)
            assert (s == 1.0) == (c1 == c2)


def test_filter_accounting_exact():
    """Per-rule drop counts equal counts predicted from the manifest."""
    with criterion("filter-accounting", budget_seconds=10.0):
        profile = SynthProfile(
            weeks=3,
            servers=[ServerMeta("a", "A", "L", 1), ServerMeta("b", "B", "L", 2)],
            events_per_server_week=400,
            novelty_rate={k: 0.1 for k in KINDS},
            logon_rates={},
            rng_seed=9,
        )
        events, manifest = generate(profile)
        rules = [
            FilterRule("drop-registry", FilterAction.EXCLUDE, kind=EventKind.REGISTRY),
            FilterRule("drop-network", FilterAction.EXCLUDE, kind=EventKind.NETWORK),
        ]
        report = apply_filters(rules, events)

        def predicted(kind: EventKind) -> int:
            return sum(
                weeks[w][kind.value]
                for weeks in manifest.event_counts.values()
                for w in weeks
            )

        assert report.drops_by_rule["drop-registry"] == predicted(EventKind.REGISTRY)
        assert report.drops_by_rule["drop-network"] == predicted(EventKind.NETWORK)
        assert len(report.kept) == report.total_in - predicted(EventKind.REGISTRY) - predicted(
            EventKind.NETWORK
        )
