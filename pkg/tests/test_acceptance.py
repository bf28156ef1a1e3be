"""Acceptance suite: one PASS/FAIL line per criterion, printed even when passing."""
import math
import random
import time

import numpy as np
import pytest

from conftest import cqf_chain, cqf_net, diamond, flow
from oracles import brute_hypercycle, smaller_common_multiple_exists, timeline_check

from cqfdip.flows import FlowSet
from cqfdip.report import (Scenario, build_flows, build_graph, build_network, observed_flow,
                           paper_scale, run_experiment2)
from cqfdip.scheduler import (CycleLedger, admissible, exact_schedule_small, flow_demand,
                              greedy_schedule)
from cqfdip.simulator import InterferenceSpec, run_best_effort, run_simulation, summarize
from cqfdip.timebase import (AdjacencyTiming, DomainConfig, SyncMode, align_cross, align_dip,
                             build_timed_network, compute_hypercycle)

DESK = Scenario()
LADDER = (0, 100, 400, 700)


@pytest.fixture
def verdict(capsys):
    def emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def desk_runs():
    g = build_graph(DESK)
    flows = build_flows(DESK, g)
    net = build_network(DESK, g, flows)
    schedule = greedy_schedule(net, flows, DESK.k_paths, DESK.shaping, DESK.path_selection)
    runs = {}
    for mbps in LADDER:
        spec = InterferenceSpec(mbps * 1e6, DESK.packet_bits, DESK.interference_seed,
                                burst_mean=DESK.burst_mean)
        t0 = time.perf_counter()
        sched = run_simulation(net, flows, schedule, spec, DESK.horizon)
        elapsed = time.perf_counter() - t0
        be = run_best_effort(net, flows, spec, DESK.horizon)
        runs[mbps] = (sched, be, elapsed)
    return g, net, flows, schedule, runs


def test_criterion_1_zero_jitter(desk_runs, verdict):
    g, net, flows, schedule, runs = desk_runs
    problems = []
    if schedule.n_accepted != len(flows):
        problems.append(f"{schedule.n_rejected} flows rejected")
    for mbps, (tr, _, elapsed) in runs.items():
        stats = summarize(tr)
        if tr.lost():
            problems.append(f"{mbps} Mbps: loss {tr.lost()}")
        if set(stats.per_flow) != set(flows.ids):
            problems.append(f"{mbps} Mbps: flows without deliveries")
        nonzero = [f for f, s in stats.per_flow.items() if s.variance != 0 or s.jitter != 0]
        if nonzero:
            problems.append(f"{mbps} Mbps: jitter on {len(nonzero)} flows")
        if stats.aggregate.beyond_deadline:
            problems.append(f"{mbps} Mbps: {stats.aggregate.beyond_deadline} deadline misses")
        if elapsed >= 60:
            problems.append(f"{mbps} Mbps: {elapsed:.1f} s")
        if len(tr.records) != DESK.horizon * len(flows):
            problems.append(f"{mbps} Mbps: {len(tr.records)} records")
    worst = max(e for _, _, e in runs.values())
    verdict(1, not problems,
            "; ".join(problems) or
            f"{len(flows)} flows x {DESK.horizon} hypercycles at {list(LADDER)} Mbps: variance 0, "
            f"no loss, no misses, slowest rate {worst:.1f} s")


def test_criterion_2_bound_soundness(desk_runs, verdict):
    g, net, flows, schedule, runs = desk_runs
    total = bad_bound = bad_deadline = below_wire = 0
    for tr, _, _ in runs.values():
        for r in tr.records:
            d = schedule[r.flow]
            total += 1
            bad_bound += r.delay_us > d.delay_bound
            bad_deadline += d.delay_bound > flows.get(r.flow).deadline
            wire = sum(g.link(a, b).prop_delay for a, b in zip(d.path, d.path[1:]))
            below_wire += r.delay_us < wire
    ok = total > 0 and bad_bound == bad_deadline == below_wire == 0
    verdict(2, ok, f"{total} packets: {bad_bound} above bound, {bad_deadline} bounds above "
                   f"deadline, {below_wire} below propagation sum")


def test_criterion_3_cqf_bounds(verdict):
    d = 25
    lines, ok = [], True
    for h in (1, 2, 3):
        net = cqf_net(cqf_chain(h), cycle=d, periods=(100,))
        rng = random.Random(h)
        fs = FlowSet([flow(f"f{i}", period=100, weight=rng.random() or 1.0, release=rng.randrange(4))
                      for i in range(30)])
        s = greedy_schedule(net, fs, shaping=False)
        tr = run_simulation(net, fs, s, InterferenceSpec(300e6, burst_mean=4), horizon=50, seed=h)
        delays = [r.delay_us for r in tr.records]
        lo, hi = (h - 1) * d, (h + 1) * d
        inside = all(lo <= x <= hi for x in delays)
        ok &= inside and len(delays) == 50 * s.n_accepted > 0 and tr.be_delivered > 0
        lines.append(f"h={h}: {len(delays)} delays in [{min(delays)}, {max(delays)}] "
                     f"vs [{lo}, {hi}]")
    verdict(3, ok, "; ".join(lines))


def test_criterion_4_alignment_oracle(verdict):
    rng = np.random.default_rng(20240601)
    configs = samples = late = loose = 0
    while configs < 1000:
        ns, nd = (int(v) for v in rng.integers(2, 13, size=2))
        same = configs % 3 == 0
        if same:
            nd = ns
        hc = math.lcm(ns, nd) * int(rng.integers(1, 8))
        src_len, dst_len = hc // ns, hc // nd
        prop = int(rng.integers(0, 4 * hc))
        hco = int(rng.integers(0, hc))
        x = int(rng.integers(0, ns))
        t = AdjacencyTiming("A", "B", hco, prop)
        phi = align_dip(x, src_len, ns, t) if same else align_cross(x, src_len, dst_len, hc, t)
        offsets = rng.integers(0, src_len * 1000, size=1000)
        offsets[:2] = (0, src_len * 1000 - 1)
        a, b = timeline_check(phi, x, src_len, dst_len, hc, prop, hco,
                              int(rng.integers(0, 10 * hc)), offsets)
        late += a
        loose += b
        configs += 1
        samples += offsets.size
    fig4 = align_dip(0, 10, 3, AdjacencyTiming("A", "B", 5, 12))
    fig5 = align_cross(1, 4, 5, 20, AdjacencyTiming("C", "D", 4, 5))
    ok = late == 0 and fig4 == 2 and fig5 == 3
    verdict(4, ok, f"{configs} adjacencies x 1000 departures ({samples} samples): {late} late "
                   f"arrivals, {loose} non-tight mappings; worked examples give {fig4} and {fig5}")


def test_criterion_5_best_effort_trend(desk_runs, verdict):
    g, net, flows, schedule, runs = desk_runs
    obs = observed_flow(DESK, flows)
    rows = []
    for mbps in LADDER:
        st = summarize(runs[mbps][1], DESK.deadline, flows=[obs]).per_flow[obs]
        rows.append((mbps, st.max, st.jitter, st.beyond_deadline))
    maxes = [r[1] for r in rows]
    jitters = [r[2] for r in rows]
    monotone = all(a <= b for a, b in zip(maxes, maxes[1:])) and \
        all(a <= b for a, b in zip(jitters, jitters[1:]))
    ok = monotone and rows[-1][3] >= 1
    verdict(5, ok, f"observed {obs}: " + ", ".join(
        f"{m} Mbps max {mx:.1f} us jitter {j:.1f} us beyond {b}" for m, mx, j, b in rows))


def _ordering(rep, levels):
    bad = []
    for load in levels:
        by = {r["strategy"]: r["rejected"] for r in rep.rows if r["load"] == load}
        if not by["joint"] <= by["no-path-selection"] <= by["no-shaping"]:
            bad.append(load)
    return bad


def test_criterion_6_admission_ordering(verdict):
    rep = run_experiment2(DESK)
    levels = DESK.load_levels
    bad = _ordering(rep, levels)
    first_ns = rep.first_rejecting_level("no-shaping")
    first_joint = rep.first_rejecting_level("joint")
    knee = first_ns is not None and (first_joint is None or first_ns < first_joint)
    series = "; ".join(f"{s}: {rep.rejected(s)}" for s in ("joint", "no-path-selection",
                                                           "no-shaping"))
    verdict(6, not bad and knee,
            f"loads {list(levels)} -> {series}; first rejection no-shaping at {first_ns}, "
            f"joint at {first_joint}" + (f"; order broken at {bad}" if bad else ""))


@pytest.mark.slow
def test_criterion_6_paper_scale_knees(request, verdict):
    if not request.config.getoption("--paper-scale"):
        pytest.skip("paper-scale run; enable with --paper-scale")
    sc = paper_scale()
    rep = run_experiment2(sc)
    bad = _ordering(rep, sc.load_levels)
    knees = {s: rep.first_rejecting_level(s) for s in ("joint", "no-path-selection", "no-shaping")}
    want = {"joint": 1725, "no-path-selection": 1700, "no-shaping": 1200}
    verdict(6, not bad and knees == want, f"first rejecting level {knees}, published {want}")


def _random_instance(rng, contention: bool):
    bw = rng.choice([24_000_000, 48_000_000, 72_000_000]) if contention else 10**9
    net = cqf_net(diamond(bw), cycle=25, periods=(50, 100))
    n = rng.randint(1, 6)
    fs = []
    for i in range(n):
        period = rng.choice([50, 100])
        fs.append(flow(f"f{i}", rng.choice(["s0", "s1"]), period=period,
                       bits=rng.choice([300, 500, 700]),
                       deadline=rng.randint(55, 200) if contention else 1000,
                       weight=round(rng.uniform(0.01, 1.0), 3),
                       release=rng.randrange(period // 25)))
    return net, fs


def _passes_admissible(net, fs, schedule):
    ledger = CycleLedger(net)
    for f in fs:
        d = schedule[f.id]
        if d.accepted:
            if not admissible(f, d.path, d.shifts, ledger):
                return False
            ledger.commit(flow_demand(net, f, d.path, d.shifts))
    return True


def test_criterion_7_greedy_vs_exact(verdict):
    rng = random.Random(77)
    worse = infeasible = 0
    strict = 0
    for _ in range(240):
        net, fs = _random_instance(rng, contention=True)
        assert len(net.graph.nodes) <= 5 and max(net.table.n_cycles.values()) <= 4
        g = greedy_schedule(net, fs)
        e = exact_schedule_small(net, fs)
        worse += e.objective < g.objective - 1e-12
        strict += e.objective > g.objective + 1e-12
        infeasible += not (_passes_admissible(net, fs, g) and _passes_admissible(net, fs, e))
    optimal_free = 0
    for _ in range(40):
        net, fs = _random_instance(rng, contention=False)
        g = greedy_schedule(net, fs)
        e = exact_schedule_small(net, fs)
        optimal_free += g.objective == pytest.approx(e.objective) and g.n_rejected == 0
    ok = worse == 0 and infeasible == 0 and optimal_free == 40
    verdict(7, ok, f"240 contended instances: exact < greedy {worse} times, exact > greedy "
                   f"{strict} times, {infeasible} infeasible schedules; contention-free class "
                   f"greedy optimal {optimal_free}/40")


def test_criterion_8_hypercycle(verdict):
    rng = random.Random(8)
    failures = []
    for _ in range(100):
        a, b, f = rng.randint(1, 60), rng.randint(1, 60), rng.randint(1, 1000)
        hc = compute_hypercycle([DomainConfig("cqf", a, SyncMode.PERFECT_TIME),
                                 DomainConfig("dip", b, SyncMode.FREQUENCY_ONLY)], [f],
                                min_cycles={}).hc_len
        if hc % a or hc % b or hc % f:
            failures.append((a, b, f, "not a common multiple"))
        elif smaller_common_multiple_exists((a, b, f), hc):
            failures.append((a, b, f, "not least"))
        elif brute_hypercycle([a, b, f]) != hc:
            failures.append((a, b, f, "brute force disagrees"))
    verdict(8, not failures, f"100 random triples, failures: {failures or 'none'}")


def test_paper_topology_schedules_every_flow(paper_graph):
    flows = build_flows(paper_scale(), paper_graph)
    net = build_timed_network(paper_graph, flow_periods=flows.periods)
    assert greedy_schedule(net, flows).n_rejected == 0
