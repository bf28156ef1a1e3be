"""Scenario configuration and the two experiment harnesses.

Experiment 1 compares the end-to-end delay of one observed flow when the
flow set is scheduled versus sent best effort, over a ladder of
interference rates. Experiment 2 counts rejected flows per load level for
three scheduling strategies.
"""
from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .exceptions import CqfDipError, ParseError
from .flows import FlowSet, generate_flows, load_flows
from .scheduler import Schedule, greedy_schedule
from .simulator import (InterferenceSpec, SimTrace, delay_cdf, run_best_effort, run_simulation,
                        summarize)
from .timebase import TimedNetwork, build_timed_network, default_domains, load_timings
from .topology import (NetworkGraph, access_of, generate_core, generate_hierarchical,
                       load_topology)

STRATEGIES = ("joint", "no-path-selection", "no-shaping")


class ReportError(CqfDipError, OSError):
    pass


@dataclass(frozen=True)
class Scenario:
    core: str = "desk8"
    n_access: int = 4
    cqf_per_access: int = 2
    hosts_per_access: int = 2
    topology: str | None = None
    timings: str | None = None
    flows: str | None = None
    per_access: int = 50
    rate_bps: int = 500_000
    period: int = 1000
    deadline: int = 1000
    cqf_cycle: int = 25
    dip_cycle: int = 10
    k_paths: int = 3
    shaping: bool = True
    path_selection: bool = True
    ladder_mbps: tuple[float, ...] = (0, 100, 400, 700)
    burst_mean: float = 8.0
    packet_bits: int = 12_000
    horizon: int = 100
    seed: int = 1
    interference_seed: int = 7
    observed: str | None = None
    load_levels: tuple[int, ...] = (0, 800, 1200, 1600, 1800, 2000)

    def __post_init__(self):
        if not self.ladder_mbps:
            raise ValueError("interference ladder must not be empty")
        if list(self.load_levels) != sorted(self.load_levels):
            raise ValueError("load levels must be ascending")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for name in ("topology", "timings", "flows"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"{name} file not found: {p}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ladder_mbps"] = list(self.ladder_mbps)
        d["load_levels"] = list(self.load_levels)
        return d


PAPER_SCALE = dict(core="atlanta15", n_access=10, per_access=200,
                   ladder_mbps=(131, 229, 534, 698),
                   load_levels=(800, 1000, 1200, 1500, 1700, 1725, 1800))


def paper_scale(base: Scenario | None = None) -> Scenario:
    return replace(base or Scenario(), **PAPER_SCALE)


def _coerce(name: str, typ, raw: str):
    typ = str(typ)
    if "tuple[float" in typ:
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if "tuple[int" in typ:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if typ == "bool":
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if typ.startswith("int"):
        return int(raw)
    if typ.startswith("float"):
        return float(raw)
    return None if raw.lower() == "none" else raw


def parse_scenario(text: str, path=None, base: Scenario | None = None) -> Scenario:
    """``key = value`` lines; lists are comma or space separated."""
    types = {f.name: f.type for f in fields(Scenario)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ParseError(f"unknown scenario key {key!r}", path, lineno)
        try:
            values[key] = _coerce(key, types[key], val)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", path, lineno) from None
    if path is not None:
        root = Path(path).parent
        for key in ("topology", "timings", "flows"):
            if values.get(key) is not None:
                values[key] = str(root / values[key])
    return replace(base or Scenario(), **values)


def load_scenario(path, base: Scenario | None = None) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path, base)


# ------------------------------------------------------------------ building

def build_graph(sc: Scenario) -> NetworkGraph:
    if sc.topology is not None:
        return load_topology(sc.topology)
    return generate_hierarchical(generate_core(sc.core), sc.n_access, sc.cqf_per_access,
                                 hosts_per_access=sc.hosts_per_access)


def build_flows(sc: Scenario, g: NetworkGraph, per_access: int | None = None) -> FlowSet:
    if sc.flows is not None and per_access is None:
        return load_flows(sc.flows)
    return generate_flows(g, sc.per_access if per_access is None else per_access, sc.rate_bps,
                          sc.period, sc.deadline, sc.seed, sc.cqf_cycle)


def build_network(sc: Scenario, g: NetworkGraph, flows: FlowSet) -> TimedNetwork:
    timings = None if sc.timings is None else load_timings(sc.timings, g)
    return build_timed_network(g, default_domains(g, sc.cqf_cycle, sc.dip_cycle),
                               flows.periods, timings)


def observed_flow(sc: Scenario, flows: FlowSet) -> str:
    """The configured observed flow, else a seeded pick among flows of the first access network."""
    if sc.observed is not None:
        if sc.observed not in flows:
            raise ValueError(f"observed flow {sc.observed!r} not in flow set")
        return sc.observed
    prefixes = sorted({access_of(f.src) for f in flows if access_of(f.src)})
    pool = [f.id for f in flows if prefixes and access_of(f.src) == prefixes[0]] or flows.ids
    if not pool:
        raise ValueError("no flows to observe")
    return random.Random(sc.seed).choice(pool)


# ---------------------------------------------------------------- experiments

@dataclass
class Exp1Report:
    scenario: Scenario
    observed: str
    schedule: Schedule
    rows: list[dict] = field(default_factory=list)
    cdf: list[tuple[str, float, float, float]] = field(default_factory=list)
    traces: dict[str, SimTrace] = field(default_factory=dict)

    def row(self, mode: str, rate_mbps: float) -> dict:
        for r in self.rows:
            if r["mode"] == mode and r["rate_mbps"] == rate_mbps:
                return r
        raise KeyError((mode, rate_mbps))


@dataclass
class Exp2Report:
    scenario: Scenario
    rows: list[dict] = field(default_factory=list)

    def rejected(self, strategy: str) -> list[int]:
        return [r["rejected"] for r in self.rows if r["strategy"] == strategy]

    def first_rejecting_level(self, strategy: str) -> int | None:
        for r in self.rows:
            if r["strategy"] == strategy and r["rejected"] > 0:
                return r["load"]
        return None


def _interference(sc: Scenario, mbps: float) -> InterferenceSpec:
    return InterferenceSpec(rate_bps=mbps * 1e6, packet_bits=sc.packet_bits,
                            seed=sc.interference_seed, burst_mean=sc.burst_mean)


def _trace_row(mode, mbps, trace, observed, schedule=None) -> dict:
    obs = summarize(trace, flows=[observed])
    agg = summarize(trace)
    row = {"mode": mode, "rate_mbps": mbps,
           "observed": obs.per_flow[observed].as_dict() if observed in obs.per_flow else None,
           "aggregate": agg.aggregate.as_dict(),
           "max_flow_jitter_us": max((s.jitter for s in agg.per_flow.values()), default=0.0),
           "emitted": sum(trace.emitted.values()), "lost": sum(trace.lost().values()),
           "be_emitted": trace.be_emitted, "be_delivered": trace.be_delivered}
    if schedule is not None:
        bounds = {fid: d.delay_bound for fid, d in schedule.decisions.items() if d.accepted}
        row["bound_violations"] = sum(r.delay_us > bounds[r.flow] for r in trace.records)
        row["late_arrivals"] = trace.late_arrivals
        row["cqf_out_of_cycle"] = trace.cqf_out_of_cycle
    return row


def run_experiment1(sc: Scenario, keep_traces: bool = True) -> Exp1Report:
    g = build_graph(sc)
    flows = build_flows(sc, g)
    net = build_network(sc, g, flows)
    schedule = greedy_schedule(net, flows, sc.k_paths, sc.shaping, sc.path_selection)
    obs = observed_flow(sc, flows)
    rep = Exp1Report(sc, obs, schedule)
    for mbps in sc.ladder_mbps:
        spec = _interference(sc, mbps)
        runs = (("scheduled", run_simulation(net, flows, schedule, spec, sc.horizon)),
                ("besteffort", run_best_effort(net, flows, spec, sc.horizon)))
        for mode, trace in runs:
            rep.rows.append(_trace_row(mode, mbps, trace, obs,
                                       schedule if mode == "scheduled" else None))
            delays = [r.delay_ns for r in trace.records if r.flow == obs]
            rep.cdf.extend((mode, mbps, d, p) for d, p in delay_cdf(delays))
            if keep_traces:
                rep.traces[f"{mode}_{mbps:g}"] = trace
    return rep


def strategy_flags(strategy: str) -> tuple[bool, bool]:
    """(shaping, path_selection) for a named strategy."""
    if strategy == "joint":
        return True, True
    if strategy == "no-path-selection":
        return True, False
    if strategy == "no-shaping":
        return False, True
    raise ValueError(f"unknown strategy {strategy!r}")


def run_experiment2(sc: Scenario, load_levels=None) -> Exp2Report:
    levels = tuple(sc.load_levels if load_levels is None else load_levels)
    if list(levels) != sorted(levels):
        raise ValueError("load levels must be ascending")
    g = build_graph(sc)
    rep = Exp2Report(replace(sc, load_levels=levels))
    for load in levels:
        flows = build_flows(sc, g, load)
        net = build_network(sc, g, flows)
        for strategy in STRATEGIES:
            shaping, path_sel = strategy_flags(strategy)
            s = greedy_schedule(net, flows, sc.k_paths, shaping, path_sel)
            rep.rows.append({"load": load, "strategy": strategy, "flows": len(flows),
                             "accepted": s.n_accepted, "rejected": s.n_rejected,
                             "objective": round(s.objective, 9)})
    return rep


# ------------------------------------------------------------------- emission

def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def report_files(report) -> dict[str, str]:
    """File name -> content for a report; pure function of the report."""
    files = {}
    if isinstance(report, Exp1Report):
        files["exp1_stats.json"] = _dump({"scenario": report.scenario.as_dict(),
                                          "observed_flow": report.observed,
                                          "rows": report.rows})
        files["exp1_cdf.csv"] = _csv(
            [("mode", "rate_mbps", "delay_us", "cdf")]
            + [(m, f"{r:g}", f"{d:.3f}", f"{p:.6f}") for m, r, d, p in report.cdf])
        files["exp1_schedule.json"] = report.schedule.to_json()
        for name, trace in sorted(report.traces.items()):
            files[f"exp1_trace_{name}.csv"] = trace.to_csv()
    elif isinstance(report, Exp2Report):
        files["exp2_stats.json"] = _dump({"scenario": report.scenario.as_dict(),
                                          "rows": report.rows})
        levels = sorted({r["load"] for r in report.rows})
        table = [("load",) + tuple(s.replace("-", "_") for s in STRATEGIES)]
        for load in levels:
            by = {r["strategy"]: r["rejected"] for r in report.rows if r["load"] == load}
            table.append((load,) + tuple(by[s] for s in STRATEGIES))
        files["exp2_rejections.csv"] = _csv(table)
    else:
        raise TypeError(f"not a report: {type(report).__name__}")
    return files


def emit_report(report, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in report_files(report).items():
            p = out / name
            p.write_text(text, encoding="utf-8")
            written.append(p)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc.strerror or exc}") from exc
    return written
