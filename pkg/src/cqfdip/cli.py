"""Command-line entry point: ``cqfdip {schedule,simulate,exp1,exp2,validate}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .exceptions import CqfDipError
from .report import (Scenario, build_flows, build_graph, build_network, emit_report,
                     load_scenario, paper_scale, run_experiment1, run_experiment2)
from .scheduler import Schedule, greedy_schedule
from .simulator import InterferenceSpec, run_best_effort, run_simulation, summarize
from .topology import validate
from .validation import check_flowset

_SUFFIX = {"k": 10**3, "m": 10**6, "g": 10**9}


def parse_rate(text: str) -> int:
    """``500k`` / ``1.5M`` / ``500000`` -> bits per second."""
    t = text.strip().lower().removesuffix("bps")
    mult = _SUFFIX.get(t[-1:], 1)
    if mult != 1:
        t = t[:-1]
    try:
        value = float(t) * mult
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate {text!r}") from None
    if value <= 0 or value != int(value):
        raise argparse.ArgumentTypeError(f"rate must be a positive whole number of bit/s: {text!r}")
    return int(value)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file of key = value lines")
    common.add_argument("--paper-scale", action="store_true",
                        help="15-router core, 10 access networks, 200 flows each")
    common.add_argument("--out", help="output directory")
    common.add_argument("--topology", help="topology file")
    common.add_argument("--gen-core", choices=("atlanta15", "desk8"))
    common.add_argument("--n-access", type=int)
    common.add_argument("--timings", help="hypercycle offset file")
    common.add_argument("--flows", help="flow file")
    common.add_argument("--gen-flows", type=int, metavar="N", help="generate N flows per access network")
    common.add_argument("--rate", type=parse_rate, help="flow rate, e.g. 500k")
    common.add_argument("--seed", type=int)
    common.add_argument("--no-shaping", action="store_true")
    common.add_argument("--no-path-selection", action="store_true")
    common.add_argument("--k-paths", type=int)
    common.add_argument("--interference-mbps", type=float, nargs="+",
                        help="interference rate(s) per access network")
    common.add_argument("--horizon", type=int, help="hypercycles to simulate")

    p = argparse.ArgumentParser(prog="cqfdip", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("schedule", parents=[common], help="compute a greedy joint schedule")
    sim = sub.add_parser("simulate", parents=[common], help="run the packet-level simulator")
    sim.add_argument("--mode", choices=("scheduled", "besteffort"), default="scheduled")
    sim.add_argument("--schedule", help="schedule JSON (default: compute one)")
    sub.add_parser("exp1", parents=[common], help="scheduled vs best-effort delay experiment")
    e2 = sub.add_parser("exp2", parents=[common], help="flow rejection per strategy and load")
    e2.add_argument("--load-levels", type=_int_list, help="flows per access network, ascending")
    sub.add_parser("validate", parents=[common], help="check topology and flows")
    return p


def scenario_from_args(args) -> Scenario:
    sc = paper_scale() if args.paper_scale else Scenario()
    if args.config:
        sc = load_scenario(args.config, sc)
    over = {}
    if args.topology:
        over["topology"] = args.topology
    if args.gen_core:
        over["core"] = args.gen_core
    if args.n_access is not None:
        over["n_access"] = args.n_access
    if args.timings:
        over["timings"] = args.timings
    if args.flows:
        over["flows"] = args.flows
    if args.gen_flows is not None:
        over["per_access"] = args.gen_flows
        over["flows"] = None
    if args.rate is not None:
        over["rate_bps"] = args.rate
    if args.seed is not None:
        over["seed"] = args.seed
    if args.no_shaping:
        over["shaping"] = False
    if args.no_path_selection:
        over["path_selection"] = False
    if args.k_paths is not None:
        over["k_paths"] = args.k_paths
    if args.interference_mbps:
        over["ladder_mbps"] = tuple(args.interference_mbps)
    if args.horizon is not None:
        over["horizon"] = args.horizon
    if getattr(args, "load_levels", None):
        over["load_levels"] = args.load_levels
    return replace(sc, **over)


def _write(out: str | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text, encoding="utf-8")


def _cmd_schedule(sc: Scenario, args) -> int:
    g = build_graph(sc)
    flows = build_flows(sc, g)
    net = build_network(sc, g, flows)
    s = greedy_schedule(net, flows, sc.k_paths, sc.shaping, sc.path_selection)
    _write(args.out, "schedule.json", s.to_json())
    print(f"accepted {s.n_accepted}, rejected {s.n_rejected}, objective {s.objective:.6f}",
          file=sys.stderr)
    return 0


def _cmd_simulate(sc: Scenario, args) -> int:
    g = build_graph(sc)
    flows = build_flows(sc, g)
    net = build_network(sc, g, flows)
    spec = InterferenceSpec(sc.ladder_mbps[0] * 1e6 if args.interference_mbps else 0.0,
                            sc.packet_bits, sc.interference_seed, burst_mean=sc.burst_mean)
    if args.mode == "scheduled":
        if args.schedule:
            s = Schedule.from_json(Path(args.schedule).read_text(encoding="utf-8"))
        else:
            s = greedy_schedule(net, flows, sc.k_paths, sc.shaping, sc.path_selection)
        trace = run_simulation(net, flows, s, spec, sc.horizon)
    else:
        trace = run_best_effort(net, flows, spec, sc.horizon)
    stats = summarize(trace)
    payload = stats.as_dict()
    payload.update(mode=trace.mode, lost=sum(trace.lost().values()),
                   late_arrivals=trace.late_arrivals, be_emitted=trace.be_emitted,
                   be_delivered=trace.be_delivered)
    if args.out:
        _write(args.out, "trace.csv", trace.to_csv())
        _write(args.out, "stats.json", json.dumps(payload, indent=1, sort_keys=True) + "\n")
    a = stats.aggregate
    print(f"{trace.mode}: {a.count} packets, mean {a.mean:.3f} us, max {a.max:.3f} us, "
          f"beyond deadline {a.beyond_deadline}")
    return 0


def _cmd_exp1(sc: Scenario, args) -> int:
    rep = run_experiment1(sc)
    emit_report(rep, args.out or "out")
    print(f"observed flow {rep.observed}")
    print(f"{'mode':<11} {'rate_mbps':>9} {'mean_us':>9} {'max_us':>9} {'jitter_us':>9} {'beyond':>6}")
    for r in rep.rows:
        o = r["observed"]
        print(f"{r['mode']:<11} {r['rate_mbps']:>9g} {o['mean_us']:>9.1f} {o['max_us']:>9.1f} "
              f"{o['jitter_us']:>9.1f} {o['beyond_deadline']:>6}")
    return 0


def _cmd_exp2(sc: Scenario, args) -> int:
    rep = run_experiment2(sc)
    emit_report(rep, args.out or "out")
    print(f"{'load':>6} {'joint':>6} {'no_path':>8} {'no_shape':>9}")
    for load in sc.load_levels:
        by = {r["strategy"]: r["rejected"] for r in rep.rows if r["load"] == load}
        print(f"{load:>6} {by['joint']:>6} {by['no-path-selection']:>8} {by['no-shaping']:>9}")
    return 0


def _cmd_validate(sc: Scenario, args) -> int:
    g = build_graph(sc)
    problems = validate(g)
    for p in problems:
        print(f"violation: {p}")
    if problems:
        return 1
    flows = build_flows(sc, g)
    net = build_network(sc, g, flows)
    check_flowset(flows, net)
    print(f"ok: {len(g.nodes)} nodes, {len(g.links)} links, {len(g.domains)} domains, "
          f"{len(flows)} flows, hypercycle {net.hc_len} us")
    return 0


COMMANDS = {"schedule": _cmd_schedule, "simulate": _cmd_simulate, "exp1": _cmd_exp1,
            "exp2": _cmd_exp2, "validate": _cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = scenario_from_args(args)
        return COMMANDS[args.verb](sc, args)
    except (CqfDipError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
