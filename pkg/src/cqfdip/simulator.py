"""Packet-level discrete-event simulation of the hierarchical network.

Two forwarding modes are provided:

* :func:`run_simulation` executes a :class:`~cqfdip.scheduler.Schedule`.
  Every output port has gated cycle queues (two alternating queues on CQF
  relays, one queue per cycle index on DIP routers and shaping edge
  devices) and a best-effort FIFO. A relay maps the cycle identifier
  carried by a packet through the alignment table, adds its shift and
  transmits in that cycle. Inside a cycle the gated queue is drained in a
  fixed order (flow id, repetition); since alignment guarantees every
  packet is queued before its window opens, this is the same as sending
  each packet at a fixed offset, which is how it is computed here.
  Best-effort packets only use link time outside the reserved TS windows
  and never straddle one.
* :func:`run_best_effort` sends the TS flows on minimum-hop paths through
  the same FIFOs as the interference, without any gating.

Time is integer nanoseconds internally; records expose microseconds.
"""
from __future__ import annotations

import bisect
import csv
import heapq
import io
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .exceptions import CqfDipError, SimulationError
from .flows import FlowSet, TsFlow
from .scheduler import (Schedule, check_shifts, ledger_from_schedule, release_cycles,
                        transmit_cycles)
from .timebase import TimedNetwork
from .topology import NodeRole, enumerate_paths

NS_PER_US = 1000


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _tx_ns(bits: int, bandwidth: int) -> int:
    return _ceil_div(bits * 1_000_000_000, bandwidth)


@dataclass(frozen=True)
class InterferenceSpec:
    """Best-effort background load.

    ``rate_bps`` is the load offered by *each* access network, spread
    uniformly over its source hosts (or over ``ingress`` when given) towards
    destination hosts of other access networks, or of its own network when
    there is no other. Arrivals form a Poisson
    process of bursts; burst sizes are geometric with mean ``burst_mean``
    back-to-back packets (``1`` gives plain Poisson packet arrivals).
    """

    rate_bps: float = 0.0
    packet_bits: int = 12_000
    seed: int = 0
    arrival: str = "poisson"
    burst_mean: float = 1.0
    ingress: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.rate_bps < 0:
            raise ValueError("interference rate must be >= 0")
        if self.packet_bits <= 0:
            raise ValueError("packet_bits must be > 0")
        if self.burst_mean < 1:
            raise ValueError("burst_mean must be >= 1")
        if self.arrival != "poisson":
            raise ValueError(f"unsupported arrival model {self.arrival!r}")


@dataclass(frozen=True)
class DeliveryRecord:
    flow: str
    seq: int
    send_ns: int
    recv_ns: int
    deadline_met: bool

    @property
    def delay_ns(self) -> int:
        return self.recv_ns - self.send_ns

    @property
    def send_time(self) -> float:
        return self.send_ns / NS_PER_US

    @property
    def recv_time(self) -> float:
        return self.recv_ns / NS_PER_US

    @property
    def delay_us(self) -> float:
        return self.delay_ns / NS_PER_US


@dataclass
class SimTrace:
    mode: str
    records: list[DeliveryRecord] = field(default_factory=list)
    emitted: dict[str, int] = field(default_factory=dict)
    be_emitted: int = 0
    be_delivered: int = 0
    be_delays_ns: list[int] = field(default_factory=list)
    be_blocked: int = 0
    late_arrivals: int = 0
    cqf_out_of_cycle: int = 0
    gate_misses: int = 0

    def delivered(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for r in self.records:
            out[r.flow] += 1
        return dict(out)

    def lost(self) -> dict[str, int]:
        got = self.delivered()
        return {f: n - got.get(f, 0) for f, n in self.emitted.items() if n != got.get(f, 0)}

    def delays_us(self, flow: str | None = None) -> list[float]:
        return [r.delay_us for r in self.records if flow is None or r.flow == flow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["flow", "seq", "send_us", "recv_us", "delay_us", "met"])
        for r in self.records:
            w.writerow([r.flow, r.seq, f"{r.send_time:.3f}", f"{r.recv_time:.3f}",
                        f"{r.delay_us:.3f}", int(r.deadline_met)])
        return buf.getvalue()


class PortState:
    """Output port ``u -> v``: reserved TS windows plus the best-effort FIFO tail."""

    __slots__ = ("src", "dst", "bandwidth", "prop_ns", "phase_ns", "hc_ns", "starts",
                 "ends", "max_gap", "be_free_at", "n_queues", "sent_per_queue")

    def __init__(self, src, dst, bandwidth, prop_ns, phase_ns, hc_ns, windows=(), n_queues=1):
        self.src, self.dst = src, dst
        self.bandwidth = bandwidth
        self.prop_ns = prop_ns
        self.phase_ns = phase_ns
        self.hc_ns = hc_ns
        windows = sorted(windows)
        self.starts = [s for s, _ in windows]
        self.ends = [e for _, e in windows]
        self.be_free_at = 0
        self.n_queues = n_queues
        self.sent_per_queue: dict[int, int] = defaultdict(int)
        if windows:
            gaps = [s - e for e, s in zip(self.ends, self.starts[1:])]
            gaps.append(self.starts[0] + hc_ns - self.ends[-1])
            self.max_gap = max(gaps)
        else:
            self.max_gap = hc_ns

    def next_gap(self, t: int, dur: int) -> int:
        """Earliest start >= t such that [start, start+dur) avoids every TS window."""
        if not self.starts:
            return t
        hc = self.hc_ns
        while True:
            rel = (t - self.phase_ns) % hc
            base = t - rel
            i = max(0, bisect.bisect_right(self.starts, rel) - 1)
            clash = None
            k = i
            while True:
                idx, shift = k % len(self.starts), (k // len(self.starts)) * hc
                s, e = self.starts[idx] + shift, self.ends[idx] + shift
                if s >= rel + dur:
                    break
                if e > rel:
                    clash = e
                    break
                k += 1
            if clash is None:
                return t
            t = base + clash


@dataclass(slots=True)
class _Packet:
    flow: str | None
    seq: int
    bits: int
    created: int
    path: tuple
    hop: int
    carried: int | None
    window_end: int
    rep: int
    deadline_ns: int


class _Engine:
    def __init__(self, net: TimedNetwork, trace: SimTrace):
        self.net = net
        self.g = net.graph
        self.trace = trace
        self.hc_ns = net.hc_len * NS_PER_US
        self.phase = {v: p * NS_PER_US for v, p in net.phases.items()}
        self.events: list = []
        self._seq = 0
        self.ports: dict[tuple[str, str], PortState] = {}

    def port(self, u, v) -> PortState:
        p = self.ports.get((u, v))
        if p is None:
            link = self.g.link(u, v)
            p = self.ports[(u, v)] = PortState(u, v, link.bandwidth, link.prop_delay * NS_PER_US,
                                               self.phase[u], self.hc_ns)
        return p

    def push(self, t: int, pkt: _Packet) -> None:
        self._seq += 1
        heapq.heappush(self.events, (t, self._seq, pkt))

    def cycle_ns(self, v) -> int:
        return self.net.cycle_len(v) * NS_PER_US

    def instance_start(self, v, k) -> int:
        return self.phase[v] + k * self.cycle_ns(v)

    def containing_instance(self, v, t) -> int:
        """Absolute cycle instance of ``v`` in which an arrival at ``t`` lands (boundary -> earlier)."""
        return _ceil_div(t - self.phase[v], self.cycle_ns(v)) - 1

    def fifo_send(self, pkt: _Packet, t: int, gated: bool) -> None:
        u, v = pkt.path[pkt.hop], pkt.path[pkt.hop + 1]
        port = self.port(u, v)
        dur = _tx_ns(pkt.bits, port.bandwidth)
        start = max(t, port.be_free_at)
        if gated:
            if dur > port.max_gap:
                self.trace.be_blocked += 1
                return
            start = port.next_gap(start, dur)
        port.be_free_at = start + dur
        pkt.hop += 1
        self.push(start + dur + port.prop_ns, pkt)

    def deliver(self, pkt: _Packet, t: int) -> None:
        if pkt.flow is None:
            self.trace.be_delivered += 1
            self.trace.be_delays_ns.append(t - pkt.created)
        else:
            self.trace.records.append(DeliveryRecord(
                pkt.flow, pkt.seq, pkt.created, t, t - pkt.created <= pkt.deadline_ns))

    def run(self, handler) -> None:
        events = self.events
        while events:
            t, _, pkt = heapq.heappop(events)
            if pkt.hop == len(pkt.path) - 1:
                self.deliver(pkt, t)
            else:
                handler(pkt, t)


def _be_paths(net: TimedNetwork, interference: InterferenceSpec):
    g = net.graph
    if interference.ingress is not None:
        hosts = list(interference.ingress)
        for h in hosts:
            if h not in g or g.node(h).role is not NodeRole.SOURCE:
                raise SimulationError(f"interference ingress {h!r} is not a source host")
    else:
        hosts = g.nodes_with_role(NodeRole.SOURCE)
    groups: dict[str, list[str]] = defaultdict(list)
    for h in hosts:
        groups[g.node(h).domain].append(h)
    sinks: dict[str, list[str]] = defaultdict(list)
    for d in g.nodes_with_role(NodeRole.DESTINATION):
        sinks[g.node(d).domain].append(d)
    return groups, sinks


def _inject_interference(eng: _Engine, interference: InterferenceSpec | None, horizon: int,
                         seed: int | None) -> None:
    if interference is None or interference.rate_bps <= 0:
        return
    g = eng.g
    rng = random.Random(interference.seed if seed is None else seed)
    groups, sinks = _be_paths(eng.net, interference)
    end = horizon * eng.hc_ns
    bits = interference.packet_bits
    mean_gap = bits * interference.burst_mean * 1e9 / interference.rate_bps
    p_stop = 1.0 / interference.burst_mean
    path_cache: dict = {}
    seq = 0
    for dom in sorted(groups):
        targets = [d for o in sorted(sinks) if o != dom for d in sinks[o]] or sinks.get(dom, [])
        if not targets:
            continue
        t = 0.0
        while True:
            t += rng.expovariate(1.0 / mean_gap)
            if t >= end:
                break
            size = 1
            while rng.random() > p_stop:
                size += 1
            src = rng.choice(groups[dom])
            dst = rng.choice(targets)
            key = (src, dst)
            if key not in path_cache:
                paths = enumerate_paths(g, src, dst, 1)
                path_cache[key] = paths[0] if paths else None
            path = path_cache[key]
            if path is None:
                continue
            for _ in range(size):
                eng.trace.be_emitted += 1
                eng.push(int(t), _Packet(None, seq, bits, int(t), path, 0, None, 0, 0, 0))
                seq += 1


def _check_schedule(net: TimedNetwork, flows: FlowSet, schedule: Schedule) -> None:
    g = net.graph
    for fid, d in schedule.decisions.items():
        if fid not in flows:
            raise SimulationError(f"schedule/topology mismatch: unknown flow {fid!r}")
        if not d.accepted:
            continue
        f = flows.get(fid)
        if d.path[0] != f.src or d.path[-1] != f.dst:
            raise SimulationError(f"schedule/topology mismatch: path of {fid} does not join "
                                  f"{f.src} and {f.dst}")
        for a, b in zip(d.path, d.path[1:]):
            if not g.has_link(a, b):
                raise SimulationError(f"schedule/topology mismatch: no link {a}->{b} for {fid}")
        try:
            check_shifts(net, d.path, d.shifts)
        except CqfDipError as exc:
            raise SimulationError(f"schedule/topology mismatch: {fid}: {exc}") from None
    try:
        ledger_from_schedule(net, flows, schedule)
    except CqfDipError as exc:
        raise SimulationError(f"schedule/topology mismatch: {exc}") from None


def run_simulation(net: TimedNetwork, flows: Iterable[TsFlow], schedule: Schedule,
                   interference: InterferenceSpec | None = None, horizon: int = 1,
                   seed: int | None = None) -> SimTrace:
    """Run ``horizon`` hypercycles of scheduled TS traffic plus interference."""
    from .validation import check_flowset

    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    flows = check_flowset(flows, net)
    _check_schedule(net, flows, schedule)
    trace = SimTrace("scheduled")
    eng = _Engine(net, trace)
    table = net.table

    # fixed in-cycle offsets: per (u, v, cycle) ordered by flow id, repetition
    occupants: dict[tuple[str, str, int], list] = defaultdict(list)
    plans: dict[tuple[str, int], tuple[int, ...]] = {}
    accepted = [f for f in flows if f.id in schedule.decisions and schedule[f.id].accepted]
    for f in accepted:
        d = schedule[f.id]
        for j, a in enumerate(release_cycles(net, f)):
            cycles = transmit_cycles(d.path, a, d.shifts, table)
            plans[(f.id, j)] = cycles
            for i, c in enumerate(cycles):
                occupants[(d.path[i], d.path[i + 1], c)].append((f.id, j, f.payload_bits))
    slots: dict[tuple[str, int, int], tuple[int, int]] = {}
    windows: dict[tuple[str, str], list] = defaultdict(list)
    for (u, v, c), occ in occupants.items():
        bw = net.graph.link(u, v).bandwidth
        occ.sort()
        cum = 0
        for fid, j, bits in occ:
            path = schedule[fid].path
            lo = _tx_ns(cum, bw) if cum else 0
            cum += bits
            slots[(fid, j, path.index(u))] = (lo, _tx_ns(cum, bw))
        windows[(u, v)].append((c * net.cycle_len(u) * NS_PER_US, _tx_ns(cum, bw)
                                + c * net.cycle_len(u) * NS_PER_US))
    for (u, v), w in windows.items():
        link = net.graph.link(u, v)
        # CQF relays ping-pong between two queues; shaping devices need one per cycle
        queues = 2 if net.graph.node(u).role is NodeRole.CQF_SWITCH else net.n_cycles(u)
        eng.ports[(u, v)] = PortState(u, v, link.bandwidth, link.prop_delay * NS_PER_US,
                                      eng.phase[u], eng.hc_ns, w, queues)

    for f in accepted:
        d = schedule[f.id]
        src = f.src
        n_src = net.n_cycles(src)
        reps = len(release_cycles(net, f))
        for m in range(horizon):
            for j, a in enumerate(release_cycles(net, f)):
                k = m * n_src + a
                t = eng.instance_start(src, k)
                trace.emitted[f.id] = trace.emitted.get(f.id, 0) + 1
                eng.push(t, _Packet(f.id, m * reps + j, f.payload_bits, t, d.path, 0, k, 0, j,
                                    f.deadline * NS_PER_US))
    _inject_interference(eng, interference, horizon, seed)

    def handle(pkt: _Packet, t: int) -> None:
        if pkt.flow is None:
            eng.fifo_send(pkt, t, gated=True)
            return
        d = schedule[pkt.flow]
        i = pkt.hop
        v = pkt.path[i]
        n = net.n_cycles(v)
        if i == 0:
            instance = pkt.carried + d.shifts[0]  # carried = created instance at the source
        else:
            u = pkt.path[i - 1]
            b = table[(u, v)][pkt.carried]
            k0 = eng.containing_instance(v, t)
            receive = k0 + (b - k0) % n
            in_cqf = not net.crosses_domain(u, v) and not net.graph.node(v).role.is_dip
            # inside CQF the capacity guard holds the propagation delay back
            last_bit = pkt.window_end if in_cqf else pkt.window_end + eng.port(u, v).prop_ns
            if receive != eng.containing_instance(v, last_bit) or t > last_bit:
                trace.late_arrivals += 1
            if in_cqf and t > pkt.window_end:
                trace.cqf_out_of_cycle += 1
            instance = receive + d.shifts[i]
        c = instance % n
        if c != plans[(pkt.flow, pkt.rep)][i]:
            raise SimulationError(f"flow {pkt.flow}: cycle {c} at {v} differs from plan")
        lo, hi = slots[(pkt.flow, pkt.rep, i)]
        start = eng.instance_start(v, instance)
        port = eng.ports[(v, pkt.path[i + 1])]
        port.sent_per_queue[c % port.n_queues] += 1
        if start + lo < t:
            trace.gate_misses += 1
        pkt.carried = c
        pkt.window_end = start + eng.cycle_ns(v)
        pkt.hop += 1
        eng.push(start + hi + port.prop_ns, pkt)

    eng.run(handle)
    trace.records.sort(key=lambda r: (r.flow, r.seq))
    return trace


def run_best_effort(net: TimedNetwork, flows: Iterable[TsFlow],
                    interference: InterferenceSpec | None = None, horizon: int = 1,
                    seed: int | None = None) -> SimTrace:
    """TS packets on minimum-hop paths through plain FIFO ports."""
    from .validation import check_flowset

    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    flows = check_flowset(flows, net)
    trace = SimTrace("besteffort")
    eng = _Engine(net, trace)
    for f in flows:
        paths = enumerate_paths(net.graph, f.src, f.dst, 1)
        if not paths:
            raise SimulationError(f"no path for flow {f.id}")
        n_src = net.n_cycles(f.src)
        rel = release_cycles(net, f)
        for m in range(horizon):
            for j, a in enumerate(rel):
                t = eng.instance_start(f.src, m * n_src + a)
                trace.emitted[f.id] = trace.emitted.get(f.id, 0) + 1
                eng.push(t, _Packet(f.id, m * len(rel) + j, f.payload_bits, t, paths[0], 0,
                                    None, 0, j, f.deadline * NS_PER_US))
    _inject_interference(eng, interference, horizon, seed)
    eng.run(lambda pkt, t: eng.fifo_send(pkt, t, gated=False))
    trace.records.sort(key=lambda r: (r.flow, r.seq))
    return trace


# ------------------------------------------------------------------ statistics

@dataclass(frozen=True)
class DelayStats:
    count: int
    mean: float
    max: float
    min: float
    jitter: float
    beyond_deadline: int
    variance: float

    @classmethod
    def from_delays(cls, delays_ns: Sequence[int], deadline_ns: int | None) -> "DelayStats":
        if not delays_ns:
            return cls(0, 0.0, 0.0, 0.0, 0.0, 0, 0.0)
        n = len(delays_ns)
        hi, lo = max(delays_ns), min(delays_ns)
        mean_ns = math.fsum(delays_ns) / n
        var_ns = math.fsum((d - mean_ns) ** 2 for d in delays_ns) / n if hi != lo else 0.0
        beyond = 0 if deadline_ns is None else sum(d > deadline_ns for d in delays_ns)
        return cls(n, mean_ns / NS_PER_US, hi / NS_PER_US, lo / NS_PER_US,
                   (hi - lo) / NS_PER_US, beyond, var_ns / NS_PER_US**2)

    def as_dict(self) -> dict:
        return {"count": self.count, "mean_us": round(self.mean, 3), "max_us": self.max,
                "min_us": self.min, "jitter_us": self.jitter,
                "beyond_deadline": self.beyond_deadline, "variance_us2": round(self.variance, 6)}


@dataclass(frozen=True)
class FlowStats:
    per_flow: Mapping[str, DelayStats]
    aggregate: DelayStats
    cdf: tuple[tuple[float, float], ...]

    def as_dict(self) -> dict:
        return {"aggregate": self.aggregate.as_dict(),
                "per_flow": {k: v.as_dict() for k, v in sorted(self.per_flow.items())}}


def delay_cdf(delays_ns: Sequence[int]) -> tuple[tuple[float, float], ...]:
    if not delays_ns:
        return ()
    ordered = sorted(delays_ns)
    n = len(ordered)
    points = []
    for i, d in enumerate(ordered):
        if i + 1 < n and ordered[i + 1] == d:
            continue
        points.append((d / NS_PER_US, (i + 1) / n))
    return tuple(points)


def summarize(trace: SimTrace, deadline: float | None = None,
              flows: Iterable[str] | None = None) -> FlowStats:
    """Per-flow and aggregate delay statistics.

    With ``deadline`` (us) beyond-deadline counts are taken against it,
    otherwise against each record's own flow deadline.
    """
    wanted = None if flows is None else set(flows)
    by_flow: dict[str, list[int]] = defaultdict(list)
    misses: dict[str, int] = defaultdict(int)
    for r in trace.records:
        if wanted is not None and r.flow not in wanted:
            continue
        by_flow[r.flow].append(r.delay_ns)
        misses[r.flow] += not r.deadline_met
    dl = None if deadline is None else int(round(deadline * NS_PER_US))
    per_flow = {}
    for fid, ds in sorted(by_flow.items()):
        st = DelayStats.from_delays(ds, dl)
        if dl is None:
            st = DelayStats(st.count, st.mean, st.max, st.min, st.jitter, misses[fid], st.variance)
        per_flow[fid] = st
    everything = [d for ds in by_flow.values() for d in ds]
    agg = DelayStats.from_delays(everything, dl)
    if dl is None:
        agg = DelayStats(agg.count, agg.mean, agg.max, agg.min, agg.jitter,
                         sum(misses.values()), agg.variance)
    return FlowStats(per_flow, agg, delay_cdf(everything))
