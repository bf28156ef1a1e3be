"""Time domains, hypercycles and per-adjacency cycle alignment.

All durations are integer microseconds. Alignment is evaluated with integer
arithmetic so that arrivals landing exactly on a cycle boundary are mapped
deterministically (to the cycle that ends at the boundary).
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .exceptions import AlignmentError, HypercycleError, ParseError
from .topology import NetworkGraph

HYPERCYCLE_CAP = 10**9


class SyncMode(enum.Enum):
    PERFECT_TIME = "perfect_time"
    FREQUENCY_ONLY = "frequency_only"


DEFAULT_MIN_CYCLES = {SyncMode.PERFECT_TIME: 2, SyncMode.FREQUENCY_ONLY: 2}


@dataclass(frozen=True)
class DomainConfig:
    domain_id: str
    cycle_len: int
    sync: SyncMode = SyncMode.PERFECT_TIME

    def __post_init__(self):
        if int(self.cycle_len) != self.cycle_len or self.cycle_len <= 0:
            raise ValueError(f"domain {self.domain_id}: cycle_len must be a positive integer")


@dataclass(frozen=True)
class HypercycleSpec:
    hc_len: int
    cycles_per_domain: Mapping[str, int]
    flow_multiples: Mapping[int, int] = field(default_factory=dict)

    def flow_multiple(self, period: int) -> int:
        if self.hc_len % period:
            raise HypercycleError(f"period {period} does not divide hypercycle {self.hc_len}")
        return self.hc_len // period


@dataclass(frozen=True)
class AdjacencyTiming:
    src: str
    dst: str
    hco: int = 0
    prop_delay: int = 0

    def __post_init__(self):
        if self.hco < 0:
            raise ValueError("hco must be >= 0")
        if self.prop_delay < 0:
            raise ValueError("prop_delay must be >= 0")


@dataclass(frozen=True)
class AlignmentTable:
    """Cycle mapping per directed link plus the cycles-per-hypercycle of every node."""

    phi: Mapping[tuple[str, str], tuple[int, ...]]
    n_cycles: Mapping[str, int]

    def __getitem__(self, key: tuple[str, str]) -> tuple[int, ...]:
        return self.phi[key]

    def __contains__(self, key) -> bool:
        return key in self.phi

    def __len__(self) -> int:
        return len(self.phi)

    def map(self, src: str, dst: str, x: int) -> int:
        try:
            arr = self.phi[(src, dst)]
        except KeyError:
            raise AlignmentError(f"no alignment entry for link {src}->{dst}") from None
        return arr[x % len(arr)]


def compute_hypercycle(domains: Iterable[DomainConfig], flow_periods: Iterable[int] = (),
                       min_cycles: Mapping[SyncMode, int] | None = None,
                       cap: int = HYPERCYCLE_CAP) -> HypercycleSpec:
    """Least common multiple of every domain cycle and every flow period."""
    domains = list(domains)
    periods = sorted(set(int(p) for p in flow_periods))
    values = [d.cycle_len for d in domains] + periods
    if not values:
        raise HypercycleError("no domains or periods given")
    if any(v <= 0 for v in values):
        raise HypercycleError("durations must be positive")
    hc = 1
    for v in values:
        hc = math.lcm(hc, v)
        if hc > cap:
            raise HypercycleError(f"hypercycle overflow (> {cap} us)")
    mins = DEFAULT_MIN_CYCLES if min_cycles is None else min_cycles
    counts = {}
    for d in domains:
        n = hc // d.cycle_len
        need = mins.get(d.sync, 1)
        if n < need:
            raise HypercycleError(
                f"domain {d.domain_id}: {n} cycle(s) per hypercycle, below queue minimum {need}")
        counts[d.domain_id] = n
    return HypercycleSpec(hc, counts, {p: hc // p for p in periods})


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def align_cqf(x: int) -> int:
    return x


def align_cross(x: int, src_len: int, dst_len: int, hc_len: int, t: AdjacencyTiming) -> int:
    """Destination cycle by whose end everything sent in source cycle ``x`` has arrived."""
    n_src = hc_len // src_len
    n_dst = hc_len // dst_len
    numer = ((x + 1) % n_src) * src_len + t.prop_delay + t.hco
    # ceil(numer/dst_len - 1)
    return _ceil_div(numer - dst_len, dst_len) % n_dst


def align_dip(x: int, cycle_len: int, n_cycles: int, t: AdjacencyTiming) -> int:
    numer = ((x + 1) % n_cycles) * cycle_len + t.prop_delay + t.hco
    return _ceil_div(numer - cycle_len, cycle_len) % n_cycles


def default_timings(g: NetworkGraph, hco: int = 0) -> dict[tuple[str, str], AdjacencyTiming]:
    return {k: AdjacencyTiming(k[0], k[1], hco, l.prop_delay) for k, l in g.links.items()}


def timings_from_phases(g: NetworkGraph, phases: Mapping[str, int],
                        hc_len: int) -> dict[tuple[str, str], AdjacencyTiming]:
    """Offsets implied by absolute hypercycle start phases of every node."""
    return {
        (s, d): AdjacencyTiming(s, d, (phases[s] - phases[d]) % hc_len, l.prop_delay)
        for (s, d), l in g.links.items()
    }


def parse_timings(text: str, g: NetworkGraph, path=None,
                  fill_default: bool = True) -> dict[tuple[str, str], AdjacencyTiming]:
    out = default_timings(g) if fill_default else {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0].lower() != "timing" or len(fields) != 4:
            raise ParseError("expected: timing <src> <dst> <hco_us>", path, lineno)
        _, s, d, hco = fields
        if not g.has_link(s, d):
            raise ParseError(f"timing for unknown link {s}->{d}", path, lineno)
        try:
            value = int(hco)
        except ValueError:
            raise ParseError(f"hco_us must be an integer, got {hco!r}", path, lineno) from None
        if value < 0:
            raise ParseError("hco_us must be >= 0", path, lineno)
        out[(s, d)] = AdjacencyTiming(s, d, value, g.link(s, d).prop_delay)
    return out


def load_timings(path, g: NetworkGraph, fill_default: bool = True):
    path = Path(path)
    return parse_timings(path.read_text(encoding="utf-8"), g, path, fill_default)


def format_timings(timings: Mapping[tuple[str, str], AdjacencyTiming]) -> str:
    return "".join(f"timing {s} {d} {t.hco}\n" for (s, d), t in sorted(timings.items()))


def build_alignment_table(g: NetworkGraph, domains: Iterable[DomainConfig], hc: HypercycleSpec,
                          timings) -> AlignmentTable:
    doms = {d.domain_id: d for d in domains}
    if not isinstance(timings, Mapping):
        timings = {(t.src, t.dst): t for t in timings}
    n_cycles = {}
    for nid, node in g.nodes.items():
        if node.domain not in doms:
            raise AlignmentError(f"node {nid}: no configuration for domain {node.domain!r}")
        n_cycles[nid] = hc.hc_len // doms[node.domain].cycle_len
    phi = {}
    for (s, d), link in sorted(g.links.items()):
        t = timings.get((s, d))
        if t is None:
            raise AlignmentError(f"missing timing entry for link {s}->{d}")
        ns, nd = g.node(s), g.node(d)
        ds, dd = doms[ns.domain], doms[nd.domain]
        if ns.domain == nd.domain and ds.sync is SyncMode.PERFECT_TIME:
            if t.prop_delay >= ds.cycle_len:
                raise AlignmentError(
                    f"CQF in-cycle reception violated on {s}->{d}: "
                    f"delay {t.prop_delay} us >= cycle {ds.cycle_len} us")
            if t.hco != 0:
                raise AlignmentError(f"link {s}->{d}: nonzero hypercycle offset inside a CQF domain")
            phi[(s, d)] = tuple(align_cqf(x) for x in range(n_cycles[s]))
        elif ns.domain == nd.domain:
            phi[(s, d)] = tuple(align_dip(x, ds.cycle_len, n_cycles[s], t)
                                for x in range(n_cycles[s]))
        else:
            phi[(s, d)] = tuple(align_cross(x, ds.cycle_len, dd.cycle_len, hc.hc_len, t)
                                for x in range(n_cycles[s]))
    return AlignmentTable(phi, n_cycles)


def hypercycle_phases(g: NetworkGraph, timings: Mapping[tuple[str, str], AdjacencyTiming],
                      hc_len: int) -> dict[str, int]:
    """Absolute hypercycle start phase of every node, in ``[0, hc_len)``.

    The lexicographically smallest node of each connected component is
    pinned at phase 0; offsets must be consistent around every cycle.
    """
    adj: dict[str, list[tuple[str, int]]] = {n: [] for n in g.nodes}
    for (s, d), t in timings.items():
        # hco = S_s - S_d  =>  S_d = S_s - hco
        adj[s].append((d, -t.hco))
        adj[d].append((s, t.hco))
    phases: dict[str, int] = {}
    for root in sorted(g.nodes):
        if root in phases:
            continue
        phases[root] = 0
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w, delta in adj[v]:
                expect = (phases[v] + delta) % hc_len
                if w not in phases:
                    phases[w] = expect
                    queue.append(w)
                elif phases[w] != expect:
                    raise AlignmentError(
                        f"inconsistent hypercycle offsets around {v}->{w}")
    return phases


def default_domains(g: NetworkGraph, cqf_cycle: int = 25, dip_cycle: int = 10) -> list[DomainConfig]:
    out = []
    for dom in sorted(g.domains):
        if dom == g.dip_domain:
            out.append(DomainConfig(dom, dip_cycle, SyncMode.FREQUENCY_ONLY))
        else:
            out.append(DomainConfig(dom, cqf_cycle, SyncMode.PERFECT_TIME))
    return out


@dataclass(frozen=True, eq=False)
class TimedNetwork:
    """A graph together with everything needed to schedule on it."""

    graph: NetworkGraph
    domains: Mapping[str, DomainConfig]
    hypercycle: HypercycleSpec
    table: AlignmentTable
    timings: Mapping[tuple[str, str], AdjacencyTiming]

    @property
    def hc_len(self) -> int:
        return self.hypercycle.hc_len

    def cycle_len(self, node: str) -> int:
        return self.domains[self.graph.node(node).domain].cycle_len

    def n_cycles(self, node: str) -> int:
        return self.table.n_cycles[node]

    def crosses_domain(self, src: str, dst: str) -> bool:
        return self.graph.node(src).domain != self.graph.node(dst).domain

    @cached_property
    def phases(self) -> dict[str, int]:
        return hypercycle_phases(self.graph, self.timings, self.hc_len)


def build_timed_network(g: NetworkGraph, domains: Iterable[DomainConfig] | None = None,
                        flow_periods: Iterable[int] = (), timings=None,
                        min_cycles: Mapping[SyncMode, int] | None = None) -> TimedNetwork:
    domains = list(default_domains(g) if domains is None else domains)
    doms = {d.domain_id: d for d in domains}
    for dom in g.domains:
        if dom not in doms:
            raise AlignmentError(f"no configuration for domain {dom!r}")
        want = SyncMode.FREQUENCY_ONLY if dom == g.dip_domain else SyncMode.PERFECT_TIME
        if doms[dom].sync is not want:
            raise AlignmentError(f"domain {dom!r} must use {want.value} synchronisation")
    used = [doms[d] for d in sorted(g.domains)]
    hc = compute_hypercycle(used, flow_periods, min_cycles)
    if timings is None:
        timings = default_timings(g)
    elif not isinstance(timings, Mapping):
        timings = {(t.src, t.dst): t for t in timings}
    table = build_alignment_table(g, used, hc, timings)
    net = TimedNetwork(g, {d.domain_id: d for d in used}, hc, table, dict(timings))
    net.phases  # fail early on inconsistent offsets
    return net
