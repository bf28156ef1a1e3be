"""Joint admission, path and cycle-shift scheduling of time-sensitive flows.

A *pattern* for a flow is a path plus one cycle shift per path node. The
shift at the source and at every node that receives across a time-domain
boundary is a free variable; every other relay retransmits exactly one cycle
after the aligned receive cycle, and the destination does not retransmit.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .exceptions import SchedulingError
from .flows import FlowSet, TsFlow
from .timebase import AlignmentTable, TimedNetwork
from .topology import enumerate_paths

Path_ = tuple[str, ...]
Shifts = tuple[int, ...]


class ShiftKind(enum.Enum):
    SOURCE = "source"
    EDGE = "edge"
    FIXED = "fixed"
    SINK = "sink"


def shift_kinds(net: TimedNetwork, path: Sequence[str]) -> list[ShiftKind]:
    kinds = []
    for i, v in enumerate(path):
        if i == 0:
            kinds.append(ShiftKind.SOURCE)
        elif i == len(path) - 1:
            kinds.append(ShiftKind.SINK)
        elif net.crosses_domain(path[i - 1], v):
            kinds.append(ShiftKind.EDGE)
        else:
            kinds.append(ShiftKind.FIXED)
    return kinds


def shift_bounds(net: TimedNetwork, path: Sequence[str]) -> list[tuple[int, int]]:
    """Inclusive ``(low, high)`` range of the shift at every path node.

    A receiving edge device needs at least one cycle: the aligned cycle is
    only a bound on when the last packet arrives.
    """
    out = []
    for v, kind in zip(path, shift_kinds(net, path)):
        n = net.n_cycles(v)
        if kind is ShiftKind.SOURCE:
            out.append((0, n - 1))
        elif kind is ShiftKind.EDGE:
            out.append((1, max(1, n - 1)))
        elif kind is ShiftKind.FIXED:
            out.append((1, 1))
        else:
            out.append((0, 0))
    return out


def minimal_shifts(net: TimedNetwork, path: Sequence[str]) -> Shifts:
    return tuple(lo for lo, _ in shift_bounds(net, path))


def check_shifts(net: TimedNetwork, path: Sequence[str], shifts: Sequence[int]) -> None:
    if len(shifts) != len(path):
        raise SchedulingError(f"{len(shifts)} shifts for a path of {len(path)} nodes")
    for v, r, (lo, hi) in zip(path, shifts, shift_bounds(net, path)):
        if not lo <= r <= hi:
            raise SchedulingError(f"shift {r} at {v} outside [{lo}, {hi}]")


# ----------------------------------------------------------------- delay bounds

def cqf_bounds(h: int, d: int) -> tuple[int, int]:
    """(max, min) latency across ``h`` CQF hops with cycle ``d``."""
    if h < 1 or d <= 0:
        raise ValueError("need h >= 1 and d > 0")
    return (h + 1) * d, (h - 1) * d


def delay_upper_bound(path: Sequence[str], shifts: Sequence[int], cycle_lens: Sequence[int],
                      link_delays: Sequence[int]) -> int:
    """Sum over links of ``(r_i + 1) * cycle_i + delay_i``."""
    hops = len(link_delays)
    if hops != len(path) - 1 or len(shifts) < hops or len(cycle_lens) < hops:
        raise ValueError("path, shifts, cycle_lens and link_delays have inconsistent lengths")
    return sum((shifts[i] + 1) * cycle_lens[i] + link_delays[i] for i in range(hops))


def path_bound(net: TimedNetwork, path: Sequence[str], shifts: Sequence[int]) -> int:
    g = net.graph
    return delay_upper_bound(
        path, shifts, [net.cycle_len(v) for v in path[:-1]],
        [g.link(a, b).prop_delay for a, b in zip(path, path[1:])])


def transmit_cycles(path: Sequence[str], release_cycle: int, shifts: Sequence[int],
                    table: AlignmentTable) -> tuple[int, ...]:
    """Hypercycle-relative transmit cycle at every transmitting node of ``path``."""
    n = table.n_cycles
    c = (release_cycle + shifts[0]) % n[path[0]]
    out = [c]
    for i in range(1, len(path) - 1):
        c = (table.map(path[i - 1], path[i], c) + shifts[i]) % n[path[i]]
        out.append(c)
    return tuple(out)


def release_cycles(net: TimedNetwork, flow: TsFlow) -> list[int]:
    """Source cycle of every repetition of ``flow`` inside one hypercycle."""
    step = flow.period // net.cycle_len(flow.src)
    reps = net.hypercycle.flow_multiple(flow.period)
    return [flow.release_cycle + j * step for j in range(reps)]


# ---------------------------------------------------------------------- ledger

class CycleLedger:
    """Reserved bits per (node, next hop, cycle index)."""

    def __init__(self, net: TimedNetwork):
        self.net = net
        self._used: dict[tuple[str, str, int], int] = {}
        self._cap: dict[tuple[str, str], int] = {}

    def capacity(self, u: str, v: str) -> int:
        """Bits one cycle of ``u`` can carry on ``u -> v``.

        Inside a CQF domain the last bit must also reach the next hop before
        the cycle ends, so the propagation delay is held back as a guard.
        """
        cap = self._cap.get((u, v))
        if cap is None:
            link = self.net.graph.link(u, v)
            cyc = self.net.cycle_len(u)
            g = self.net.graph
            same_cqf = (g.node(u).domain == g.node(v).domain and not g.node(u).role.is_dip)
            usable = cyc - link.prop_delay if same_cqf else cyc
            cap = self._cap[(u, v)] = max(0, usable) * link.bandwidth // 1_000_000
        return cap

    def full_capacity(self, u: str, v: str) -> int:
        return self.net.cycle_len(u) * self.net.graph.link(u, v).bandwidth // 1_000_000

    def used(self, u: str, v: str, c: int) -> int:
        return self._used.get((u, v, c), 0)

    def residual(self, u: str, v: str, c: int) -> int:
        return self.capacity(u, v) - self.used(u, v, c)

    def first_overflow(self, demand: Mapping[tuple[str, str, int], int]):
        for key, bits in demand.items():
            if self.used(*key) + bits > self.capacity(key[0], key[1]):
                return key
        return None

    def commit(self, demand: Mapping[tuple[str, str, int], int]) -> None:
        bad = self.first_overflow(demand)
        if bad is not None:
            raise SchedulingError(f"capacity exceeded at node {bad[0]} cycle {bad[2]}")
        for key, bits in demand.items():
            self._used[key] = self._used.get(key, 0) + bits

    def release(self, demand: Mapping[tuple[str, str, int], int]) -> None:
        for key, bits in demand.items():
            left = self._used.get(key, 0) - bits
            if left < 0:
                raise SchedulingError(f"releasing more than reserved at {key}")
            if left:
                self._used[key] = left
            else:
                self._used.pop(key, None)

    def copy(self) -> "CycleLedger":
        other = CycleLedger(self.net)
        other._used = dict(self._used)
        other._cap = self._cap
        return other

    def items(self):
        return sorted(self._used.items())


def flow_demand(net: TimedNetwork, flow: TsFlow, path: Sequence[str],
                shifts: Sequence[int]) -> dict[tuple[str, str, int], int]:
    """Bits the pattern reserves, keyed by (node, next hop, cycle); ordered by hop."""
    per_rep = [transmit_cycles(path, a, shifts, net.table) for a in release_cycles(net, flow)]
    demand: dict[tuple[str, str, int], int] = {}
    for i in range(len(path) - 1):
        for cycles in per_rep:
            key = (path[i], path[i + 1], cycles[i])
            demand[key] = demand.get(key, 0) + flow.payload_bits
    return demand


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""
    hop: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def admissible(flow: TsFlow, path: Sequence[str], shifts: Sequence[int],
               ledger: CycleLedger) -> Verdict:
    net = ledger.net
    if path_bound(net, path, shifts) > flow.deadline:
        return Verdict(False, "deadline")
    demand = flow_demand(net, flow, path, shifts)
    bad = ledger.first_overflow(demand)
    if bad is not None:
        return Verdict(False, f"capacity at node {bad[0]} cycle {bad[2]}", path.index(bad[0]))
    return Verdict(True)


# ------------------------------------------------------------------- schedules

@dataclass(frozen=True)
class FlowDecision:
    accepted: bool
    path: Path_ | None = None
    shifts: Shifts | None = None
    delay_bound: int | None = None
    reason: str = ""

    def __post_init__(self):
        if self.accepted and (self.path is None or self.shifts is None
                              or len(self.path) != len(self.shifts)):
            raise SchedulingError("accepted decision needs a path and matching shifts")


@dataclass(frozen=True)
class Schedule:
    decisions: Mapping[str, FlowDecision]
    objective: float = 0.0
    meta: Mapping[str, object] = field(default_factory=dict)

    def __getitem__(self, flow_id: str) -> FlowDecision:
        return self.decisions[flow_id]

    @property
    def accepted_ids(self) -> list[str]:
        return [k for k, d in self.decisions.items() if d.accepted]

    @property
    def n_accepted(self) -> int:
        return sum(d.accepted for d in self.decisions.values())

    @property
    def n_rejected(self) -> int:
        return len(self.decisions) - self.n_accepted

    def to_json(self) -> str:
        rows = []
        for fid, d in self.decisions.items():
            row = {"id": fid, "accepted": d.accepted}
            if d.accepted:
                row.update(path=list(d.path), shifts=list(d.shifts), delay_bound_us=d.delay_bound)
            else:
                row["reason"] = d.reason
            rows.append(row)
        payload = {"objective": self.objective, "meta": dict(self.meta), "flows": rows}
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        payload = json.loads(text)
        decisions = {}
        for row in payload["flows"]:
            if row["accepted"]:
                decisions[row["id"]] = FlowDecision(True, tuple(row["path"]), tuple(row["shifts"]),
                                                    row.get("delay_bound_us"))
            else:
                decisions[row["id"]] = FlowDecision(False, reason=row.get("reason", ""))
        return cls(decisions, payload.get("objective", 0.0), payload.get("meta", {}))


def _objective(flows: Sequence[TsFlow], decisions: Mapping[str, FlowDecision]) -> float:
    return math.fsum(f.weight for f in flows if decisions[f.id].accepted)


def ledger_from_schedule(net: TimedNetwork, flows: Iterable[TsFlow], schedule: Schedule) -> CycleLedger:
    """Rebuild the reservations implied by ``schedule``; raises if they overflow."""
    ledger = CycleLedger(net)
    for f in flows:
        d = schedule.decisions.get(f.id)
        if d is not None and d.accepted:
            ledger.commit(flow_demand(net, f, d.path, d.shifts))
    return ledger


# -------------------------------------------------------------- pattern search

def iter_shift_vectors(net: TimedNetwork, path: Sequence[str], deadline: int,
                       shaping: bool = True) -> Iterator[Shifts]:
    """Shift vectors meeting ``deadline``, by ascending total shift then lexicographically."""
    bounds = shift_bounds(net, path)
    base = tuple(lo for lo, _ in bounds)
    slack = deadline - path_bound(net, path, base)
    if slack < 0:
        return
    if not shaping:
        yield base
        return
    free = [i for i, (lo, hi) in enumerate(bounds) if hi > lo]
    cyc = [net.cycle_len(path[i]) for i in free]
    caps = [min(bounds[i][1] - bounds[i][0], slack // c) for i, c in zip(free, cyc)]

    def compositions(k, total, budget):
        if k == len(free):
            if total == 0:
                yield ()
            return
        for e in range(min(caps[k], total) + 1):
            cost = e * cyc[k]
            if cost > budget:
                break
            for rest in compositions(k + 1, total - e, budget - cost):
                yield (e,) + rest

    for total in range(sum(caps) + 1):
        for excess in compositions(0, total, slack):
            vec = list(base)
            for i, e in zip(free, excess):
                vec[i] += e
            yield tuple(vec)


def best_pattern_on_path(net: TimedNetwork, flow: TsFlow, path: Sequence[str],
                         ledger: CycleLedger, shaping: bool = True) -> tuple[Shifts | None, str]:
    """First admissible shift vector in :func:`iter_shift_vectors` order.

    Depth-first over path nodes in lexicographic order, pruning on capacity,
    deadline slack and on the best total found so far, so the result equals
    the first hit of the ordered enumeration without walking it.
    """
    bounds = shift_bounds(net, path)
    if not shaping:
        bounds = [(lo, lo) for lo, _ in bounds]
    base = [lo for lo, _ in bounds]
    slack = flow.deadline - path_bound(net, path, base)
    if slack < 0:
        return None, "deadline"
    table = net.table
    hops = len(path) - 1
    cyc = [net.cycle_len(v) for v in path[:-1]]
    n = [net.n_cycles(v) for v in path[:-1]]
    caps = [ledger.capacity(path[i], path[i + 1]) for i in range(hops)]
    phis = [None] + [table[(path[i - 1], path[i])] for i in range(1, hops)]
    rel = release_cycles(net, flow)
    bits = flow.payload_bits
    best: list = [None, None]  # total, vector
    vec = list(base)

    def dfs(i, prev, total, spent):
        lo, hi = bounds[i]
        u, v = path[i], path[i + 1]
        for r in range(lo, hi + 1):
            t = total + r - lo
            if best[0] is not None and t >= best[0]:
                return
            s = spent + (r - lo) * cyc[i]
            if s > slack:
                return
            if i == 0:
                cycles = [(a + r) % n[0] for a in rel]
            else:
                phi = phis[i]
                cycles = [(phi[c] + r) % n[i] for c in prev]
            if any(ledger.used(u, v, c) + k * bits > caps[i] for c, k in Counter(cycles).items()):
                continue
            vec[i] = r
            if i == hops - 1:
                best[0], best[1] = t, tuple(vec)
                return
            dfs(i + 1, cycles, t, s)

    dfs(0, None, 0, 0)
    if best[1] is None:
        return None, "capacity"
    return best[1], ""


def _paths_for(net, flow, k_paths, path_selection, cache):
    key = (flow.src, flow.dst, k_paths if path_selection else 1)
    if key not in cache:
        cache[key] = enumerate_paths(net.graph, flow.src, flow.dst, key[2])
    return cache[key]


def greedy_schedule(net: TimedNetwork, flows: Iterable[TsFlow], k_paths: int = 3,
                    shaping: bool = True, path_selection: bool = True,
                    ledger: CycleLedger | None = None) -> Schedule:
    """Weight-descending first-fit over (path, shift vector) patterns.

    Paths are tried in :func:`enumerate_paths` order; on each path the shift
    vector with the smallest total shift (ties lexicographic) that passes
    :func:`admissible` is committed.
    """
    from .validation import check_flowset

    flows = list(check_flowset(flows, net))
    ledger = CycleLedger(net) if ledger is None else ledger
    cache: dict = {}
    decisions: dict[str, FlowDecision] = {}
    for f in sorted(flows, key=lambda f: (-f.weight, f.id)):
        reasons = set()
        decision = None
        for path in _paths_for(net, f, k_paths, path_selection, cache):
            shifts, why = best_pattern_on_path(net, f, path, ledger, shaping)
            if shifts is None:
                reasons.add(why)
                continue
            ledger.commit(flow_demand(net, f, path, shifts))
            decision = FlowDecision(True, tuple(path), shifts, path_bound(net, path, shifts))
            break
        if decision is None:
            reason = "capacity" if "capacity" in reasons else "deadline" if reasons else "no path"
            decision = FlowDecision(False, reason=reason)
        decisions[f.id] = decision
    ordered = {f.id: decisions[f.id] for f in flows}
    meta = {"solver": "greedy", "k_paths": k_paths, "shaping": shaping,
            "path_selection": path_selection}
    return Schedule(ordered, _objective(flows, ordered), meta)


def candidate_patterns(net: TimedNetwork, flow: TsFlow, k_paths: int = 3, shaping: bool = True,
                       path_selection: bool = True) -> list[tuple[Path_, Shifts]]:
    paths = enumerate_paths(net.graph, flow.src, flow.dst, k_paths if path_selection else 1)
    return [(p, s) for p in paths for s in iter_shift_vectors(net, p, flow.deadline, shaping)]


def exact_schedule_small(net: TimedNetwork, flows: Iterable[TsFlow], k_paths: int = 3,
                         shaping: bool = True, path_selection: bool = True,
                         max_flows: int = 10, max_patterns: int = 50) -> Schedule:
    """Exhaustive optimum of the weighted admission problem for tiny instances.

    Admission sets are visited by decreasing total weight (ties: smallest
    indicator vector in flow order); the first one with a capacity-feasible
    pattern assignment is returned.
    """
    from .validation import check_flowset

    flows = list(check_flowset(flows, net))
    if len(flows) > max_flows:
        raise SchedulingError("instance too large for exact solver")
    cands = []
    for f in flows:
        pats = candidate_patterns(net, f, k_paths, shaping, path_selection)
        if len(pats) > max_patterns:
            raise SchedulingError("instance too large for exact solver")
        cands.append([(p, s, flow_demand(net, f, p, s)) for p, s in pats])
    weights = [Fraction(f.weight) for f in flows]
    subsets = sorted(itertools.product((0, 1), repeat=len(flows)),
                     key=lambda ind: (-sum(w for w, x in zip(weights, ind) if x), ind))
    ledger = CycleLedger(net)
    for ind in subsets:
        chosen = [i for i, x in enumerate(ind) if x]
        if any(not cands[i] for i in chosen):
            continue
        assignment: dict[int, int] = {}

        def place(k):
            if k == len(chosen):
                return True
            i = chosen[k]
            for j, (_, _, demand) in enumerate(cands[i]):
                if ledger.first_overflow(demand) is None:
                    ledger.commit(demand)
                    assignment[i] = j
                    if place(k + 1):
                        return True
                    ledger.release(demand)
            return False

        if place(0):
            decisions = {}
            for i, f in enumerate(flows):
                if i in assignment:
                    p, s, _ = cands[i][assignment[i]]
                    decisions[f.id] = FlowDecision(True, p, s, path_bound(net, p, s))
                else:
                    decisions[f.id] = FlowDecision(False, reason="not in optimal set")
            meta = {"solver": "exact", "k_paths": k_paths, "shaping": shaping,
                    "path_selection": path_selection}
            return Schedule(decisions, _objective(flows, decisions), meta)
    raise AssertionError("the empty admission set is always feasible")


__all__ = [
    "CycleLedger", "FlowDecision", "Schedule", "ShiftKind", "Verdict",
    "admissible", "best_pattern_on_path", "candidate_patterns", "check_shifts", "cqf_bounds",
    "delay_upper_bound", "exact_schedule_small", "flow_demand", "greedy_schedule",
    "iter_shift_vectors", "ledger_from_schedule", "minimal_shifts", "path_bound",
    "release_cycles", "shift_bounds", "shift_kinds", "transmit_cycles",
]
