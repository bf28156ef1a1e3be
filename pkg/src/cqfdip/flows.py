"""Time-sensitive flow specifications and seeded workload generation."""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .exceptions import FlowError, ParseError
from .topology import NetworkGraph, NodeRole


@dataclass(frozen=True)
class TsFlow:
    id: str
    src: str
    dst: str
    period: int  # us
    payload_bits: int
    deadline: int  # us
    weight: float
    release_cycle: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise FlowError(f"flow {self.id}: period must be > 0")
        if self.payload_bits <= 0:
            raise FlowError(f"flow {self.id}: payload_bits must be > 0")
        if self.deadline <= 0:
            raise FlowError(f"flow {self.id}: deadline must be > 0")
        if not 0 < self.weight <= 1:
            raise FlowError(f"flow {self.id}: weight must be in (0,1]")
        if self.release_cycle < 0:
            raise FlowError(f"flow {self.id}: release_cycle must be >= 0")


class FlowSet(Sequence[TsFlow]):
    """Ordered collection of flows with unique ids."""

    def __init__(self, flows: Iterable[TsFlow] = ()):
        self._flows = tuple(flows)
        self._by_id: dict[str, TsFlow] = {}
        for f in self._flows:
            if f.id in self._by_id:
                raise FlowError(f"duplicate flow id {f.id!r}")
            self._by_id[f.id] = f

    def __getitem__(self, i):
        if isinstance(i, slice):
            return FlowSet(self._flows[i])
        return self._flows[i]

    def __len__(self) -> int:
        return len(self._flows)

    def __iter__(self) -> Iterator[TsFlow]:
        return iter(self._flows)

    def __eq__(self, other) -> bool:
        if isinstance(other, FlowSet):
            return self._flows == other._flows
        return NotImplemented

    def __hash__(self):
        return hash(self._flows)

    def __repr__(self) -> str:
        return f"FlowSet({len(self)} flows)"

    def get(self, flow_id: str) -> TsFlow:
        return self._by_id[flow_id]

    def __contains__(self, item) -> bool:
        if isinstance(item, str):
            return item in self._by_id
        return item in self._flows

    @property
    def ids(self) -> list[str]:
        return [f.id for f in self._flows]

    @property
    def periods(self) -> list[int]:
        return sorted({f.period for f in self._flows})


def generate_flows(g: NetworkGraph, per_access: int, rate_bps: float = 500_000,
                   period: int = 1000, deadline: int = 1000, seed: int = 0,
                   cycle_len: int = 25) -> FlowSet:
    """``per_access`` flows sourced in every access network.

    Destinations are drawn from the destination hosts of the other access
    networks; weights from (0, 1]; the release cycle from the source-domain
    cycles inside one period.
    """
    if per_access < 0:
        raise ValueError("per_access must be >= 0")
    bits = Fraction(rate_bps) * period / 1_000_000
    if bits.denominator != 1:
        raise FlowError(f"rate {rate_bps} bit/s x period {period} us is not a whole number of bits")
    if period % cycle_len:
        raise FlowError(f"period {period} us is not a multiple of the source cycle {cycle_len} us")
    n_release = period // cycle_len
    by_domain: dict[str, tuple[list[str], list[str]]] = {}
    for nid, node in sorted(g.nodes.items()):
        if node.role is NodeRole.SOURCE:
            by_domain.setdefault(node.domain, ([], []))[0].append(nid)
        elif node.role is NodeRole.DESTINATION:
            by_domain.setdefault(node.domain, ([], []))[1].append(nid)
    domains = sorted(d for d, (srcs, _) in by_domain.items() if srcs)
    rng = random.Random(seed)
    flows = []
    for dom in domains:
        srcs = by_domain[dom][0]
        others = [d for o in sorted(by_domain) if o != dom for d in by_domain[o][1]]
        if per_access and not others:
            raise FlowError(f"no destination hosts outside access network {dom}")
        for _ in range(per_access):
            flows.append(TsFlow(
                id=f"f{len(flows):05d}",
                src=rng.choice(srcs),
                dst=rng.choice(others),
                period=period,
                payload_bits=int(bits),
                deadline=deadline,
                weight=1.0 - rng.random(),
                release_cycle=rng.randrange(n_release),
            ))
    return FlowSet(flows)


def parse_flows(text: str, path=None) -> FlowSet:
    flows = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0].lower() != "flow" or len(fields) != 9:
            raise ParseError("expected: flow <id> <src> <dst> <period_us> <bits> "
                             "<deadline_us> <weight> <release_cycle>", path, lineno)
        _, fid, src, dst, period, bits, deadline, weight, release = fields
        if fid in seen:
            raise ParseError(f"duplicate flow id {fid!r}", path, lineno)
        seen.add(fid)
        try:
            flows.append(TsFlow(fid, src, dst, int(period), int(bits), int(deadline),
                                float(weight), int(release)))
        except FlowError as exc:
            raise ParseError(str(exc), path, lineno) from None
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", path, lineno) from None
    return FlowSet(flows)


def load_flows(path) -> FlowSet:
    path = Path(path)
    return parse_flows(path.read_text(encoding="utf-8"), path)


def format_flows(flows: Iterable[TsFlow]) -> str:
    return "".join(
        f"flow {f.id} {f.src} {f.dst} {f.period} {f.payload_bits} {f.deadline} "
        f"{f.weight!r} {f.release_cycle}\n" for f in flows)


def save_flows(flows: Iterable[TsFlow], path) -> None:
    Path(path).write_text(format_flows(flows), encoding="utf-8")
