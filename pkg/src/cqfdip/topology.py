"""Hierarchical CQF/DIP network graph: nodes, links, file I/O and generators.

Time is expressed in integer microseconds and bandwidth in bits per second
throughout the package.
"""
from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

from .exceptions import ParseError, TopologyError

US_PER_KM = 5  # fibre, 2e8 m/s

DIP_DOMAIN = "dip"


class NodeRole(enum.Enum):
    SOURCE = "source"
    DESTINATION = "destination"
    CQF_SWITCH = "cqf_switch"
    CQF_EDGE_SWITCH = "cqf_edge_switch"
    DIP_ROUTER = "dip_router"
    DIP_EDGE_ROUTER = "dip_edge_router"

    @classmethod
    def parse(cls, text: str) -> "NodeRole":
        key = re.sub(r"(?<!^)(?=[A-Z])", "_", text).lower().replace("-", "_")
        key = re.sub(r"_+", "_", key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown node role {text!r}") from None

    @property
    def is_dip(self) -> bool:
        return self in (NodeRole.DIP_ROUTER, NodeRole.DIP_EDGE_ROUTER)

    @property
    def is_edge(self) -> bool:
        return self in (NodeRole.CQF_EDGE_SWITCH, NodeRole.DIP_EDGE_ROUTER)


_R = NodeRole
LEGAL_ADJACENCY = frozenset(
    {
        (_R.SOURCE, _R.CQF_SWITCH),
        (_R.CQF_SWITCH, _R.CQF_SWITCH),
        (_R.CQF_SWITCH, _R.CQF_EDGE_SWITCH),
        (_R.CQF_EDGE_SWITCH, _R.CQF_SWITCH),
        (_R.CQF_EDGE_SWITCH, _R.DIP_EDGE_ROUTER),
        (_R.DIP_EDGE_ROUTER, _R.CQF_EDGE_SWITCH),
        (_R.DIP_EDGE_ROUTER, _R.DIP_ROUTER),
        (_R.DIP_ROUTER, _R.DIP_EDGE_ROUTER),
        (_R.DIP_ROUTER, _R.DIP_ROUTER),
        (_R.CQF_SWITCH, _R.DESTINATION),
    }
)


@dataclass(frozen=True)
class Node:
    id: str
    role: NodeRole
    domain: str


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    prop_delay: int  # us
    bandwidth: int  # bit/s

    @property
    def key(self) -> tuple[str, str]:
        return (self.src, self.dst)


class NetworkGraph:
    """Immutable directed graph of roled nodes.

    Construction does not validate; call :func:`validate` (or use
    :func:`load_topology`, which does).
    """

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link]):
        self._nodes: dict[str, Node] = {}
        for n in nodes:
            if n.id in self._nodes:
                raise TopologyError(f"duplicate node id {n.id!r}")
            self._nodes[n.id] = n
        self._links: dict[tuple[str, str], Link] = {}
        for l in links:
            if l.key in self._links:
                raise TopologyError(f"duplicate link {l.src}->{l.dst}")
            self._links[l.key] = l

    @property
    def nodes(self) -> dict[str, Node]:
        return dict(self._nodes)

    @property
    def links(self) -> dict[tuple[str, str], Link]:
        return dict(self._links)

    @cached_property
    def domains(self) -> frozenset[str]:
        return frozenset(n.domain for n in self._nodes.values())

    def node(self, node_id: str) -> Node:
        return self._nodes[node_id]

    def link(self, src: str, dst: str) -> Link:
        return self._links[(src, dst)]

    def has_link(self, src: str, dst: str) -> bool:
        return (src, dst) in self._links

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    @cached_property
    def _succ(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {n: [] for n in self._nodes}
        for s, d in self._links:
            if s in succ:
                succ[s].append(d)
        return {n: tuple(sorted(v)) for n, v in succ.items()}

    def successors(self, node_id: str) -> tuple[str, ...]:
        return self._succ.get(node_id, ())

    def nodes_with_role(self, role: NodeRole) -> list[str]:
        return sorted(n.id for n in self._nodes.values() if n.role is role)

    def domain_members(self, domain: str) -> list[str]:
        return sorted(n.id for n in self._nodes.values() if n.domain == domain)

    @cached_property
    def dip_domain(self) -> str | None:
        dip = {n.domain for n in self._nodes.values() if n.role.is_dip}
        return next(iter(dip)) if len(dip) == 1 else None

    @cached_property
    def cqf_domains(self) -> tuple[str, ...]:
        return tuple(sorted({n.domain for n in self._nodes.values() if not n.role.is_dip}))

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._links == other._links

    def __hash__(self):
        return hash((frozenset(self._nodes.items()), frozenset(self._links.items())))

    def __repr__(self) -> str:
        return f"NetworkGraph(nodes={len(self._nodes)}, links={len(self._links)})"


def validate(g: NetworkGraph) -> list[str]:
    """Return the list of violated graph invariants (empty when valid)."""
    problems: list[str] = []
    nodes = g.nodes
    if not nodes:
        problems.append("no nodes")
    for (s, d), link in sorted(g.links.items()):
        missing = [x for x in (s, d) if x not in nodes]
        if missing:
            for x in missing:
                problems.append(f"link {s}->{d} references unknown node {x!r}")
            continue
        if s == d:
            problems.append(f"self-loop on {s}")
        if link.bandwidth <= 0:
            problems.append(f"link {s}->{d}: bandwidth must be > 0")
        if link.prop_delay < 0:
            problems.append(f"link {s}->{d}: prop_delay must be >= 0")
        rs, rd = nodes[s].role, nodes[d].role
        if (rs, rd) not in LEGAL_ADJACENCY:
            problems.append(f"illegal role adjacency: {s} ({rs.value}) -> {d} ({rd.value})")
            continue
        crosses = rs.is_dip != rd.is_dip
        if not crosses and not rs.is_dip and nodes[s].domain != nodes[d].domain:
            problems.append(f"link {s}->{d} joins two CQF domains")
    dip_domains = sorted({n.domain for n in nodes.values() if n.role.is_dip})
    if len(dip_domains) > 1:
        problems.append(f"DIP nodes span several domains: {', '.join(dip_domains)}")
    if dip_domains:
        for n in sorted(nodes.values(), key=lambda n: n.id):
            if not n.role.is_dip and n.domain == dip_domains[0]:
                problems.append(f"CQF-side node {n.id} placed in DIP domain {n.domain!r}")
    return problems


def check_graph(g: NetworkGraph) -> NetworkGraph:
    problems = validate(g)
    if problems:
        raise TopologyError(problems)
    return g


# --------------------------------------------------------------------- file I/O

def _parse_int(token: str, what: str, path, lineno) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what}: expected a number, got {token!r}", path, lineno) from None
    if not value.is_integer():
        raise ParseError(f"{what}: expected an integer, got {token!r}", path, lineno)
    return int(value)


def parse_topology(text: str, path=None) -> NetworkGraph:
    nodes: list[Node] = []
    links: list[Link] = []
    seen_nodes: set[str] = set()
    seen_links: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0].lower()
        if kind == "node":
            if len(fields) != 4:
                raise ParseError("node line needs: node <id> <role> <domain>", path, lineno)
            _, nid, role, domain = fields
            try:
                role_ = NodeRole.parse(role)
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if nid in seen_nodes:
                raise ParseError(f"duplicate node id {nid!r}", path, lineno)
            seen_nodes.add(nid)
            nodes.append(Node(nid, role_, domain))
        elif kind == "link":
            if len(fields) != 5:
                raise ParseError("link line needs: link <src> <dst> <delay_us> <bw_bps>", path, lineno)
            _, s, d, delay, bw = fields
            if (s, d) in seen_links:
                raise ParseError(f"duplicate link {s}->{d}", path, lineno)
            seen_links.add((s, d))
            links.append(Link(s, d, _parse_int(delay, "delay_us", path, lineno),
                              _parse_int(bw, "bw_bps", path, lineno)))
        else:
            raise ParseError(f"unknown record type {fields[0]!r}", path, lineno)
    return NetworkGraph(nodes, links)


def load_topology(path) -> NetworkGraph:
    """Read a topology file and validate it."""
    path = Path(path)
    g = parse_topology(path.read_text(encoding="utf-8"), path=path)
    return check_graph(g)


def format_topology(g: NetworkGraph) -> str:
    out = []
    for n in sorted(g.nodes.values(), key=lambda n: n.id):
        out.append(f"node {n.id} {n.role.value} {n.domain}")
    for (s, d), l in sorted(g.links.items()):
        out.append(f"link {s} {d} {l.prop_delay} {l.bandwidth}")
    return "\n".join(out) + "\n"


def save_topology(g: NetworkGraph, path) -> None:
    Path(path).write_text(format_topology(g), encoding="utf-8")


def parse_sndlib_native(text: str, link_km: float = 30, bandwidth: int = 10**9 * 10,
                        domain: str = DIP_DOMAIN) -> NetworkGraph:
    """Turn an SNDlib native-format network into a core of DIP routers.

    Only the NODES and LINKS sections are read; every undirected SNDlib link
    becomes a duplex pair with uniform length and bandwidth.
    """
    section = None
    nodes: list[Node] = []
    links: list[Link] = []
    delay = int(round(link_km * US_PER_KM))
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()[0]
        if head in ("NODES", "LINKS", "DEMANDS", "ADMISSIBLE_PATHS", "META"):
            section = head
            continue
        if line == ")":
            section = None
            continue
        if section == "NODES":
            nodes.append(Node(head, NodeRole.DIP_ROUTER, domain))
        elif section == "LINKS":
            m = re.match(r"\S+\s*\(\s*(\S+)\s+(\S+)\s*\)", line)
            if not m:
                raise ParseError(f"cannot parse SNDlib link line {line!r}")
            a, b = m.groups()
            for s, d in ((a, b), (b, a)):
                links.append(Link(s, d, delay, bandwidth))
    return NetworkGraph(nodes, links)


# ------------------------------------------------------------------- generators

# 15 routers / 22 links, diameter 3 (the size of the SNDlib Atlanta instance)
_ATLANTA15_EDGES = [
    (0, 1), (0, 14), (1, 2), (1, 6), (1, 10), (2, 3), (3, 4), (4, 5), (4, 9),
    (4, 12), (4, 13), (5, 6), (6, 7), (7, 8), (7, 13), (8, 9), (8, 10),
    (9, 10), (10, 11), (11, 12), (12, 13), (13, 14),
]
# ring of 8 with the four diameters; diameter 2
_DESK8_EDGES = [(i, (i + 1) % 8) for i in range(8)] + [(i, i + 4) for i in range(4)]

CORES = {"atlanta15": (15, _ATLANTA15_EDGES), "desk8": (8, _DESK8_EDGES)}


def generate_core(name: str = "atlanta15", link_km: float = 30,
                  bandwidth: int = 10 * 10**9) -> NetworkGraph:
    try:
        size, edges = CORES[name]
    except KeyError:
        raise ValueError(f"unknown core {name!r}; choose from {sorted(CORES)}") from None
    ids = [f"R{i + 1:02d}" for i in range(size)]
    delay = int(round(link_km * US_PER_KM))
    nodes = [Node(i, NodeRole.DIP_ROUTER, DIP_DOMAIN) for i in ids]
    links = []
    for a, b in edges:
        links.append(Link(ids[a], ids[b], delay, bandwidth))
        links.append(Link(ids[b], ids[a], delay, bandwidth))
    return NetworkGraph(nodes, links)


def access_prefix(i: int) -> str:
    return f"a{i:02d}"


def generate_hierarchical(core: NetworkGraph, n_access: int, cqf_per_access: int = 2,
                          access_bw: int = 10**9, access_delay: int = 1,
                          hosts_per_access: int = 2, edge_delay: int = 1,
                          core_bw: int | None = None, max_fanout: int = 2) -> NetworkGraph:
    """Attach ``n_access`` CQF access trees to a DIP core.

    Access network ``i`` is a chain ``hosts -> c0 -> ... -> c{k-1} -> e``
    (CQF switches then a CQF edge switch), joined through its own DIP edge
    router to core router ``i mod |core|`` (sorted by id). Every access
    network is its own CQF time domain.
    """
    if n_access < 1:
        raise ValueError("n_access must be >= 1")
    if cqf_per_access < 1 or hosts_per_access < 1:
        raise ValueError("cqf_per_access and hosts_per_access must be >= 1")
    routers = sorted(core.nodes)
    if not routers:
        raise TopologyError("no nodes")
    bad = [n for n in routers if core.node(n).role is not NodeRole.DIP_ROUTER]
    if bad:
        raise TopologyError(f"core must contain only dip_router nodes, got {', '.join(bad)}")
    if n_access > len(routers) * max_fanout:
        raise ValueError(f"n_access={n_access} exceeds {len(routers)} core routers "
                         f"x fan-out {max_fanout}")
    dip = core.node(routers[0]).domain
    if core_bw is None:
        core_bw = max((l.bandwidth for l in core.links.values()), default=10 * 10**9)

    nodes = list(core.nodes.values())
    links = list(core.links.values())

    def duplex(a, b, delay, bw):
        links.append(Link(a, b, delay, bw))
        links.append(Link(b, a, delay, bw))

    for i in range(n_access):
        p = access_prefix(i)
        dom = f"cqf{i:02d}"
        switches = [f"{p}.c{j}" for j in range(cqf_per_access)]
        edge, dedge = f"{p}.e", f"{p}.de"
        nodes += [Node(s, NodeRole.CQF_SWITCH, dom) for s in switches]
        nodes.append(Node(edge, NodeRole.CQF_EDGE_SWITCH, dom))
        nodes.append(Node(dedge, NodeRole.DIP_EDGE_ROUTER, dip))
        for h in range(hosts_per_access):
            src, dst = f"{p}.s{h}", f"{p}.d{h}"
            nodes.append(Node(src, NodeRole.SOURCE, dom))
            nodes.append(Node(dst, NodeRole.DESTINATION, dom))
            links.append(Link(src, switches[0], access_delay, access_bw))
            links.append(Link(switches[0], dst, access_delay, access_bw))
        for a, b in zip(switches, switches[1:]):
            duplex(a, b, access_delay, access_bw)
        duplex(switches[-1], edge, access_delay, access_bw)
        duplex(edge, dedge, edge_delay, access_bw)
        duplex(dedge, routers[i % len(routers)], edge_delay, core_bw)
    return check_graph(NetworkGraph(nodes, links))


def access_of(node_id: str) -> str | None:
    """Access-network prefix of a generated node id (``a03.s1`` -> ``a03``)."""
    head, sep, _ = node_id.partition(".")
    return head if sep else None


# ------------------------------------------------------------------------ paths

def _hops_to(g: NetworkGraph, dst: str) -> dict[str, int]:
    pred: dict[str, list[str]] = {}
    for s, d in g.links:
        pred.setdefault(d, []).append(s)
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        v = queue.popleft()
        for u in pred.get(v, ()):
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def iter_paths(g: NetworkGraph, src: str, dst: str) -> Iterator[tuple[str, ...]]:
    """Yield loop-free paths by (hop count, node-id sequence)."""
    dist = _hops_to(g, dst)
    if src not in dist:
        return
    n = len(g)
    for length in range(dist[src], n):
        path = [src]
        on_path = {src}

        def dfs(v, budget):
            if v == dst:
                if budget == 0:
                    yield tuple(path)
                return
            for w in g.successors(v):
                if w in on_path or dist.get(w, n + 1) > budget - 1:
                    continue
                if w != dst and g.node(w).role in (NodeRole.SOURCE, NodeRole.DESTINATION):
                    continue
                path.append(w)
                on_path.add(w)
                yield from dfs(w, budget - 1)
                path.pop()
                on_path.discard(w)

        yield from dfs(src, length)


def enumerate_paths(g: NetworkGraph, src: str, dst: str, k: int) -> list[tuple[str, ...]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if g.node(src).role is not NodeRole.SOURCE:
        raise ValueError(f"{src} is not a source host")
    if g.node(dst).role is not NodeRole.DESTINATION:
        raise ValueError(f"{dst} is not a destination host")
    out = []
    for p in iter_paths(g, src, dst):
        out.append(p)
        if len(out) == k:
            break
    return out
