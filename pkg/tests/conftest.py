import sys
from pathlib import Path

import pytest

from cqfdip.flows import TsFlow
from cqfdip.timebase import DomainConfig, SyncMode, build_timed_network
from cqfdip.topology import (Link, NetworkGraph, Node, NodeRole, generate_core,
                             generate_hierarchical)

sys.path.insert(0, str(Path(__file__).parent))

R = NodeRole


def cqf_chain(h: int, bw: int = 10**9, prop: int = 1, dom: str = "cqf00") -> NetworkGraph:
    """s -> c1 -> ... -> ch -> d inside one CQF domain."""
    sw = [f"c{i}" for i in range(1, h + 1)]
    nodes = [Node("s", R.SOURCE, dom), Node("d", R.DESTINATION, dom)]
    nodes += [Node(c, R.CQF_SWITCH, dom) for c in sw]
    hops = ["s"] + sw + ["d"]
    links = [Link(a, b, prop, bw) for a, b in zip(hops, hops[1:])]
    return NetworkGraph(nodes, links)


def diamond(bw: int, prop: int = 1) -> NetworkGraph:
    """Two sources, two parallel CQF switches, one destination: five nodes."""
    dom = "cqf00"
    nodes = [Node("s0", R.SOURCE, dom), Node("s1", R.SOURCE, dom),
             Node("c0", R.CQF_SWITCH, dom), Node("c1", R.CQF_SWITCH, dom),
             Node("d", R.DESTINATION, dom)]
    links = [Link(s, c, prop, bw) for s in ("s0", "s1") for c in ("c0", "c1")]
    links += [Link(c, "d", prop, bw) for c in ("c0", "c1")]
    return NetworkGraph(nodes, links)


def mini_hier(**kw) -> NetworkGraph:
    core = NetworkGraph([Node("R01", R.DIP_ROUTER, "dip")], [])
    kw.setdefault("cqf_per_access", 1)
    kw.setdefault("hosts_per_access", 1)
    return generate_hierarchical(core, 2, **kw)


def cqf_net(g, cycle=25, periods=(100,)):
    return build_timed_network(g, [DomainConfig("cqf00", cycle, SyncMode.PERFECT_TIME)], periods)


def flow(fid, src="s", dst="d", period=100, bits=500, deadline=1000, weight=0.5, release=0):
    return TsFlow(fid, src, dst, period, bits, deadline, weight, release)


@pytest.fixture(scope="session")
def desk_graph():
    return generate_hierarchical(generate_core("desk8"), 4)


@pytest.fixture(scope="session")
def paper_graph():
    return generate_hierarchical(generate_core("atlanta15"), 10)


def pytest_addoption(parser):
    parser.addoption("--paper-scale", action="store_true", default=False,
                     help="run the slow paper-scale acceptance checks")
