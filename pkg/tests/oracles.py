"""Reference implementations that share no code with the package.

Each oracle recomputes a quantity from first principles (absolute clocks,
brute force, a third-party graph library) so tests can compare two
independent routes.
"""
from __future__ import annotations

import networkx as nx
import numpy as np


def brute_hypercycle(values) -> int:
    """Smallest positive integer divisible by every value, by trial over candidates."""
    step = max(values)
    m = step
    while any(m % v for v in values):
        m += step
    return m


def smaller_common_multiple_exists(values, bound: int) -> bool:
    """True if some m in [1, bound) is divisible by all ``values`` (vectorised trial division)."""
    if bound <= 1:
        return False
    m = np.arange(1, bound, dtype=np.int64)
    ok = np.ones(m.shape, dtype=bool)
    for v in values:
        ok &= (m % v) == 0
    return bool(ok.any())


def timeline_check(phi: int, x: int, src_len: int, dst_len: int, hc: int, prop: int, hco: int,
                   s_a: int, offsets_ns: np.ndarray) -> tuple[int, int]:
    """Replay departures in absolute time and test a claimed destination cycle.

    Source hypercycles start at ``s_a + k*hc``; destination hypercycles at
    ``s_b + k*hc`` with ``s_b = s_a - hco``. Departures happen at
    ``s_a + x*src_len + offset`` for offsets in ``[0, src_len)``. The claimed
    cycle ``phi`` is matched to the first destination instance with that
    index that ends at or after the earliest arrival. Returns
    ``(late, loose)``: arrivals after that instance ends, and whether an
    earlier destination cycle would already have held every arrival.
    """
    ns = 1000
    n_dst = hc // dst_len
    s_b = s_a - hco
    t0 = (s_a + x * src_len) * ns
    arrivals = t0 + offsets_ns + prop * ns
    earliest = t0 + prop * ns
    latest_sup = t0 + src_len * ns + prop * ns  # departures approach the cycle end
    d = dst_len * ns
    # instance k of the destination covers (s_b*ns + k*d, s_b*ns + (k+1)*d]
    k_first = -((-(earliest - s_b * ns)) // d) - 1
    k = k_first + (phi - k_first) % n_dst
    end = s_b * ns + (k + 1) * d
    late = int(np.count_nonzero(arrivals > end)) + int(latest_sup > end)
    loose = int(end - d >= latest_sup)
    return late, loose


def nx_paths(g, src: str, dst: str) -> list[tuple[str, ...]]:
    """All role-legal simple paths ordered by (hops, ids), via networkx."""
    from cqfdip.topology import NodeRole

    dg = nx.DiGraph()
    for (s, d) in g.links:
        dg.add_edge(s, d)
    hosts = {NodeRole.SOURCE, NodeRole.DESTINATION}
    out = []
    for p in nx.all_simple_paths(dg, src, dst):
        if any(g.node(v).role in hosts for v in p[1:-1]):
            continue
        out.append(tuple(p))
    return sorted(out, key=lambda p: (len(p), p))


def fifo_delay_ns(g, path, bits: int) -> int:
    """Store-and-forward delay of one packet alone on ``path``: serialisation + propagation."""
    total = 0
    for a, b in zip(path, path[1:]):
        link = g.link(a, b)
        total += -((-bits * 10**9) // link.bandwidth) + link.prop_delay * 1000
    return total
