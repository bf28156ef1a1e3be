"""Input validation helpers used by the estimators and the simulator."""
from __future__ import annotations

from typing import Iterable

from .exceptions import FlowError
from .flows import FlowSet, TsFlow
from .timebase import TimedNetwork
from .topology import NodeRole


def check_flowset(flows: Iterable[TsFlow] | FlowSet, network: TimedNetwork | None = None) -> FlowSet:
    """Coerce ``flows`` to a :class:`FlowSet` and check it against ``network``.

    Raises :class:`FlowError` on the first offending flow.
    """
    if not isinstance(flows, FlowSet):
        flows = list(flows)
        bad = [f for f in flows if not isinstance(f, TsFlow)]
        if bad:
            raise TypeError(f"expected TsFlow items, got {type(bad[0]).__name__}")
        flows = FlowSet(flows)
    if network is None:
        return flows
    g = network.graph
    hc = network.hc_len
    for f in flows:
        if f.src not in g or g.node(f.src).role is not NodeRole.SOURCE:
            raise FlowError(f"flow {f.id}: {f.src!r} is not a source host")
        if f.dst not in g or g.node(f.dst).role is not NodeRole.DESTINATION:
            raise FlowError(f"flow {f.id}: {f.dst!r} is not a destination host")
        if hc % f.period:
            raise FlowError(f"flow {f.id}: period does not divide hypercycle "
                            f"({f.period} us vs {hc} us)")
        cyc = network.cycle_len(f.src)
        if f.period % cyc:
            raise FlowError(f"flow {f.id}: period {f.period} us is not a multiple of "
                            f"the source cycle {cyc} us")
        if f.release_cycle >= f.period // cyc:
            raise FlowError(f"flow {f.id}: release_cycle {f.release_cycle} outside the period")
    return flows


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
