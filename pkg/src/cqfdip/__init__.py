"""Hierarchical CQF/DIP deterministic networking: timing, scheduling and simulation."""
from .exceptions import (AlignmentError, CqfDipError, FlowError, HypercycleError, ParseError,
                         SchedulingError, SimulationError, TopologyError)
from .flows import FlowSet, TsFlow, generate_flows, load_flows, save_flows
from .scheduler import (CycleLedger, FlowDecision, Schedule, admissible, cqf_bounds,
                        delay_upper_bound, exact_schedule_small, greedy_schedule,
                        transmit_cycles)
from .simulator import (InterferenceSpec, SimTrace, run_best_effort, run_simulation,
                        summarize)
from .timebase import (AdjacencyTiming, AlignmentTable, DomainConfig, HypercycleSpec, SyncMode,
                       TimedNetwork, align_cqf, align_cross, align_dip, build_alignment_table,
                       build_timed_network, compute_hypercycle)
from .topology import (Link, NetworkGraph, Node, NodeRole, enumerate_paths, generate_core,
                       generate_hierarchical, load_topology, save_topology, validate)

__version__ = "0.1.0"
