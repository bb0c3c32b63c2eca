"""Distributed constrained convex optimization over digraphs (DC-DistADMM)."""

__version__ = "0.1.0"

from .admm import EpsSchedule, OracleSolution, ProblemInstance, StoppingRule, run
from .consensus import run_epsilon_consensus
from .graphs import (
    DirectedGraph,
    WeightMatrix,
    equal_neighbor_weights,
    erdos_renyi_digraph,
    ring_digraph,
)
from .network import SyncNetwork

__all__ = [
    "DirectedGraph",
    "WeightMatrix",
    "EpsSchedule",
    "OracleSolution",
    "ProblemInstance",
    "StoppingRule",
    "SyncNetwork",
    "equal_neighbor_weights",
    "erdos_renyi_digraph",
    "ring_digraph",
    "run",
    "run_epsilon_consensus",
]
