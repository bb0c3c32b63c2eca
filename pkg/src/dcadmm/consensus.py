"""Push-sum ratio consensus with finite-time epsilon-consensus detection.

Each iteration is one network round carrying ``(u_i, v_i, w_i, R_i)`` and a
detection bit. Radii are reset every ``D`` iterations (``D`` being the
diameter bound); the windowed radius ``R_hat`` bounds the spread of the
states at the start of its window. Agents combine their local
``R_hat < eps`` flags with a ``D``-round AND-consensus that runs on the
rounds of the following window, so every agent stops on the same iteration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import DirectedGraph, WeightMatrix
from .network import SyncNetwork

__all__ = [
    "ProtocolError",
    "ConsensusBudgetExhausted",
    "ConsensusState",
    "ConsensusResult",
    "push_sum_step",
    "radius_step",
    "global_detection",
    "run_epsilon_consensus",
    "write_window_trace",
]

V_FLOOR = 1e-300
DEFAULT_MAX_WINDOWS = 100_000


class ProtocolError(RuntimeError):
    pass


class ConsensusBudgetExhausted(RuntimeError):
    """No global detection within ``max_windows`` windows."""

    def __init__(self, message: str, radii_history: np.ndarray):
        super().__init__(message)
        self.radii_history = radii_history


@dataclass
class ConsensusState:
    """Network-wide protocol variables; row ``i`` belongs to agent ``i``."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    R: np.ndarray
    m: int = 1
    converged: np.ndarray | None = None

    @classmethod
    def initial(cls, u0: np.ndarray) -> "ConsensusState":
        u0 = np.array(u0, dtype=float)
        if u0.ndim == 1:
            u0 = u0[:, None]
        n = u0.shape[0]
        return cls(u=u0, v=np.ones(n), w=u0.copy(), R=np.zeros(n), converged=np.zeros(n, dtype=bool))


def _links(graph: DirectedGraph) -> tuple[np.ndarray, np.ndarray]:
    """(receiver, sender) index arrays for every link plus self-loops."""
    pairs = sorted(graph.edges) + [(i, i) for i in range(graph.n)]
    arr = np.array(pairs, dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def push_sum_step(state: ConsensusState, P: WeightMatrix, net: SyncNetwork | None = None) -> ConsensusState:
    """One mixing round: ``u <- P u``, ``v <- P v``, ``w = u / v``.

    The radius is carried over unchanged; apply :func:`radius_step` with the
    delivered previous ``w`` and ``R`` to update it.
    """
    if net is not None:
        p = state.u.shape[1]
        payload = np.hstack([state.u, state.v[:, None], state.w, state.R[:, None]])
        payload = net.deliver(payload)
        u_in, v_in = payload[:, :p], payload[:, p]
    else:
        u_in, v_in = state.u, state.v
    u = P.entries @ u_in
    v = np.asarray(P.entries @ v_in).ravel()
    if not np.all(v > V_FLOOR):
        raise ProtocolError(f"push-sum weight underflow or corruption: min v = {v.min():.3e}")
    return ConsensusState(u=u, v=v, w=u / v[:, None], R=state.R.copy(), m=state.m, converged=state.converged)


def radius_step(
    w_new: np.ndarray,
    w_old: np.ndarray,
    R_old: np.ndarray,
    graph: DirectedGraph,
    links: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """``R_i <- max_j (||w_i_new - w_j_old|| + R_j_old)``.

    The maximum runs over in-neighbors of ``i`` and ``i`` itself (the
    self-loop of the mixing matrix); without the self term the ball bound
    fails for pairs closer than ``D`` hops.
    """
    recv, send = links if links is not None else _links(graph)
    if w_old.shape[0] != graph.n or R_old.shape[0] != graph.n:
        raise ProtocolError("missing neighbor message: radius inputs do not cover every agent")
    dist = np.linalg.norm(w_new[recv] - w_old[send], axis=1) + R_old[send]
    out = np.full(graph.n, -np.inf)
    np.maximum.at(out, recv, dist)
    return out


def _and_step(bits: np.ndarray, recv: np.ndarray, send: np.ndarray, n: int) -> np.ndarray:
    bad = np.bincount(recv, weights=(~bits[send]).astype(float), minlength=n)
    return bits & (bad == 0)


def global_detection(
    flags: np.ndarray,
    graph: DirectedGraph,
    D: int | None = None,
    net: SyncNetwork | None = None,
) -> np.ndarray:
    """AND-aggregate one bit per agent over ``D`` rounds."""
    D = graph.diameter_bound if D is None else D
    recv, send = _links(graph)
    bits = np.asarray(flags, dtype=bool).copy()
    for _ in range(D):
        if net is not None:
            bits = net.deliver(bits.astype(float)).ravel() > 0.5
        bits = _and_step(bits, recv, send, graph.n)
    return bits


@dataclass
class ConsensusResult:
    w_final: np.ndarray
    iterations_used: int
    radii_history: np.ndarray
    messages: int
    detection_window: int
    w_window_start: np.ndarray
    max_pairwise: float
    average_error: float
    exceeds_eps: bool
    w_history: list[np.ndarray] | None = field(default=None, repr=False)
    R_history: list[np.ndarray] | None = field(default=None, repr=False)


def _max_pairwise(w: np.ndarray) -> float:
    diff = w[:, None, :] - w[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def run_epsilon_consensus(
    u0: np.ndarray,
    eps: float,
    P: WeightMatrix,
    D: int | None = None,
    max_windows: int = DEFAULT_MAX_WINDOWS,
    net: SyncNetwork | None = None,
    record_history: bool = False,
) -> ConsensusResult:
    """Run windows of ``D`` push-sum iterations until global eps detection.

    Returns the states at the iteration where the AND-consensus confirms
    that every agent saw ``R_hat < eps``; this is one window after the
    detecting window, so ``iterations_used`` is a multiple of ``D`` and at
    least ``2 D``. ``record_history`` keeps every ``w`` and ``R`` iterate
    (for verification on small instances).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    graph = P.graph
    D = graph.diameter_bound if D is None else int(D)
    if D < graph.diameter:
        raise ValueError(f"D={D} is below the graph diameter {graph.diameter}")
    links = _links(graph)
    state = ConsensusState.initial(u0)
    average = state.u.mean(axis=0)
    n = graph.n
    messages_before = net.communication_report().total_messages if net is not None else 0

    radii: list[np.ndarray] = []
    w_hist = [state.w.copy()] if record_history else None
    R_hist = [state.R.copy()] if record_history else None
    window_starts = [state.w.copy()]
    pending: np.ndarray | None = None
    k = 0
    while True:
        w_old, R_old = state.w, state.R
        state = push_sum_step(state, P, net)
        state.R = radius_step(state.w, w_old, R_old, graph, links)
        if pending is not None:
            pending = _and_step(pending, links[0], links[1], n)
        k += 1
        if record_history:
            w_hist.append(state.w.copy())
            R_hist.append(state.R.copy())
        if k % D:
            continue

        m = k // D
        radii.append(state.R.copy())
        if pending is not None and pending.all():
            # Flags from window m-1 (radius index m-2) confirmed by all agents.
            if net is not None:
                messages = net.communication_report().total_messages - messages_before
            else:
                messages = k * graph.num_edges
            start = window_starts[-2]
            spread = _max_pairwise(state.w)
            avg_err = float(np.linalg.norm(state.w - average, axis=1).max())
            return ConsensusResult(
                w_final=state.w,
                iterations_used=k,
                radii_history=np.array(radii),
                messages=int(messages),
                detection_window=m - 2,
                w_window_start=start,
                max_pairwise=spread,
                average_error=avg_err,
                exceeds_eps=avg_err > eps,
                w_history=w_hist,
                R_history=R_hist,
            )
        pending = state.R < eps
        state.converged = pending.copy()
        state.R = np.zeros(n)
        state.m = m + 1
        window_starts = window_starts[-1:] + [state.w.copy()]
        if m >= max_windows:
            raise ConsensusBudgetExhausted(
                f"consensus budget exhausted after {m} windows (eps={eps:g})", np.array(radii)
            )


def write_window_trace(result: ConsensusResult, path: str | Path, eps: float) -> None:
    """Per-window CSV: window index, global flag, then one radius column per agent."""
    radii = result.radii_history
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "global_flag"] + [f"R_{i}" for i in range(radii.shape[1])])
        for m, row in enumerate(radii):
            writer.writerow([m, int(bool(np.all(row < eps)))] + [repr(float(x)) for x in row])
