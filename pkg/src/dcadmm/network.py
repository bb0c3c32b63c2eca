"""Synchronous lockstep message exchange with communication accounting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import DirectedGraph

__all__ = ["RoundMailbox", "CommunicationReport", "SyncNetwork"]


@dataclass
class RoundMailbox:
    """Messages delivered in one round.

    ``inbox[i]`` lists ``(sender, payload)`` pairs: one per in-neighbor of
    ``i`` plus ``i``'s own payload.
    """

    inbox: list[list[tuple[int, np.ndarray]]]
    round_index: int
    messages_sent: np.ndarray
    rounds_elapsed: np.ndarray


@dataclass(frozen=True)
class CommunicationReport:
    rounds: np.ndarray
    messages: np.ndarray

    @property
    def total_messages(self) -> int:
        return int(self.messages.sum())

    @property
    def total_rounds(self) -> int:
        return int(self.rounds.max()) if self.rounds.size else 0


class SyncNetwork:
    """Round barrier over a fixed digraph.

    Every call to :meth:`exchange` or :meth:`deliver` is one synchronous
    round: each agent sends its payload along all of its out-links. The
    vectorized :meth:`deliver` returns the stacked payload matrix; callers
    must only read rows of in-neighbors, which is what the mixing matrices'
    sparsity enforces.
    """

    def __init__(self, graph: DirectedGraph, trace_path: str | Path | None = None):
        self.graph = graph
        self._outdeg = graph.out_degree()
        self.messages_sent = np.zeros(graph.n, dtype=np.int64)
        self.rounds_elapsed = np.zeros(graph.n, dtype=np.int64)
        self.round_index = 0
        self._trace_rows: list[tuple[int, int]] | None = [] if trace_path is not None else None
        self._trace_path = Path(trace_path) if trace_path is not None else None

    def _account(self, messages_per_link: int) -> None:
        self.round_index += 1
        self.rounds_elapsed += 1
        sent = messages_per_link * self._outdeg
        self.messages_sent += sent
        if self._trace_rows is not None:
            self._trace_rows.append((self.round_index, int(sent.sum())))

    def _check(self, payloads: np.ndarray) -> np.ndarray:
        arr = np.asarray(payloads, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] != self.graph.n:
            raise ValueError(
                f"expected one payload vector per agent ({self.graph.n}), got shape {arr.shape}"
            )
        return arr

    def exchange(self, payloads) -> RoundMailbox:
        """Deliver one round and return explicit per-agent inboxes."""
        if isinstance(payloads, (list, tuple)):
            dims = {np.atleast_1d(np.asarray(p)).shape for p in payloads}
            if len(dims) > 1:
                raise ValueError(f"payload dimension mismatch across agents: {sorted(dims)}")
            payloads = np.stack([np.atleast_1d(np.asarray(p, dtype=float)) for p in payloads])
        arr = self._check(payloads)
        self._account(1)
        inbox = []
        for i in range(self.graph.n):
            senders = sorted(self.graph.in_neighbors[i] + (i,))
            inbox.append([(j, arr[j].copy()) for j in senders])
        return RoundMailbox(inbox, self.round_index, self.messages_sent.copy(), self.rounds_elapsed.copy())

    def deliver(self, payloads: np.ndarray, messages_per_link: int = 1) -> np.ndarray:
        """Vectorized round: account for the traffic and hand back the payloads."""
        arr = self._check(payloads)
        self._account(messages_per_link)
        return arr

    def communication_report(self) -> CommunicationReport:
        return CommunicationReport(self.rounds_elapsed.copy(), self.messages_sent.copy())

    def write_trace(self, path: str | Path | None = None) -> None:
        """Write ``round,messages`` CSV; requires tracing enabled at construction."""
        if self._trace_rows is None:
            raise RuntimeError("network was created without a trace path")
        target = Path(path) if path is not None else self._trace_path
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "messages"])
            writer.writerows(self._trace_rows)
