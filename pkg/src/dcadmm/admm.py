"""DC-DistADMM outer loop.

Each outer iteration ``k -> k+1``:

1. every agent minimizes ``f_i(x) + lam_i^T (x - y_i) + gamma/2 ||x - y_i||^2``;
2. the agents run eps_{k+1}-consensus on ``x_i + lam_i / gamma`` and take the
   returned estimate as ``y_i``;
3. ``lam_i += gamma (x_i - y_i)``.

Ergodic averages of ``x`` and ``y`` are maintained locally at no extra
communication cost.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .consensus import DEFAULT_MAX_WINDOWS, run_epsilon_consensus
from .graphs import DirectedGraph, WeightMatrix, equal_neighbor_weights
from .network import SyncNetwork

__all__ = [
    "EpsSchedule",
    "ProblemInstance",
    "OracleSolution",
    "AgentState",
    "IterateMetrics",
    "StoppingRule",
    "AdmmResult",
    "DivergenceError",
    "METRICS_HEADER",
    "x_update",
    "y_update",
    "lambda_update",
    "ergodic_average",
    "run",
    "write_metrics_csv",
]

log = logging.getLogger(__name__)

METRICS_HEADER = (
    "k",
    "consensus_residual",
    "max_solution_residual",
    "objective_gap",
    "inner_iters",
    "cum_messages",
    "wall_time_s",
)


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class EpsSchedule:
    """Consensus tolerance ``eps_k`` for outer iteration ``k >= 1``."""

    kind: str = "inv_k2"
    c: float = 0.01

    KINDS = ("constant", "inv_k", "inv_k2")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown eps schedule {self.kind!r}; choose from {self.KINDS}")
        if not self.c > 0:
            raise ValueError(f"eps schedule constant must be positive, got {self.c}")

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError("eps schedule is indexed from k = 1")
        if self.kind == "constant":
            return self.c
        if self.kind == "inv_k":
            return self.c / k
        return self.c / (k * k)

    @property
    def summable(self) -> bool:
        return self.kind == "inv_k2"

    @property
    def label(self) -> str:
        return {"constant": f"{self.c:g}", "inv_k": f"{self.c:g}/k", "inv_k2": f"{self.c:g}/k^2"}[self.kind]

    @classmethod
    def parse(cls, text: str) -> "EpsSchedule":
        """Parse ``"0.01"``, ``"0.01/k"`` or ``"0.01/k^2"``."""
        text = text.replace(" ", "")
        for suffix, kind in (("/k^2", "inv_k2"), ("/k2", "inv_k2"), ("/k", "inv_k")):
            if text.endswith(suffix):
                return cls(kind, float(text[: -len(suffix)]))
        return cls("constant", float(text))


@dataclass
class ProblemInstance:
    """Local objectives (each carrying its own constraint set) plus ADMM parameters."""

    objectives: Sequence
    gamma: float = 1.0
    eps_schedule: EpsSchedule = field(default_factory=EpsSchedule)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        dims = {obj.dim for obj in self.objectives}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on the decision dimension: {sorted(dims)}")

    @property
    def n(self) -> int:
        return len(self.objectives)

    @property
    def dim(self) -> int:
        return self.objectives[0].dim

    def total_objective(self, xs: np.ndarray) -> float:
        """``F(x_[1:n]) = sum_i f_i(x_i)``; rows of ``xs`` are agents."""
        xs = np.atleast_2d(xs)
        if xs.shape[0] == 1 and self.n > 1:
            xs = np.repeat(xs, self.n, axis=0)
        return float(sum(obj.value(x) for obj, x in zip(self.objectives, xs)))


@dataclass(frozen=True)
class OracleSolution:
    x_star: np.ndarray
    f_star: float
    method: str
    lambda_star: np.ndarray | None = None


@dataclass
class AgentState:
    """Network-wide ADMM variables; row ``i`` belongs to agent ``i``."""

    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, n: int, p: int) -> "AgentState":
        z = np.zeros((n, p))
        return cls(z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), 0)


@dataclass
class IterateMetrics:
    k: int
    consensus_residual: float
    inner_iters: int
    cum_messages: int
    cum_rounds: int
    eps: float
    wall_time_s: float
    solution_residuals: np.ndarray | None = None
    objective_gap: float | None = None
    lyapunov: float | None = None
    lambda_norm: float = 0.0
    lambda_bound_ok: bool = True
    y_error: float = 0.0
    consensus_average_flag: bool = False

    @property
    def max_solution_residual(self) -> float | None:
        if self.solution_residuals is None:
            return None
        return float(self.solution_residuals.max())


@dataclass(frozen=True)
class StoppingRule:
    """Stop at ``max_iterations`` or when thresholds are met.

    ``consensus_tol`` and ``step_tol`` must both hold when given;
    ``solution_tol`` (needs an oracle) stops once every agent's relative
    solution residual is below it.
    """

    max_iterations: int = 500
    consensus_tol: float | None = None
    step_tol: float | None = None
    solution_tol: float | None = None

    def done(self, m: IterateMetrics, step: float) -> bool:
        if m.k >= self.max_iterations:
            return True
        if self.solution_tol is not None and m.solution_residuals is not None:
            if m.max_solution_residual <= self.solution_tol:
                return True
        if self.consensus_tol is None and self.step_tol is None:
            return False
        ok = True
        if self.consensus_tol is not None:
            ok &= m.consensus_residual <= self.consensus_tol
        if self.step_tol is not None:
            ok &= step <= self.step_tol
        return ok


@dataclass
class AdmmResult:
    history: list[IterateMetrics]
    state: AgentState
    residuals: np.ndarray | None
    iterates: dict[str, np.ndarray] | None = None
    consensus_iterations: list[int] = field(default_factory=list)

    def first_iteration_below(self, tol: float) -> int | None:
        """First ``k`` whose max per-agent solution residual is ``<= tol``."""
        for m in self.history:
            if m.max_solution_residual is not None and m.max_solution_residual <= tol:
                return m.k
        return None

    def rounds_to(self, tol: float) -> int | None:
        for m in self.history:
            if m.max_solution_residual is not None and m.max_solution_residual <= tol:
                return m.cum_rounds
        return None


def x_update(state: AgentState, problem: ProblemInstance) -> np.ndarray:
    """Local minimizations, one per agent, warm-started at the current x."""
    out = np.empty_like(state.x)
    for i, obj in enumerate(problem.objectives):
        out[i] = obj.argmin_augmented(state.y[i], state.lam[i], problem.gamma, x0=state.x[i])
    return out


def y_update(
    x_new: np.ndarray,
    lam: np.ndarray,
    gamma: float,
    eps: float,
    P: WeightMatrix,
    D: int | None = None,
    net: SyncNetwork | None = None,
    max_windows: int = DEFAULT_MAX_WINDOWS,
):
    """eps-consensus on ``x + lam / gamma``; returns ``(y, ConsensusResult)``."""
    res = run_epsilon_consensus(x_new + lam / gamma, eps, P, D, max_windows=max_windows, net=net)
    return res.w_final.copy(), res


def lambda_update(lam: np.ndarray, x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    return lam + gamma * (x - y)


def ergodic_average(history: np.ndarray) -> np.ndarray:
    """Running means along axis 0: ``out[k-1] = mean(history[:k])``."""
    history = np.asarray(history, dtype=float)
    counts = np.arange(1, history.shape[0] + 1).reshape((-1,) + (1,) * (history.ndim - 1))
    return np.cumsum(history, axis=0) / counts


def _lambda_star(problem: ProblemInstance, oracle: OracleSolution) -> np.ndarray:
    if oracle.lambda_star is not None:
        return oracle.lambda_star
    # Smooth unconstrained optimum: -grad f_i(x*) for each agent.
    grads = []
    for obj in problem.objectives:
        if hasattr(obj, "gradient"):
            grads.append(-obj.gradient(oracle.x_star))
        else:
            grads.append(np.zeros(problem.dim))
    return np.array(grads)


def run(
    problem: ProblemInstance,
    graph: DirectedGraph,
    P: WeightMatrix | None = None,
    stop: StoppingRule = StoppingRule(),
    oracle: OracleSolution | None = None,
    trace: str | Path | Callable[[IterateMetrics], None] | None = None,
    D: int | None = None,
    net: SyncNetwork | None = None,
    max_windows: int = DEFAULT_MAX_WINDOWS,
    record_iterates: bool = False,
) -> AdmmResult:
    """Run DC-DistADMM from ``x = y = lam = 0``.

    Metrics involving ``x*`` or ``F*`` are only filled in when ``oracle`` is
    given. ``trace`` may be a CSV path (metrics stream) or a callback.
    """
    P = P if P is not None else equal_neighbor_weights(graph)
    if P.graph is not graph and P.graph != graph:
        raise ValueError("weight matrix belongs to a different graph")
    if not P.is_column_stochastic():
        raise ValueError("DC-DistADMM needs a column-stochastic mixing matrix")
    n, p = problem.n, problem.dim
    if graph.n != n:
        raise ValueError(f"graph has {graph.n} agents but the problem has {n}")
    net = net if net is not None else SyncNetwork(graph)
    gamma = problem.gamma
    state = AgentState.zeros(n, p)
    x0 = state.x.copy()

    res_denoms = None
    lam_star = None
    if oracle is not None:
        res_denoms = np.linalg.norm(x0 - oracle.x_star[None, :], axis=1)
        res_denoms[res_denoms == 0] = 1.0
        lam_star = _lambda_star(problem, oracle)

    history: list[IterateMetrics] = []
    residual_rows: list[np.ndarray] = []
    consensus_iters: list[int] = []
    iterates = {"x": [], "y": [], "lam": []} if record_iterates else None
    callback = trace if callable(trace) else None
    t_start = time.process_time()

    while True:
        k = state.k + 1
        eps = problem.eps_schedule(k)
        x_new = x_update(state, problem)
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError(f"non-finite x at outer iteration {k}")
        y_target = (x_new + state.lam / gamma).mean(axis=0)
        y_new, cres = y_update(x_new, state.lam, gamma, eps, P, D, net, max_windows)
        lam_new = lambda_update(state.lam, x_new, y_new, gamma)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(lam_new))):
            raise DivergenceError(f"non-finite y or lambda at outer iteration {k}")

        step = float(np.abs(x_new - state.x).max())
        state.x_hat += (x_new - state.x_hat) / k
        state.y_hat += (y_new - state.y_hat) / k
        state.x, state.y, state.lam, state.k = x_new, y_new, lam_new, k
        consensus_iters.append(cres.iterations_used)
        if iterates is not None:
            iterates["x"].append(x_new.copy())
            iterates["y"].append(y_new.copy())
            iterates["lam"].append(lam_new.copy())

        lam_norm = float(np.linalg.norm(lam_new))
        lam_ok = lam_norm <= gamma * math.sqrt(n) * eps
        report = net.communication_report()
        m = IterateMetrics(
            k=k,
            consensus_residual=float(np.linalg.norm(state.x_hat - state.y_hat)),
            inner_iters=cres.iterations_used,
            cum_messages=report.total_messages,
            cum_rounds=report.total_rounds,
            eps=eps,
            wall_time_s=time.process_time() - t_start,
            lambda_norm=lam_norm,
            lambda_bound_ok=lam_ok,
            y_error=float(np.linalg.norm(y_new - y_target[None, :])),
            consensus_average_flag=cres.exceeds_eps,
        )
        if oracle is not None:
            m.solution_residuals = np.linalg.norm(x_new - oracle.x_star[None, :], axis=1) / res_denoms
            m.objective_gap = problem.total_objective(state.x_hat) - oracle.f_star
            m.lyapunov = 0.5 * gamma * float(np.sum((x_new - oracle.x_star) ** 2)) + float(
                np.sum((lam_new - lam_star) ** 2)
            ) / (2 * gamma)
            residual_rows.append(m.solution_residuals)
        history.append(m)
        if callback is not None:
            callback(m)
        if stop.done(m, step):
            break

    lam_violations = sum(not h.lambda_bound_ok for h in history)
    if lam_violations:
        log.info("lambda norm exceeded gamma*sqrt(n)*eps_k on %d of %d iterations", lam_violations, len(history))
    if trace is not None and not callable(trace):
        write_metrics_csv(history, trace)
    return AdmmResult(
        history=history,
        state=state,
        residuals=np.array(residual_rows) if residual_rows else None,
        iterates={key: np.array(v) for key, v in iterates.items()} if iterates is not None else None,
        consensus_iterations=consensus_iters,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(history: Sequence[IterateMetrics], path: str | Path, wall_time: bool = True) -> None:
    """Metrics stream with :data:`METRICS_HEADER`; ``wall_time=False`` leaves that column blank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for m in history:
            writer.writerow(
                [
                    m.k,
                    _fmt(m.consensus_residual),
                    _fmt(m.max_solution_residual),
                    _fmt(m.objective_gap),
                    m.inner_iters,
                    m.cum_messages,
                    _fmt(m.wall_time_s) if wall_time else "",
                ]
            )
