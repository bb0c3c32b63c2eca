"""Comparison methods driven over the same network and metrics pipeline.

* DGD: ``x <- W x - alpha grad f(x)``.
* EXTRA: ``x^{k+2} = (I + W) x^{k+1} - W~ x^k - alpha (grad^{k+1} - grad^k)``
  with ``W~ = (I + W) / 2``.
* Push-Pull: ``x <- R (x - alpha y)``, ``y <- C y + grad f(x_new) - grad f(x_old)``
  with a row-stochastic ``R`` and a column-stochastic ``C``.
* DCOADMM (decentralized consensus optimization ADMM): for neighbors ``N_i``,
  ``x_i <- argmin f_i(x) + alpha_i^T x + c sum_j ||x - (x_i + x_j)/2||^2`` and
  ``alpha_i += c sum_j (x_i - x_j)``.
* Multi-agent ADMM: edge splitting ``x_i = z_e = x_j`` for every undirected
  edge ``e = {i, j}``, with one dual per edge endpoint.

DGD, EXTRA and both ADMM variants need an undirected graph; they run on the
symmetrized topology with Metropolis weights. ``step_size`` is the gradient
step for the first three and the penalty ``c`` for the ADMM variants.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .admm import AdmmResult, DivergenceError, IterateMetrics, OracleSolution, ProblemInstance, StoppingRule
from .admm import write_metrics_csv
from .graphs import (
    DirectedGraph,
    WeightMatrix,
    equal_neighbor_weights,
    metropolis_weights,
    row_equal_neighbor_weights,
    symmetrize,
)
from .network import SyncNetwork

__all__ = [
    "ALGORITHMS",
    "MatrixClassError",
    "BaselineConfig",
    "BaselineState",
    "make_config",
    "step_size_bound",
    "dgd_step",
    "extra_step",
    "push_pull_step",
    "dcoadmm_step",
    "multi_agent_admm_step",
    "run_baseline",
    "tune_step_size",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("DGD", "EXTRA", "PushPull", "DCOADMM", "MultiAgentADMM")
UNDIRECTED = frozenset({"DGD", "EXTRA", "DCOADMM", "MultiAgentADMM"})
MESSAGES_PER_LINK = {"PushPull": 2}


class MatrixClassError(ValueError):
    pass


@dataclass
class BaselineConfig:
    """Algorithm id, constant step size and mixing matrices.

    ``mixing`` is the symmetric doubly-stochastic matrix for undirected
    methods and the row-stochastic ``R`` for Push-Pull, whose
    column-stochastic ``C`` goes in ``mixing_col``.
    """

    algorithm: str
    step_size: float
    mixing: WeightMatrix
    mixing_col: WeightMatrix | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown baseline {self.algorithm!r}; choose from {ALGORITHMS}")
        if not self.step_size > 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if self.undirected_required:
            if not self.graph.is_symmetric():
                raise MatrixClassError(f"{self.algorithm} needs an undirected graph")
            W = self.mixing.dense()
            if not (self.mixing.is_doubly_stochastic(1e-10) and np.allclose(W, W.T, atol=1e-14)):
                raise MatrixClassError(f"{self.algorithm} needs symmetric doubly-stochastic weights")
        else:
            if self.mixing_col is None:
                raise MatrixClassError("Push-Pull needs a column-stochastic matrix in mixing_col")
            if not self.mixing.is_row_stochastic(1e-10):
                raise MatrixClassError("Push-Pull's R matrix must be row-stochastic")
            if not self.mixing_col.is_column_stochastic(1e-10):
                raise MatrixClassError("Push-Pull's C matrix must be column-stochastic")
            if self.mixing_col.graph != self.mixing.graph:
                raise MatrixClassError("Push-Pull's matrices must share one graph")

    @property
    def undirected_required(self) -> bool:
        return self.algorithm in UNDIRECTED

    @property
    def graph(self) -> DirectedGraph:
        return self.mixing.graph

    @property
    def messages_per_link(self) -> int:
        return MESSAGES_PER_LINK.get(self.algorithm, 1)


def make_config(algorithm: str, graph: DirectedGraph, step_size: float) -> BaselineConfig:
    """Standard matrices: Metropolis on ``symmetrize(graph)`` or the Push-Pull pair on ``graph``."""
    if algorithm in UNDIRECTED:
        return BaselineConfig(algorithm, step_size, metropolis_weights(symmetrize(graph)))
    return BaselineConfig(algorithm, step_size, row_equal_neighbor_weights(graph), equal_neighbor_weights(graph))


def _max_lipschitz(problem: ProblemInstance) -> float:
    return max(float(obj.lipschitz) for obj in problem.objectives)


def step_size_bound(algorithm: str, problem: ProblemInstance, mixing: WeightMatrix | None = None) -> float:
    """A step size inside each method's documented convergence region.

    DGD uses ``(1 + lambda_min(W)) / L``, EXTRA ``lambda_min(W~) / L`` (half
    its bound), Push-Pull the conservative ``1 / (10 L)``. The ADMM variants
    converge for every ``c > 0``; ``L`` itself is returned.
    """
    L = _max_lipschitz(problem)
    if algorithm in ("DGD", "EXTRA"):
        if mixing is None:
            raise ValueError(f"{algorithm} bound needs the mixing matrix")
        lam_min = float(np.linalg.eigvalsh(mixing.dense())[0])
        if algorithm == "DGD":
            return 0.9 * (1.0 + lam_min) / L
        return (1.0 + lam_min) / (2.0 * L)
    if algorithm == "PushPull":
        return 0.1 / L
    return L


# State and steps --------------------------------------------------------------


@dataclass
class BaselineState:
    """Network-wide iterates; row ``i`` belongs to agent ``i``.

    ``aux`` holds method-specific memory (previous iterate and gradient, the
    gradient tracker, dual variables).
    """

    x: np.ndarray
    k: int = 0
    aux: dict = field(default_factory=dict)


def _grads(problem: ProblemInstance, X: np.ndarray) -> np.ndarray:
    return np.array([obj.gradient(x) for obj, x in zip(problem.objectives, X)])


def _mix(W: WeightMatrix, X: np.ndarray) -> np.ndarray:
    return np.asarray(W.entries @ X)


def _send(net: SyncNetwork | None, payload: np.ndarray, cfg: BaselineConfig) -> np.ndarray:
    if net is None:
        return payload
    before = net.communication_report().total_messages
    out = net.deliver(payload, cfg.messages_per_link)
    sent = net.communication_report().total_messages - before
    expected = cfg.messages_per_link * net.graph.num_edges
    assert sent == expected, f"{cfg.algorithm} sent {sent} messages in a round, expected {expected}"
    return out


def dgd_step(state: BaselineState, problem: ProblemInstance, cfg: BaselineConfig, net=None) -> BaselineState:
    X = _send(net, state.x, cfg)
    x_new = _mix(cfg.mixing, X) - cfg.step_size * _grads(problem, state.x)
    return BaselineState(x_new, state.k + 1, state.aux)


def extra_step(state: BaselineState, problem: ProblemInstance, cfg: BaselineConfig, net=None) -> BaselineState:
    alpha = cfg.step_size
    g = _grads(problem, state.x)
    WX = _mix(cfg.mixing, _send(net, state.x, cfg))
    if state.k == 0:
        x_new = WX - alpha * g
    else:
        # (I + W) x^{k+1} - (I + W)/2 x^k, reusing the stored W x^k.
        x_prev, WX_prev, g_prev = state.aux["x_prev"], state.aux["WX_prev"], state.aux["g_prev"]
        x_new = state.x + WX - 0.5 * (x_prev + WX_prev) - alpha * (g - g_prev)
    aux = {"x_prev": state.x, "WX_prev": WX, "g_prev": g}
    return BaselineState(x_new, state.k + 1, aux)


def push_pull_step(state: BaselineState, problem: ProblemInstance, cfg: BaselineConfig, net=None) -> BaselineState:
    if "y" in state.aux:
        y, g = state.aux["y"], state.aux["g"]
    else:
        g = _grads(problem, state.x)
        y = g
    p = state.x.shape[1]
    payload = _send(net, np.hstack([state.x - cfg.step_size * y, y]), cfg)
    x_new = _mix(cfg.mixing, payload[:, :p])
    g_new = _grads(problem, x_new)
    y_new = _mix(cfg.mixing_col, payload[:, p:]) + g_new - g
    return BaselineState(x_new, state.k + 1, {"y": y_new, "g": g_new})


def _neighbor_sums(graph: DirectedGraph, X: np.ndarray) -> np.ndarray:
    A = graph.adjacency().astype(float)
    return A @ X


def dcoadmm_step(state: BaselineState, problem: ProblemInstance, cfg: BaselineConfig, net=None) -> BaselineState:
    c = cfg.step_size
    graph = cfg.graph
    deg = graph.in_degree().astype(float)
    dual = state.aux.get("dual", np.zeros_like(state.x))
    nb_sum = state.aux.get("nb_sum")
    if nb_sum is None:
        # Neighbors' starting points are known without communication only at x = 0.
        nb_sum = np.zeros_like(state.x) if not state.x.any() else _neighbor_sums(graph, _send(net, state.x, cfg))
    # c sum_j ||x - (x_i + x_j)/2||^2 = (2 c d_i)/2 ||x - center||^2 + const.
    x_new = np.empty_like(state.x)
    for i, obj in enumerate(problem.objectives):
        center = 0.5 * (state.x[i] + nb_sum[i] / deg[i])
        x_new[i] = obj.argmin_augmented(center, dual[i], 2.0 * c * deg[i], x0=state.x[i])
    nb_new = _neighbor_sums(graph, _send(net, x_new, cfg))
    dual = dual + c * (deg[:, None] * x_new - nb_new)
    return BaselineState(x_new, state.k + 1, {"dual": dual, "nb_sum": nb_new})


def _undirected_edges(graph: DirectedGraph) -> np.ndarray:
    return np.array(sorted((i, j) for i, j in graph.edges if i < j), dtype=np.int64).reshape(-1, 2)


def multi_agent_admm_step(
    state: BaselineState, problem: ProblemInstance, cfg: BaselineConfig, net=None
) -> BaselineState:
    c = cfg.step_size
    graph = cfg.graph
    n, p = state.x.shape
    edges = state.aux.get("edges")
    if edges is None:
        edges = _undirected_edges(graph)
    E = edges.shape[0]
    z = state.aux.get("z", np.zeros((E, p)))
    dual_a = state.aux.get("dual_a", np.zeros((E, p)))  # endpoint edges[:, 0]
    dual_b = state.aux.get("dual_b", np.zeros((E, p)))  # endpoint edges[:, 1]
    deg = graph.in_degree().astype(float)

    # x_i = argmin f_i + sum_e [dual^T (x - z_e) + c/2 ||x - z_e||^2].
    target = np.zeros((n, p))
    lin = np.zeros((n, p))
    np.add.at(target, edges[:, 0], z)
    np.add.at(target, edges[:, 1], z)
    np.add.at(lin, edges[:, 0], dual_a)
    np.add.at(lin, edges[:, 1], dual_b)
    x_new = np.empty_like(state.x)
    for i, obj in enumerate(problem.objectives):
        x_new[i] = obj.argmin_augmented(target[i] / deg[i], lin[i], c * deg[i], x0=state.x[i])

    # Endpoints exchange x + dual / c over each edge, then average.
    _send(net, x_new, cfg)
    za = x_new[edges[:, 0]] + dual_a / c
    zb = x_new[edges[:, 1]] + dual_b / c
    z_new = 0.5 * (za + zb)
    dual_a = dual_a + c * (x_new[edges[:, 0]] - z_new)
    dual_b = dual_b + c * (x_new[edges[:, 1]] - z_new)
    return BaselineState(x_new, state.k + 1, {"edges": edges, "z": z_new, "dual_a": dual_a, "dual_b": dual_b})


STEPS: dict[str, Callable] = {
    "DGD": dgd_step,
    "EXTRA": extra_step,
    "PushPull": push_pull_step,
    "DCOADMM": dcoadmm_step,
    "MultiAgentADMM": multi_agent_admm_step,
}


# Driver -------------------------------------------------------------------------


def run_baseline(
    problem: ProblemInstance,
    cfg: BaselineConfig,
    stop: StoppingRule = StoppingRule(),
    oracle: OracleSolution | None = None,
    trace: str | Path | Callable[[IterateMetrics], None] | None = None,
    net: SyncNetwork | None = None,
    divergence_limit: float = 1e12,
) -> AdmmResult:
    """Iterate ``cfg.algorithm`` from ``x = 0`` with the DC-DistADMM metrics schema.

    ``consensus_residual`` is the disagreement ``||x - 1 (x) mean(x)||`` and
    ``objective_gap`` is ``F(x^k) - F*``. ``inner_iters`` counts rounds
    per iteration.
    """
    if problem.n != cfg.graph.n:
        raise ValueError(f"graph has {cfg.graph.n} agents but the problem has {problem.n}")
    net = net if net is not None else SyncNetwork(cfg.graph)
    if net.graph != cfg.graph:
        raise ValueError("network topology differs from the configured mixing graph")
    step_fn = STEPS[cfg.algorithm]
    state = BaselineState(np.zeros((problem.n, problem.dim)))
    x0 = state.x.copy()
    denoms = None
    if oracle is not None:
        denoms = np.linalg.norm(x0 - oracle.x_star[None, :], axis=1)
        denoms[denoms == 0] = 1.0

    history: list[IterateMetrics] = []
    rows: list[np.ndarray] = []
    callback = trace if callable(trace) else None
    t_start = time.process_time()
    while True:
        rounds_before = net.communication_report().total_rounds
        x_before = state.x
        state = step_fn(state, problem, cfg, net)
        if not np.all(np.isfinite(state.x)) or np.abs(state.x).max() > divergence_limit:
            raise DivergenceError(f"{cfg.algorithm} diverged at iteration {state.k} (step size {cfg.step_size:g})")
        report = net.communication_report()
        xbar = state.x.mean(axis=0)
        m = IterateMetrics(
            k=state.k,
            consensus_residual=float(np.linalg.norm(state.x - xbar[None, :])),
            inner_iters=report.total_rounds - rounds_before,
            cum_messages=report.total_messages,
            cum_rounds=report.total_rounds,
            eps=0.0,
            wall_time_s=time.process_time() - t_start,
        )
        if oracle is not None:
            m.solution_residuals = np.linalg.norm(state.x - oracle.x_star[None, :], axis=1) / denoms
            m.objective_gap = problem.total_objective(state.x) - oracle.f_star
            rows.append(m.solution_residuals)
        history.append(m)
        if callback is not None:
            callback(m)
        if stop.done(m, float(np.abs(state.x - x_before).max())):
            break
    if trace is not None and not callable(trace):
        write_metrics_csv(history, trace)
    return AdmmResult(history=history, state=state, residuals=np.array(rows) if rows else None)


@dataclass(frozen=True)
class TuningResult:
    step_size: float
    iterations: int | None
    final_residual: float
    scores: dict[float, tuple[int | None, float]]


def tune_step_size(
    algorithm: str,
    problem: ProblemInstance,
    graph: DirectedGraph,
    oracle: OracleSolution,
    tol: float = 1e-6,
    max_iterations: int = 1000,
    grid: Sequence[float] | None = None,
) -> TuningResult:
    """Grid search for the step size reaching ``tol`` in the fewest iterations.

    The default grid is ``2^j`` multiples of :func:`step_size_bound` for
    ``j = -6..6``; divergent step sizes are skipped. Ties on iteration count
    (including never reaching ``tol``) break on the final residual.
    """
    base_cfg = make_config(algorithm, graph, 1.0)
    if grid is None:
        ref = step_size_bound(algorithm, problem, base_cfg.mixing)
        grid = [ref * 2.0**j for j in range(-6, 7)]
    scores: dict[float, tuple[int | None, float]] = {}
    best, best_key = None, None
    for alpha in grid:
        cfg = BaselineConfig(algorithm, float(alpha), base_cfg.mixing, base_cfg.mixing_col)
        try:
            res = run_baseline(problem, cfg, StoppingRule(max_iterations=max_iterations, solution_tol=tol), oracle)
        except DivergenceError:
            continue
        iters = res.first_iteration_below(tol)
        final = res.history[-1].max_solution_residual
        if not np.isfinite(final):
            continue
        scores[float(alpha)] = (iters, final)
        key = (iters if iters is not None else max_iterations + 1, final)
        if best_key is None or key < best_key:
            best, best_key = float(alpha), key
    if best is None:
        raise DivergenceError(f"every step size in the grid diverged for {algorithm}")
    log.info("%s tuned step size %.3e (%s iterations)", algorithm, best, scores[best][0])
    return TuningResult(best, scores[best][0], scores[best][1], scores)
