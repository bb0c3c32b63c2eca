"""Acceptance criteria 1-10; the terminal summary prints one line per criterion."""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from dcadmm.admm import EpsSchedule, StoppingRule, run
from dcadmm.baselines import tune_step_size
from dcadmm.consensus import ConsensusState, _links, push_sum_step, radius_step, run_epsilon_consensus
from dcadmm.graphs import equal_neighbor_weights, erdos_renyi_digraph
from dcadmm.problems import LeastSquaresSpec, generate_least_squares_instance
from dcadmm.solvers import (
    Ball,
    FistaConfig,
    LogisticL1Objective,
    QuadraticObjective,
    fista_solve,
    prox_l1_ball,
    solve_quadratic_prox,
)

DESK_GRAPH_SEED = 1
DESK_INSTANCE_SEED = 3


def _random_graph(rng, n_max):
    n = int(rng.integers(2, n_max + 1))
    p = float(rng.uniform(min(1.0, 2.0 / n), 1.0))
    return erdos_renyi_digraph(n, p, seed=int(rng.integers(2**31)))


def _decile_medians(values):
    values = np.asarray(values, dtype=float)
    size = len(values) // 10
    return float(np.median(values[:size])), float(np.median(values[-size:]))


@pytest.fixture(scope="module")
def desk_run():
    graph = erdos_renyi_digraph(10, 0.2, seed=DESK_GRAPH_SEED)
    spec = LeastSquaresSpec(n=10, rows=20, p=15, eps_schedule=EpsSchedule("inv_k2", 0.01))
    problem, oracle, _ = generate_least_squares_instance(spec, DESK_INSTANCE_SEED)
    t0 = time.perf_counter()
    res = run(problem, graph, stop=StoppingRule(max_iterations=500), oracle=oracle)
    return res, time.perf_counter() - t0


def test_criterion_01_push_sum_conservation(note):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_u = worst_v = 0.0
    for _ in range(200):
        g = _random_graph(rng, 50)
        P = equal_neighbor_weights(g)
        p = int(rng.integers(1, 9))
        state = ConsensusState.initial(rng.normal(scale=10.0, size=(g.n, p)))
        total0 = state.u.sum(axis=0)
        scale = 1.0 + np.abs(total0).max()
        for _ in range(60):
            state = push_sum_step(state, P)
            worst_u = max(worst_u, float(np.abs(state.u.sum(axis=0) - total0).max()) / scale)
            worst_v = max(worst_v, abs(float(state.v.sum()) - g.n))
    elapsed = time.perf_counter() - t0
    note(f"max relative mass drift {worst_u:.1e}, max |sum v - n| {worst_v:.1e}, {elapsed:.1f} s")
    assert worst_u <= 1e-9
    assert worst_v <= 1e-9
    assert elapsed < 10.0


def test_criterion_02_ball_containment(note):
    rng = np.random.default_rng(7)
    violations = checks = 0
    worst = -math.inf
    for _ in range(10):
        g = _random_graph(rng, 20)
        P = equal_neighbor_weights(g)
        links = _links(g)
        D = g.diameter_bound
        state = ConsensusState.initial(rng.normal(size=(g.n, 3)))
        for _ in range(50):
            start = state.w.copy()
            state.R = np.zeros(g.n)
            for _ in range(D):
                w_old, R_old = state.w, state.R
                state = push_sum_step(state, P)
                state.R = radius_step(state.w, w_old, R_old, g, links)
            dist = np.linalg.norm(state.w[:, None, :] - start[None, :, :], axis=2)
            excess = dist - state.R[:, None]
            worst = max(worst, float(excess.max()))
            violations += int((excess > 1e-12).sum())
            checks += excess.size
    note(f"{checks} (i, j, window) checks, {violations} violations, worst excess {worst:.1e}")
    assert violations == 0


def test_criterion_03_eps_consensus_correctness(note):
    rng = np.random.default_rng(11)
    instances = []
    for _ in range(100):
        g = _random_graph(rng, 30)
        u0 = rng.normal(scale=float(rng.uniform(0.1, 10.0)), size=(g.n, int(rng.integers(1, 6))))
        instances.append((g, u0))
    for eps in (1e-2, 1e-4, 1e-6):
        over_eps = 0
        for g, u0 in instances:
            res = run_epsilon_consensus(u0, eps, equal_neighbor_weights(g))
            avg = u0.mean(axis=0)
            assert res.iterations_used % g.diameter_bound == 0
            assert res.max_pairwise <= 2 * eps
            assert float(np.linalg.norm(res.w_final - avg, axis=1).max()) <= 2 * eps
            over_eps += int(res.exceeds_eps)
        note(f"eps={eps:g}: distance-to-average > eps on {over_eps}/100 instances")


def test_criterion_04_objective_gap_rate(desk_run, note):
    res, elapsed = desk_run
    window = [m for m in res.history if 20 <= m.k <= 500]
    assert window[-1].k == 500
    kgap = [m.k * abs(m.objective_gap) for m in window]
    first, last = _decile_medians(kgap)
    note(f"sup k|gap| = {max(kgap):.2e}; decile medians first {first:.2e}, last {last:.2e}; {elapsed:.1f} s")
    assert np.all(np.isfinite(kgap))
    assert last <= 2 * first
    assert elapsed < 60.0


def test_criterion_05_constraint_residual(desk_run, note):
    res, _ = desk_run
    final = res.history[499]
    assert final.k == 500
    window = [m for m in res.history if 20 <= m.k <= 500]
    kres = [m.k * m.consensus_residual for m in window]
    first, last = _decile_medians(kres)
    note(f"||x_hat - y_hat|| at k=500: {final.consensus_residual:.2e}; decile medians {first:.2e} -> {last:.2e}")
    assert final.consensus_residual <= 1e-5
    assert last <= 2 * first


def test_criterion_06_linear_rate(desk_run, note):
    res, _ = desk_run
    ks = np.array([m.k for m in res.history if 1e-10 <= m.lyapunov <= 1e-2], dtype=float)
    us = np.log([m.lyapunov for m in res.history if 1e-10 <= m.lyapunov <= 1e-2])
    assert ks.size >= 5
    slope, intercept = np.polyfit(ks, us, 1)
    fit = slope * ks + intercept
    r2 = 1.0 - float(((us - fit) ** 2).sum()) / float(((us - us.mean()) ** 2).sum())
    note(f"window k={int(ks[0])}..{int(ks[-1])}: slope {slope:.3f} per iteration, R^2 {r2:.4f}")
    assert slope < 0
    assert r2 >= 0.95


def test_criterion_07_paper_scale_milestones(note):
    graph = erdos_renyi_digraph(100, 0.2, seed=DESK_GRAPH_SEED)
    targets = (("0.01", 1e-6, 40), ("0.01/k", 1e-8, 60), ("0.01/k^2", 1e-10, 100))
    hits = {}
    for sched, tol, budget in targets:
        spec = LeastSquaresSpec(n=100, rows=100, p=15, eps_schedule=EpsSchedule.parse(sched))
        problem, oracle, _ = generate_least_squares_instance(spec, DESK_INSTANCE_SEED)
        res = run(problem, graph, stop=StoppingRule(max_iterations=budget, solution_tol=tol), oracle=oracle)
        hits[sched] = res.first_iteration_below(tol)
        note(f"eps_k={sched}: residual {tol:g} at k={hits[sched]} (budget {budget})")
    for sched, tol, budget in targets:
        assert hits[sched] is not None and hits[sched] <= budget


def test_criterion_08_comparative_ordering(note):
    graph = erdos_renyi_digraph(10, 0.2, seed=DESK_GRAPH_SEED)
    dc = {}
    for sched in ("0.01", "0.01/k", "0.01/k^2"):
        spec = LeastSquaresSpec(n=10, rows=20, p=15, eps_schedule=EpsSchedule.parse(sched))
        problem, oracle, _ = generate_least_squares_instance(spec, DESK_INSTANCE_SEED)
        res = run(problem, graph, stop=StoppingRule(max_iterations=400, solution_tol=1e-6), oracle=oracle)
        dc[sched] = res.first_iteration_below(1e-6)
    base = {}
    for alg in ("DGD", "DCOADMM", "PushPull"):
        tuned = tune_step_size(alg, problem, graph, oracle, tol=1e-6, max_iterations=1000)
        base[alg] = tuned.iterations
        note(f"{alg}: step {tuned.step_size:.3e} reaches 1e-6 at k={tuned.iterations}")
    note(f"DC-DistADMM: {dc}")
    assert all(v is not None for v in dc.values())
    for alg in ("DGD", "DCOADMM"):
        bound = base[alg] if base[alg] is not None else math.inf
        assert max(dc.values()) < bound
    assert dc["0.01"] < (base["PushPull"] if base["PushPull"] is not None else math.inf)


def test_criterion_09_communication_ordering(note):
    scheds = ("0.01", "0.01/k", "0.01/k^2")
    problems = {}
    for sched in scheds:
        spec = LeastSquaresSpec(n=10, rows=20, p=15, eps_schedule=EpsSchedule.parse(sched))
        problems[sched] = generate_least_squares_instance(spec, DESK_INSTANCE_SEED)[:2]
    rounds = {s: [] for s in scheds}
    for trial in range(100):
        graph = erdos_renyi_digraph(10, 0.2, seed=trial)
        for sched in scheds:
            problem, oracle = problems[sched]
            res = run(problem, graph, stop=StoppingRule(max_iterations=300, solution_tol=1e-6), oracle=oracle)
            r = res.rounds_to(1e-6)
            assert r is not None, f"trial {trial} eps {sched} did not reach 1e-6"
            rounds[sched].append(r)
    means = [float(np.mean(rounds[s])) for s in scheds]
    note("mean rounds to 1e-6: " + ", ".join(f"{s}: {m:.1f}" for s, m in zip(scheds, means)))
    assert means[0] < means[1] < means[2]
    assert means[2] / means[0] < 10.0


def _kkt_bisection_prox(v, t, r):
    """argmin t||x||_1 + 0.5||x - v||^2 s.t. ||x||^2 <= r via bisection on the ball multiplier."""
    s = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    if s @ s <= r:
        return s
    nu = brentq(lambda nu: float(np.sum((s / (1.0 + nu)) ** 2)) - r, 0.0, 1e12, xtol=1e-14, rtol=1e-15)
    return s / (1.0 + nu)


def test_criterion_10_subproblem_oracles(note):
    rng = np.random.default_rng(5)
    worst_q = 0.0
    for _ in range(50):
        A = rng.normal(size=(int(rng.integers(1, 12)), 5))
        b, y, lam = rng.normal(size=A.shape[0]), rng.normal(size=5), rng.normal(size=5)
        gamma = float(rng.uniform(0.1, 10))
        x = solve_quadratic_prox(QuadraticObjective(A, b), y, lam, gamma)
        direct = np.linalg.solve(A.T @ A + gamma * np.eye(5), A.T @ b + gamma * y - lam)
        worst_q = max(worst_q, float(np.abs(x - direct).max()))

    worst_f = -math.inf
    grid = np.arange(-1.5, 1.5 + 1e-9, 1e-3)
    X1, X2 = np.meshgrid(grid, grid, indexing="ij")
    for _ in range(5):
        feats = rng.normal(size=(4, 2))
        labels = np.where(rng.random(4) < 0.5, -1.0, 1.0)
        mu, r, gamma = float(rng.uniform(0, 0.5)), float(rng.uniform(0.2, 1.5)), 1.0
        y, lam = rng.normal(size=2), rng.normal(scale=0.5, size=2)
        obj = LogisticL1Objective(feats, labels, mu, Ball(r), FistaConfig(5000, 1e-10))
        x = fista_solve(obj, y, lam, gamma, obj.fista_cfg).x

        def total(x1, x2):
            margins = -labels[:, None, None] * (feats[:, 0, None, None] * x1 + feats[:, 1, None, None] * x2)
            val = np.logaddexp(0.0, margins).sum(axis=0) + mu * (np.abs(x1) + np.abs(x2))
            d1, d2 = x1 - y[0], x2 - y[1]
            return val + lam[0] * d1 + lam[1] * d2 + 0.5 * gamma * (d1**2 + d2**2)

        vals = np.where(X1**2 + X2**2 <= r, total(X1, X2), np.inf)
        assert x @ x <= r * (1 + 1e-9)
        worst_f = max(worst_f, total(np.array(x[0]), np.array(x[1])).item() - float(vals.min()))

    worst_p = 0.0
    for _ in range(100):
        v = rng.normal(scale=3.0, size=int(rng.integers(1, 10)))
        t, r = float(rng.uniform(0, 2)), float(rng.uniform(0.01, 5))
        worst_p = max(worst_p, float(np.abs(prox_l1_ball(v, t, r) - _kkt_bisection_prox(v, t, r)).max()))
    note(f"quadratic prox {worst_q:.1e}, FISTA minus grid {worst_f:.1e}, composite prox {worst_p:.1e}")
    assert worst_q <= 1e-10
    assert worst_f <= 1e-5
    assert worst_p <= 1e-6
