import numpy as np
import pytest

from dcadmm.admm import OracleSolution, ProblemInstance, StoppingRule
from dcadmm.baselines import (
    ALGORITHMS,
    BaselineConfig,
    BaselineState,
    MatrixClassError,
    dgd_step,
    make_config,
    run_baseline,
    step_size_bound,
    tune_step_size,
)
from dcadmm.graphs import (
    equal_neighbor_weights,
    erdos_renyi_digraph,
    metropolis_weights,
    ring_digraph,
    symmetrize,
)
from dcadmm.network import SyncNetwork
from dcadmm.problems import LeastSquaresSpec, generate_least_squares_instance
from dcadmm.solvers import QuadraticObjective


def _two_agent_problem():
    a = np.array([0.5, -1.0])
    prob = ProblemInstance([QuadraticObjective(2.0 * np.eye(2), 2.0 * a) for _ in range(2)])
    return prob, OracleSolution(a, 0.0, "symmetry")


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_two_agent_convergence_with_bound(alg):
    prob, oracle = _two_agent_problem()
    g = ring_digraph(2)
    cfg = make_config(alg, g, 1.0)
    cfg = BaselineConfig(alg, step_size_bound(alg, prob, cfg.mixing), cfg.mixing, cfg.mixing_col)
    res = run_baseline(prob, cfg, StoppingRule(2000, solution_tol=1e-9), oracle)
    assert np.abs(res.state.x - oracle.x_star).max() <= 1e-6


def test_dgd_consensus_contraction():
    g = symmetrize(erdos_renyi_digraph(10, 0.2, seed=3))
    zero = [QuadraticObjective(np.zeros((1, 2)), np.zeros(1)) for _ in range(10)]
    prob = ProblemInstance(zero)
    cfg = BaselineConfig("DGD", 0.1, metropolis_weights(g))
    x = np.random.default_rng(0).normal(size=(10, 2))
    state, avg = BaselineState(x), x.mean(axis=0)
    spreads = []
    for _ in range(60):
        state = dgd_step(state, prob, cfg)
        spreads.append(np.linalg.norm(state.x - avg, axis=1).max())
    assert all(b <= a + 1e-12 for a, b in zip(spreads, spreads[1:]))
    np.testing.assert_allclose(state.x.mean(axis=0), avg, atol=1e-12)


@pytest.mark.parametrize("alg, mpl", [("DGD", 1), ("EXTRA", 1), ("PushPull", 2), ("DCOADMM", 1), ("MultiAgentADMM", 1)])
def test_message_accounting(alg, mpl):
    g = erdos_renyi_digraph(8, 0.3, seed=1)
    prob, oracle, _ = generate_least_squares_instance(LeastSquaresSpec(n=8, rows=10, p=3), seed=2)
    cfg = make_config(alg, g, 1e-3)
    net = SyncNetwork(cfg.graph)
    res = run_baseline(prob, cfg, StoppingRule(5), oracle, net=net)
    edges = cfg.graph.num_edges
    assert [m.cum_messages for m in res.history] == [mpl * edges * k for k in range(1, 6)]
    assert all(m.inner_iters == 1 for m in res.history)
    assert (cfg.graph == g) == (alg == "PushPull")


def test_matrix_class_checks():
    g = ring_digraph(4)
    with pytest.raises(MatrixClassError):
        BaselineConfig("DGD", 0.1, equal_neighbor_weights(g))
    d = erdos_renyi_digraph(8, 0.3, seed=1)
    with pytest.raises(MatrixClassError):
        BaselineConfig("PushPull", 0.1, equal_neighbor_weights(d), equal_neighbor_weights(d))
    with pytest.raises(MatrixClassError):
        BaselineConfig("PushPull", 0.1, metropolis_weights(symmetrize(g)))
    with pytest.raises(ValueError):
        BaselineConfig("DGD", 0.0, metropolis_weights(symmetrize(g)))
    with pytest.raises(ValueError):
        make_config("SGD", g, 0.1)


@pytest.fixture(scope="module")
def instance():
    g = erdos_renyi_digraph(10, 0.2, seed=1)
    prob, oracle, _ = generate_least_squares_instance(LeastSquaresSpec(), seed=3)
    return g, prob, oracle


def test_extra_reaches_tolerance_slower_than_dc(instance):
    from dcadmm.admm import EpsSchedule, run

    g, prob, oracle = instance
    tuned = tune_step_size("EXTRA", prob, g, oracle, tol=1e-6, max_iterations=600)
    assert tuned.iterations is not None
    dc_prob = ProblemInstance(prob.objectives, prob.gamma, EpsSchedule("constant", 0.01))
    dc = run(dc_prob, g, stop=StoppingRule(300, solution_tol=1e-6), oracle=oracle)
    assert dc.first_iteration_below(1e-6) < tuned.iterations


def test_push_pull_on_directed_graph(instance):
    g, prob, oracle = instance
    assert not g.is_symmetric()
    tuned = tune_step_size("PushPull", prob, g, oracle, tol=1e-6, max_iterations=600)
    assert tuned.iterations is not None
    assert len(tuned.scores) >= 5


def test_divergent_step_raises(instance):
    from dcadmm.admm import DivergenceError

    g, prob, oracle = instance
    with pytest.raises(DivergenceError):
        run_baseline(prob, make_config("DGD", g, 10.0), StoppingRule(500), oracle)


def test_metrics_schema(instance, tmp_path):
    g, prob, oracle = instance
    run_baseline(prob, make_config("DGD", g, 1e-3), StoppingRule(4), oracle, trace=tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "k,consensus_residual,max_solution_residual,objective_gap,inner_iters,cum_messages,wall_time_s"
    assert len(lines) == 5
