import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcadmm.graphs import (
    ConnectivityError,
    DirectedGraph,
    complete_digraph,
    equal_neighbor_weights,
    erdos_renyi_digraph,
    exact_diameter,
    metropolis_weights,
    read_edge_list,
    read_weights_csv,
    ring_digraph,
    row_equal_neighbor_weights,
    star_digraph,
    symmetrize,
    write_edge_list,
    write_weights_csv,
)


def _nx(g):
    G = nx.DiGraph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from((j, i) for i, j in g.edges)  # stored (i, j) means j -> i
    return G


def test_er_p1_two_nodes_is_complete():
    g = erdos_renyi_digraph(2, 1.0, seed=123)
    assert g.edges == frozenset({(0, 1), (1, 0)})
    assert g.diameter == g.diameter_bound == 1


def test_er_p1_three_nodes_diameter_one():
    assert erdos_renyi_digraph(3, 1.0, seed=0).diameter_bound == 1


def test_er_100_strongly_connected_by_tarjan():
    g = erdos_renyi_digraph(100, 0.2, seed=7)
    assert nx.number_strongly_connected_components(_nx(g)) == 1
    assert g.diameter_bound == nx.diameter(_nx(g))


def test_er_connectivity_unattainable():
    with pytest.raises(ConnectivityError, match="connectivity unattainable"):
        erdos_renyi_digraph(30, 0.01, seed=0, max_tries=5)


@pytest.mark.parametrize("n, p", [(1, 0.5), (5, 0.0), (5, 1.5)])
def test_er_rejects_bad_arguments(n, p):
    with pytest.raises(ValueError):
        erdos_renyi_digraph(n, p, seed=0)


def test_er_is_deterministic_per_seed():
    assert erdos_renyi_digraph(20, 0.3, seed=4).edges == erdos_renyi_digraph(20, 0.3, seed=4).edges


@pytest.mark.parametrize("n, diam", [(2, 1), (3, 2), (5, 4)])
def test_ring_diameter(n, diam):
    g = ring_digraph(n)
    assert g.diameter == diam == exact_diameter(g)


def test_ring_two_edges():
    assert ring_digraph(2).edges == frozenset({(1, 0), (0, 1)})


def test_ring_rejects_small_n():
    with pytest.raises(ValueError):
        ring_digraph(1)


def test_exact_diameter_complete():
    assert exact_diameter(complete_digraph(4)) == 1


def test_constructor_validation():
    with pytest.raises(ValueError, match="self-loop"):
        DirectedGraph.from_edges(2, [(0, 0), (0, 1), (1, 0)])
    with pytest.raises(ConnectivityError):
        DirectedGraph.from_edges(3, [(1, 0), (2, 1)])
    with pytest.raises(ValueError):
        ring_digraph(4).with_diameter_bound(2)
    assert ring_digraph(4).with_diameter_bound(6).diameter_bound == 6


def test_neighbor_lists_consistent():
    g = erdos_renyi_digraph(15, 0.3, seed=2)
    for i, j in g.edges:
        assert j in g.in_neighbors[i] and i in g.out_neighbors[j]
    assert sum(len(x) for x in g.in_neighbors) == g.num_edges


def test_equal_neighbor_two_ring():
    np.testing.assert_array_equal(equal_neighbor_weights(ring_digraph(2)).dense(), np.full((2, 2), 0.5))


def test_equal_neighbor_three_ring():
    W = equal_neighbor_weights(ring_digraph(3)).dense()
    expected = 0.5 * (np.eye(3) + np.roll(np.eye(3), 1, axis=0))
    np.testing.assert_array_equal(W, expected)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.floats(0.15, 1.0), st.integers(0, 10_000))
def test_weight_invariants(n, p, seed):
    try:
        g = erdos_renyi_digraph(n, p, seed=seed, max_tries=200)
    except ConnectivityError:
        return
    P = equal_neighbor_weights(g)
    assert P.column_sum_error() <= 1e-12
    assert P.support_matches_graph()
    assert np.all(np.diag(P.dense()) > 0)
    assert P.is_primitive()
    assert np.all(np.linalg.matrix_power(P.dense(), n * n) > 0)
    assert exact_diameter(g) <= g.diameter_bound
    assert row_equal_neighbor_weights(g).row_sum_error() <= 1e-12


def test_metropolis_needs_symmetric():
    with pytest.raises(ValueError):
        metropolis_weights(ring_digraph(3))
    W = metropolis_weights(symmetrize(erdos_renyi_digraph(12, 0.2, seed=3)))
    assert W.is_doubly_stochastic()
    np.testing.assert_allclose(W.dense(), W.dense().T)


def test_star_is_bidirectional():
    g = star_digraph(5)
    assert g.is_symmetric() and g.out_degree()[0] == 4 and g.diameter == 2


def test_sparse_storage_beyond_dense_limit():
    g = ring_digraph(600)
    P = equal_neighbor_weights(g)
    assert not isinstance(P.entries, np.ndarray)
    assert P.column_sum_error() <= 1e-12


def test_edge_list_and_weights_round_trip(tmp_path):
    g = erdos_renyi_digraph(8, 0.4, seed=1)
    write_edge_list(g, tmp_path / "g.txt")
    header = (tmp_path / "g.txt").read_text().splitlines()[0]
    assert header == f"{g.n} {g.num_edges}"
    g2 = read_edge_list(tmp_path / "g.txt")
    assert g2.edges == g.edges and g2.n == g.n
    P = equal_neighbor_weights(g)
    write_weights_csv(P, tmp_path / "w.csv")
    np.testing.assert_array_equal(read_weights_csv(tmp_path / "w.csv", g).dense(), P.dense())
