import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scnp.errors import ZeroDegree
from scnp.graph import Graph, add_self_loops, normalize_symmetric, normalized_adjacency

from conftest import cycle_graph, random_graph


def test_self_loops_single_node():
    assert add_self_loops(Graph.from_edges(1, [])).toarray().tolist() == [[1.0]]


def test_self_loops_edge():
    assert add_self_loops(Graph.from_edges(2, [(0, 1, 1.0)])).toarray().tolist() == [[1, 1], [1, 1]]


def test_self_loops_path():
    a = add_self_loops(Graph.from_edges(3, [(0, 1, 1), (1, 2, 1)])).toarray()
    assert a.tolist() == [[1, 1, 0], [1, 1, 1], [0, 1, 1]]


def test_normalize_examples():
    assert normalize_symmetric(np.array([[1.0]])).toarray().tolist() == [[1.0]]
    np.testing.assert_array_equal(normalize_symmetric(np.ones((2, 2))).toarray(), np.full((2, 2), 0.5))
    a = normalize_symmetric(np.array([[1.0, 1, 0], [1, 1, 1], [0, 1, 1]])).toarray()
    assert a[0, 1] == pytest.approx(1 / np.sqrt(6), abs=1e-15)
    assert a[0, 1] == pytest.approx(0.40825, abs=1e-5)


def test_zero_degree():
    with pytest.raises(ZeroDegree):
        normalize_symmetric(np.array([[1.0, 0], [0, 0]]))


def test_duplicates_summed_and_directions_maxed(caplog):
    with caplog.at_level(logging.WARNING):
        g = Graph.from_edges(3, [(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.5), (2, 1), (1, 1)])
    a = g.adjacency().toarray()
    assert a[0, 1] == a[1, 0] == 3.0
    assert a[1, 2] == a[2, 1] == 1.0
    assert a[1, 1] == 0.0
    assert g.m == 2
    assert "duplicate" in caplog.text and "self-loop" in caplog.text


def test_invariants_enforced():
    with pytest.raises(ValueError):
        Graph(2, np.array([0]), np.array([2]), np.array([1.0]))
    with pytest.raises(ValueError):
        Graph(2, np.array([0]), np.array([1]), np.array([0.0]))
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 5)])


def test_immutable():
    g = cycle_graph(4)
    with pytest.raises(ValueError):
        g.src[0] = 3


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(0.1, 0.9))
def test_normalized_symmetric_and_spectrum(n, seed, p):
    g = random_graph(np.random.default_rng(seed), n, p, connected=False)
    a = normalized_adjacency(g).toarray()
    assert np.array_equal(a, a.T)
    eig = np.linalg.eigvalsh(a)
    assert eig.min() >= -1 - 1e-12 and eig.max() <= 1 + 1e-12


@pytest.mark.parametrize("n", [3, 5, 8])
def test_regular_graph_diagonal(n):
    # cycles are 2-regular
    a = normalized_adjacency(cycle_graph(n)).toarray()
    np.testing.assert_allclose(np.diag(a), 1 / 3, rtol=0, atol=1e-15)
