import pytest
import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from src.reachability import ReachabilityIndex, post_image, strongly_connected_components


def digraph(n, edges):
    rows = [e[0] for e in edges]
    cols = [e[1] for e in edges]
    m = sparse.csr_matrix((np.ones(len(edges), dtype=np.int8), (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    m.sort_indices()
    return m


def mask(n, cells):
    m = np.zeros(n, dtype=bool)
    m[list(cells)] = True
    return m


@pytest.fixture
def small():
    # 0 -> 1 -> 2 -> 0 is a cycle draining into the sink loop 3; 4 is isolated
    return ReachabilityIndex(digraph(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 3)]))


def test_components_in_reverse_topological_order(small):
    assert small.n_comps == 3
    assert small.comp_of.tolist() == [1, 1, 1, 0, 2]
    assert small.successors[1].tolist() == [0]
    assert small.successors[0].size == 0


def test_recurrence_classification(small):
    assert np.flatnonzero(small.recurrent_mask()).tolist() == [0, 1, 2, 3]
    assert np.flatnonzero(small.stable_recurrent_mask()).tolist() == [3]
    assert np.flatnonzero(small.unstable_recurrent_mask()).tolist() == [0, 1, 2]


def test_reach_and_omega(small):
    assert np.flatnonzero(small.reach_mask(mask(5, [1]))).tolist() == [0, 1, 2, 3]
    assert np.flatnonzero(small.omega_mask(mask(5, [0, 1, 2]))).tolist() == [0, 1, 2, 3]
    assert np.flatnonzero(small.omega_mask(mask(5, [3]))).tolist() == [3]
    assert not small.omega_mask(mask(5, [4])).any()
    assert not small.omega_mask(np.zeros(5, dtype=bool)).any()


def test_omega_queries(small):
    assert np.flatnonzero(small.omega_misses(mask(5, [3]))).tolist() == [4]
    assert np.flatnonzero(small.omega_within(mask(5, [3]))).tolist() == [3, 4]
    assert small.representatives().tolist() == [0, 3, 4]


def test_transient_chain_has_empty_omega():
    index = ReachabilityIndex(digraph(4, [(0, 1), (1, 2), (2, 3)]))
    assert not index.recurrent_mask().any()
    assert not index.omega_mask(mask(4, [0])).any()
    assert np.flatnonzero(index.reach_mask(mask(4, [1]))).tolist() == [1, 2, 3]


def test_post_image():
    adj = digraph(4, [(0, 1), (0, 2), (3, 3)])
    assert np.flatnonzero(post_image(adj, mask(4, [0, 3]))).tolist() == [1, 2, 3]
    assert not post_image(adj, mask(4, [1])).any()


def test_long_path_does_not_recurse():
    n = 20000
    edges = [(i, i + 1) for i in range(n - 1)] + [(n - 1, n - 1)]
    comp_of, n_comps = strongly_connected_components(digraph(n, edges))
    assert n_comps == n
    assert comp_of[n - 1] == 0
    assert comp_of[0] == n - 1


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=12).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30))))
def test_partition_matches_scipy(case):
    n, edges = case
    adj = digraph(n, edges)
    comp_of, n_comps = strongly_connected_components(adj)
    expected_count, labels = connected_components(adj, directed=True, connection="strong")
    assert n_comps == expected_count
    for i in range(n):
        for j in range(n):
            assert (comp_of[i] == comp_of[j]) == (labels[i] == labels[j])
    # every edge between components points to a smaller number
    coo = adj.tocoo()
    assert np.all(comp_of[coo.row] >= comp_of[coo.col])
