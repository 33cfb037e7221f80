import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netobs.graph import (
    Network,
    centrality,
    complete_graph,
    erdos_renyi,
    hop_distances,
    matched_erdos_renyi,
    path_graph,
    rank_subsets,
    read_adjacency,
    scale_free,
    star_graph,
    write_adjacency,
)
from oracles import bfs_distances


def test_network_rejects_bad_adjacency():
    with pytest.raises(ValueError, match="square"):
        Network(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="diagonal"):
        Network(np.eye(3))
    with pytest.raises(ValueError, match="symmetric"):
        Network(np.array([[0, 1], [0, 0]]))
    net = Network(np.array([[0, 1], [0, 0]]), directed=True)
    assert net.n_edges == 1


def test_network_is_immutable():
    net = path_graph(3)
    with pytest.raises(ValueError):
        net.adjacency[0, 1] = 5.0


@pytest.mark.parametrize("p, edges", [(0.0, 0), (1.0, 10)])
def test_erdos_renyi_extremes(p, edges):
    assert erdos_renyi(5, p, seed=1).n_edges == edges


def test_erdos_renyi_mean_edge_count():
    counts = np.array([erdos_renyi(20, 0.2, seed=s).n_edges for s in range(1000)])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - 38.0) < 3 * se
    # binomial variance as a second check on the generator
    assert counts.var(ddof=1) == pytest.approx(190 * 0.2 * 0.8, rel=0.15)


@pytest.mark.parametrize("n, p", [(0, 0.5), (5, -0.1), (5, 1.5)])
def test_erdos_renyi_rejects(n, p):
    with pytest.raises(ValueError):
        erdos_renyi(n, p, seed=0)


def test_erdos_renyi_deterministic():
    a = erdos_renyi(30, 0.1, seed=7).adjacency
    b = erdos_renyi(30, 0.1, seed=7).adjacency
    assert np.array_equal(a, b)
    assert not np.array_equal(a, erdos_renyi(30, 0.1, seed=8).adjacency)


def test_matched_erdos_renyi_density():
    counts = [matched_erdos_renyi(20, 37, seed=s).n_edges for s in range(400)]
    assert np.mean(counts) == pytest.approx(37, abs=1.0)


@pytest.mark.parametrize("n, m, edges", [(3, 2, 3), (20, 2, 37), (20, 1, 19), (10, 3, 24)])
def test_scale_free_edge_count(n, m, edges):
    net = scale_free(n, m, seed=0)
    assert net.n_edges == edges
    assert nx.is_connected(nx.from_numpy_array(net.adjacency))


def test_scale_free_has_hubs():
    hits = 0
    for s in range(1000):
        deg = scale_free(20, 2, seed=s).degree()
        hits += deg.max() >= 2 * np.median(deg)
    assert hits >= 900


@pytest.mark.parametrize("n, m", [(3, 3), (5, 0), (2, 5)])
def test_scale_free_rejects(n, m):
    with pytest.raises(ValueError):
        scale_free(n, m, seed=0)


def test_path_degree_and_closeness():
    net = path_graph(3)
    assert centrality(net, "degree").tolist() == [1, 2, 1]
    np.testing.assert_allclose(centrality(net, "closeness"), [2 / 3, 1, 2 / 3])


def test_complete_closeness():
    np.testing.assert_allclose(centrality(complete_graph(4), "closeness"), 1.0)


def test_closeness_disconnected_names_pair():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1
    with pytest.raises(ValueError, match="node 3 unreachable from node 1"):
        centrality(Network(a), "closeness")


def test_unknown_metric():
    with pytest.raises(ValueError, match="unknown centrality"):
        centrality(path_graph(3), "betweenness")


@pytest.mark.parametrize("seed", range(5))
def test_hop_distances_match_bfs(seed):
    net = scale_free(15, 2, seed=seed)
    np.testing.assert_array_equal(hop_distances(net), bfs_distances(net.adjacency))


def test_closeness_matches_networkx():
    net = scale_free(20, 2, seed=3)
    ref = nx.closeness_centrality(nx.from_numpy_array(net.adjacency))
    np.testing.assert_allclose(centrality(net, "closeness"), [ref[k] for k in range(20)])


def test_directed_hops_follow_influence():
    # adjacency[j, k] = 1 means k drives j: here 1 -> 2 -> 3
    a = np.zeros((3, 3))
    a[1, 0] = a[2, 1] = 1
    d = hop_distances(Network(a, directed=True))
    assert d[0, 2] == 2
    assert np.isinf(d[2, 0])


def test_rank_subsets_tie_break():
    assert rank_subsets(complete_graph(4), "degree", 2) == [[1, 2], [3, 4]]


def test_rank_subsets_star():
    groups = rank_subsets(star_graph(5), "degree", 2)
    assert 1 in groups[0]
    assert groups[-1] == [5]


def test_rank_subsets_scale_free():
    net = scale_free(20, 2, seed=0)
    groups = rank_subsets(net, "degree", 4)
    assert [len(g) for g in groups] == [4] * 5
    deg = net.degree()
    flat = [v for g in groups for v in g]
    ref = sorted(range(1, 21), key=lambda v: (-deg[v - 1], v))
    assert flat == ref
    for g, h in zip(groups, groups[1:]):
        assert min(deg[v - 1] for v in g) >= max(deg[v - 1] for v in h)


@pytest.mark.parametrize("size", [0, 6])
def test_rank_subsets_rejects(size):
    with pytest.raises(ValueError):
        rank_subsets(path_graph(5), "degree", size)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), size=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_rank_subsets_is_partition(n, size, seed):
    size = min(size, n)
    groups = rank_subsets(erdos_renyi(n, 0.4, seed), "degree", size)
    flat = [v for g in groups for v in g]
    assert sorted(flat) == list(range(1, n + 1))
    assert all(len(g) == size for g in groups[:-1])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_closeness_permutation_invariant(seed):
    net = scale_free(10, 2, seed)
    perm = np.random.default_rng(seed).permutation(10)
    relabelled = Network(net.adjacency[np.ix_(perm, perm)])
    np.testing.assert_allclose(centrality(relabelled, "closeness"), centrality(net, "closeness")[perm])


def test_adjacency_round_trip(tmp_path):
    net = scale_free(8, 2, seed=1)
    write_adjacency(net, tmp_path / "a.txt")
    back = read_adjacency(tmp_path / "a.txt")
    assert np.array_equal(back.adjacency, net.adjacency)
    assert not back.directed


def test_adjacency_file_shape_error(tmp_path):
    (tmp_path / "a.txt").write_text("3\n0 1\n1 0\n")
    with pytest.raises(ValueError, match="expected 3x3"):
        read_adjacency(tmp_path / "a.txt")
