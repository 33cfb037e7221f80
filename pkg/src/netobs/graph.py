"""Network topologies, random graph generators and centrality ranking.

Nodes are identified by 1-based ids in everything user facing (subsets,
groups, CSV output); adjacency arrays are indexed from 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import shortest_path


@dataclass(frozen=True)
class Network:
    """Coupling topology of a dynamical network.

    ``adjacency[j, k]`` is the weight with which node ``k`` drives node ``j``.
    """

    adjacency: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero (no self-coupling)")
        if not self.directed and not np.array_equal(a, a.T):
            raise ValueError("undirected network requires a symmetric adjacency matrix")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        nz = int(np.count_nonzero(self.adjacency))
        return nz if self.directed else nz // 2

    def degree(self) -> np.ndarray:
        return np.count_nonzero(self.adjacency, axis=1).astype(float)


def erdos_renyi(n: int, p: float, seed: int) -> Network:
    """Undirected G(n, p) graph with 0/1 weights."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability p must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    keep = rng.random(len(iu[0])) < p
    a = np.zeros((n, n))
    a[iu[0][keep], iu[1][keep]] = 1.0
    return Network(a + a.T)


def scale_free(n: int, m: int, seed: int) -> Network:
    """Barabási–Albert preferential attachment grown from an ``m``-clique.

    Each new node attaches to ``m`` distinct existing nodes chosen with
    probability proportional to degree, so the result has
    ``m*(m-1)/2 + m*(n-m)`` edges.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if m >= n:
        raise ValueError(f"need n > m, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    a = np.zeros((n, n))
    a[:m, :m] = 1.0 - np.eye(m)
    for new in range(m, n):
        deg = a[:new, :new].sum(axis=1)
        # a single seed node has degree zero; fall back to uniform choice
        w = deg if deg.sum() > 0 else np.ones(new)
        targets = rng.choice(new, size=m, replace=False, p=w / w.sum())
        a[new, targets] = a[targets, new] = 1.0
    return Network(a)


def matched_erdos_renyi(n: int, n_edges: int, seed: int) -> Network:
    """G(n, p) with ``p`` chosen so the expected edge count equals ``n_edges``."""
    pairs = n * (n - 1) / 2
    return erdos_renyi(n, min(1.0, n_edges / pairs) if pairs else 0.0, seed)


def path_graph(n: int) -> Network:
    a = np.zeros((n, n))
    idx = np.arange(n - 1)
    a[idx, idx + 1] = a[idx + 1, idx] = 1.0
    return Network(a)


def complete_graph(n: int) -> Network:
    return Network(np.ones((n, n)) - np.eye(n))


def star_graph(n: int) -> Network:
    """Star with node 1 as the hub."""
    a = np.zeros((n, n))
    a[0, 1:] = a[1:, 0] = 1.0
    return Network(a)


def hop_distances(net: Network) -> np.ndarray:
    """Unweighted shortest-path hop counts, following edge direction k -> j."""
    links = (net.adjacency != 0).astype(float)
    # adjacency[j, k] means k influences j, i.e. an edge k -> j
    return shortest_path(links.T, method="D", directed=net.directed, unweighted=True)


def centrality(net: Network, metric: str = "degree") -> np.ndarray:
    """Per-node scores, indexed from 0.

    ``degree`` counts the nonzero entries in each adjacency row.
    ``closeness`` is ``(n-1) / sum(d(v, u))`` over hop distances and needs
    every node to reach every other node.
    """
    if metric == "degree":
        return net.degree()
    if metric != "closeness":
        raise ValueError(f"unknown centrality metric {metric!r}")
    if net.n == 1:
        return np.zeros(1)
    d = hop_distances(net)
    bad = np.argwhere(~np.isfinite(d))
    if len(bad):
        v, u = bad[0]
        raise ValueError(f"closeness undefined: node {u + 1} unreachable from node {v + 1}")
    return (net.n - 1) / d.sum(axis=1)


def rank_subsets(net: Network, metric: str, group_size: int) -> list[list[int]]:
    """Sort nodes by descending score and cut them into consecutive groups.

    Ties are broken by ascending node id. A final shorter group holds the
    remainder when ``group_size`` does not divide ``n``.
    """
    if group_size < 1 or group_size > net.n:
        raise ValueError(f"group_size must lie in [1, {net.n}], got {group_size}")
    scores = centrality(net, metric)
    order = np.lexsort((np.arange(net.n), -scores))
    ids = [int(i) + 1 for i in order]
    return [ids[k:k + group_size] for k in range(0, net.n, group_size)]


def read_adjacency(path, directed: bool | None = None) -> Network:
    """Read the plain-text format: ``n`` on the first line, then ``n`` rows."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty adjacency file")
    n = int(lines[0])
    rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    a = np.array(rows)
    if a.shape != (n, n):
        raise ValueError(f"{path}: expected {n}x{n} matrix, got {a.shape}")
    if directed is None:
        directed = not np.array_equal(a, a.T)
    return Network(a, directed=directed)


def write_adjacency(net: Network, path) -> None:
    rows = [" ".join(f"{v:g}" for v in row) for row in net.adjacency]
    Path(path).write_text("\n".join([str(net.n), *rows]) + "\n")
