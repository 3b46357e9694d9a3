"""Geodesic lifting of dissimilarity matrices: k-NN graph construction
and all-pairs shortest paths (the "G-" metric variants)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .dissimilarity import DissimilarityMatrix
from .errors import DataError, GraphDisconnectedError


@dataclass
class KnnGraph:
    """Undirected weighted graph; per-node neighbor index/weight arrays."""

    neighbors: list  # list of int arrays
    weights: list  # list of float arrays
    k: int

    @property
    def n_nodes(self) -> int:
        return len(self.neighbors)

    def to_csr(self) -> csr_matrix:
        indptr = np.cumsum([0] + [len(n) for n in self.neighbors])
        indices = np.concatenate(self.neighbors) if self.n_nodes else np.array([], int)
        data = np.concatenate(self.weights) if self.n_nodes else np.array([])
        n = self.n_nodes
        return csr_matrix((data, indices, indptr), shape=(n, n))


def build_knn_graph(D: DissimilarityMatrix, k: int) -> KnnGraph:
    """Connect each node to its k smallest-dissimilarity neighbors
    (ties broken by lower index), then symmetrize by edge union."""
    L = D.L
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k >= L:
        raise DataError(f"k must be < L={L}, got {k}")
    values = D.values
    edges: list[set] = [set() for _ in range(L)]
    for i in range(L):
        order = np.argsort(values[i], kind="stable")
        picked = [j for j in order if j != i][:k]
        for j in picked:
            edges[i].add(int(j))
            edges[int(j)].add(i)
    neighbors = []
    weights = []
    for i in range(L):
        nbr = np.array(sorted(edges[i]), dtype=np.int64)
        neighbors.append(nbr)
        weights.append(values[i, nbr].astype(np.float64))
    return KnnGraph(neighbors, weights, k)


def _repair_connectivity(g: KnnGraph, base: np.ndarray) -> KnnGraph:
    """Iteratively add the single cheapest inter-component edge from the
    base dissimilarity matrix until the graph is connected."""
    neighbors = [set(map(int, n)) for n in g.neighbors]
    while True:
        csr = KnnGraph(
            [np.array(sorted(n), dtype=np.int64) for n in neighbors],
            [base[i, np.array(sorted(n), dtype=np.int64)] for i, n in enumerate(neighbors)],
            g.k,
        ).to_csr()
        ncomp, labels = connected_components(csr, directed=False)
        if ncomp == 1:
            break
        cost = base.copy()
        same = labels[:, None] == labels[None, :]
        cost[same] = np.inf
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        neighbors[int(i)].add(int(j))
        neighbors[int(j)].add(int(i))
    nbr_arrays = [np.array(sorted(n), dtype=np.int64) for n in neighbors]
    return KnnGraph(nbr_arrays, [base[i, a] for i, a in enumerate(nbr_arrays)], g.k)


def geodesic_matrix(
    g: KnnGraph,
    *,
    threads: int = 1,
    repair: bool = False,
    base: DissimilarityMatrix | None = None,
    metric_tag: str | None = None,
) -> DissimilarityMatrix:
    """All-pairs shortest-path lengths in the k-NN graph.

    Disconnected graphs raise GraphDisconnectedError unless repair mode
    is enabled (requires the base matrix to pick bridging edges).
    """
    if repair:
        if base is None:
            raise DataError("repair mode requires the base dissimilarity matrix")
        g = _repair_connectivity(g, base.values)
    csr = g.to_csr()
    ncomp, labels = connected_components(csr, directed=False)
    if ncomp > 1:
        sizes = np.bincount(labels)
        raise GraphDisconnectedError(sorted(sizes.tolist(), reverse=True))

    n = g.n_nodes
    out = np.zeros((n, n), dtype=np.float64)
    block = max(1, (n + max(threads, 1) - 1) // max(threads, 1)) if threads > 1 else n
    starts = list(range(0, n, min(block, n)))

    def run(s):
        e = min(s + block, n) if threads > 1 else n
        out[s:e] = dijkstra(csr, directed=False, indices=np.arange(s, e))

    if threads <= 1:
        out[:] = dijkstra(csr, directed=False)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))

    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    tag = metric_tag if metric_tag is not None else (base.metric_tag if base else "")
    tag = tag or "unknown"
    if not tag.startswith("G-"):
        tag = "G-" + tag
    params = dict(base.params, k=g.k) if base is not None else {"k": g.k}
    return DissimilarityMatrix(out, tag, params)


def lift(D: DissimilarityMatrix, k: int, *, threads: int = 1, repair: bool = False):
    """Convenience composition: k-NN graph + shortest paths."""
    g = build_knn_graph(D, k)
    return geodesic_matrix(g, threads=threads, repair=repair, base=D)
