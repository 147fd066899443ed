"""Connectivity graph over sampled dataset states.

Construction: embed every sampled state, collect each vertex's k nearest
neighbors in embedding space, and keep an undirected edge when the
embedding distance is at most alpha. Edge cost equals that distance.
Test-time states (starts, goals, points of interest) are inserted with
the same kNN rule against the existing vertices.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .embedding import TemporalEmbedding, embed_many

K_DEFAULT = 30
N_DEFAULT = 1000
ALPHA_PERCENTILE = 95.0


@dataclass(eq=False)
class ConnectivityGraph:
    states: np.ndarray            # (n, 2d)
    z: np.ndarray                 # (n, e) embedding coordinates
    edges: np.ndarray             # (m, 2) int, i < j
    costs: np.ndarray             # (m,)
    k: int
    alpha: float
    embedding: TemporalEmbedding | None = None
    embedding_ref: str = ""
    _adj: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def d(self) -> int:
        return self.states.shape[1] // 2

    def positions(self) -> np.ndarray:
        return self.states[:, :self.d]

    def adjacency(self) -> list:
        """Per-vertex list of (neighbor, cost) arrays, built lazily."""
        if self._adj is None or len(self._adj) != self.n:
            nbrs = [[] for _ in range(self.n)]
            for (i, j), c in zip(self.edges, self.costs):
                nbrs[i].append((j, c))
                nbrs[j].append((i, c))
            self._adj = [
                (np.array([v for v, _ in lst], dtype=int),
                 np.array([c for _, c in lst]))
                for lst in nbrs
            ]
        return self._adj

    def validate(self) -> None:
        if len(self.edges):
            if not np.all(self.edges[:, 0] < self.edges[:, 1]):
                raise ValueError("edges must be stored with i < j")
            if np.max(self.costs) > self.alpha + 1e-12:
                raise ValueError("edge cost exceeds alpha")
            recomputed = np.linalg.norm(self.z[self.edges[:, 0]]
                                        - self.z[self.edges[:, 1]], axis=1)
            if np.abs(recomputed - self.costs).max() > 1e-12:
                raise ValueError("stored cost disagrees with embedding distance")
        seen = set(map(tuple, self.edges))
        if len(seen) != len(self.edges):
            raise ValueError("duplicate edges")


def _knn_in_embedding(z: np.ndarray, queries: np.ndarray, k: int):
    """k nearest rows of z for each query, ties broken by ascending index.

    cKDTree breaks exact ties arbitrarily, so re-rank with a stable sort
    on (distance, index).
    """
    k_eff = min(k + 1, len(z))
    dist, idx = cKDTree(z).query(queries, k=k_eff)
    dist = dist.reshape(len(queries), k_eff)
    idx = idx.reshape(len(queries), k_eff)
    order = np.lexsort((idx, np.round(dist, 12)), axis=1)
    rows = np.arange(len(queries))[:, None]
    return dist[rows, order], idx[rows, order]


def build_graph(states, embedding: TemporalEmbedding, k: int = K_DEFAULT,
                alpha: float | None = None, embedding_ref: str = "") -> ConnectivityGraph:
    """Connectivity graph construction over sampled states."""
    S = np.asarray(states, dtype=float)
    if len(S) < 2:
        raise ValueError("need at least 2 states")
    if k < 1:
        raise ValueError("k must be at least 1")
    z = embed_many(embedding, S)
    if alpha is None:
        alpha = default_alpha(z, k)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    dist, idx = _knn_in_embedding(z, z, k)
    pairs = {}
    for i in range(len(S)):
        taken = 0
        for dd, j in zip(dist[i], idx[i]):
            j = int(j)
            if j == i:
                continue
            if taken >= k:
                break
            taken += 1
            if dd <= alpha:
                key = (min(i, j), max(i, j))
                if key not in pairs:
                    pairs[key] = float(np.linalg.norm(z[i] - z[j]))
    if pairs:
        edges = np.array(sorted(pairs), dtype=int)
        costs = np.array([pairs[tuple(e)] for e in edges])
    else:
        edges = np.zeros((0, 2), dtype=int)
        costs = np.zeros(0)
    return ConnectivityGraph(S.copy(), z, edges, costs, k, float(alpha),
                             embedding=embedding, embedding_ref=embedding_ref)


def default_alpha(z: np.ndarray, k: int, percentile: float = ALPHA_PERCENTILE) -> float:
    """Threshold heuristic: a high percentile of observed kNN distances."""
    dist, idx = _knn_in_embedding(z, z, k)
    off_diag = []
    for i in range(len(z)):
        row = dist[i][idx[i] != i][:k]
        off_diag.append(row)
    all_d = np.concatenate(off_diag)
    return float(np.percentile(all_d, percentile))


def insert_vertex(graph: ConnectivityGraph, state) -> tuple[ConnectivityGraph, int]:
    """Insert a test-time state with the construction kNN rule.

    Returns (new graph view, new vertex id). The input graph is unchanged.
    """
    if graph.embedding is None:
        raise ValueError("graph was built without a retained embedding")
    s = np.asarray(state, dtype=float)
    z_new = embed_many(graph.embedding, s[None, :])[0]
    dist = np.linalg.norm(graph.z - z_new[None, :], axis=1)
    order = np.lexsort((np.arange(graph.n), np.round(dist, 12)))
    new_id = graph.n
    add_edges, add_costs = [], []
    for j in order[:graph.k]:
        if dist[j] <= graph.alpha:
            add_edges.append((int(j), new_id))
            add_costs.append(float(dist[j]))
    if not add_edges:
        warnings.warn("inserted vertex has no neighbor within alpha; "
                      "it is isolated")
    edges = np.vstack([graph.edges, np.array(add_edges, dtype=int).reshape(-1, 2)])
    costs = np.concatenate([graph.costs, np.array(add_costs)])
    out = ConnectivityGraph(np.vstack([graph.states, s[None, :]]),
                            np.vstack([graph.z, z_new[None, :]]),
                            edges, costs, graph.k, graph.alpha,
                            embedding=graph.embedding,
                            embedding_ref=graph.embedding_ref)
    return out, new_id


def connected_components(graph: ConnectivityGraph) -> list[list[int]]:
    """Vertex partition, components sorted by size descending."""
    adj = graph.adjacency()
    unseen = np.ones(graph.n, dtype=bool)
    comps = []
    for start in range(graph.n):
        if not unseen[start]:
            continue
        stack = [start]
        unseen[start] = False
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u][0]:
                v = int(v)
                if unseen[v]:
                    unseen[v] = False
                    stack.append(v)
        comps.append(sorted(comp))
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def save_graph(graph: ConnectivityGraph, path) -> None:
    """Write the graph, including its embedding, as one JSON document."""
    emb = graph.embedding
    doc = {
        "states": graph.states.tolist(),
        "z": graph.z.tolist(),
        "edges": graph.edges.tolist(),
        "costs": graph.costs.tolist(),
        "k": graph.k,
        "alpha": graph.alpha,
        "embedding_ref": graph.embedding_ref,
        "embedding": None,
    }
    if emb is not None:
        edoc = {"mode": emb.mode, "e": emb.e}
        if emb.landmark_states is not None:
            edoc["landmarks"] = emb.landmark_states.tolist()
            edoc["coords"] = emb.landmark_coords.tolist()
            edoc["stress"] = emb.stress
        doc["embedding"] = edoc
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_graph(path) -> ConnectivityGraph:
    from .embedding import TemporalEmbedding, identity_embedding
    with open(path) as fh:
        doc = json.load(fh)
    emb = None
    if doc.get("embedding") is not None:
        edoc = doc["embedding"]
        if edoc["mode"] == "identity_position":
            emb = identity_embedding(edoc["e"])
        else:
            emb = TemporalEmbedding(
                edoc["mode"], edoc["e"],
                landmark_states=np.asarray(edoc["landmarks"]),
                landmark_coords=np.asarray(edoc["coords"]),
                stress=edoc.get("stress"))
    edges = np.asarray(doc["edges"], dtype=int).reshape(-1, 2)
    return ConnectivityGraph(np.asarray(doc["states"], dtype=float),
                             np.asarray(doc["z"], dtype=float),
                             edges, np.asarray(doc["costs"], dtype=float),
                             int(doc["k"]), float(doc["alpha"]),
                             embedding=emb,
                             embedding_ref=doc.get("embedding_ref", ""))
