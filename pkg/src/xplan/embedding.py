"""Temporal-distance embedding.

A landmark subset of the dataset is linked into a transition graph whose
arc weights are travel times: temporally adjacent landmarks of one
trajectory are linked by their step separation times dt, and spatially
co-located landmarks from different trajectories by the estimated time
to cover their positional gap at the dataset's typical speed, floored
at a two-step constant for exact co-location. All-pairs
shortest-path times over this graph estimate how long the data takes to
travel between regions, and classical MDS turns those times into
coordinates whose Euclidean distances track them. identity_position mode
bypasses all of it and uses raw positions, which suffices in open worlds.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .dataset import Dataset

PROXIMITY_LINK_FACTOR = 2.0   # proximity arcs weigh 2*dt seconds
Q_NEAREST_DEFAULT = 4


@dataclass
class TransitionGraph:
    states: np.ndarray          # (n, 2d) landmark states
    arcs: np.ndarray            # (m, 2) int pairs, i < j
    weights: np.ndarray         # (m,) seconds
    dt: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.states)


def _sample_landmark_indices(dataset: Dataset, n_landmarks: int,
                             rng: np.random.Generator, cell: float = 0.5):
    """Spatially stratified landmark sample.

    One draw per occupied position-space grid cell in shuffled cell
    order, cycling until n_landmarks are taken. A plain uniform draw
    weights regions by dwell time and can leave fast transit zones
    without landmarks, which punches detour cliffs into the recovered
    temporal metric. Returns (trajectory index, step index) so chain
    arcs can be built.
    """
    owners = np.concatenate([np.full(len(t), ti, dtype=int)
                             for ti, t in enumerate(dataset.trajectories)])
    steps = np.concatenate([np.arange(len(t), dtype=int)
                            for t in dataset.trajectories])
    total = len(owners)
    if total <= n_landmarks:
        idx = rng.choice(total, size=n_landmarks, replace=True)
        return owners[idx], steps[idx]
    d = dataset.d
    pos = np.concatenate([t.states[:, :d] for t in dataset.trajectories])
    keys = np.floor(pos / cell).astype(np.int64)
    groups: dict = {}
    for i, key in enumerate(map(tuple, keys)):
        groups.setdefault(key, []).append(i)
    buckets = [np.array(g) for g in groups.values()]
    for b in buckets:
        rng.shuffle(b)
    order = rng.permutation(len(buckets))
    chosen: list = []
    lap = 0
    while len(chosen) < n_landmarks:
        took = 0
        for bi in order:
            b = buckets[bi]
            if lap < len(b):
                chosen.append(b[lap])
                took += 1
                if len(chosen) == n_landmarks:
                    break
        if took == 0:
            break
        lap += 1
    idx = np.array(chosen[:n_landmarks])
    return owners[idx], steps[idx]


def build_transition_graph(dataset: Dataset, n_landmarks: int,
                           link_radius: float, seed: int = 0) -> TransitionGraph:
    if n_landmarks < 2:
        raise ValueError("need at least 2 landmarks")
    rng = np.random.default_rng(seed)
    owners, steps = _sample_landmark_indices(dataset, n_landmarks, rng)
    states = np.stack([dataset.trajectories[o].states[s]
                       for o, s in zip(owners, steps)])
    dt = dataset.dt
    d = dataset.d

    pairs = {}

    def add(i, j, w):
        if i == j:
            return
        key = (min(i, j), max(i, j))
        if key not in pairs or w < pairs[key]:
            pairs[key] = w

    # chain arcs: adjacent landmarks of the same trajectory
    for ti in np.unique(owners):
        sel = np.flatnonzero(owners == ti)
        order = sel[np.argsort(steps[sel], kind="stable")]
        for a, b in zip(order[:-1], order[1:]):
            gap = int(steps[b] - steps[a])
            if gap > 0:
                add(int(a), int(b), gap * dt)

    # proximity arcs: co-located landmarks, any trajectory; weight is the
    # co-location floor or the typical time to cover the positional gap,
    # whichever is larger, so proximity and chain arcs share a time scale
    tree = cKDTree(states[:, :d])
    w_floor = PROXIMITY_LINK_FACTOR * dt
    v_typ = float(np.median(np.linalg.norm(states[:, d:], axis=1)))
    prox = tree.query_pairs(link_radius, output_type="ndarray")
    if len(prox):
        gaps = np.linalg.norm(states[prox[:, 0], :d]
                              - states[prox[:, 1], :d], axis=1)
        if v_typ > 1e-9:
            w_arr = np.maximum(w_floor, gaps / v_typ)
        else:
            w_arr = np.full(len(prox), w_floor)
        for (i, j), w in zip(prox, w_arr):
            add(int(i), int(j), float(w))

    if pairs:
        arcs = np.array(sorted(pairs), dtype=int)
        weights = np.array([pairs[tuple(a)] for a in arcs])
    else:
        arcs = np.zeros((0, 2), dtype=int)
        weights = np.zeros(0)
    return TransitionGraph(states, arcs, weights, dt,
                           meta={"owners": owners, "steps": steps,
                                 "link_radius": link_radius,
                                 "v_typical": v_typ})


def empirical_temporal_distance(tg: TransitionGraph) -> np.ndarray:
    """All-pairs shortest-path times, seconds; inf across components."""
    n = tg.n
    if len(tg.arcs):
        mat = coo_matrix((tg.weights, (tg.arcs[:, 0], tg.arcs[:, 1])),
                         shape=(n, n)).tocsr()
    else:
        mat = coo_matrix((n, n)).tocsr()
    dist = dijkstra(mat, directed=False)
    finite = np.isfinite(dist) & np.isfinite(dist.T)
    assert np.array_equal(finite, finite.T), "asymmetric reachability"
    if finite.any():
        asym = np.abs(dist[finite] - dist.T[finite])
        assert asym.max() < 1e-9, "asymmetric distances"
    np.fill_diagonal(dist, 0.0)
    out = dist.copy()
    out[finite] = np.minimum(dist[finite], dist.T[finite])
    return out


@dataclass(eq=False)
class TemporalEmbedding:
    mode: str                        # "identity_position" | "landmark_mds"
    e: int
    landmark_states: np.ndarray | None = None   # (n, 2d)
    landmark_coords: np.ndarray | None = None   # (n, e)
    stress: float | None = None
    q_nearest: int = Q_NEAREST_DEFAULT
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    @property
    def d(self) -> int:
        if self.landmark_states is not None:
            return self.landmark_states.shape[1] // 2
        return self.e

    def _position_tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.landmark_states[:, :self.d])
        return self._tree


def identity_embedding(d: int) -> TemporalEmbedding:
    return TemporalEmbedding("identity_position", e=d)


def fit_landmark_mds(distances: np.ndarray, e: int,
                     landmark_states: np.ndarray | None = None) -> TemporalEmbedding:
    """Classical MDS on a finite symmetric distance matrix."""
    D = np.asarray(distances, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.isfinite(D).all():
        raise ValueError("distances must be finite (restrict to one component)")
    if np.abs(D - D.T).max() > 1e-9 or np.abs(np.diag(D)).max() > 1e-12:
        raise ValueError("distances must be symmetric with zero diagonal")
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (D * D) @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:e]
    vals, vecs = vals[order], vecs[:, order]
    coords = np.zeros((n, e))
    thresh = 1e-12 * max(1.0, abs(vals[0])) if len(vals) else 1e-12
    positive = vals > thresh
    coords[:, positive] = vecs[:, positive] * np.sqrt(vals[positive])
    n_pos = int(positive.sum())
    if n_pos < e:
        warnings.warn(f"MDS rank {n_pos} < requested dimension {e}; "
                      "padding with zero columns")
    emb_d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    denom = np.square(D).sum()
    stress = float(np.sqrt(np.square(emb_d - D).sum() / denom)) if denom > 0 else 0.0
    return TemporalEmbedding("landmark_mds", e=e, landmark_states=landmark_states,
                             landmark_coords=coords, stress=stress)


def embed(embedding: TemporalEmbedding, state) -> np.ndarray:
    return embed_many(embedding, np.asarray(state, dtype=float)[None, :])[0]


def embed_many(embedding: TemporalEmbedding, states) -> np.ndarray:
    """Vectorized embedding of (n, 2d) states."""
    S = np.atleast_2d(np.asarray(states, dtype=float))
    if embedding.mode == "identity_position":
        return S[:, :embedding.e].copy()
    if embedding.landmark_states is None or embedding.landmark_coords is None:
        raise ValueError("landmark_mds embedding lacks landmark data")
    d = embedding.d
    q = min(embedding.q_nearest, len(embedding.landmark_states))
    dist, idx = embedding._position_tree().query(S[:, :d], k=q)
    dist = dist.reshape(len(S), q)
    idx = idx.reshape(len(S), q)
    out = np.empty((len(S), embedding.e))
    exact = dist[:, 0] < 1e-12
    out[exact] = embedding.landmark_coords[idx[exact, 0]]
    rest = ~exact
    if rest.any():
        w = 1.0 / np.maximum(dist[rest], 1e-300)
        w /= w.sum(axis=1, keepdims=True)
        out[rest] = np.einsum("nq,nqe->ne", w,
                              embedding.landmark_coords[idx[rest]])
    return out


def largest_finite_block(distances: np.ndarray) -> np.ndarray:
    """Indices of the largest subset with pairwise finite distances
    (a connected component of the underlying graph)."""
    D = np.asarray(distances)
    n = len(D)
    unassigned = np.ones(n, dtype=bool)
    best = np.zeros(0, dtype=int)
    while unassigned.any():
        i = int(np.flatnonzero(unassigned)[0])
        comp = np.flatnonzero(np.isfinite(D[i]) & unassigned)
        comp = comp[np.isfinite(D[np.ix_(comp, comp)]).all(axis=1)]
        unassigned[comp] = False
        unassigned[i] = False
        if len(comp) > len(best):
            best = comp
    return best


def fit_temporal_embedding(dataset: Dataset, n_landmarks: int = 300,
                           link_radius: float = 0.5, e: int | None = None,
                           seed: int = 0, mode: str = "landmark_mds") -> TemporalEmbedding:
    """End-to-end fit: transition graph, shortest-path times, MDS."""
    if mode == "identity_position":
        return identity_embedding(dataset.d)
    if e is None:
        e = dataset.d
    tg = build_transition_graph(dataset, n_landmarks, link_radius, seed)
    D = empirical_temporal_distance(tg)
    keep = largest_finite_block(D)
    if len(keep) < len(D):
        warnings.warn(f"transition graph has {len(D) - len(keep)} landmarks "
                      "outside the main component; dropping them")
    emb = fit_landmark_mds(D[np.ix_(keep, keep)], e,
                           landmark_states=tg.states[keep])
    return emb


def save_embedding(embedding: TemporalEmbedding, path) -> None:
    doc = {"mode": embedding.mode, "e": embedding.e}
    if embedding.landmark_states is not None:
        doc["landmarks"] = embedding.landmark_states.tolist()
        doc["coords"] = embedding.landmark_coords.tolist()
        doc["stress"] = embedding.stress
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_embedding(path) -> TemporalEmbedding:
    with open(path) as fh:
        doc = json.load(fh)
    if doc["mode"] == "identity_position":
        return identity_embedding(doc["e"])
    return TemporalEmbedding(doc["mode"], doc["e"],
                             landmark_states=np.asarray(doc["landmarks"]),
                             landmark_coords=np.asarray(doc["coords"]),
                             stress=doc.get("stress"))
