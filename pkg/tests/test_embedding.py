"""Transition graph, temporal distances, MDS and out-of-sample embedding."""

import warnings

import numpy as np
import pytest
from scipy import stats

from xplan.dataset import Dataset, Trajectory, generate_explore
from xplan.embedding import (TemporalEmbedding, TransitionGraph,
                             build_transition_graph, embed, embed_many,
                             empirical_temporal_distance, fit_landmark_mds,
                             fit_temporal_embedding, identity_embedding,
                             largest_finite_block, load_embedding,
                             save_embedding)
from xplan.worlds import make_maze


def _line_dataset(n=10, dt=0.05, x0=0.0, y=0.0, step_x=0.1):
    pos = np.stack([x0 + step_x * np.arange(n), np.full(n, y)], axis=1)
    vel = np.zeros_like(pos)
    vel[:, 0] = step_x / dt
    return Dataset([Trajectory(np.hstack([pos, vel]), dt, "external")], "line", 2)


def test_chain_arcs_single_trajectory():
    ds = _line_dataset(3, step_x=1.0)   # landmarks far apart, no proximity arcs
    tg = build_transition_graph(ds, 3, link_radius=0.1, seed=0)
    assert tg.n == 3
    assert len(tg.arcs) == 2
    # weights are step gaps times dt
    steps = tg.meta["steps"]
    for (i, j), w in zip(tg.arcs, tg.weights):
        assert w == pytest.approx(abs(int(steps[j]) - int(steps[i])) * ds.dt)


def test_disjoint_trajectories_stay_disconnected():
    a = _line_dataset(5, y=0.0)
    b = _line_dataset(5, y=100.0)
    ds = Dataset(a.trajectories + b.trajectories, "two", 2)
    tg = build_transition_graph(ds, 10, link_radius=0.2, seed=1)
    D = empirical_temporal_distance(tg)
    comp = largest_finite_block(D)
    assert 0 < len(comp) < tg.n
    ys = tg.states[:, 1]
    assert len(np.unique(np.round(ys[comp]))) == 1  # one side only


def test_arc_weights_match_brute_force(maze):
    ds = generate_explore(maze, 4, 120, seed=3)
    tg = build_transition_graph(ds, 40, link_radius=0.5, seed=2)
    owners, steps = tg.meta["owners"], tg.meta["steps"]
    d = ds.d
    expected = {}
    for ti in np.unique(owners):
        sel = np.flatnonzero(owners == ti)
        order = sel[np.argsort(steps[sel], kind="stable")]
        for a, b in zip(order[:-1], order[1:]):
            gap = int(steps[b]) - int(steps[a])
            if gap > 0:
                key = (min(a, b), max(a, b))
                expected[key] = gap * ds.dt
    v_typ = np.median(np.linalg.norm(tg.states[:, d:], axis=1))
    for i in range(tg.n):
        for j in range(i + 1, tg.n):
            gap = np.linalg.norm(tg.states[i, :d] - tg.states[j, :d])
            if gap < 0.5:
                w = max(2 * ds.dt, gap / v_typ)
                key = (i, j)
                if key not in expected or w < expected[key]:
                    expected[key] = w
    got = {(int(i), int(j)): w for (i, j), w in zip(tg.arcs, tg.weights)}
    assert got.keys() == expected.keys()
    for key in expected:
        assert got[key] == pytest.approx(expected[key])


def test_distance_chain_and_diagonal():
    states = np.zeros((3, 4))
    states[:, 0] = [0.0, 10.0, 20.0]
    tg = TransitionGraph(states, np.array([[0, 1], [1, 2]]),
                         np.array([1.0, 2.0]), dt=0.05)
    D = empirical_temporal_distance(tg)
    assert D[0, 2] == pytest.approx(3.0)
    assert np.all(np.diag(D) == 0.0)
    assert np.allclose(D, D.T)


def test_distance_matches_floyd_warshall(rng):
    n = 30
    states = np.zeros((n, 4))
    arcs = []
    weights = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.15:
                arcs.append((i, j))
                weights.append(float(rng.uniform(0.1, 2.0)))
    tg = TransitionGraph(states, np.array(arcs), np.array(weights), dt=0.05)
    D = empirical_temporal_distance(tg)
    # independent oracle: Floyd-Warshall triple loop
    F = np.full((n, n), np.inf)
    np.fill_diagonal(F, 0.0)
    for (i, j), w in zip(arcs, weights):
        F[i, j] = min(F[i, j], w)
        F[j, i] = F[i, j]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if F[i, k] + F[k, j] < F[i, j]:
                    F[i, j] = F[i, k] + F[k, j]
    finite = np.isfinite(F)
    assert np.array_equal(finite, np.isfinite(D))
    assert np.allclose(D[finite], F[finite], atol=1e-12)
    # triangle inequality on the finite part
    comp = largest_finite_block(D)
    Dc = D[np.ix_(comp, comp)]
    for a in range(len(comp)):
        assert np.all(Dc[a][None, :] <= Dc[a][:, None] + Dc + 1e-9)


def test_mds_collinear_points():
    D = np.array([[0.0, 1.0, 2.0],
                  [1.0, 0.0, 1.0],
                  [2.0, 1.0, 0.0]])
    emb = fit_landmark_mds(D, 1)
    c = emb.landmark_coords[:, 0]
    got = sorted([abs(c[0] - c[1]), abs(c[1] - c[2]), abs(c[0] - c[2])])
    assert np.allclose(got, [1.0, 1.0, 2.0], atol=1e-9)


def test_mds_zero_matrix():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        emb = fit_landmark_mds(np.zeros((4, 4)), 2)
    assert np.allclose(emb.landmark_coords, 0.0)


def test_mds_recovers_planar_points(rng):
    pts = rng.uniform(0, 5, size=(20, 2))
    D = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    emb = fit_landmark_mds(D, 2)
    c = emb.landmark_coords
    De = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
    assert np.abs(De - D).max() < 1e-6
    assert emb.stress < 1e-8


def test_mds_rank_deficit_warns():
    D = np.array([[0.0, 1.0], [1.0, 0.0]])  # rank-1 configuration
    with pytest.warns(UserWarning, match="rank"):
        emb = fit_landmark_mds(D, 2)
    assert np.allclose(emb.landmark_coords[:, 1], 0.0)


def test_mds_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_landmark_mds(np.array([[0.0, np.inf], [np.inf, 0.0]]), 1)
    with pytest.raises(ValueError):
        fit_landmark_mds(np.array([[0.0, 1.0], [2.0, 0.0]]), 1)


def test_embed_identity_mode():
    emb = identity_embedding(2)
    z = embed(emb, np.array([1.0, 2.0, 9.0, 9.0]))
    assert np.array_equal(z, [1.0, 2.0])


def test_embed_landmark_exact_and_midpoint():
    states = np.array([[0.0, 0.0, 0.0, 0.0],
                       [2.0, 0.0, 0.0, 0.0],
                       [0.0, 7.0, 0.0, 0.0],
                       [2.0, 7.0, 0.0, 0.0]])
    coords = np.array([[0.0], [1.0], [5.0], [6.0]])
    emb = TemporalEmbedding("landmark_mds", 1, landmark_states=states,
                            landmark_coords=coords, q_nearest=2)
    assert embed(emb, states[2])[0] == pytest.approx(5.0)
    mid = np.array([1.0, 0.0, 3.0, 3.0])
    assert embed(emb, mid)[0] == pytest.approx(0.5)


def test_embed_batch_matches_single(rng):
    states = rng.uniform(0, 5, size=(30, 4))
    coords = rng.normal(size=(30, 2))
    emb = TemporalEmbedding("landmark_mds", 2, landmark_states=states,
                            landmark_coords=coords)
    queries = rng.uniform(0, 5, size=(15, 4))
    batch = embed_many(emb, queries)
    for i, q in enumerate(queries):
        assert np.allclose(batch[i], embed(emb, q))


def test_corridor_rank_order_fidelity():
    # long straight corridor; temporal distance should track x separation
    cells = [[1] * 22, [1] + [0] * 20 + [1], [1] * 22]
    world = make_maze(cells)
    ds = generate_explore(world, 12, 250, seed=4)
    tg = build_transition_graph(ds, 120, link_radius=0.5, seed=5)
    D = empirical_temporal_distance(tg)
    keep = largest_finite_block(D)
    emb = fit_landmark_mds(D[np.ix_(keep, keep)], 2,
                           landmark_states=tg.states[keep])
    c = emb.landmark_coords
    De = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
    Dt = D[np.ix_(keep, keep)]
    iu = np.triu_indices(len(keep), k=1)
    rho = stats.spearmanr(De[iu], Dt[iu]).statistic
    assert rho >= 0.9


def test_fit_temporal_embedding_end_to_end(maze):
    ds = generate_explore(maze, 8, 200, seed=6)
    emb = fit_temporal_embedding(ds, n_landmarks=80, link_radius=0.5, seed=7)
    assert emb.mode == "landmark_mds"
    assert emb.e == 2
    z = embed_many(emb, ds.all_states()[:10])
    assert z.shape == (10, 2) and np.isfinite(z).all()


def test_embedding_json_round_trip(tmp_path, rng):
    states = rng.uniform(0, 5, size=(12, 4))
    coords = rng.normal(size=(12, 2))
    emb = TemporalEmbedding("landmark_mds", 2, landmark_states=states,
                            landmark_coords=coords, stress=0.12)
    path = tmp_path / "emb.json"
    save_embedding(emb, path)
    back = load_embedding(path)
    assert back.mode == emb.mode and back.e == emb.e
    assert np.array_equal(back.landmark_states, states)
    assert np.array_equal(back.landmark_coords, coords)
    ident = identity_embedding(3)
    save_embedding(ident, path)
    back = load_embedding(path)
    assert back.mode == "identity_position" and back.e == 3
