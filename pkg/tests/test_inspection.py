"""Covering tours over viewpoint candidates."""

import itertools

import numpy as np
import pytest

from xplan.embedding import identity_embedding
from xplan.graph import build_graph
from xplan.inspection import (assign_viewpoints, brute_force_tour,
                              generate_pois, inspection_tour)
from xplan.route import NoPathError


def _graph_from_positions(pos, k=4, alpha=2.0):
    pos = np.asarray(pos, dtype=float)
    states = np.hstack([pos, np.zeros_like(pos)])
    return build_graph(states, identity_embedding(pos.shape[1]), k=k, alpha=alpha)


def _ring_graph(n=12, radius=3.0):
    ang = 2 * np.pi * np.arange(n) / n
    pos = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    return _graph_from_positions(pos, k=2, alpha=2.5)


def test_assign_matches_brute_force():
    rng = np.random.default_rng(3)
    pos = rng.uniform(-4, 4, size=(40, 2))
    g = _graph_from_positions(pos, k=5, alpha=3.0)
    pois = rng.uniform(-4, 4, size=(6, 2))
    vsets = assign_viewpoints(g, pois, K=5, r_obs=2.0)
    P = g.positions()
    for m, poi in enumerate(pois):
        dists = np.linalg.norm(P - poi[None, :], axis=1)
        order = np.lexsort((np.arange(len(P)), np.round(dists, 12)))
        expect = [int(v) for v in order[:5] if dists[v] <= 2.0]
        assert vsets[m] == expect


def test_assign_empty_when_out_of_range():
    g = _graph_from_positions([[0.0, 0.0], [1.0, 0.0]])
    vsets = assign_viewpoints(g, np.array([[50.0, 50.0]]), K=3, r_obs=1.0)
    assert vsets[0] == []


def test_single_visible_poi_single_stop():
    g = _graph_from_positions([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], k=2, alpha=1.1)
    plan, report = inspection_tour(g, 0, {0: [0]})
    assert report.tour_ids == [0]
    assert report.tour_cost == 0.0
    assert report.covered == [0]
    assert plan.M == 0


def test_shared_viewpoint_visited_once():
    # one vertex covers both targets, so the tour should stop there once
    g = _graph_from_positions([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]], k=2, alpha=2.5)
    plan, report = inspection_tour(g, 0, {0: [1], 1: [1]})
    assert report.tour_ids == [0, 1]
    assert sorted(report.covered) == [0, 1]
    assert report.tour_cost == pytest.approx(2.0)


def test_heuristic_within_ratio_on_clustered_fixture():
    # 12 vertices, 4 POIs with up to 3 nearby candidates each, the
    # geometry assign_viewpoints produces: candidate clusters around POIs
    rng = np.random.default_rng(11)
    pois = np.array([[3.0, 0.0], [0.0, 3.0], [-3.0, 0.0], [0.0, -3.0]])
    pos = [[0.0, 0.0], [1.5, 1.5], [-1.5, -1.5]]
    for p in pois:
        for _ in range(2):
            pos.append(p + rng.uniform(-0.6, 0.6, size=2))
    pos.append([1.5, -1.5])
    g = _graph_from_positions(np.asarray(pos), k=5, alpha=4.0)
    assert g.n == 12
    vsets = assign_viewpoints(g, pois, K=3, r_obs=1.5)
    assert all(vsets[m] for m in range(4))
    plan, report = inspection_tour(g, 0, vsets)
    seq, best = brute_force_tour(g, 0, vsets)
    assert report.covered == [0, 1, 2, 3]
    assert best <= report.tour_cost + 1e-9
    assert report.tour_cost <= 1.15 * best + 1e-9


def test_heuristic_never_beats_oracle_random_instances():
    rng = np.random.default_rng(11)
    pos = rng.uniform(-4, 4, size=(14, 2))
    g = _graph_from_positions(pos, k=5, alpha=4.0)
    for seed in range(6):
        r = np.random.default_rng(seed)
        vsets = {m: sorted(int(c) for c in r.choice(14, size=3, replace=False))
                 for m in range(4)}
        plan, report = inspection_tour(g, 0, vsets)
        seq, best = brute_force_tour(g, 0, vsets)
        assert report.covered == [0, 1, 2, 3]
        assert best <= report.tour_cost + 1e-9


def test_brute_force_guards():
    g = _ring_graph()
    too_many_pois = {m: [0] for m in range(7)}
    with pytest.raises(ValueError):
        brute_force_tour(g, 0, too_many_pois)
    with pytest.raises(ValueError):
        brute_force_tour(g, 0, {0: [0, 1, 2, 3, 4]})
    with pytest.raises(ValueError):
        inspection_tour(g, 0, {})


def test_empty_candidate_set_is_uncovered_not_fatal():
    g = _ring_graph()
    plan, report = inspection_tour(g, 0, {0: [3], 1: []})
    assert report.covered == [0]
    assert report.uncovered == [1]


def test_tour_covers_every_reachable_poi():
    rng = np.random.default_rng(7)
    pos = rng.uniform(-5, 5, size=(30, 2))
    g = _graph_from_positions(pos, k=6, alpha=4.0)
    for seed in range(5):
        r = np.random.default_rng(100 + seed)
        vsets = {m: [int(v) for v in r.choice(30, size=3, replace=False)]
                 for m in range(5)}
        plan, report = inspection_tour(g, 0, vsets)
        for m, cands in vsets.items():
            if m in report.covered:
                assert any(v in report.tour_ids for v in cands)
            else:
                assert m in report.uncovered


def test_tour_stops_survive_downsampling():
    # stops must appear in the waypoint plan even when closer than delta_t
    g = _ring_graph()
    vsets = {0: [3], 1: [6], 2: [9]}
    plan, report = inspection_tour(g, 0, vsets, delta_t=100.0)
    P = g.positions()
    wp_pos = plan.states[:, :2]
    for v in report.tour_ids:
        d = np.linalg.norm(wp_pos - P[v][None, :], axis=1)
        assert d.min() < 1e-9


def test_plan_times_consistent():
    g = _ring_graph()
    plan, report = inspection_tour(g, 0, {0: [4], 1: [8]},
                                   delta_t=1.0, dilation=2.0)
    plan.validate()
    assert plan.times[0] == 0.0
    assert np.all(np.diff(plan.times) > 0)
    assert plan.times[-1] == pytest.approx(2.0 * report.tour_cost)


def test_unreachable_candidates_reported():
    pos = [[0.0, 0.0], [1.0, 0.0], [50.0, 50.0]]
    g = _graph_from_positions(pos, k=2, alpha=1.5)
    plan, report = inspection_tour(g, 0, {0: [1], 1: [2]})
    assert report.covered == [0]
    assert report.uncovered == [1]
    with pytest.raises(NoPathError):
        brute_force_tour(g, 0, {0: [2]})


def test_generate_pois_free_and_deterministic(maze):
    pois_a = generate_pois(maze, 6, seed=4)
    pois_b = generate_pois(maze, 6, seed=4)
    assert np.array_equal(pois_a, pois_b)
    from xplan.worlds import points_blocked
    assert not points_blocked(maze, pois_a).any()
    # farthest-point picks are pairwise spread out
    d = np.linalg.norm(pois_a[:, None, :] - pois_a[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 0.5
