"""Shortest paths, nominal timing and waypoint downsampling."""

import numpy as np
import pytest

from xplan.embedding import identity_embedding
from xplan.graph import build_graph
from xplan.route import (GraphPath, NoPathError, downsample_timed,
                         downsample_waypoints, load_plan, save_plan,
                         shortest_path)


def _graph_from_positions(pos, k=3, alpha=2.0):
    pos = np.asarray(pos, dtype=float)
    states = np.hstack([pos, np.zeros_like(pos)])
    return build_graph(states, identity_embedding(pos.shape[1]), k=k, alpha=alpha)


def test_chain_costs_and_times():
    g = _graph_from_positions([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
                              k=1, alpha=1.5)
    p = shortest_path(g, 0, 2)
    assert p.vertex_ids == [0, 1, 2]
    assert np.allclose(p.nominal_times, [0.0, 1.0, 2.0])
    assert p.total_cost == pytest.approx(2.0)
    p.validate(g)


def test_start_equals_goal():
    g = _graph_from_positions([[0.0, 0.0], [1.0, 0.0]], k=1, alpha=1.5)
    p = shortest_path(g, 1, 1)
    assert p.vertex_ids == [1]
    assert np.array_equal(p.nominal_times, [0.0])


def test_tie_break_prefers_smaller_ids():
    # diamond: two equal-cost routes, the one through vertex 1 must win
    g = _graph_from_positions([[0.0, 0.0], [1.0, 1.0], [1.0, -1.0], [2.0, 0.0]],
                              k=3, alpha=1.7)
    p = shortest_path(g, 0, 3)
    assert p.vertex_ids == [0, 1, 3]


def test_unreachable_names_components():
    g = _graph_from_positions([[0.0, 0.0], [1.0, 0.0], [50.0, 0.0], [51.0, 0.0]],
                              k=2, alpha=1.5)
    with pytest.raises(NoPathError, match="component"):
        shortest_path(g, 0, 3)


def _all_simple_path_costs(g, start, goal):
    adj = g.adjacency()
    best = [np.inf]

    def rec(u, cost, seen):
        if u == goal:
            best[0] = min(best[0], cost)
            return
        for v, c in zip(*adj[u]):
            v = int(v)
            if v not in seen:
                rec(v, cost + c, seen | {v})

    rec(start, 0.0, {start})
    return best[0]


def test_cost_matches_exhaustive_enumeration(rng):
    pos = rng.uniform(0, 3, size=(9, 2))
    g = _graph_from_positions(pos, k=3, alpha=1.8)
    for _ in range(10):
        a, b = rng.integers(0, 9, size=2)
        want = _all_simple_path_costs(g, int(a), int(b))
        if np.isinf(want):
            with pytest.raises(NoPathError):
                shortest_path(g, int(a), int(b))
        else:
            p = shortest_path(g, int(a), int(b))
            assert p.total_cost == pytest.approx(want)


def test_cost_not_above_random_walk(rng):
    pos = rng.uniform(0, 4, size=(40, 2))
    g = _graph_from_positions(pos, k=4, alpha=1.5)
    adj = g.adjacency()
    for _ in range(30):
        # random edge-valid walk, then compare against the optimum
        u = int(rng.integers(g.n))
        walk = [u]
        cost = 0.0
        for _ in range(12):
            nbrs, costs = adj[walk[-1]]
            if len(nbrs) == 0:
                break
            pick = int(rng.integers(len(nbrs)))
            cost += float(costs[pick])
            walk.append(int(nbrs[pick]))
        try:
            p = shortest_path(g, walk[0], walk[-1])
        except NoPathError:
            continue
        assert p.total_cost <= cost + 1e-9


def test_cost_invariant_under_relabeling(rng):
    pos = rng.uniform(0, 4, size=(30, 2))
    g = _graph_from_positions(pos, k=4, alpha=1.5)
    perm = rng.permutation(30)
    g2 = _graph_from_positions(pos[perm], k=4, alpha=1.5)
    inv = np.argsort(perm)
    for _ in range(8):
        a, b = rng.integers(0, 30, size=2)
        try:
            c1 = shortest_path(g, int(a), int(b)).total_cost
        except NoPathError:
            continue
        c2 = shortest_path(g2, int(inv[a]), int(inv[b])).total_cost
        assert c1 == pytest.approx(c2)


def _line_path(times):
    n = len(times)
    pos = np.stack([np.arange(n, dtype=float), np.zeros(n)], axis=1)
    g = _graph_from_positions(pos, k=2, alpha=1.5)
    return GraphPath(list(range(n)), np.asarray(times, dtype=float),
                     float(times[-1])), g


def test_downsample_keeps_documented_indices():
    path, g = _line_path([0.0, 5.0, 10.0, 15.0, 20.0])
    plan = downsample_waypoints(path, g, delta_t=12.0, dilation=1.0)
    assert plan.vertex_ids == [0, 3, 4]
    assert np.allclose(plan.times, [0.0, 15.0, 20.0])


def test_downsample_extremes():
    path, g = _line_path([0.0, 5.0, 10.0, 15.0, 20.0])
    only_ends = downsample_waypoints(path, g, delta_t=100.0, dilation=1.0)
    assert only_ends.vertex_ids == [0, 4]
    everything = downsample_waypoints(path, g, delta_t=1e-9, dilation=1.0)
    assert everything.vertex_ids == [0, 1, 2, 3, 4]


def test_downsample_gaps_at_least_delta_t(rng):
    for _ in range(20):
        times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 4.0, size=14))])
        path, g = _line_path(times)
        dt = float(rng.uniform(2.0, 10.0))
        plan = downsample_waypoints(path, g, delta_t=dt, dilation=1.0)
        gaps = np.diff(plan.times)
        assert np.all(gaps[:-1] >= dt - 1e-12)
        assert plan.vertex_ids[0] == 0 and plan.vertex_ids[-1] == 14


def test_dilation_scales_times_not_selection():
    path, g = _line_path([0.0, 5.0, 10.0, 15.0, 20.0])
    base = downsample_waypoints(path, g, delta_t=12.0, dilation=1.0)
    dil = downsample_waypoints(path, g, delta_t=12.0, dilation=1.5)
    assert dil.vertex_ids == base.vertex_ids
    assert np.allclose(dil.times, 1.5 * base.times)
    assert dil.horizon_hint == int(round(1.5 * 20.0 / dil.dt_plan))


def test_horizon_hint_rounding():
    plan = downsample_timed(np.zeros((2, 4)), np.array([0.0, 19.9]),
                            delta_t=5.0, dilation=1.0, dt_plan=0.2)
    assert plan.horizon_hint == int(round(19.9 / 0.2))


def test_plan_validate_and_round_trip(tmp_path):
    path, g = _line_path([0.0, 4.0, 9.0])
    plan = downsample_waypoints(path, g, delta_t=3.0, dilation=1.2)
    plan.validate()
    f = tmp_path / "plan.json"
    save_plan(plan, f)
    back = load_plan(f)
    assert np.array_equal(back.states, plan.states)
    assert np.array_equal(back.times, plan.times)
    assert back.dilation == plan.dilation
    assert back.vertex_ids == plan.vertex_ids


def test_downsample_rejects_bad_parameters():
    path, g = _line_path([0.0, 4.0])
    with pytest.raises(ValueError):
        downsample_waypoints(path, g, delta_t=0.0, dilation=1.0)
    with pytest.raises(ValueError):
        downsample_waypoints(path, g, delta_t=1.0, dilation=0.5)
