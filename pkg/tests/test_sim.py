"""Dynamics, collision checking, tracking and task metrics."""

import numpy as np
import pytest

from xplan.sim import (Trace, coverage_curve, goal_reached,
                       min_pairwise_separation, step, track_rollout)
from xplan.worlds import (check_segment_collision, point_blocked,
                          points_blocked, sample_free_position)


def test_step_first_step_leaves_position():
    s = np.zeros(6)
    out = step(s, [1.0, 0.0, 0.0], 0.05)
    assert np.array_equal(out[:3], [0.0, 0.0, 0.0])
    assert np.allclose(out[3:], [0.05, 0.0, 0.0])


def test_step_zero_input_fixed_point():
    s = np.array([1.0, 2.0, 0.0, 0.0])
    out = step(s, [0.0, 0.0], 0.05)
    assert np.array_equal(out, s)


def test_step_clips_componentwise():
    s = np.zeros(6)
    out = step(s, [5.0, -10.0, 2.0], 0.05)
    assert np.allclose(out[3:], [0.15, -0.15, 0.10])


def test_step_rejects_bad_inputs():
    with pytest.raises(ValueError):
        step(np.zeros(5), [1.0, 0.0], 0.05)
    with pytest.raises(ValueError):
        step(np.zeros(4), [1.0, 0.0], 0.0)


def test_step_is_deterministic():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = rng.normal(size=4)
        a = rng.normal(size=2)
        o1 = step(s, a, 0.05)
        o2 = step(s.copy(), a.copy(), 0.05)
        assert o1.tobytes() == o2.tobytes()


def test_segment_collision_trivials(maze):
    assert not check_segment_collision([1.5, 1.5], [1.5, 2.5], maze)
    assert check_segment_collision([1.5, 1.5], [2.5, 2.5], maze)  # endpoint in wall


def test_segment_collision_thin_wall_default_samples(maze):
    # crossing the wall cell (2,2): both endpoints free, middle blocked
    assert check_segment_collision([1.5, 2.5], [3.5, 2.5], maze, n_samples=5)


def test_segment_collision_matches_dense_oracle(maze, rng):
    for _ in range(50):
        p0 = sample_free_position(maze, rng)
        p1 = sample_free_position(maze, rng)
        ts = np.linspace(0.0, 1.0, 1000)
        pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
        oracle = bool(points_blocked(maze, pts).any())
        assert check_segment_collision(p0, p1, maze, n_samples=1000) == oracle


def test_track_constant_reference_stays(maze):
    s0 = np.array([1.5, 1.5, 0.0, 0.0])
    ref = np.tile(s0, (20, 1))
    tr = track_rollout(ref, maze)
    assert np.allclose(tr.states, s0[None, :])
    assert tr.events == []


def test_track_straight_line_reaches_end(maze):
    # straight free corridor from (1.5,1.5) to (1.5,4.5)
    n = 80
    ys = np.linspace(1.5, 4.5, n)
    ref = np.stack([np.full(n, 1.5), ys,
                    np.zeros(n), np.full(n, (4.5 - 1.5) / ((n - 1) * 0.05))],
                   axis=1)
    ref[-1, 3] = 0.0
    tr = track_rollout(ref, maze, max_steps=n + 40)
    assert np.linalg.norm(tr.states[-1, :2] - [1.5, 4.5]) < 0.1


def test_track_through_wall_records_collision(maze):
    # crosses the blocked cell covering x in [2,3), y in [2,3)
    n = 40
    xs = np.linspace(1.5, 3.5, n)
    ref = np.stack([xs, np.full(n, 2.5), np.full(n, 1.0), np.zeros(n)], axis=1)
    tr = track_rollout(ref, maze, max_steps=n - 1)
    kinds = {k for _, k in tr.events}
    assert "collision" in kinds


def test_track_replay_is_exact(maze):
    n = 60
    ys = np.linspace(1.5, 4.0, n)
    ref = np.stack([np.full(n, 1.5), ys, np.zeros(n), np.ones(n)], axis=1)
    tr = track_rollout(ref, maze, max_steps=n + 10)
    s = tr.states[0]
    for i, a in enumerate(tr.actions):
        s = step(s, a, tr.dt)
        assert np.array_equal(s, tr.states[i + 1])


def test_persistent_contact_aborts(maze):
    # reference parked inside a wall; contact accumulates and aborts the run
    inside = np.array([2.5, 2.5, 0.0, 0.0])
    ref = np.tile(inside, (200, 1))
    tr = track_rollout(ref, maze, max_steps=199)
    kinds = [k for _, k in tr.events]
    assert "persistent_contact" in kinds
    assert tr.n_steps < 200  # aborted early, 1 s of contact is 20 steps


def test_goal_reached_variants():
    states = np.array([[0.0, 0.0, 0.0, 0.0],
                       [1.0, 0.0, 0.0, 0.0],
                       [2.0, 0.0, 0.0, 0.0]])
    tr = Trace(states, np.zeros((2, 2)), 0.05)
    assert goal_reached(tr, [2.0, 0.0], 0.1)
    assert goal_reached(tr, [1.0, 0.05], 0.1)   # mid-episode pass
    assert not goal_reached(tr, [5.0, 5.0], 0.5)
    with pytest.raises(ValueError):
        goal_reached(tr, [0.0, 0.0], 0.0)


def _mk_trace(pos, dt=0.05):
    pos = np.asarray(pos, dtype=float)
    states = np.hstack([pos, np.zeros_like(pos)])
    return Trace(states, np.zeros((len(pos) - 1, pos.shape[1])), dt)


def test_min_separation_trivials():
    a = _mk_trace([[0.0, 0.0], [1.0, 0.0]])
    b = _mk_trace([[0.0, 2.0], [1.0, 2.0]])
    assert min_pairwise_separation([a, a]) == 0.0
    assert min_pairwise_separation([a, b]) == pytest.approx(2.0)
    assert min_pairwise_separation([a]) == np.inf


def test_min_separation_matches_brute_force(rng):
    traces = [_mk_trace(rng.uniform(0, 5, size=(30, 2))) for _ in range(4)]
    got = min_pairwise_separation(traces)
    best = np.inf
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            for t in range(30):
                d = np.linalg.norm(traces[i].positions()[t]
                                   - traces[j].positions()[t])
                best = min(best, d)
    assert got == pytest.approx(best)


def test_min_separation_permutation_invariant(rng):
    traces = [_mk_trace(rng.uniform(0, 5, size=(15, 2))) for _ in range(3)]
    ref = min_pairwise_separation(traces)
    assert min_pairwise_separation(traces[::-1]) == pytest.approx(ref)


def test_coverage_trivial_all_and_none():
    tr = _mk_trace([[0.0, 0.0], [0.1, 0.0]])
    curve = coverage_curve(tr, [[0.0, 0.5], [0.5, 0.0]], r_obs=1.0)
    assert np.all(curve[:, 1] == 1.0)
    curve = coverage_curve(tr, [[5.0, 5.0]], r_obs=1.0)
    assert np.all(curve[:, 1] == 0.0)


def test_coverage_spiral_matches_brute_force(rng):
    th = np.linspace(0, 4 * np.pi, 120)
    pos = np.stack([th * np.cos(th), th * np.sin(th)], axis=1) * 0.3
    tr = _mk_trace(pos)
    pois = rng.uniform(-3, 3, size=(4, 2))
    curve = coverage_curve(tr, pois, r_obs=1.0)
    seen = np.zeros(4, dtype=bool)
    for t in range(len(pos)):
        for m in range(4):
            if np.linalg.norm(pos[t] - pois[m]) <= 1.0:
                seen[m] = True
        assert curve[t, 1] == pytest.approx(seen.mean())
    assert np.all(np.diff(curve[:, 1]) >= 0.0)
    assert curve[:, 1].min() >= 0.0 and curve[:, 1].max() <= 1.0


def test_trace_csv_round_trip(tmp_path, maze):
    n = 30
    ys = np.linspace(1.5, 3.0, n)
    ref = np.stack([np.full(n, 1.5), ys, np.zeros(n), np.ones(n)], axis=1)
    tr = track_rollout(ref, maze, max_steps=n + 5)
    tr.events.append((3, "marker"))
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = Trace.from_csv(path)
    assert np.array_equal(back.states, tr.states)
    assert np.array_equal(back.actions, tr.actions)
    assert back.dt == tr.dt
    assert sorted(back.events) == sorted(tr.events)
