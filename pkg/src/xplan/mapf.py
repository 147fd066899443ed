"""Prioritized multi-agent planning on the connectivity graph.

Agents are planned in input order. Each agent runs a time-expanded
search over (vertex, time step) where a move either traverses an edge,
taking round(cost/speed) steps (at least 1), or waits one step. A move
is legal only if the agent's position, linearly interpolated along the
edge at every intermediate step, stays at least delta away from every
higher-priority agent's reserved position at the same step. Agents sit
on their goals forever after arriving, and an arrival is only accepted
if that parking spot stays clear of all later reserved positions.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .graph import ConnectivityGraph
from .route import (DELTA_T_DEFAULT, DILATION_DEFAULT, DT_PLAN_DEFAULT,
                    NoPathError, WaypointPlan, dijkstra_distances,
                    downsample_timed)


@dataclass
class SpaceTimeReservation:
    """Per-step interpolated positions of already-planned agents."""
    delta: float
    tracks: list = field(default_factory=list)   # list of (n_steps, d) arrays

    def horizon(self) -> int:
        return max((len(t) for t in self.tracks), default=0)

    def position_at(self, track: np.ndarray, t: int) -> np.ndarray:
        return track[t] if t < len(track) else track[-1]

    def clear(self, pos: np.ndarray, t: int) -> bool:
        for track in self.tracks:
            if np.linalg.norm(self.position_at(track, t) - pos) < self.delta:
                return False
        return True

    def clear_forever(self, pos: np.ndarray, t_from: int) -> bool:
        """True if pos stays clear of every track at every step >= t_from."""
        for track in self.tracks:
            tail = track[min(t_from, len(track) - 1):]
            if len(tail) and (np.linalg.norm(tail - pos[None, :], axis=1)
                              < self.delta).any():
                return False
        return True


@dataclass
class AgentSchedule:
    """Timed vertex path: visited vertices with arrival/departure steps."""
    vertex_steps: list            # list of (vertex id, step index), increasing
    track: np.ndarray             # (arrival+1, d) interpolated positions
    arrival_step: int
    cost: float


def _edge_duration(cost: float, speed: float) -> int:
    return max(1, int(round(cost / speed)))


def _plan_single(graph: ConnectivityGraph, start: int, goal: int,
                 reservation: SpaceTimeReservation, speed: float,
                 t_cap: int) -> AgentSchedule:
    pos = graph.positions()
    adj = graph.adjacency()
    dist_g = dijkstra_distances(graph, goal)
    if not np.isfinite(dist_g[start]):
        raise NoPathError(f"goal {goal} unreachable from start {start}")
    if not reservation.clear(pos[start], 0):
        raise NoPathError(f"start {start} blocked at t=0 by a higher-priority agent")

    # admissible step bound: a move of dur steps spans cost at most
    # speed*(dur + 0.5) <= 1.5*speed*dur, so remaining steps >= dist/(1.5*speed)
    def h(v: int) -> float:
        if v == goal:
            return 0.0
        return max(1.0, np.ceil(dist_g[v] / (1.5 * speed) - 1e-12))

    # node: (vertex, t); pop order (t + h, true cost, vertex) finds the
    # earliest arrival, then the cheapest route among equally early ones
    start_key = (start, 0)
    g_cost = {start_key: 0.0}
    came: dict = {start_key: None}
    pq = [(h(start), 0.0, start, 0)]
    best_goal = None
    while pq:
        f, gc, u, t = heapq.heappop(pq)
        key = (u, t)
        if gc > g_cost.get(key, np.inf) + 1e-12:
            continue
        if u == goal and reservation.clear_forever(pos[u], t):
            best_goal = key
            break
        if t >= t_cap:
            continue
        # wait one step
        if reservation.clear(pos[u], t + 1):
            nkey = (u, t + 1)
            if gc < g_cost.get(nkey, np.inf) - 1e-12:
                g_cost[nkey] = gc
                came[nkey] = key
                heapq.heappush(pq, (t + 1 + h(u), gc, u, t + 1))
        # traverse an edge
        nbrs, costs = adj[u]
        for v, c in zip(nbrs.tolist(), costs.tolist()):
            dur = _edge_duration(c, speed)
            if t + dur > t_cap:
                continue
            ok = True
            for j in range(1, dur + 1):
                p = pos[u] + (pos[v] - pos[u]) * (j / dur)
                if not reservation.clear(p, t + j):
                    ok = False
                    break
            if not ok:
                continue
            nkey = (v, t + dur)
            ngc = gc + c
            if ngc < g_cost.get(nkey, np.inf) - 1e-12:
                g_cost[nkey] = ngc
                came[nkey] = key
                heapq.heappush(pq, (t + dur + h(v), ngc, v, t + dur))
    if best_goal is None:
        raise NoPathError(
            f"no conflict-free route to {goal} within {t_cap} steps")

    # reconstruct the timed vertex sequence
    seq = []
    key = best_goal
    while key is not None:
        seq.append(key)
        key = came[key]
    seq.reverse()
    arrival = seq[-1][1]
    track = np.empty((arrival + 1, graph.d))
    for (u, t0), (v, t1) in zip(seq[:-1], seq[1:]):
        for j in range(t0, t1):
            frac = (j + 1 - t0) / (t1 - t0)
            track[j + 1] = pos[u] + (pos[v] - pos[u]) * frac if u != v else pos[u]
    track[0] = pos[seq[0][0]]
    cost = 0.0
    for (u, _), (v, _) in zip(seq[:-1], seq[1:]):
        if u != v:
            nbrs, costs = adj[u]
            cost += float(costs[np.flatnonzero(nbrs == v)[0]])
    return AgentSchedule(seq, track, arrival, cost)


def prioritized_plan(graph: ConnectivityGraph, queries, delta: float,
                     delta_t: float = DELTA_T_DEFAULT,
                     dilation: float = DILATION_DEFAULT,
                     speed: float = 1.0,
                     dt_plan: float = DT_PLAN_DEFAULT,
                     t_cap: int | None = None):
    """Plan all agents in order.

    Returns (plans, schedules, errors): per-agent WaypointPlan or None,
    the underlying AgentSchedule or None, and per-agent error strings.
    Earlier agents keep their plans when a later agent fails.
    """
    if not queries:
        raise ValueError("queries must be nonempty")
    if delta <= 0 or speed <= 0:
        raise ValueError("delta and speed must be positive")
    reservation = SpaceTimeReservation(delta)
    if t_cap is None:
        # generous cap: the longest direct route plus room to yield
        caps = []
        for s, g in queries:
            dist = dijkstra_distances(graph, g)[s]
            if np.isfinite(dist):
                caps.append(int(np.ceil(dist / speed)))
        t_cap = 4 * max(caps, default=32) + 16 * len(queries) + 32
    plans, schedules, errors = [], [], []
    for start, goal in queries:
        try:
            sched = _plan_single(graph, start, goal, reservation, speed, t_cap)
        except NoPathError as e:
            plans.append(None)
            schedules.append(None)
            errors.append(str(e))
            continue
        reservation.tracks.append(sched.track)
        # collapse waits: one waypoint per arrival, plus a departure copy
        # when the agent lingers, so the slow-down survives downsampling
        states, times, ids = [], [], []
        runs = []
        for v, t in sched.vertex_steps:
            if runs and runs[-1][0] == v:
                runs[-1][2] = t
            else:
                runs.append([v, t, t])
        for v, t_in, t_out in runs:
            states.append(graph.states[v])
            times.append(t_in * speed)
            ids.append(v)
            if t_out > t_in:
                states.append(graph.states[v])
                times.append(t_out * speed)
                ids.append(v)
        plan = downsample_timed(np.array(states), np.array(times), delta_t,
                                dilation, dt_plan, vertex_ids=ids)
        plans.append(plan)
        schedules.append(sched)
        errors.append("")
    return plans, schedules, errors
