"""Graph routing: shortest paths with nominal timing and waypoint plans.

A route through the connectivity graph carries nominal times equal to the
cumulative edge costs (cost units read as time). Waypoint plans are made
by greedy temporal downsampling at a fixed interval, then dilating the
times by a constant factor, which slows the nominal schedule so a tracked
trajectory has slack to follow it.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .graph import ConnectivityGraph, insert_vertex
from .worlds import World, box_distance, points_blocked

DELTA_T_DEFAULT = 12.0     # cost units between kept waypoints
DILATION_DEFAULT = 1.5
DT_PLAN_DEFAULT = 0.2      # seconds of rollout per plan step
SEG_SAMPLES_DEFAULT = 25   # collision samples per straight segment


class NoPathError(RuntimeError):
    pass


@dataclass
class GraphPath:
    vertex_ids: list
    nominal_times: np.ndarray   # cumulative edge costs, t_0 = 0
    total_cost: float

    def validate(self, graph: ConnectivityGraph | None = None) -> None:
        t = self.nominal_times
        if len(t) != len(self.vertex_ids):
            raise ValueError("times and vertices differ in length")
        if t[0] != 0.0 or (len(t) > 1 and np.any(np.diff(t) <= 0)):
            raise ValueError("nominal times must start at 0 and increase")
        if abs(t[-1] - self.total_cost) > 1e-9:
            raise ValueError("total_cost disagrees with last nominal time")
        if graph is not None and len(self.vertex_ids) > 1:
            edge_set = {tuple(e) for e in graph.edges}
            for a, b in zip(self.vertex_ids[:-1], self.vertex_ids[1:]):
                if (min(a, b), max(a, b)) not in edge_set:
                    raise ValueError(f"({a},{b}) is not a graph edge")


@dataclass
class WaypointPlan:
    states: np.ndarray          # (M+1, 2d) waypoint states
    times: np.ndarray           # (M+1,) dilated nominal times, strictly increasing
    dilation: float
    dt_plan: float = DT_PLAN_DEFAULT
    vertex_ids: list | None = None

    @property
    def M(self) -> int:
        return len(self.times) - 1

    @property
    def horizon_hint(self) -> int:
        return int(round(self.times[-1] / self.dt_plan))

    def validate(self) -> None:
        if self.times[0] != 0.0:
            raise ValueError("first waypoint time must be 0")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must increase strictly")
        if not np.isfinite(self.states).all():
            raise ValueError("non-finite waypoint state")


def _dijkstra(graph: ConnectivityGraph, source: int) -> np.ndarray:
    adj = graph.adjacency()
    dist = np.full(graph.n, np.inf)
    dist[source] = 0.0
    pq = [(0.0, source)]
    done = np.zeros(graph.n, dtype=bool)
    while pq:
        du, u = heapq.heappop(pq)
        if done[u]:
            continue
        done[u] = True
        nbrs, costs = adj[u]
        for v, c in zip(nbrs, costs):
            nd = du + c
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(pq, (nd, int(v)))
    return dist


def dijkstra_distances(graph: ConnectivityGraph, source: int) -> np.ndarray:
    """Shortest-path cost from source to every vertex (inf if unreachable)."""
    return _dijkstra(graph, source)


def shortest_path(graph: ConnectivityGraph, start_id: int, goal_id: int) -> GraphPath:
    """Minimum-cost route; among ties, the lexicographically smallest
    vertex-id sequence."""
    n = graph.n
    if not (0 <= start_id < n and 0 <= goal_id < n):
        raise ValueError("vertex id out of range")
    if start_id == goal_id:
        return GraphPath([start_id], np.zeros(1), 0.0)
    dist_s = _dijkstra(graph, start_id)
    if not np.isfinite(dist_s[goal_id]):
        from .graph import connected_components
        comps = connected_components(graph)
        where = {v: ci for ci, comp in enumerate(comps) for v in comp}
        raise NoPathError(
            f"goal {goal_id} unreachable from start {start_id}: start lies in "
            f"component {where[start_id]} (size {len(comps[where[start_id]])}), "
            f"goal in component {where[goal_id]} (size {len(comps[where[goal_id]])})")
    dist_g = _dijkstra(graph, goal_id)
    total = dist_s[goal_id]
    tol = 1e-9 * max(1.0, total)
    # walk from the start, always taking the smallest-id neighbor that
    # stays on some minimum-cost path; letterwise greedy = lexicographic min
    adj = graph.adjacency()
    path = [start_id]
    times = [0.0]
    u = start_id
    while u != goal_id:
        nbrs, costs = adj[u]
        best = None
        for v, c in sorted(zip(nbrs.tolist(), costs.tolist())):
            if abs(dist_s[u] + c + dist_g[v] - total) <= tol:
                best = (v, c)
                break
        assert best is not None, "shortest-path reconstruction failed"
        u = best[0]
        times.append(times[-1] + best[1])
        path.append(u)
    return GraphPath(path, np.array(times), float(times[-1]))


def downsample_timed(states: np.ndarray, times: np.ndarray, delta_t: float,
                     dilation: float, dt_plan: float = DT_PLAN_DEFAULT,
                     vertex_ids=None, keep: set | None = None) -> WaypointPlan:
    """Greedy temporal downsampling of a timed state sequence.

    Keeps the first state, then each first state whose time is at least
    delta_t past the last kept one, always keeps the final state, and
    optionally force-keeps extra indices. Times are dilated afterwards.
    """
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    if dilation < 1.0:
        raise ValueError("dilation must be at least 1")
    times = np.asarray(times, dtype=float)
    n = len(times)
    kept = [0]
    for i in range(1, n):
        if times[i] >= times[kept[-1]] + delta_t or (keep and i in keep):
            kept.append(i)
    if kept[-1] != n - 1:
        kept.append(n - 1)
    kept_ids = [vertex_ids[i] for i in kept] if vertex_ids is not None else None
    return WaypointPlan(np.asarray(states, dtype=float)[kept].copy(),
                        times[kept] * dilation, dilation, dt_plan,
                        vertex_ids=kept_ids)


def downsample_waypoints(path: GraphPath, graph: ConnectivityGraph,
                         delta_t: float = DELTA_T_DEFAULT,
                         dilation: float = DILATION_DEFAULT,
                         dt_plan: float = DT_PLAN_DEFAULT) -> WaypointPlan:
    states = graph.states[np.asarray(path.vertex_ids, dtype=int)]
    return downsample_timed(states, path.nominal_times, delta_t, dilation,
                            dt_plan, vertex_ids=list(path.vertex_ids))


# ---------------------------------------------------------------------------
# Geometry-validated routing.
#
# Edge costs measure time, not geometry, so a kNN edge can be temporally
# short while its straight segment clips an obstacle corner. The local
# trajectory prior smooths toward straight segments and cannot bow a
# path around an obstacle it has never seen, so any such segment in a
# plan turns into a tracking collision. Routing therefore runs on the
# subgraph of edges whose straight segments stay in free space.


def segments_blocked(world: World, p0: np.ndarray, p1: np.ndarray,
                     n_samples: int = SEG_SAMPLES_DEFAULT,
                     margin: float = 0.0) -> np.ndarray:
    """Batch straight-segment collision test on positions (m, d).

    margin widens the inflated-obstacle test beyond the agent radius so
    routed segments keep slack for smoothing and tracking error."""
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    ts = np.linspace(0.0, 1.0, n_samples)
    pts = p0[:, None, :] + ts[None, :, None] * (p1 - p0)[:, None, :]
    flat = pts.reshape(-1, p0.shape[1])
    if margin > 0.0:
        r = world.agent_radius + margin
        hit = (np.any(flat < world.lo + r, axis=1)
               | np.any(flat > world.hi - r, axis=1))
        if world.n_boxes:
            hit |= box_distance(world, flat) <= r
    else:
        hit = points_blocked(world, flat)
    return hit.reshape(len(p0), n_samples).any(axis=1)


def route_graph(graph: ConnectivityGraph, world: World,
                margin: float = 0.0) -> ConnectivityGraph:
    """Planning view of the graph: edges with blocked segments removed.

    Connectivity diagnostics stay on the raw graph; only routing uses
    the pruned view.
    """
    if not len(graph.edges):
        return graph
    pos = graph.positions()
    bad = segments_blocked(world, pos[graph.edges[:, 0]],
                           pos[graph.edges[:, 1]], margin=margin)
    if not bad.any():
        return graph
    return ConnectivityGraph(graph.states, graph.z, graph.edges[~bad],
                             graph.costs[~bad], graph.k, graph.alpha,
                             embedding=graph.embedding,
                             embedding_ref=graph.embedding_ref)


def insert_vertex_clear(graph: ConnectivityGraph, world: World, state,
                        margin: float = 0.0) -> tuple[ConnectivityGraph, int]:
    """insert_vertex, then drop new links whose segments leave free space."""
    n_old = len(graph.edges)
    g2, vid = insert_vertex(graph, state)
    new_edges = g2.edges[n_old:]
    if len(new_edges):
        pos = g2.positions()
        bad = segments_blocked(world, pos[new_edges[:, 0]],
                               pos[new_edges[:, 1]], margin=margin)
        if bad.any():
            keep = np.concatenate([np.ones(n_old, dtype=bool), ~bad])
            g2 = ConnectivityGraph(g2.states, g2.z, g2.edges[keep],
                                   g2.costs[keep], g2.k, g2.alpha,
                                   embedding=g2.embedding,
                                   embedding_ref=g2.embedding_ref)
    return g2, vid


def thin_plan_clear(path: GraphPath, graph: ConnectivityGraph, world: World,
                    delta_t: float = DELTA_T_DEFAULT,
                    dilation: float = DILATION_DEFAULT,
                    dt_plan: float = DT_PLAN_DEFAULT,
                    margin: float = 0.0) -> WaypointPlan:
    """Temporal downsampling that keeps every waypoint segment clear.

    Starts from the plain greedy thinning, then re-inserts midpoints of
    the traversed path wherever a kept segment crosses an obstacle.
    On a path whose own edges are clear this terminates with a clear
    polyline; residual crossings on a dirty path are left to the caller.
    """
    vids = list(path.vertex_ids)
    states = graph.states[np.asarray(vids, dtype=int)]
    pos_of = {v: i for i, v in enumerate(vids)}
    d = world.d
    keep: set = set()
    plan = None
    for _ in range(max(1, len(vids))):
        plan = downsample_timed(states, path.nominal_times, delta_t, dilation,
                                dt_plan, vertex_ids=vids, keep=keep)
        w = plan.states[:, :d]
        bad = segments_blocked(world, w[:-1], w[1:], margin=margin)
        if not bad.any():
            return plan
        grew = False
        for i in np.flatnonzero(bad):
            pu = pos_of[plan.vertex_ids[i]]
            pv = pos_of[plan.vertex_ids[i + 1]]
            mid = (pu + pv) // 2
            if mid != pu and mid not in keep:
                keep.add(mid)
                grew = True
        if not grew:
            break
    return plan


def save_plan(plan: WaypointPlan, path) -> None:
    doc = {"dilation": plan.dilation, "dt_plan": plan.dt_plan,
           "waypoints": [{"t": float(t), "state": s.tolist()}
                         for t, s in zip(plan.times, plan.states)]}
    if plan.vertex_ids is not None:
        doc["vertex_ids"] = [int(v) for v in plan.vertex_ids]
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_plan(path) -> WaypointPlan:
    with open(path) as fh:
        doc = json.load(fh)
    states = np.array([w["state"] for w in doc["waypoints"]])
    times = np.array([w["t"] for w in doc["waypoints"]])
    return WaypointPlan(states, times, doc["dilation"],
                        doc.get("dt_plan", DT_PLAN_DEFAULT),
                        vertex_ids=doc.get("vertex_ids"))
