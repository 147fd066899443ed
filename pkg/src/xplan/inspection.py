"""Inspection planning: viewpoint assignment and covering tours.

Each point of interest gets candidate viewpoints, the graph vertices
nearest to it in position space that actually see it (within r_obs).
A tour from the start vertex is grown by cheapest insertion, picking the
(POI, viewpoint, position) triple whose insertion raises the tour cost
least, until every coverable POI is seen, then polished with 2-opt plus
redundant-stop removal and per-stop viewpoint swaps. The
tour expands to a full vertex route via shortest paths between stops and
is downsampled leg by leg so every stop survives as a waypoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np

from .graph import ConnectivityGraph
from .route import (DELTA_T_DEFAULT, DILATION_DEFAULT, DT_PLAN_DEFAULT,
                    NoPathError, WaypointPlan, dijkstra_distances,
                    downsample_timed, shortest_path)
from .worlds import World, sample_free_position

R_OBS_DEFAULT = 1.0
K_VIEWPOINTS_DEFAULT = 8


def assign_viewpoints(graph: ConnectivityGraph, pois, K: int = K_VIEWPOINTS_DEFAULT,
                      r_obs: float = R_OBS_DEFAULT) -> dict:
    """POI index -> list of candidate viewpoint vertex ids.

    Candidates are the K nearest vertices in position space, kept only if
    within r_obs. Empty lists mark unobservable POIs.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    ps = np.atleast_2d(np.asarray(pois, dtype=float))
    pos = graph.positions()
    out = {}
    for m, p in enumerate(ps):
        dist = np.linalg.norm(pos - p[None, :], axis=1)
        order = np.lexsort((np.arange(len(pos)), np.round(dist, 12)))
        picked = [int(v) for v in order[:K] if dist[v] <= r_obs]
        out[m] = picked
    return out


@dataclass
class TourReport:
    tour_ids: list
    tour_cost: float
    covered: list
    uncovered: list
    ratio_to_oracle: float | None = None
    leg_paths: list = field(default_factory=list)


def _pairwise_sp_costs(graph: ConnectivityGraph, ids: list) -> dict:
    """Shortest-path cost between all pairs of the given vertices."""
    costs = {}
    for v in ids:
        dist = dijkstra_distances(graph, v)
        for u in ids:
            costs[(v, u)] = float(dist[u])
    return costs


def _tour_cost(order: list, sp: dict) -> float:
    return sum(sp[(a, b)] for a, b in zip(order[:-1], order[1:]))


def inspection_tour(graph: ConnectivityGraph, start_id: int,
                    viewpoint_sets: dict, delta_t: float = DELTA_T_DEFAULT,
                    dilation: float = DILATION_DEFAULT,
                    dt_plan: float = DT_PLAN_DEFAULT) -> tuple[WaypointPlan, TourReport]:
    if not viewpoint_sets:
        raise ValueError("viewpoint_sets must be nonempty")
    dist_start = dijkstra_distances(graph, start_id)
    reachable = lambda v: np.isfinite(dist_start[v])

    candidates = {}
    uncovered_forever = []
    for m, vs in viewpoint_sets.items():
        ok = [v for v in vs if reachable(v)]
        if ok:
            candidates[m] = ok
        else:
            uncovered_forever.append(m)

    all_ids = sorted({start_id} | {v for vs in candidates.values() for v in vs})
    sp = _pairwise_sp_costs(graph, all_ids)

    def covered_by(tour):
        sel = set(tour)
        return {m for m, vs in candidates.items() if sel & set(vs)}

    tour = [start_id]
    remaining = set(candidates) - covered_by(tour)
    while remaining:
        best = None
        for m in sorted(remaining):
            for v in candidates[m]:
                if v in tour:
                    increase, pos_at = 0.0, None
                else:
                    increase, pos_at = np.inf, None
                    for i in range(1, len(tour) + 1):
                        a = tour[i - 1]
                        b = tour[i] if i < len(tour) else None
                        if b is None:
                            inc = sp[(a, v)]           # append at the end
                        else:
                            inc = sp[(a, v)] + sp[(v, b)] - sp[(a, b)]
                        if inc < increase - 1e-12:
                            increase, pos_at = inc, i
                cand = (increase, m, v, pos_at)
                if best is None or cand < best:
                    best = cand
        _, m, v, pos_at = best
        if pos_at is not None:
            tour.insert(pos_at, v)
        remaining = set(candidates) - covered_by(tour)

    # polish: 2-opt reordering, drop stops made redundant by shared
    # coverage, and swap each stop for a cheaper alternative viewpoint;
    # start stays pinned and every pass strictly improves (cost, length)
    must_cover = set(candidates)
    alternatives = sorted({v for vs in candidates.values() for v in vs})
    improved = True
    passes = 0
    while improved and passes < 50:
        improved = False
        passes += 1
        for i in range(1, len(tour) - 1):
            for j in range(i + 1, len(tour)):
                new = tour[:i] + tour[i:j + 1][::-1] + tour[j + 1:]
                if _tour_cost(new, sp) < _tour_cost(tour, sp) - 1e-12:
                    tour = new
                    improved = True
        for i in range(len(tour) - 1, 0, -1):
            new = tour[:i] + tour[i + 1:]
            if covered_by(new) >= must_cover and \
                    _tour_cost(new, sp) <= _tour_cost(tour, sp) + 1e-12:
                tour = new
                improved = True
        for i in range(1, len(tour)):
            for u in alternatives:
                if u == tour[i] or u in tour:
                    continue
                new = tour[:i] + [u] + tour[i + 1:]
                if covered_by(new) >= must_cover and \
                        _tour_cost(new, sp) < _tour_cost(tour, sp) - 1e-12:
                    tour = new
                    improved = True
        for i in range(1, len(tour)):
            rest = tour[:i] + tour[i + 1:]
            for j in range(1, len(tour)):
                if j == i:
                    continue
                new = rest[:j] + [tour[i]] + rest[j:]
                if _tour_cost(new, sp) < _tour_cost(tour, sp) - 1e-12:
                    tour = new
                    improved = True
                    break

    # expand stops to a full vertex route; downsample each leg separately
    # so every stop survives as a waypoint
    states_parts, times_parts, id_parts = [], [], []
    leg_paths = []
    t0 = 0.0
    for a, b in zip(tour[:-1], tour[1:]):
        leg = shortest_path(graph, a, b)
        leg_paths.append(leg)
    if len(tour) == 1:
        plan = WaypointPlan(graph.states[[start_id]].copy(), np.zeros(1),
                            dilation, dt_plan, vertex_ids=[start_id])
    else:
        plans = []
        for leg in leg_paths:
            ids = np.asarray(leg.vertex_ids, dtype=int)
            plans.append(downsample_timed(graph.states[ids], leg.nominal_times,
                                          delta_t, dilation, dt_plan,
                                          vertex_ids=list(leg.vertex_ids)))
        states = [plans[0].states]
        times = [plans[0].times]
        ids = list(plans[0].vertex_ids)
        offset = plans[0].times[-1]
        for p in plans[1:]:
            states.append(p.states[1:])
            times.append(p.times[1:] + offset)
            ids.extend(p.vertex_ids[1:])
            offset += p.times[-1]
        plan = WaypointPlan(np.vstack(states), np.concatenate(times),
                            dilation, dt_plan, vertex_ids=ids)
    report = TourReport(tour_ids=list(tour),
                        tour_cost=_tour_cost(tour, sp),
                        covered=sorted(covered_by(tour)),
                        uncovered=sorted(uncovered_forever),
                        leg_paths=leg_paths)
    return plan, report


def brute_force_tour(graph: ConnectivityGraph, start_id: int,
                     viewpoint_sets: dict) -> tuple[list, float]:
    """Exhaustive optimum over viewpoint selections and visit orders.

    Guarded to at most 6 POIs with at most 4 candidates each.
    """
    if len(viewpoint_sets) > 6 or any(len(v) > 4 for v in viewpoint_sets.values()):
        raise ValueError("instance too large for the exhaustive oracle")
    pois = sorted(viewpoint_sets)
    choices = [viewpoint_sets[m] for m in pois]
    if any(len(c) == 0 for c in choices):
        raise ValueError("brute_force_tour requires nonempty candidate sets")
    all_ids = sorted({start_id} | {v for vs in choices for v in vs})
    sp = _pairwise_sp_costs(graph, all_ids)
    best_cost = np.inf
    best_seq = [start_id]
    seen_sets = set()
    for pick in product(*choices):
        key = frozenset(pick)
        if key in seen_sets:
            continue
        seen_sets.add(key)
        stops = sorted(key - {start_id})
        if not stops:
            if 0.0 < best_cost:
                best_cost, best_seq = 0.0, [start_id]
            continue
        for order in permutations(stops):
            seq = [start_id] + list(order)
            c = _tour_cost(seq, sp)
            if c < best_cost - 1e-12:
                best_cost, best_seq = c, seq
    if not np.isfinite(best_cost):
        raise NoPathError("no viewpoint selection is fully reachable")
    return best_seq, float(best_cost)


def generate_pois(world: World, n: int, seed: int = 0,
                  n_candidates: int = 2000) -> np.ndarray:
    """Spread points of interest over free space by farthest-point sampling."""
    rng = np.random.default_rng(seed)
    cand = np.stack([sample_free_position(world, rng) for _ in range(n_candidates)])
    first = int(rng.integers(len(cand)))
    picked = [first]
    d2 = np.linalg.norm(cand - cand[first][None, :], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(d2))
        picked.append(nxt)
        d2 = np.minimum(d2, np.linalg.norm(cand - cand[nxt][None, :], axis=1))
    return cand[picked]
