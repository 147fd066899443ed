"""Offline trajectory datasets: generators and JSONL file I/O.

Two generation regimes. "stitch" produces short point-to-point
demonstrations: plan on a workspace lattice with A*, then track the
geometric path under the double-integrator dynamics and keep only
collision-free rollouts. "explore" produces random-walk demonstrations
by steering toward short-range targets that are resampled periodically;
collisions never discard a trajectory, the walk just picks a new target.

File format is JSON Lines. Line 0 is a header
{"format": "xplan-dataset", "version": 1, "d": int, "world_id": str},
each following line one trajectory {"dt": float, "source": str,
"states": [[p..., v...], ...]}.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .sim import A_MAX, DT_DEFAULT, step, track_rollout
from .worlds import (World, check_segment_collision, obstacle_fields,
                     point_blocked, points_blocked, sample_free_position)

H_TRAIN_DEFAULT = 200
GRID_RESOLUTION = 0.25
T_RESAMPLE_DEFAULT = 40
FORMAT_NAME = "xplan-dataset"
FORMAT_VERSION = 1


@dataclass
class Trajectory:
    states: np.ndarray      # (n, 2d)
    dt: float
    source: str             # "stitch" | "explore" | "external"

    @property
    def d(self) -> int:
        return self.states.shape[1] // 2

    def __len__(self) -> int:
        return len(self.states)

    def validate(self, a_max: float = A_MAX) -> None:
        if self.states.ndim != 2 or self.states.shape[1] % 2:
            raise ValueError("states must be (n, 2d)")
        if not np.isfinite(self.states).all():
            raise ValueError("non-finite state")
        d = self.d
        dp = self.states[1:, :d] - self.states[:-1, :d]
        vmax = np.abs(self.states[:, d:]).max(initial=0.0)
        bound = vmax * self.dt + a_max * self.dt ** 2 + 1e-9
        if len(dp) and np.abs(dp).max() > bound:
            raise ValueError("displacement exceeds dynamics bound")


@dataclass
class Dataset:
    trajectories: list
    world_id: str
    d: int

    @property
    def dt(self) -> float:
        return self.trajectories[0].dt if self.trajectories else DT_DEFAULT

    @property
    def n_states(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def all_states(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, 2 * self.d))
        return np.concatenate([t.states for t in self.trajectories], axis=0)

    def validate(self) -> None:
        for t in self.trajectories:
            if t.d != self.d:
                raise ValueError("trajectory dimension mismatch")
            if abs(t.dt - self.dt) > 1e-12:
                raise ValueError("trajectory dt mismatch")
            t.validate()


# ---------------------------------------------------------------------------
# Workspace lattice and A* for the stitch generator


def _lattice_offsets(d: int) -> np.ndarray:
    """Face neighbors plus two-axis diagonals: 8-connected in 2-D,
    18-connected in 3-D (corner diagonals excluded)."""
    offs = []
    for off in np.ndindex(*(3,) * d):
        o = np.array(off) - 1
        nz = np.count_nonzero(o)
        if nz in (1, 2):
            offs.append(o)
    return np.array(offs)


class GridPlanner:
    """A* over a regular lattice of free workspace points.

    Edges exist between lattice neighbors whose connecting segment passes
    an n-sample collision check; all edges are validated once up front in
    vectorized passes, one per neighbor offset.
    """

    def __init__(self, world: World, resolution: float = GRID_RESOLUTION,
                 n_collision_samples: int = 5):
        self.world = world
        self.res = resolution
        r = world.agent_radius
        axes = [np.arange(world.lo[i] + r, world.hi[i] - r + 1e-9, resolution)
                for i in range(world.d)]
        self.shape = tuple(len(a) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        self.free = ~points_blocked(world, self.points)
        self.free_idx = np.flatnonzero(self.free)

        offsets = _lattice_offsets(world.d)
        # keep one of each +-pair; adjacency is stored directed both ways
        offsets = offsets[[i for i, o in enumerate(offsets)
                           if tuple(o) > tuple(-o)]]
        strides = np.array([int(np.prod(self.shape[i + 1:], dtype=int))
                            for i in range(world.d)])
        idx_nd = np.stack(np.unravel_index(np.arange(len(self.points)),
                                           self.shape), axis=1)
        adj_src, adj_dst, adj_cost = [], [], []
        for off in offsets:
            nbr_nd = idx_nd + off[None, :]
            ok = np.all((nbr_nd >= 0) & (nbr_nd < np.array(self.shape)), axis=1)
            src = np.flatnonzero(ok & self.free)
            dst = (idx_nd[src] + off[None, :]) @ strides
            keep = self.free[dst]
            src, dst = src[keep], dst[keep]
            if len(src) == 0:
                continue
            # vectorized n-sample segment check for every candidate edge
            p0, p1 = self.points[src], self.points[dst]
            ts = np.linspace(0.0, 1.0, n_collision_samples)
            pts = p0[:, None, :] + ts[None, :, None] * (p1 - p0)[:, None, :]
            hit = points_blocked(world, pts.reshape(-1, world.d))
            hit = hit.reshape(len(src), n_collision_samples).any(axis=1)
            src, dst = src[~hit], dst[~hit]
            cost = float(np.linalg.norm(off * resolution))
            for a, b in ((src, dst), (dst, src)):
                adj_src.append(a)
                adj_dst.append(b)
                adj_cost.append(np.full(len(a), cost))
        src = np.concatenate(adj_src) if adj_src else np.zeros(0, int)
        order = np.argsort(src, kind="stable")
        self._src = src[order]
        self._dst = (np.concatenate(adj_dst) if adj_dst else np.zeros(0, int))[order]
        self._cost = (np.concatenate(adj_cost) if adj_cost else np.zeros(0))[order]
        self._row_start = np.searchsorted(self._src, np.arange(len(self.points) + 1))
        self.n_collision_samples = n_collision_samples

    def _link(self, p: np.ndarray, k: int = 6) -> list[tuple[int, float]]:
        """Nearest free lattice nodes reachable by a straight segment."""
        free_pts = self.points[self.free_idx]
        dists = np.linalg.norm(free_pts - p[None, :], axis=1)
        out = []
        for j in np.argsort(dists)[: 4 * k]:
            node = int(self.free_idx[j])
            if not check_segment_collision(p, self.points[node], self.world,
                                           self.n_collision_samples):
                out.append((node, float(dists[j])))
                if len(out) == k:
                    break
        return out

    def plan(self, start, goal) -> np.ndarray | None:
        """Shortest collision-checked polyline from start to goal, or None."""
        start = np.asarray(start, dtype=float)
        goal = np.asarray(goal, dtype=float)
        entries = self._link(start)
        exits = dict(self._link(goal))
        if not entries or not exits:
            return None
        g = {}
        came = {}
        pq = []
        for node, cost in entries:
            g[node] = cost
            h = float(np.linalg.norm(self.points[node] - goal))
            heapq.heappush(pq, (cost + h, node))
            came[node] = -1
        best_exit, best_total = None, np.inf
        closed = set()
        while pq:
            f, u = heapq.heappop(pq)
            if u in closed:
                continue
            closed.add(u)
            if u in exits and g[u] + exits[u] < best_total:
                best_total = g[u] + exits[u]
                best_exit = u
            if f >= best_total:
                break
            lo, hi = self._row_start[u], self._row_start[u + 1]
            for v, c in zip(self._dst[lo:hi], self._cost[lo:hi]):
                v = int(v)
                ng = g[u] + c
                if ng < g.get(v, np.inf):
                    g[v] = ng
                    came[v] = u
                    h = float(np.linalg.norm(self.points[v] - goal))
                    heapq.heappush(pq, (ng + h, v))
        if best_exit is None:
            return None
        nodes = [best_exit]
        while came[nodes[-1]] != -1:
            nodes.append(came[nodes[-1]])
        nodes.reverse()
        return np.vstack([start[None, :], self.points[nodes], goal[None, :]])


def path_to_reference(polyline: np.ndarray, speed: float, dt: float) -> np.ndarray:
    """Constant-speed reference states along a polyline, sampled every dt."""
    pts = np.asarray(polyline, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 1e-12
    seg, seg_len = seg[keep], seg_len[keep]
    pts = np.vstack([pts[:1], pts[1:][keep]])
    if len(seg) == 0:
        return np.hstack([pts[0], np.zeros_like(pts[0])])[None, :]
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total_t = cum[-1] / speed
    n = max(2, int(np.ceil(total_t / dt)) + 1)
    ts = np.arange(n) * dt
    arc = np.minimum(ts * speed, cum[-1])
    pos = np.stack([np.interp(arc, cum, pts[:, i]) for i in range(pts.shape[1])],
                   axis=1)
    seg_idx = np.minimum(np.searchsorted(cum, arc, side="right") - 1, len(seg) - 1)
    vel = seg[seg_idx] / seg_len[seg_idx, None] * speed
    vel[arc >= cum[-1] - 1e-12] = 0.0
    return np.hstack([pos, vel])


def generate_stitch(world: World, count: int, H_train: int = H_TRAIN_DEFAULT,
                    seed: int = 0, dt: float = DT_DEFAULT, speed: float = 2.0,
                    retry_budget: int | None = None) -> Dataset:
    """Short point-to-point demonstrations, clipped to H_train states."""
    if H_train < 2:
        raise ValueError("H_train must be at least 2")
    rng = np.random.default_rng(seed)
    planner = GridPlanner(world)
    if len(planner.free_idx) == 0:
        raise RuntimeError("world has no free lattice points")
    if retry_budget is None:
        retry_budget = 30 * max(count, 1)
    out = []
    attempts = 0
    while len(out) < count:
        if attempts >= retry_budget:
            raise RuntimeError(
                f"stitch generation exceeded {retry_budget} attempts "
                f"({len(out)}/{count} done); world too constrained")
        attempts += 1
        start = sample_free_position(world, rng)
        goal = sample_free_position(world, rng)
        poly = planner.plan(start, goal)
        if poly is None:
            continue
        ref = path_to_reference(poly, speed, dt)
        trace = track_rollout(ref, world, dt=dt, max_steps=len(ref) - 1)
        if any(kind == "collision" for _, kind in trace.events):
            continue
        states = trace.states[:H_train]
        out.append(Trajectory(states, dt, "stitch"))
    return Dataset(out, _world_id(world), world.d)


def _explore_policy(world: World, s: np.ndarray, target: np.ndarray,
                    d: int, v_cap: float, margin: float) -> np.ndarray:
    """Steering acceleration: PD toward target, wall repulsion, speed cap."""
    p, v = s[:d], s[d:]
    # cap the pull so repulsion can always dominate it near walls
    pull = np.clip(target - p, -1.2, 1.2)
    a = 2.0 * pull - 2.2 * v
    dists, dirs = obstacle_fields(world, p, within=margin + world.agent_radius)
    for dist, away in zip(dists, dirs):
        gap = dist - world.agent_radius
        a += 6.0 * max(margin - gap, 0.0) / margin * away
        # damp any velocity component heading into this obstacle
        approach = -float(v @ away)
        if approach > 0:
            a += 6.0 * approach * max(margin - gap, 0.0) / margin * away
    sp = float(np.linalg.norm(v))
    if sp > v_cap:
        a -= 4.0 * (sp - v_cap) * v / sp
    return a


def generate_explore(world: World, count: int, length: int,
                     seed: int = 0, dt: float = DT_DEFAULT,
                     T_resample: int = T_RESAMPLE_DEFAULT,
                     target_range: float = 3.0) -> Dataset:
    """Random-walk demonstrations with periodic short-range retargeting."""
    if length < 2:
        raise ValueError("length must be at least 2")
    rng = np.random.default_rng(seed)
    d = world.d
    v_cap = 1.8
    margin = 0.7
    out = []
    for _ in range(count):
        p = sample_free_position(world, rng)
        s = np.concatenate([p, np.zeros(d)])
        states = [s.copy()]
        target = _sample_local_target(world, p, target_range, rng)
        since = 0
        speeds = []
        for _ in range(length - 1):
            a = _explore_policy(world, s, target, d, v_cap, margin)
            s = step(s, a, dt)
            states.append(s.copy())
            since += 1
            speeds.append(float(np.linalg.norm(s[d:])))
            stuck = len(speeds) >= 10 and max(speeds[-10:]) < 0.05
            arrived = float(np.linalg.norm(s[:d] - target)) < 0.3
            collided = point_blocked(world, s[:d])
            if since >= T_resample or arrived or stuck or collided:
                target = _sample_local_target(world, s[:d], target_range, rng)
                since = 0
        out.append(Trajectory(np.array(states), dt, "explore"))
    return Dataset(out, _world_id(world), world.d)


def _sample_local_target(world: World, p: np.ndarray, rng_range: float,
                         rng: np.random.Generator) -> np.ndarray:
    for _ in range(50):
        cand = p + rng.uniform(-rng_range, rng_range, size=world.d)
        cand = np.clip(cand, world.lo + world.agent_radius,
                       world.hi - world.agent_radius)
        if not point_blocked(world, cand):
            return cand
    return sample_free_position(world, rng)


def _world_id(world: World) -> str:
    return f"{world.kind}-{world.d}d-{world.n_boxes}b"


def sample_states(dataset: Dataset, N: int, seed: int = 0):
    """Uniform state sample from the dataset union.

    Returns (states, meta). Sampling is without replacement unless the
    dataset holds fewer than N states; meta["with_replacement"] records
    which mode was used.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    pool = dataset.all_states()
    if len(pool) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    with_replacement = len(pool) < N
    idx = rng.choice(len(pool), size=N, replace=with_replacement)
    return pool[idx], {"with_replacement": with_replacement}


def sample_states_spread(dataset: Dataset, N: int, seed: int = 0,
                         cell: float = 0.5):
    """Spatially stratified state sample from the dataset union.

    Bins states into position-space grid cells of the given size and
    draws one state per occupied cell in shuffled cell order, cycling
    until N states are taken. A plain uniform draw weights each region
    by dwell time, which starves fast transit zones of coverage; the
    stratified draw keeps every visited region represented.

    Returns (states, meta) like sample_states.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    pool = dataset.all_states()
    if len(pool) == 0:
        raise ValueError("dataset is empty")
    d = dataset.d
    rng = np.random.default_rng(seed)
    if len(pool) <= N:
        idx = rng.choice(len(pool), size=N, replace=True)
        return pool[idx], {"with_replacement": True, "n_cells": 0}
    keys = np.floor(pool[:, :d] / cell).astype(np.int64)
    groups: dict = {}
    for i, key in enumerate(map(tuple, keys)):
        groups.setdefault(key, []).append(i)
    buckets = [np.array(g) for g in groups.values()]
    for b in buckets:
        rng.shuffle(b)
    order = rng.permutation(len(buckets))
    chosen: list = []
    lap = 0
    while len(chosen) < N:
        took = 0
        for bi in order:
            b = buckets[bi]
            if lap < len(b):
                chosen.append(b[lap])
                took += 1
                if len(chosen) == N:
                    break
        if took == 0:   # every bucket exhausted, N > distinct states
            break
        lap += 1
    idx = np.array(chosen[:N])
    return pool[idx], {"with_replacement": False, "n_cells": len(buckets)}


# ---------------------------------------------------------------------------
# File I/O


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION,
                             "d": dataset.d, "world_id": dataset.world_id})
                 + "\n")
        for t in dataset.trajectories:
            fh.write(json.dumps({"dt": t.dt, "source": t.source,
                                 "states": t.states.tolist()}) + "\n")


class DatasetFormatError(ValueError):
    pass


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: empty file, header expected")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"line 1: bad header: {e}") from e
    if header.get("format") != FORMAT_NAME:
        raise DatasetFormatError(f"line 1: format is not {FORMAT_NAME!r}")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"line 1: unsupported version {header.get('version')}")
    d = int(header["d"])
    trajs = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
            states = np.asarray(doc["states"], dtype=float)
            if states.ndim != 2 or states.shape[1] != 2 * d:
                raise ValueError(f"states shape {states.shape} does not match d={d}")
            traj = Trajectory(states, float(doc["dt"]), str(doc["source"]))
        except (KeyError, ValueError, TypeError) as e:
            raise DatasetFormatError(f"line {ln}: {e}") from e
        trajs.append(traj)
    return Dataset(trajs, header.get("world_id", ""), d)
