"""End-to-end benchmark pipeline and ablation harness.

Stages chain dataset -> embedding -> connectivity graph -> route plan ->
guided denoise -> tracked rollout. Runners wrap the chain in evaluation
protocols (goal reaching with guided / unguided / graph-only modes,
multi-agent corridor swaps, inspection tours vs a myopic baseline, and
connectivity / spacing sweeps) and aggregate EvalReports whose JSON form
is byte-deterministic for a fixed RunConfig. Wall-clock timings are kept
in a sidecar mapping so they never enter the report itself.

All randomness flows from RunConfig.seed through derive_seed(root, stage,
index), so any stage can be reproduced in isolation by deriving the same
stage seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, config_hash, validate_config
from .dataset import (Dataset, generate_explore, generate_stitch, load_dataset,
                      sample_states, sample_states_spread, save_dataset)
from .denoise import (LocalPrior, empty_field, field_from_plan, fit_prior_weights,
                      guided_denoise, make_layout, make_schedule)
from .embedding import (TemporalEmbedding, embed_many, fit_temporal_embedding,
                        identity_embedding, load_embedding, save_embedding)
from .fixtures import (INSPECTION_STARTS, MAPF_ASSIGNMENTS, MAPF_ENDPOINTS,
                       world_by_name)
from .graph import (ConnectivityGraph, build_graph, connected_components,
                    default_alpha, insert_vertex, load_graph, save_graph)
from .inspection import (assign_viewpoints, brute_force_tour, generate_pois,
                         inspection_tour)
from .mapf import prioritized_plan
from .route import (NoPathError, WaypointPlan, downsample_waypoints,
                    insert_vertex_clear, route_graph, shortest_path,
                    thin_plan_clear)
from .sim import Trace, coverage_curve, goal_reached, track_rollout
from .worlds import World

EPISODE_FIELDS = ("task", "mode", "seed_index", "episode", "success", "steps",
                  "goal_dist", "collisions", "separation", "coverage", "error")

GOAL_MODES = ("guided", "unguided", "graph_only")


# ---------------------------------------------------------------------------
# Seed derivation and artifact caching


def derive_seed(root: int, stage: str, index: int = 0) -> int:
    """Stable per-stage seed: hash of (root, stage name, index)."""
    blob = f"{int(root)}:{stage}:{int(index)}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "big") % (2 ** 31)


def cache_key(stage: str, payload: dict) -> str:
    """Content hash over a stage name and its canonicalized inputs."""
    doc = {"stage": stage, "payload": payload}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def default_cache_dir() -> Path:
    env = os.environ.get("XPLAN_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "xplan"


class ArtifactCache:
    """Disk cache for stage artifacts, keyed by content hashes.

    With force=True, each key is rebuilt once per cache instance and the
    stored entry overwritten; repeats within the run then reuse it.
    """

    def __init__(self, root=None, force: bool = False):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.root.mkdir(parents=True, exist_ok=True)
        self.force = force
        self.hits = 0
        self.misses = 0
        self._fresh: set = set()

    def get_or_build(self, key: str, suffix: str, build, save, load):
        path = self.root / f"{key}{suffix}"
        stale = self.force and key not in self._fresh
        if path.exists() and not stale:
            self.hits += 1
            return load(path)
        obj = build()
        tmp = path.with_name(path.name + ".tmp")
        save(obj, tmp)
        os.replace(tmp, path)
        self.misses += 1
        self._fresh.add(key)
        return obj


class MemoryCache:
    """In-process cache with the ArtifactCache interface."""

    def __init__(self):
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    def get_or_build(self, key: str, suffix: str, build, save, load):
        full = (key, suffix)
        if full in self._store:
            self.hits += 1
            return self._store[full]
        obj = build()
        self._store[full] = obj
        self.misses += 1
        return obj


# ---------------------------------------------------------------------------
# Stage builders


def build_dataset(cfg: RunConfig, seed: int, cache=None):
    """Generate (or fetch) the offline dataset. Returns (dataset, key)."""
    world = world_by_name(cfg.world.name)
    dcfg = cfg.dataset
    key = cache_key("dataset", {"world": asdict(cfg.world),
                                "dataset": asdict(dcfg), "seed": seed})

    def build() -> Dataset:
        if dcfg.kind == "explore":
            return generate_explore(world, dcfg.count, dcfg.length,
                                    seed=seed, dt=dcfg.dt)
        return generate_stitch(world, dcfg.count, H_train=dcfg.H_train,
                               seed=seed, dt=dcfg.dt, speed=dcfg.speed)

    if cache is None:
        return build(), key
    return cache.get_or_build(key, ".jsonl", build, save_dataset,
                              load_dataset), key


def build_embedding_stage(cfg: RunConfig, dataset: Dataset, dataset_key: str,
                          seed: int, cache=None):
    """Fit (or fetch) the state embedding. Returns (embedding, key)."""
    ecfg = cfg.embedding
    e = ecfg.e if ecfg.e is not None else dataset.d
    key = cache_key("embedding", {"upstream": dataset_key,
                                  "embedding": {**asdict(ecfg), "e": e},
                                  "seed": seed})

    def build() -> TemporalEmbedding:
        if ecfg.mode == "identity_position":
            return identity_embedding(dataset.d)
        return fit_temporal_embedding(dataset, n_landmarks=ecfg.n_landmarks,
                                      link_radius=ecfg.link_radius, e=e,
                                      seed=seed)

    if cache is None:
        return build(), key
    return cache.get_or_build(key, ".embedding.json", build, save_embedding,
                              load_embedding), key


def build_graph_stage(cfg: RunConfig, dataset: Dataset,
                      embedding: TemporalEmbedding, embedding_key: str,
                      seed: int, cache=None):
    """Sample N states and build (or fetch) the connectivity graph."""
    gcfg = cfg.graph
    key = cache_key("graph", {"upstream": embedding_key,
                              "graph": asdict(gcfg), "sample_seed": seed})

    def build() -> ConnectivityGraph:
        if gcfg.sample == "spread":
            states, _ = sample_states_spread(dataset, gcfg.N, seed=seed)
        else:
            states, _ = sample_states(dataset, gcfg.N, seed=seed)
        return build_graph(states, embedding, k=gcfg.k, alpha=gcfg.alpha,
                           embedding_ref=embedding_key)

    if cache is None:
        return build(), key
    return cache.get_or_build(key, ".graph.json", build, save_graph,
                              load_graph), key


def _stride(cfg: RunConfig) -> int:
    return max(1, int(round(cfg.planner.dt_plan / cfg.dataset.dt)))


def fit_prior_stage(cfg: RunConfig, dataset: Dataset) -> LocalPrior:
    """Dataset-matched smoothness weights at the configured plan rate."""
    prior = fit_prior_weights(dataset, stride=_stride(cfg))
    if abs(prior.dt_plan - cfg.planner.dt_plan) > 1e-12:
        prior = replace(prior, dt_plan=cfg.planner.dt_plan)
    return prior


def build_seed_artifacts(cfg: RunConfig, sroot: int, cache=None,
                         timings: dict | None = None):
    """The per-seed stage chain shared by every runner."""
    t0 = time.perf_counter()
    dataset, dkey = build_dataset(cfg, derive_seed(sroot, "dataset"), cache)
    t1 = time.perf_counter()
    embedding, ekey = build_embedding_stage(
        cfg, dataset, dkey, derive_seed(sroot, "embedding"), cache)
    t2 = time.perf_counter()
    graph, gkey = build_graph_stage(
        cfg, dataset, embedding, ekey, derive_seed(sroot, "graph-sample"),
        cache)
    t3 = time.perf_counter()
    prior = fit_prior_stage(cfg, dataset)
    t4 = time.perf_counter()
    if timings is not None:
        timings["dataset"] = timings.get("dataset", 0.0) + (t1 - t0)
        timings["embedding"] = timings.get("embedding", 0.0) + (t2 - t1)
        timings["graph"] = timings.get("graph", 0.0) + (t3 - t2)
        timings["prior"] = timings.get("prior", 0.0) + (t4 - t3)
    return dataset, embedding, graph, prior


# ---------------------------------------------------------------------------
# Episode execution


def _state_at(position) -> np.ndarray:
    p = np.asarray(position, dtype=float)
    return np.concatenate([p, np.zeros_like(p)])


def _upsample_states(states: np.ndarray, dt_plan: float, dt: float) -> np.ndarray:
    """Linear interpolation from plan rate to control rate."""
    H = len(states)
    if H < 2:
        return np.repeat(states, 2, axis=0)
    t_plan = np.arange(H) * dt_plan
    n = int(round((H - 1) * dt_plan / dt))
    ts = np.minimum(np.arange(n + 1) * dt, t_plan[-1])
    return np.stack([np.interp(ts, t_plan, states[:, j])
                     for j in range(states.shape[1])], axis=1)


def _plan_reference(plan: WaypointPlan, dt: float) -> np.ndarray:
    """Waypoint positions interpolated linearly over their dilated times.

    Velocities come from differencing the interpolated track, not from the
    stored waypoint states: those carry undilated dataset speeds, and a
    velocity reference that disagrees with the position track drags the
    tracker off the polyline at corners."""
    times = np.asarray(plan.times, dtype=float)
    d = plan.states.shape[1] // 2
    if len(times) < 2:
        out = np.repeat(plan.states, 2, axis=0)
        out[:, d:] = 0.0
        return out
    n = max(1, int(np.ceil(times[-1] / dt - 1e-9)))
    ts = np.minimum(np.arange(n + 1) * dt, times[-1])
    pos = np.stack([np.interp(ts, times, plan.states[:, j])
                    for j in range(d)], axis=1)
    vel = np.gradient(pos, dt, axis=0)
    return np.concatenate([pos, vel], axis=1)


def _dense_plan(plan: WaypointPlan, H: int) -> WaypointPlan:
    """Resample the plan polyline at every plan step.

    Waypoint spacing follows the cost metric and is uneven in time, so
    sparse hats leave pull-free valleys where the smoothness prior cuts
    corners; a per-step target track keeps unit pull weight everywhere."""
    grid = np.arange(H) * plan.dt_plan
    states = np.stack([np.interp(grid, plan.times, plan.states[:, j])
                       for j in range(plan.states.shape[1])], axis=1)
    return WaypointPlan(states, grid, plan.dilation, plan.dt_plan,
                        vertex_ids=None)


def _guided_trajectory(plan: WaypointPlan, prior: LocalPrior, cfg: RunConfig,
                       seed: int, mode: str | None = None):
    dcfg = cfg.denoiser
    H = max(2, plan.horizon_hint + 1)
    layout = make_layout(H, H_train=dcfg.H_train, O=dcfg.overlap)
    schedule = make_schedule(dcfg.T_steps, dcfg.beta_min, dcfg.beta_max)
    radius = dcfg.guide_radius if dcfg.guide_radius is not None else 1.0
    fld = field_from_plan(_dense_plan(plan, H), H, radius=radius,
                          gamma=dcfg.gamma,
                          position_only=dcfg.position_only)
    endpoints = (plan.states[0], plan.states[-1])
    return guided_denoise(layout, prior, fld, schedule, endpoints,
                          mode=mode or dcfg.mode, seed=seed,
                          mu_overlap=dcfg.mu_overlap)


def _unguided_trajectory(start_state: np.ndarray, goal_state: np.ndarray,
                         straight_dist: float, prior: LocalPrior,
                         cfg: RunConfig, seed: int, mode: str | None = None):
    """No-waypoint interpolant over a horizon guessed from straight-line
    distance at the reference speed."""
    dcfg = cfg.denoiser
    steps = straight_dist / cfg.eval.v_ref / cfg.planner.dt_plan
    H = max(2, int(round(steps * cfg.planner.dilation)) + 1)
    layout = make_layout(H, H_train=dcfg.H_train, O=dcfg.overlap)
    schedule = make_schedule(dcfg.T_steps, dcfg.beta_min, dcfg.beta_max)
    fld = empty_field(H, len(start_state))
    return guided_denoise(layout, prior, fld, schedule,
                          (start_state, goal_state),
                          mode=mode or dcfg.mode, seed=seed,
                          mu_overlap=dcfg.mu_overlap)


def _tracked(ref: np.ndarray, world: World, cfg: RunConfig,
             max_steps: int | None = None) -> Trace:
    if max_steps is None:
        max_steps = int(np.ceil(cfg.eval.time_factor * (len(ref) - 1)))
    return track_rollout(ref, world, dt=cfg.dataset.dt, max_steps=max_steps)


def _episode_metrics(trace: Trace, goal_position, radius: float) -> dict:
    g = np.asarray(goal_position, dtype=float)
    dist = float(np.linalg.norm(trace.positions() - g[None, :], axis=1).min())
    collisions = sum(1 for _, kind in trace.events if kind == "collision")
    success = goal_reached(trace, g, radius) and collisions == 0
    return {"success": int(success), "steps": trace.n_steps - 1,
            "goal_dist": round(dist, 6), "collisions": collisions}


def _blank_record(task: str, mode: str, seed_index: int, episode) -> dict:
    return {"task": task, "mode": mode, "seed_index": seed_index,
            "episode": episode, "success": 0, "steps": "", "goal_dist": "",
            "collisions": "", "separation": "", "coverage": "", "error": ""}


def _goal_bundle(payload: dict):
    """All episodes of one (task, mode) pair for one seed; used as the
    parallel work unit so results are independent of worker scheduling."""
    cfg: RunConfig = payload["cfg"]
    task = payload["task"]
    mode = payload["mode"]
    plan: WaypointPlan | None = payload["plan"]
    prior: LocalPrior = payload["prior"]
    world = world_by_name(cfg.world.name)
    start = np.asarray(task["start"], dtype=float)
    goal = np.asarray(task["goal"], dtype=float)
    straight = float(np.linalg.norm(goal - start))
    records, diags = [], []
    ref_shared = None
    if mode == "graph_only" and plan is not None:
        ref_shared = _plan_reference(plan, cfg.dataset.dt)
    for ep, eseed in enumerate(payload["eseeds"]):
        rec = _blank_record(task["name"], mode, payload["seed_index"], ep)
        if mode in ("guided", "graph_only") and plan is None:
            rec["error"] = payload["plan_error"]
            records.append(rec)
            continue
        try:
            if mode == "guided":
                traj = _guided_trajectory(plan, prior, cfg, eseed)
                diags.append(traj.diagnostics)
                ref = _upsample_states(traj.states, cfg.planner.dt_plan,
                                       cfg.dataset.dt)
            elif mode == "unguided":
                traj = _unguided_trajectory(_state_at(start), _state_at(goal),
                                            straight, prior, cfg, eseed)
                ref = _upsample_states(traj.states, cfg.planner.dt_plan,
                                       cfg.dataset.dt)
            elif mode == "graph_only":
                ref = ref_shared
            else:
                raise ValueError(f"unknown mode {mode!r}")
            trace = _tracked(ref, world, cfg)
            rec.update(_episode_metrics(trace, goal, cfg.eval.goal_radius))
        except (NoPathError, RuntimeError, ValueError) as e:
            rec["error"] = f"{type(e).__name__}: {e}"
        records.append(rec)
    return records, diags


# ---------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    kind: str
    config_hash: str
    protocol: dict
    summary: dict
    episodes: list
    curves: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {"kind": self.kind, "config_hash": self.config_hash,
                "protocol": self.protocol, "summary": self.summary,
                "diagnostics": self.diagnostics,
                "curves": {k: np.asarray(v).tolist()
                           for k, v in sorted(self.curves.items())}}

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True, indent=2) + "\n"


def save_report(report: EvalReport, out_dir, timings: dict | None = None) -> None:
    """report.json and episodes.csv are byte-deterministic for a fixed
    config; wall-clock timings go to a separate timings.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    with open(out / "episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_FIELDS)
        for rec in report.episodes:
            w.writerow([_csv_cell(rec[k]) for k in EPISODE_FIELDS])
    if report.curves:
        cdir = out / "curves"
        cdir.mkdir(exist_ok=True)
        for name, curve in sorted(report.curves.items()):
            with open(cdir / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "coverage"])
                for t, v in np.asarray(curve):
                    w.writerow([repr(float(t)), repr(float(v))])
    if timings is not None:
        doc = {k: round(float(v), 3) for k, v in sorted(timings.items())}
        with open(out / "timings.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _csv_cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _rate_block(per_seed: list) -> dict:
    """Mean and spread of per-seed success percentages."""
    arr = np.asarray(per_seed, dtype=float)
    return {"mean": round(float(arr.mean()), 4),
            "std": round(float(arr.std()), 4),
            "per_seed": [round(float(x), 4) for x in per_seed]}


def _success_table(episodes: list, n_seeds: int, tasks: list, modes) -> dict:
    """Per-task and aggregate success blocks from episode records."""
    def pct(recs):
        if not recs:
            return 0.0
        return 100.0 * sum(r["success"] for r in recs) / len(recs)

    def seed_rates(pred):
        return [pct([r for r in episodes if r["seed_index"] == si and pred(r)])
                for si in range(n_seeds)]

    by_task = {}
    for t in tasks:
        name = t["name"]
        by_task[name] = {m: _rate_block(seed_rates(
            lambda r, n=name, m=m: r["task"] == n and r["mode"] == m))
            for m in modes}
    overall = {m: _rate_block(seed_rates(lambda r, m=m: r["mode"] == m))
               for m in modes}
    long_names = {t["name"] for t in tasks if t.get("long_horizon")}
    out = {"tasks": by_task, "overall": overall}
    if long_names:
        out["long_horizon"] = {
            m: _rate_block(seed_rates(
                lambda r, m=m: r["mode"] == m and r["task"] in long_names))
            for m in modes}
    return out


def _diag_summary(diags: list) -> dict:
    if not diags:
        return {"n_denoise": 0}
    ew = [d["E_W_final"] for d in diags]
    ov = [d["overlap_disagreement"] for d in diags]
    return {"n_denoise": len(diags),
            "E_W_final_mean": round(float(np.mean(ew)), 6),
            "E_W_final_max": round(float(np.max(ew)), 6),
            "overlap_disagreement_max": round(float(np.max(ov)), 9),
            "overlap_flagged": int(sum(d.get("overlap_flagged", 0) for d in diags))}


# ---------------------------------------------------------------------------
# Goal reaching


def run_goal_reaching(cfg: RunConfig, cache=None, modes=GOAL_MODES,
                      n_jobs: int = 1):
    """Evaluate guided, unguided, and graph-only tracking on the
    configured tasks. Returns (EvalReport, timings)."""
    validate_config(cfg)
    timings: dict = {}
    t_start = time.perf_counter()
    episodes: list = []
    diags: list = []
    bundles = []
    world = world_by_name(cfg.world.name)
    for si in range(cfg.eval.n_seeds):
        sroot = derive_seed(cfg.seed, "goal-seed", si)
        dataset, embedding, graph, prior = build_seed_artifacts(
            cfg, sroot, cache, timings)
        rgraph = route_graph(graph, world,
                             margin=cfg.planner.route_margin)
        for task in cfg.eval.tasks:
            t_plan0 = time.perf_counter()
            plan, plan_error = _plan_goal_task(cfg, rgraph, world, task)
            timings["plan"] = timings.get("plan", 0.0) + (
                time.perf_counter() - t_plan0)
            for mode in modes:
                eseeds = [derive_seed(sroot,
                                      f"episode:{task['name']}:{mode}", ep)
                          for ep in range(cfg.eval.n_episodes)]
                bundles.append({"cfg": cfg, "task": task, "mode": mode,
                                "plan": plan, "plan_error": plan_error,
                                "prior": prior, "eseeds": eseeds,
                                "seed_index": si})
    t_ep0 = time.perf_counter()
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_goal_bundle, bundles))
    else:
        results = [_goal_bundle(b) for b in bundles]
    for recs, dg in results:
        episodes.extend(recs)
        diags.extend(dg)
    timings["episodes"] = time.perf_counter() - t_ep0
    timings["total"] = time.perf_counter() - t_start

    protocol = {"n_seeds": cfg.eval.n_seeds, "n_episodes": cfg.eval.n_episodes,
                "modes": list(modes), "tasks": [t["name"] for t in cfg.eval.tasks],
                "goal_radius": cfg.eval.goal_radius,
                "time_factor": cfg.eval.time_factor,
                "success_rule": "goal reached within budget, zero collisions"}
    summary = _success_table(episodes, cfg.eval.n_seeds, cfg.eval.tasks, modes)
    report = EvalReport("goal_reaching", config_hash(cfg), protocol, summary,
                        episodes, diagnostics=_diag_summary(diags))
    return report, timings


def _plan_goal_task(cfg: RunConfig, rgraph: ConnectivityGraph, world,
                    task: dict):
    """Insert endpoints, route, downsample. Returns (plan or None, error).

    Expects the geometry-validated routing view from route_graph."""
    m = cfg.planner.route_margin
    try:
        g1, sid = insert_vertex_clear(rgraph, world, _state_at(task["start"]),
                                      margin=m)
        g2, gid = insert_vertex_clear(g1, world, _state_at(task["goal"]),
                                      margin=m)
        path = shortest_path(g2, sid, gid)
        plan = thin_plan_clear(path, g2, world, delta_t=cfg.planner.delta_t,
                               dilation=cfg.planner.dilation,
                               dt_plan=cfg.planner.dt_plan, margin=m)
        return plan, ""
    except NoPathError as e:
        return None, f"NoPathError: {e}"


# ---------------------------------------------------------------------------
# Multi-agent corridor swaps


def _pad_traces(traces: list) -> list:
    n = max(t.n_steps for t in traces)
    out = []
    for t in traces:
        if t.n_steps < n:
            pad = np.repeat(t.states[-1][None, :], n - t.n_steps, axis=0)
            out.append(Trace(np.vstack([t.states, pad]), t.actions, t.dt,
                             list(t.events)))
        else:
            out.append(t)
    return out


def _min_separation(traces: list) -> float:
    if len(traces) < 2:
        return float("inf")
    padded = _pad_traces(traces)
    n = padded[0].n_steps
    best = float("inf")
    for i in range(len(padded)):
        pi = padded[i].positions()[:n]
        for j in range(i + 1, len(padded)):
            pj = padded[j].positions()[:n]
            best = min(best, float(np.linalg.norm(pi - pj, axis=1).min()))
    return best


def _schedule_separation(schedules: list) -> float:
    """Min pairwise distance between reserved plan tracks, goal-padded."""
    tracks = [s.track for s in schedules if s is not None]
    if len(tracks) < 2:
        return float("inf")
    n = max(len(t) for t in tracks)
    best = float("inf")
    for i in range(len(tracks)):
        ti = np.vstack([tracks[i],
                        np.repeat(tracks[i][-1][None, :],
                                  n - len(tracks[i]), axis=0)])
        for j in range(i + 1, len(tracks)):
            tj = np.vstack([tracks[j],
                            np.repeat(tracks[j][-1][None, :],
                                      n - len(tracks[j]), axis=0)])
            best = min(best, float(np.linalg.norm(ti - tj, axis=1).min()))
    return best


def run_mapf(cfg: RunConfig, n_agents: int | None = None, cache=None):
    """Prioritized vs independent planning on the two-corridor fixture.

    Success per episode: every agent reaches its goal, no wall contact,
    and executed pairwise separation stays at or above planner.delta.
    Returns (EvalReport, timings).
    """
    validate_config(cfg)
    counts = [n_agents] if n_agents is not None else list(cfg.eval.agent_counts)
    if max(counts) > len(MAPF_ASSIGNMENTS):
        raise ValueError(f"at most {len(MAPF_ASSIGNMENTS)} agents supported")
    timings: dict = {}
    t_start = time.perf_counter()
    world = world_by_name(cfg.world.name)
    pcfg = cfg.planner
    episodes: list = []
    diags: list = []
    plan_rows = []
    for si in range(cfg.eval.n_seeds):
        sroot = derive_seed(cfg.seed, "mapf-seed", si)
        dataset, embedding, graph, prior = build_seed_artifacts(
            cfg, sroot, cache, timings)
        g2 = graph
        vid = {}
        for name in sorted(MAPF_ENDPOINTS):
            g2, vid[name] = insert_vertex(g2, _state_at(MAPF_ENDPOINTS[name]))
        for n in counts:
            t_plan0 = time.perf_counter()
            pairs = MAPF_ASSIGNMENTS[:n]
            queries = [(vid[s], vid[g]) for s, g in pairs]
            plans, schedules, errors = prioritized_plan(
                g2, queries, delta=pcfg.delta, delta_t=pcfg.delta_t,
                dilation=pcfg.dilation, speed=pcfg.speed,
                dt_plan=pcfg.dt_plan)
            naive_plans, naive_errors = [], []
            for s, g in queries:
                try:
                    path = shortest_path(g2, s, g)
                    naive_plans.append(downsample_waypoints(
                        path, g2, delta_t=pcfg.delta_t,
                        dilation=pcfg.dilation, dt_plan=pcfg.dt_plan))
                    naive_errors.append("")
                except NoPathError as e:
                    naive_plans.append(None)
                    naive_errors.append(f"NoPathError: {e}")
            plan_sep = _schedule_separation(schedules)
            plan_rows.append({"seed_index": si, "n_agents": n,
                              "solved": int(all(p is not None for p in plans)),
                              "plan_separation": round(plan_sep, 6)
                              if np.isfinite(plan_sep) else "inf"})
            timings["plan"] = timings.get("plan", 0.0) + (
                time.perf_counter() - t_plan0)
            t_ep0 = time.perf_counter()
            for ep in range(cfg.eval.n_episodes):
                eseeds = [derive_seed(sroot, f"mapf-episode:n{n}:agent{ai}", ep)
                          for ai in range(n)]
                for method, mplans, merrs in (
                        ("prioritized", plans, errors),
                        ("naive", naive_plans, naive_errors)):
                    rec = _blank_record(f"{n}-agents", method, si, ep)
                    if any(p is None for p in mplans):
                        rec["error"] = "; ".join(e for e in merrs if e)
                        episodes.append(rec)
                        continue
                    try:
                        traces = []
                        for ai, p in enumerate(mplans):
                            traj = _guided_trajectory(p, prior, cfg, eseeds[ai])
                            diags.append(traj.diagnostics)
                            ref = _upsample_states(traj.states, pcfg.dt_plan,
                                                   cfg.dataset.dt)
                            traces.append(_tracked(ref, world, cfg))
                        sep = _min_separation(traces)
                        reached = all(
                            goal_reached(tr, MAPF_ENDPOINTS[g],
                                         cfg.eval.goal_radius)
                            for tr, (_, g) in zip(traces, pairs))
                        collisions = sum(
                            1 for tr in traces for _, kind in tr.events
                            if kind == "collision")
                        ok = reached and collisions == 0 and sep >= pcfg.delta
                        rec.update({
                            "success": int(ok),
                            "steps": max(tr.n_steps - 1 for tr in traces),
                            "collisions": collisions,
                            "separation": round(sep, 6)
                            if np.isfinite(sep) else "inf"})
                    except (NoPathError, RuntimeError, ValueError) as e:
                        rec["error"] = f"{type(e).__name__}: {e}"
                    episodes.append(rec)
            timings["episodes"] = timings.get("episodes", 0.0) + (
                time.perf_counter() - t_ep0)
    timings["total"] = time.perf_counter() - t_start

    tasks = [{"name": f"{n}-agents"} for n in counts]
    summary = _success_table(episodes, cfg.eval.n_seeds, tasks,
                             ("prioritized", "naive"))
    summary["plan_checks"] = plan_rows
    solved = [r for r in plan_rows if r["solved"]]
    summary["plan_separation_ok"] = all(
        r["plan_separation"] == "inf" or
        float(r["plan_separation"]) >= pcfg.delta - 1e-9 for r in solved)
    protocol = {"n_seeds": cfg.eval.n_seeds, "n_episodes": cfg.eval.n_episodes,
                "agent_counts": counts, "delta": pcfg.delta,
                "goal_radius": cfg.eval.goal_radius,
                "success_rule": "all goals reached, zero collisions, "
                                "separation >= delta"}
    report = EvalReport("mapf", config_hash(cfg), protocol, summary, episodes,
                        diagnostics=_diag_summary(diags))
    return report, timings


# ---------------------------------------------------------------------------
# Inspection


def _thin_curve(curve: np.ndarray) -> np.ndarray:
    """Keep first, last, and every row where the coverage value changes."""
    if len(curve) <= 2:
        return curve
    keep = [0]
    for i in range(1, len(curve)):
        if curve[i, 1] != curve[i - 1, 1]:
            keep.append(i)
    if keep[-1] != len(curve) - 1:
        keep.append(len(curve) - 1)
    return curve[keep]


def _concat_traces(traces: list) -> Trace:
    states = [traces[0].states]
    actions = [traces[0].actions]
    events = list(traces[0].events)
    offset = traces[0].n_steps - 1
    for tr in traces[1:]:
        states.append(tr.states[1:])
        actions.append(tr.actions)
        events.extend((i + offset, kind) for i, kind in tr.events if i > 0)
        offset += tr.n_steps - 1
    return Trace(np.vstack(states), np.vstack(actions) if actions else
                 np.zeros((0, traces[0].d)), traces[0].dt, events)


def _myopic_inspection(graph: ConnectivityGraph, start_state: np.ndarray,
                       pois: np.ndarray, viewpoint_sets: dict, world: World,
                       prior: LocalPrior, cfg: RunConfig, seed: int,
                       budget_steps: int) -> Trace:
    """Repeatedly route and denoise toward the closest unseen target point
    with no tour ordering, under a fixed total step budget."""
    d = world.d
    cur = np.asarray(start_state, dtype=float).copy()
    covered: set = set()
    blocked: set = set()
    traces: list = []
    remaining = budget_steps
    leg = 0
    max_legs = 3 * len(viewpoint_sets) + 4
    while remaining > 1 and leg < max_legs:
        open_pois = [m for m in sorted(viewpoint_sets)
                     if m not in covered and m not in blocked
                     and viewpoint_sets[m]]
        if not open_pois:
            break
        dists = [float(np.linalg.norm(pois[m] - cur[:d])) for m in open_pois]
        m_star = open_pois[int(np.argmin(dists))]
        vpos = graph.positions()[viewpoint_sets[m_star]]
        v = viewpoint_sets[m_star][int(np.argmin(
            np.linalg.norm(vpos - cur[None, :d], axis=1)))]
        try:
            g2, cid = insert_vertex(graph, cur)
            path = shortest_path(g2, cid, v)
            plan = downsample_waypoints(path, g2, delta_t=cfg.planner.delta_t,
                                        dilation=cfg.planner.dilation,
                                        dt_plan=cfg.planner.dt_plan)
        except NoPathError:
            blocked.add(m_star)
            continue
        traj = _guided_trajectory(plan, prior, cfg,
                                  derive_seed(seed, "myopic-leg", leg))
        ref = _upsample_states(traj.states, cfg.planner.dt_plan,
                               cfg.dataset.dt)
        cap = min(int(np.ceil(cfg.eval.time_factor * (len(ref) - 1))),
                  remaining)
        trace = _tracked(ref, world, cfg, max_steps=cap)
        remaining -= trace.n_steps - 1
        traces.append(trace)
        cur = trace.states[-1].copy()
        within = np.linalg.norm(
            trace.positions()[:, None, :] - pois[None, :, :], axis=2)
        seen = np.flatnonzero((within <= cfg.eval.r_obs).any(axis=0))
        covered |= set(int(m) for m in seen)
        leg += 1
    if not traces:
        s0 = np.asarray(start_state, dtype=float)
        return Trace(np.vstack([s0, s0]), np.zeros((1, d)), cfg.dataset.dt, [])
    return _concat_traces(traces)


def run_inspection(cfg: RunConfig, n_pois: int | None = None, cache=None,
                   pois_override=None):
    """Covering-tour execution vs the myopic baseline on the 3-D fixture.

    One stochastic episode per (POI count, seed, start); coverage is the
    fraction of POIs approached within eval.r_obs during the rollout.
    Returns (EvalReport, timings).
    """
    validate_config(cfg)
    counts = [n_pois] if n_pois is not None else list(cfg.eval.poi_counts)
    timings: dict = {}
    t_start = time.perf_counter()
    world = world_by_name(cfg.world.name)
    pcfg = cfg.planner
    episodes: list = []
    diags: list = []
    curves: dict = {}
    tour_rows = []
    starts = [s for s in INSPECTION_STARTS if len(s) == world.d]
    if not starts:
        raise ValueError(f"no bundled inspection starts for a {world.d}-D world")
    for si in range(cfg.eval.n_seeds):
        sroot = derive_seed(cfg.seed, "inspection-seed", si)
        dataset, embedding, graph, prior = build_seed_artifacts(
            cfg, sroot, cache, timings)
        for n in counts:
            if pois_override is not None:
                pois = np.atleast_2d(np.asarray(pois_override, dtype=float))
            else:
                pois = generate_pois(world, n,
                                     seed=derive_seed(sroot, f"pois:n{n}"))
            vsets = assign_viewpoints(graph, pois, K=pcfg.K_viewpoints,
                                      r_obs=pcfg.r_view)
            for start_idx, spos in enumerate(starts):
                t_plan0 = time.perf_counter()
                tour_info = {"seed_index": si, "n_pois": n,
                             "start": start_idx}
                plan = None
                try:
                    g2, sid = insert_vertex(graph, _state_at(spos))
                    plan, rep = inspection_tour(
                        g2, sid, vsets, delta_t=pcfg.delta_t,
                        dilation=pcfg.dilation, dt_plan=pcfg.dt_plan)
                    tour_info.update({
                        "tour_cost": round(rep.tour_cost, 6),
                        "stops": len(rep.tour_ids),
                        "covered": len(rep.covered),
                        "uncovered": len(rep.uncovered)})
                    if n <= 4:
                        tour_info["oracle_ratio"] = _oracle_ratio(
                            g2, sid, vsets, pcfg)
                except NoPathError as e:
                    tour_info["error"] = f"NoPathError: {e}"
                tour_rows.append(tour_info)
                timings["plan"] = timings.get("plan", 0.0) + (
                    time.perf_counter() - t_plan0)
                t_ep0 = time.perf_counter()
                task_name = f"{n}-pois"
                budget = None
                if plan is not None:
                    budget = int(np.ceil(
                        cfg.eval.time_factor * plan.times[-1] / cfg.dataset.dt))
                    budget = max(budget, 2)
                for method in ("tour", "myopic"):
                    rec = _blank_record(task_name, method, si, start_idx)
                    eseed = derive_seed(
                        sroot, f"inspection-episode:n{n}:start{start_idx}:{method}")
                    if plan is None:
                        rec["error"] = tour_info.get("error", "no tour")
                        episodes.append(rec)
                        continue
                    try:
                        if method == "tour":
                            traj = _guided_trajectory(plan, prior, cfg, eseed)
                            diags.append(traj.diagnostics)
                            ref = _upsample_states(traj.states, pcfg.dt_plan,
                                                   cfg.dataset.dt)
                            trace = _tracked(ref, world, cfg, max_steps=budget)
                        else:
                            trace = _myopic_inspection(
                                graph, _state_at(spos), pois, vsets, world,
                                prior, cfg, eseed, budget)
                        curve = coverage_curve(trace, pois, cfg.eval.r_obs)
                        final = float(curve[-1, 1])
                        collisions = sum(1 for _, kind in trace.events
                                         if kind == "collision")
                        rec.update({"success": int(final >= 0.999),
                                    "steps": trace.n_steps - 1,
                                    "collisions": collisions,
                                    "coverage": round(final, 6)})
                        key = f"{n}pois-seed{si}-start{start_idx}-{method}"
                        curves[key] = _thin_curve(curve)
                    except (NoPathError, RuntimeError, ValueError) as e:
                        rec["error"] = f"{type(e).__name__}: {e}"
                    episodes.append(rec)
                timings["episodes"] = timings.get("episodes", 0.0) + (
                    time.perf_counter() - t_ep0)
    timings["total"] = time.perf_counter() - t_start

    summary = {"by_count": {}}
    for n in counts:
        block = {}
        for method in ("tour", "myopic"):
            vals = [float(r["coverage"]) for r in episodes
                    if r["task"] == f"{n}-pois" and r["mode"] == method
                    and r["coverage"] != ""]
            if vals:
                block[method] = {
                    "coverage_mean": round(float(np.mean(vals)), 4),
                    "coverage_std": round(float(np.std(vals)), 4),
                    "coverage_min": round(float(np.min(vals)), 4),
                    "n": len(vals)}
            else:
                block[method] = {"coverage_mean": 0.0, "coverage_std": 0.0,
                                 "coverage_min": 0.0, "n": 0}
        ratios = [r["oracle_ratio"] for r in tour_rows
                  if r["n_pois"] == n and "oracle_ratio" in r
                  and r["oracle_ratio"] is not None]
        if ratios:
            block["oracle_ratio_max"] = round(float(max(ratios)), 6)
        summary["by_count"][f"{n}-pois"] = block
    summary["tours"] = tour_rows
    protocol = {"n_seeds": cfg.eval.n_seeds, "poi_counts": counts,
                "n_starts": len(starts), "r_obs": cfg.eval.r_obs,
                "r_view": pcfg.r_view, "time_factor": cfg.eval.time_factor,
                "episodes_per_cell": 1}
    report = EvalReport("inspection", config_hash(cfg), protocol, summary,
                        episodes, curves=curves,
                        diagnostics=_diag_summary(diags))
    return report, timings


def _oracle_ratio(graph: ConnectivityGraph, start_id: int, vsets: dict,
                  pcfg) -> float | None:
    """Heuristic over exhaustive tour cost on the instance truncated to
    at most 4 candidates per target; None when the oracle cannot run."""
    trimmed = {m: list(vs[:4]) for m, vs in vsets.items()}
    if any(len(vs) == 0 for vs in trimmed.values()):
        return None
    try:
        _, rep = inspection_tour(graph, start_id, trimmed,
                                 delta_t=pcfg.delta_t, dilation=pcfg.dilation,
                                 dt_plan=pcfg.dt_plan)
        _, best = brute_force_tour(graph, start_id, trimmed)
    except (NoPathError, ValueError):
        return None
    if best <= 1e-12:
        return 1.0 if rep.tour_cost <= 1e-12 else None
    return round(float(rep.tour_cost / best), 6)


# ---------------------------------------------------------------------------
# Ablation sweeps


def _component_fraction(graph: ConnectivityGraph) -> float:
    comps = connected_components(graph)
    return len(comps[0]) / graph.n


def run_ablation_grid(cfg: RunConfig, cache=None,
                      sweeps=("k", "N", "delta_t", "alpha")):
    """Success and connectivity across graph-size, degree, and waypoint
    spacing grids, evaluated with the guided mode only at the reduced
    ablation protocol. Returns (EvalReport, timings)."""
    validate_config(cfg)
    timings: dict = {}
    t_start = time.perf_counter()
    abl = cfg.ablation
    if cache is None:
        cache = MemoryCache()
    proto_over = {"eval.n_seeds": abl.n_seeds,
                  "eval.n_episodes": abl.n_episodes}
    summary: dict = {}

    def guided_success(c2):
        rep, _ = run_goal_reaching(c2, cache, modes=("guided",))
        blk = rep.summary["overall"]["guided"]
        return blk["mean"], blk["per_seed"]

    def fractions(c2):
        out = []
        for si in range(c2.eval.n_seeds):
            sroot = derive_seed(c2.seed, "goal-seed", si)
            _, _, graph, _ = build_seed_artifacts(c2, sroot, cache)
            out.append(_component_fraction(graph))
        return out

    if "k" in sweeps:
        rows = []
        for k in abl.k_grid:
            c2 = apply_overrides(cfg, {**proto_over, "graph.k": int(k)})
            frac = fractions(c2)
            succ, per_seed = guided_success(c2)
            rows.append({"k": int(k),
                         "largest_component_fraction": round(float(np.mean(frac)), 4),
                         "success": succ, "per_seed": per_seed})
        summary["by_k"] = rows
        timings["sweep_k"] = time.perf_counter() - t_start

    if "N" in sweeps:
        t0 = time.perf_counter()
        rows = []
        for n in abl.N_grid:
            c2 = apply_overrides(cfg, {**proto_over, "graph.N": int(n)})
            frac = fractions(c2)
            succ, per_seed = guided_success(c2)
            rows.append({"N": int(n),
                         "largest_component_fraction": round(float(np.mean(frac)), 4),
                         "success": succ, "per_seed": per_seed})
        summary["by_N"] = rows
        timings["sweep_N"] = time.perf_counter() - t0

    if "delta_t" in sweeps:
        t0 = time.perf_counter()
        rows = []
        for dt_w in abl.delta_t_grid:
            c2 = apply_overrides(cfg, {**proto_over,
                                       "planner.delta_t": float(dt_w)})
            succ, per_seed = guided_success(c2)
            rows.append({"delta_t": float(dt_w), "success": succ,
                         "per_seed": per_seed})
        summary["by_delta_t"] = rows
        best = max(rows, key=lambda r: r["success"])
        spread = max(r["success"] for r in rows) - min(r["success"] for r in rows)
        summary["delta_t_best"] = best["delta_t"]
        summary["delta_t_spread"] = round(spread, 4)
        timings["sweep_delta_t"] = time.perf_counter() - t0

    if "alpha" in sweeps:
        # connectivity only: fraction must be nondecreasing as the edge
        # admission threshold grows at fixed k
        t0 = time.perf_counter()
        c2 = apply_overrides(cfg, proto_over)
        rows = []
        sroot = derive_seed(c2.seed, "goal-seed", 0)
        dataset, dkey = build_dataset(c2, derive_seed(sroot, "dataset"), cache)
        embedding, ekey = build_embedding_stage(
            c2, dataset, dkey, derive_seed(sroot, "embedding"), cache)
        states, _ = sample_states(dataset, c2.graph.N,
                                  seed=derive_seed(sroot, "graph-sample"))
        alpha0 = c2.graph.alpha
        if alpha0 is None:
            alpha0 = default_alpha(embed_many(embedding, states), c2.graph.k)
        for scale in (0.5, 0.75, 1.0, 1.5, 2.0):
            g = build_graph(states, embedding, k=c2.graph.k,
                            alpha=scale * alpha0)
            rows.append({"alpha_scale": scale,
                         "alpha": round(scale * alpha0, 6),
                         "largest_component_fraction":
                             round(_component_fraction(g), 4)})
        summary["by_alpha"] = rows
        timings["sweep_alpha"] = time.perf_counter() - t0

    if "by_k" in summary:
        fr = [r["largest_component_fraction"] for r in summary["by_k"]]
        ks = [r["k"] for r in summary["by_k"]]
        order = np.argsort(ks)
        summary["fraction_monotone_in_k"] = bool(
            all(fr[order[i]] <= fr[order[i + 1]] + 1e-9
                for i in range(len(order) - 1)))
    if "by_alpha" in summary:
        fr = [r["largest_component_fraction"] for r in summary["by_alpha"]]
        summary["fraction_monotone_in_alpha"] = bool(
            all(fr[i] <= fr[i + 1] + 1e-9 for i in range(len(fr) - 1)))

    timings["total"] = time.perf_counter() - t_start
    protocol = {"n_seeds": abl.n_seeds, "n_episodes": abl.n_episodes,
                "sweeps": list(sweeps), "k_grid": list(abl.k_grid),
                "N_grid": list(abl.N_grid),
                "delta_t_grid": list(abl.delta_t_grid)}
    report = EvalReport("ablation", config_hash(cfg), protocol, summary, [])
    return report, timings
