"""Run configuration: nested dataclasses with JSON round-trip, dotted-path
overrides, range validation, and a content hash.

Every pipeline output embeds config_hash(cfg), a digest of the canonical
JSON form, so artifacts can be traced to the exact settings that made
them. Overrides use dotted paths ("graph.k"), with values parsed as JSON
when possible and kept as strings otherwise.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .fixtures import GOAL_TASKS


def _default_tasks() -> list:
    return [{"name": name, "start": list(start), "goal": list(goal),
             "long_horizon": long}
            for name, start, goal, long in GOAL_TASKS]


@dataclass
class WorldConfig:
    name: str = "maze12"


@dataclass
class DatasetConfig:
    kind: str = "explore"            # "explore" | "stitch"
    count: int = 500
    length: int = 300                # states per explore walk
    H_train: int = 200               # state clip for stitch demonstrations
    dt: float = 0.05
    speed: float = 2.0               # stitch tracking speed


@dataclass
class EmbeddingConfig:
    mode: str = "landmark_mds"       # "landmark_mds" | "identity_position"
    n_landmarks: int = 2000
    link_radius: float = 0.7
    e: int | None = None             # None: match the world dimension


@dataclass
class GraphConfig:
    N: int = 500
    k: int = 25
    alpha: float | None = None       # None: percentile-of-kNN heuristic
    sample: str = "spread"           # "uniform" | "spread" (stratified)


@dataclass
class PlannerConfig:
    delta_t: float = 1.0             # waypoint spacing, cost units
    dilation: float = 1.5
    dt_plan: float = 0.2
    route_margin: float = 0.1        # extra clearance for routed segments
    delta: float = 0.8               # multi-agent separation margin
    speed: float = 1.0               # cost units per multi-agent time step
    K_viewpoints: int = 8
    r_view: float = 0.7              # viewpoint assignment radius


@dataclass
class DenoiserConfig:
    T_steps: int = 200
    beta_min: float = 0.002
    beta_max: float = 0.7
    H_train: int = 50                # segment length, plan steps
    overlap: int = 5
    gamma: float = 200.0
    guide_radius: float | None = None    # plan steps, None: per-step track
    position_only: bool = True
    mu_overlap: float = 0.0
    mode: str = "deterministic"      # "deterministic" | "stochastic"


@dataclass
class EvalConfig:
    n_seeds: int = 5
    n_episodes: int = 20
    goal_radius: float = 0.5
    r_obs: float = 1.0               # coverage radius for inspection
    time_factor: float = 2.0         # rollout budget over plan duration
    v_ref: float = 1.0               # sets the no-waypoint horizon guess
    agent_counts: list = field(default_factory=lambda: [2, 3, 4])
    poi_counts: list = field(default_factory=lambda: [4, 8, 16])
    tasks: list = field(default_factory=_default_tasks)


@dataclass
class AblationConfig:
    k_grid: list = field(default_factory=lambda: [5, 15, 30, 60])
    N_grid: list = field(default_factory=lambda: [125, 250, 500])
    delta_t_grid: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])
    n_seeds: int = 2
    n_episodes: int = 10


@dataclass
class RunConfig:
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig)
             if f.name != "seed"}


def to_dict(cfg: RunConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {"seed": int(doc.get("seed", 0))}
    for name, f in ((f.name, f) for f in dataclasses.fields(RunConfig)
                    if f.name != "seed"):
        cls = f.default_factory
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ValueError(f"config section {name!r} must be an object")
        allowed = {sf.name for sf in dataclasses.fields(cls)}
        bad = set(section) - allowed
        if bad:
            raise ValueError(f"unknown key(s) in {name!r}: {sorted(bad)}")
        kwargs[name] = cls(**section)
    return RunConfig(**kwargs)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return from_dict(json.load(fh))


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """New config with dotted-path overrides applied.

    `overrides` maps paths like "graph.k" or "seed" to values; string
    values are parsed as JSON when possible. Unknown paths raise.
    """
    doc = to_dict(cfg)
    for path, value in (overrides.items() if isinstance(overrides, dict)
                        else overrides):
        if isinstance(value, str):
            value = _parse_value(value)
        parts = path.split(".")
        node = doc
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ValueError(f"unknown config path: {path!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ValueError(f"unknown config path: {path!r}")
        node[parts[-1]] = value
    return from_dict(doc)


def validate_config(cfg: RunConfig) -> None:
    """Range and enum checks; raises ValueError on the first violation."""
    def need(cond, msg):
        if not cond:
            raise ValueError(f"config: {msg}")

    need(cfg.dataset.kind in ("explore", "stitch"),
         f"dataset.kind must be explore or stitch, got {cfg.dataset.kind!r}")
    need(cfg.dataset.count >= 1, "dataset.count must be >= 1")
    need(cfg.dataset.length >= 2, "dataset.length must be >= 2")
    need(cfg.dataset.H_train >= 2, "dataset.H_train must be >= 2")
    need(cfg.dataset.dt > 0, "dataset.dt must be positive")
    need(cfg.dataset.speed > 0, "dataset.speed must be positive")
    need(cfg.embedding.mode in ("landmark_mds", "identity_position"),
         f"embedding.mode unknown: {cfg.embedding.mode!r}")
    need(cfg.embedding.n_landmarks >= 2, "embedding.n_landmarks must be >= 2")
    need(cfg.embedding.link_radius > 0, "embedding.link_radius must be positive")
    need(cfg.graph.N >= 2, "graph.N must be >= 2")
    need(cfg.graph.k >= 1, "graph.k must be >= 1")
    need(cfg.graph.alpha is None or cfg.graph.alpha > 0,
         "graph.alpha must be positive when set")
    need(cfg.graph.sample in ("uniform", "spread"),
         "graph.sample must be 'uniform' or 'spread'")
    need(cfg.planner.delta_t > 0, "planner.delta_t must be positive")
    need(cfg.planner.dilation >= 1.0, "planner.dilation must be >= 1")
    need(cfg.planner.dt_plan > 0, "planner.dt_plan must be positive")
    need(cfg.planner.route_margin >= 0,
         "planner.route_margin must be nonnegative")
    need(cfg.planner.delta > 0, "planner.delta must be positive")
    need(cfg.planner.speed > 0, "planner.speed must be positive")
    need(cfg.planner.K_viewpoints >= 1, "planner.K_viewpoints must be >= 1")
    need(cfg.planner.r_view > 0, "planner.r_view must be positive")
    need(cfg.denoiser.T_steps >= 1, "denoiser.T_steps must be >= 1")
    need(0 < cfg.denoiser.beta_min <= cfg.denoiser.beta_max < 1,
         "denoiser betas must satisfy 0 < beta_min <= beta_max < 1")
    need(cfg.denoiser.H_train >= 2, "denoiser.H_train must be >= 2")
    need(1 <= cfg.denoiser.overlap < cfg.denoiser.H_train,
         "denoiser.overlap must be in [1, H_train)")
    need(cfg.denoiser.gamma >= 0, "denoiser.gamma must be nonnegative")
    need(cfg.denoiser.guide_radius is None or cfg.denoiser.guide_radius > 0,
         "denoiser.guide_radius must be positive when set")
    need(cfg.denoiser.mu_overlap >= 0, "denoiser.mu_overlap must be nonnegative")
    need(cfg.denoiser.mode in ("deterministic", "stochastic"),
         f"denoiser.mode unknown: {cfg.denoiser.mode!r}")
    need(cfg.eval.n_seeds >= 1, "eval.n_seeds must be >= 1")
    need(cfg.eval.n_episodes >= 1, "eval.n_episodes must be >= 1")
    need(cfg.eval.goal_radius > 0, "eval.goal_radius must be positive")
    need(cfg.eval.r_obs > 0, "eval.r_obs must be positive")
    need(cfg.eval.time_factor >= 1.0, "eval.time_factor must be >= 1")
    need(cfg.eval.v_ref > 0, "eval.v_ref must be positive")
    need(len(cfg.eval.tasks) >= 1, "eval.tasks must be nonempty")
    for t in cfg.eval.tasks:
        need(isinstance(t, dict) and {"name", "start", "goal"} <= set(t),
             "each task needs name, start, goal")
    need(all(n >= 1 for n in cfg.eval.agent_counts),
         "eval.agent_counts must be positive")
    need(all(n >= 1 for n in cfg.eval.poi_counts),
         "eval.poi_counts must be positive")
    need(len(cfg.ablation.k_grid) >= 1, "ablation.k_grid must be nonempty")
    need(len(cfg.ablation.N_grid) >= 1, "ablation.N_grid must be nonempty")
    need(len(cfg.ablation.delta_t_grid) >= 1,
         "ablation.delta_t_grid must be nonempty")
    need(cfg.ablation.n_seeds >= 1, "ablation.n_seeds must be >= 1")
    need(cfg.ablation.n_episodes >= 1, "ablation.n_episodes must be >= 1")
