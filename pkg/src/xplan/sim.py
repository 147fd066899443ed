"""Double-integrator simulation: Euler stepping, PD tracking, task metrics.

Dynamics follow p' = p + dt*v, v' = v + dt*a with the acceleration clipped
componentwise before use, so a recorded trace replays bit-exactly through
step(). Collision does not alter the motion; it is recorded as an event,
and a rollout aborts only after more than one second of continuous contact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .worlds import World, points_blocked

A_MAX = 3.0
DT_DEFAULT = 0.05
CONTACT_LIMIT_S = 1.0
DEFAULT_GAINS = (8.0, 4.0)


def clip_action(action, a_max: float = A_MAX) -> np.ndarray:
    return np.clip(np.asarray(action, dtype=float), -a_max, a_max)


def step(state, action, dt: float, a_max: float = A_MAX) -> np.ndarray:
    """One Euler step. Position integrates the pre-step velocity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.asarray(state, dtype=float)
    a = clip_action(action, a_max)
    d = a.shape[-1]
    if s.shape[-1] != 2 * d:
        raise ValueError(f"state dim {s.shape[-1]} does not match action dim {d}")
    out = np.empty_like(s)
    out[..., :d] = s[..., :d] + dt * s[..., d:]
    out[..., d:] = s[..., d:] + dt * a
    return out


@dataclass
class Trace:
    """A rollout: states (n, 2d), actions (n-1, d), constant dt, events."""
    states: np.ndarray
    actions: np.ndarray
    dt: float
    events: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.states.shape[1] // 2

    @property
    def n_steps(self) -> int:
        return len(self.states)

    def positions(self) -> np.ndarray:
        return self.states[:, :self.d]

    def validate(self) -> None:
        if len(self.actions) != len(self.states) - 1:
            raise ValueError("actions must be one shorter than states")
        if not np.isfinite(self.states).all():
            raise ValueError("non-finite state in trace")

    def to_csv(self, path) -> None:
        d = self.d
        ev = {}
        for idx, kind in self.events:
            ev.setdefault(idx, []).append(kind)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t"]
                       + [f"p_{i}" for i in range(d)]
                       + [f"v_{i}" for i in range(d)]
                       + [f"a_{i}" for i in range(d)]
                       + ["event"])
            for i, s in enumerate(self.states):
                act = self.actions[i] if i < len(self.actions) else [""] * d
                w.writerow([i, repr(i * self.dt)]
                           + [repr(float(x)) for x in s]
                           + [repr(float(x)) if x != "" else "" for x in act]
                           + [";".join(ev.get(i, []))])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path) as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        d = sum(1 for name in header if name.startswith("p_"))
        states, actions, events = [], [], []
        dt = None
        for i, row in enumerate(rows[1:]):
            t = float(row[1])
            if i == 1:
                dt = t
            states.append([float(x) for x in row[2:2 + 2 * d]])
            a_cols = row[2 + 2 * d: 2 + 3 * d]
            if all(x != "" for x in a_cols):
                actions.append([float(x) for x in a_cols])
            if row[-1]:
                for kind in row[-1].split(";"):
                    events.append((i, kind))
        return cls(np.array(states), np.array(actions),
                   dt if dt is not None else DT_DEFAULT, events)


def track_rollout(reference, world: World, gains=DEFAULT_GAINS,
                  dt: float = DT_DEFAULT, max_steps: int | None = None,
                  a_max: float = A_MAX) -> Trace:
    """Track a reference state sequence with a per-axis PD law.

    The rollout starts at reference[0], consumes one reference state per
    step and holds the last one. Aborts once contact has persisted for
    more than CONTACT_LIMIT_S seconds.
    """
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 2 or len(ref) == 0:
        raise ValueError("reference must be a nonempty (n, 2d) array")
    kp, kd = gains
    if kp < 0 or kd < 0:
        raise ValueError("gains must be nonnegative")
    d = ref.shape[1] // 2
    if max_steps is None:
        max_steps = len(ref) - 1
    contact_limit = int(np.ceil(CONTACT_LIMIT_S / dt))

    states = [ref[0].copy()]
    actions = []
    events = []
    contact_run = 1 if points_blocked(world, ref[0, :d][None])[0] else 0
    if contact_run:
        events.append((0, "collision"))
    s = ref[0].copy()
    for i in range(max_steps):
        target = ref[min(i + 1, len(ref) - 1)]
        a = kp * (target[:d] - s[:d]) + kd * (target[d:] - s[d:])
        a = clip_action(a, a_max)
        s = step(s, a, dt, a_max)
        actions.append(a)
        states.append(s.copy())
        if points_blocked(world, s[:d][None])[0]:
            contact_run += 1
            events.append((i + 1, "collision"))
            if contact_run > contact_limit:
                events.append((i + 1, "persistent_contact"))
                break
        else:
            contact_run = 0
    return Trace(np.array(states), np.array(actions), dt, events)


def goal_reached(trace: Trace, goal_position, radius: float) -> bool:
    if radius <= 0:
        raise ValueError("radius must be positive")
    g = np.asarray(goal_position, dtype=float)
    dist = np.linalg.norm(trace.positions() - g[None, :], axis=1)
    return bool((dist <= radius).any())


def min_pairwise_separation(traces) -> float:
    """Min over trace pairs and shared timesteps of the position distance."""
    if len(traces) < 2:
        return float("inf")
    dts = {t.dt for t in traces}
    if len(dts) != 1:
        raise ValueError("traces must share dt")
    n = min(t.n_steps for t in traces)
    best = float("inf")
    for i in range(len(traces)):
        pi = traces[i].positions()[:n]
        for j in range(i + 1, len(traces)):
            pj = traces[j].positions()[:n]
            best = min(best, float(np.linalg.norm(pi - pj, axis=1).min()))
    return best


def coverage_curve(trace: Trace, pois, r_obs: float) -> np.ndarray:
    """Step curve (time, fraction of POIs seen so far), one row per step."""
    if r_obs <= 0:
        raise ValueError("r_obs must be positive")
    ps = np.asarray(pois, dtype=float)
    if len(ps) == 0:
        raise ValueError("pois must be nonempty")
    pos = trace.positions()
    # (n_steps, n_pois) visibility, then cumulative any() per poi
    within = np.linalg.norm(pos[:, None, :] - ps[None, :, :], axis=2) <= r_obs
    seen = np.maximum.accumulate(within, axis=0)
    frac = seen.mean(axis=1)
    times = np.arange(trace.n_steps) * trace.dt
    return np.column_stack([times, frac])
