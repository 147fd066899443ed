"""Waypoint-guided compositional denoising with an analytic Gaussian prior.

A horizon of H plan steps is split into K overlapping segments. Each
segment carries a quadratic energy over its stacked states: position and
velocity second differences (smoothness), a first-order dynamics
residual p_{t+1} - p_t - dt_plan * v_t, weak tethers toward the
start-goal chord (strict positive definiteness), endpoint anchors on the
first and last segments, and the waypoint attraction term folded in with
scale gamma. Energy terms that straddle a segment boundary keep their
outside states as constants, re-read every step from the cross-fade
stitched estimate of the full horizon, so each segment is conditioned on
its neighbors' current values.

Because the target is Gaussian, the score of its noisy marginal is
closed-form and linear in the input, and the reverse process can be run
exactly: deterministic mode converges to the minimizer of the assembled
quadratic (verified against closed_form_map), stochastic mode samples
around it. Folding the waypoint term into the per-step Gaussian target
attenuates guidance automatically at high noise; at zero noise the
folded score equals the unguided score minus gamma times the energy
gradient.

All per-coordinate systems share one banded matrix per segment
(half-bandwidth 4 after interleaving positions and velocities), so every
denoise step is a banded solve with d right-hand sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solveh_banded
from scipy.sparse import coo_matrix

T_STEPS_DEFAULT = 200
BETA_MIN_DEFAULT = 0.002
BETA_MAX_DEFAULT = 0.7
SEGMENT_LEN_DEFAULT = 200
OVERLAP_DEFAULT = 20
W_END_DEFAULT = 1e4
TETHER_POS_FRACTION = 1e-3
TETHER_VEL_FRACTION = 1e-2
GAMMA_DEFAULT = 1.0
_BAND = 4                       # max index offset of any coupled pair


@dataclass(frozen=True, eq=False)
class DenoiseSchedule:
    """Variance-preserving noise schedule with precomputed cumulatives."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)


def make_schedule(T_steps: int = T_STEPS_DEFAULT,
                  beta_min: float = BETA_MIN_DEFAULT,
                  beta_max: float = BETA_MAX_DEFAULT) -> DenoiseSchedule:
    """Linear beta ramp from beta_min to beta_max over T_steps."""
    if T_steps < 1:
        raise ValueError("T_steps must be at least 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    if T_steps == 1:
        betas = np.array([beta_min])
    else:
        betas = beta_min + (beta_max - beta_min) * \
            np.arange(T_steps) / (T_steps - 1)
    alphas = 1.0 - betas
    return DenoiseSchedule(betas, alphas, np.cumprod(alphas))


@dataclass(frozen=True)
class SegmentLayout:
    """Overlapping segment tiling of a plan horizon."""

    H: int
    H_train: int
    O: int
    K: int
    segments: tuple

    def validate(self):
        assert self.K == len(self.segments) >= 1
        assert self.segments[0][0] == 0
        assert self.segments[-1][1] == self.H
        for (a, b) in self.segments:
            assert 0 <= a < b <= self.H
        for (a0, b0), (a1, b1) in zip(self.segments[:-1], self.segments[1:]):
            assert a0 < a1 <= b0      # contiguous cover, nonempty overlap
            assert b0 - a1 >= self.O


def make_layout(H: int, H_train: int = SEGMENT_LEN_DEFAULT,
                O: int = OVERLAP_DEFAULT) -> SegmentLayout:
    """Tile [0, H) with segments of length H_train sharing O indices.

    Segment k starts at k*(H_train - O); the last is right-aligned to end
    at H, so the final overlap may exceed O when the division is uneven.
    """
    if H < 2:
        raise ValueError("horizon must have at least 2 steps")
    if O < 1 or O >= H_train:
        raise ValueError("need 1 <= O < H_train")
    if H <= H_train:
        return SegmentLayout(H, H_train, O, 1, ((0, H),))
    stride = H_train - O
    K = max(1, math.ceil((H - O) / stride))
    segs = [(k * stride, k * stride + H_train) for k in range(K - 1)]
    segs.append((H - H_train, H))
    layout = SegmentLayout(H, H_train, O, K, tuple(segs))
    layout.validate()
    return layout


@dataclass(frozen=True)
class LocalPrior:
    """Quadratic trajectory energy: smoothness, dynamics, tethers, anchors.

    lambda_s weighs position second differences, lambda_d weighs velocity
    second differences and the dynamics residual. tether_pos/tether_vel
    are weak diagonal pulls toward per-step targets (the start-goal chord
    in the samplers) that keep every conditioned system strictly positive
    definite. w_end is the endpoint anchor strength.
    """

    lambda_s: float = 1.0
    lambda_d: float = 1.0
    dt_plan: float = 0.2
    w_end: float = W_END_DEFAULT
    tether_pos: float = None
    tether_vel: float = None

    def __post_init__(self):
        if self.lambda_s <= 0 or self.lambda_d <= 0:
            raise ValueError("prior weights must be positive")
        if self.tether_pos is None:
            object.__setattr__(self, "tether_pos",
                               TETHER_POS_FRACTION * self.lambda_s)
        if self.tether_vel is None:
            object.__setattr__(self, "tether_vel",
                               TETHER_VEL_FRACTION * self.lambda_d)


def fit_prior_weights(dataset, stride: int = 4) -> LocalPrior:
    """Calibrate prior weights to a dataset by second-moment matching.

    Trajectories are strided to the plan rate; lambda_s is set from the
    mean squared position second difference, lambda_d from the velocity
    second differences and dynamics residuals, so that the prior's
    roughness scale matches the data's.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    d = dataset.d
    dt_plan = dataset.dt * stride
    ms_s, ms_v, ms_dyn, n_s, n_d = 0.0, 0.0, 0.0, 0, 0
    for traj in dataset.trajectories:
        s = traj.states[::stride]
        if len(s) < 3:
            continue
        p, v = s[:, :d], s[:, d:]
        dp2 = p[2:] - 2 * p[1:-1] + p[:-2]
        dv2 = v[2:] - 2 * v[1:-1] + v[:-2]
        dyn = p[1:] - p[:-1] - dt_plan * v[:-1]
        ms_s += float(np.sum(dp2 ** 2))
        ms_v += float(np.sum(dv2 ** 2))
        ms_dyn += float(np.sum(dyn ** 2))
        n_s += dp2.size
        n_d += dyn.size
    if n_s == 0:
        raise ValueError("dataset too short to calibrate prior weights")
    eps = 1e-12
    lam_s = 1.0 / (2.0 * ms_s / n_s + eps)
    lam_d = 1.0 / (ms_v / n_s + ms_dyn / n_d + eps)
    return LocalPrior(lambda_s=lam_s, lambda_d=lam_d, dt_plan=dt_plan)


def triangular_weight(t, t_hat, r):
    """max(0, 1 - |t - t_hat| / r); peak 1 at t_hat, zero beyond r."""
    if r <= 0:
        raise ValueError("window radius must be positive")
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(t, dtype=float) - t_hat) / r)


@dataclass(frozen=True, eq=False)
class GuidanceField:
    """Waypoint attraction targets with triangular time windows."""

    centers: np.ndarray          # (M,) plan-step indices, may be fractional
    targets: np.ndarray          # (M, 2d) full waypoint states
    radius: float
    gamma: float
    H: int
    position_only: bool = False

    @property
    def M(self) -> int:
        return len(self.centers)

    def weights(self) -> np.ndarray:
        """(M, H) matrix of per-waypoint per-step triangular weights."""
        t = np.arange(self.H)
        return triangular_weight(t[None, :], self.centers[:, None], self.radius)


def empty_field(H: int, D: int) -> GuidanceField:
    return GuidanceField(np.zeros(0), np.zeros((0, D)), 1.0, 0.0, H)


def field_from_plan(plan, H: int, radius: float,
                    gamma: float = GAMMA_DEFAULT,
                    position_only: bool = False) -> GuidanceField:
    """Build a guidance field from a timed waypoint plan.

    Waypoint times are converted to plan-step indices by rounding
    t / dt_plan and clipping into [0, H-1].
    """
    centers = np.clip(np.round(plan.times / plan.dt_plan), 0, H - 1)
    return GuidanceField(centers.astype(float), plan.states.copy(),
                         float(radius), float(gamma), H, position_only)


def _field_distance2(traj, field: GuidanceField) -> np.ndarray:
    diff = traj[None, :, :] - field.targets[:, None, :]
    if field.position_only:
        d = field.targets.shape[1] // 2
        diff = diff[:, :, :d]
    return np.sum(diff ** 2, axis=2)        # (M, H)


def waypoint_energy(traj, field: GuidanceField) -> float:
    """Sum over waypoints and steps of lambda_m(t) * squared deviation."""
    traj = np.asarray(traj, dtype=float)
    if len(traj) != field.H:
        raise ValueError("trajectory length does not match field horizon")
    if field.M == 0:
        return 0.0
    return float(np.sum(field.weights() * _field_distance2(traj, field)))


def energy_gradient(traj, field: GuidanceField) -> np.ndarray:
    """d/ds_t of waypoint_energy: sum_m 2 lambda_m(t) (s_t - w_m)."""
    traj = np.asarray(traj, dtype=float)
    if len(traj) != field.H:
        raise ValueError("trajectory length does not match field horizon")
    grad = np.zeros_like(traj)
    if field.M == 0:
        return grad
    lam = field.weights()                   # (M, H)
    diff = traj[None, :, :] - field.targets[:, None, :]
    if field.position_only:
        d = field.targets.shape[1] // 2
        grad[:, :d] = np.sum(2.0 * lam[:, :, None] * diff[:, :, :d], axis=0)
    else:
        grad[:] = np.sum(2.0 * lam[:, :, None] * diff, axis=0)
    return grad


# -- quadratic assembly ------------------------------------------------------
# Per spatial coordinate the variables of a length-n window interleave as
# y = [p_0, v_0, p_1, v_1, ...]; all coordinates share the same matrix and
# differ only in the linear term, so solves batch d right-hand sides.

def _prior_terms(H: int, prior: LocalPrior):
    """Weighted squared linear forms of the prior over [0, H).

    Each term is (indices, coeffs, weight) with indices 2*t + kind
    (kind 0 position, 1 velocity) in the per-coordinate layout.
    """
    terms = []
    for t in range(1, H - 1):
        terms.append(((2 * (t - 1), 2 * t, 2 * (t + 1)),
                      (1.0, -2.0, 1.0), prior.lambda_s))
        terms.append(((2 * (t - 1) + 1, 2 * t + 1, 2 * (t + 1) + 1),
                      (1.0, -2.0, 1.0), prior.lambda_d))
    for t in range(H - 1):
        terms.append(((2 * (t + 1), 2 * t, 2 * t + 1),
                      (1.0, -1.0, -prior.dt_plan), prior.lambda_d))
    return terms


def _chord_targets(start, goal, H: int, dt_plan: float) -> np.ndarray:
    """(2H, d) interleaved tether targets: linear position chord and its
    constant velocity."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    d = len(start) // 2
    out = np.zeros((2 * H, d))
    frac = np.linspace(0.0, 1.0, H)[:, None]
    out[0::2] = start[None, :d] * (1 - frac) + goal[None, :d] * frac
    out[1::2] = (goal[:d] - start[:d]) / max((H - 1) * dt_plan, 1e-12)
    return out


def _interleave(states: np.ndarray) -> np.ndarray:
    """(n, 2d) trajectory -> (2n, d) per-coordinate stacked form."""
    n, D = states.shape
    d = D // 2
    return states.reshape(n, 2, d).reshape(2 * n, d)


def _deinterleave(y: np.ndarray) -> np.ndarray:
    n2, d = y.shape
    return y.reshape(n2 // 2, 2, d).reshape(n2 // 2, 2 * d)


class _SegmentSystem:
    """One segment's quadratic in banded + sparse form.

    Energy per coordinate: y^T Q y - 2 r^T y with r = r0 + B @ glob,
    where glob is the interleaved full-horizon estimate supplying the
    constants of boundary-straddling terms and overlap-coupling targets.
    """

    def __init__(self, a, b, q_entries, b_entries, r0, H):
        self.a, self.b = a, b
        n2 = 2 * (b - a)
        qi = np.array([e[0] for e in q_entries], dtype=int)
        qj = np.array([e[1] for e in q_entries], dtype=int)
        qv = np.array([e[2] for e in q_entries], dtype=float)
        self.Q = coo_matrix((qv, (qi, qj)), shape=(n2, n2)).tocsr()
        bi = np.array([e[0] for e in b_entries], dtype=int)
        bj = np.array([e[1] for e in b_entries], dtype=int)
        bv = np.array([e[2] for e in b_entries], dtype=float)
        self.B = coo_matrix((bv, (bi, bj)), shape=(n2, 2 * H)).tocsr()
        self.r0 = r0
        self.u = min(_BAND, n2 - 1)
        ab = np.zeros((self.u + 1, n2))
        for off in range(self.u + 1):
            ab[self.u - off, off:] = self.Q.diagonal(off)
        self.ab_Q = ab

    def rhs(self, glob):
        return self.r0 + self.B @ glob

    def score(self, y, r, alpha_bar):
        """Score of the noisy marginal at signal fraction alpha_bar."""
        ab_M = (2.0 * (1.0 - alpha_bar)) * self.ab_Q
        ab_M[self.u] += alpha_bar
        rhs = self.Q @ y - math.sqrt(alpha_bar) * r
        return -2.0 * solveh_banded(ab_M, rhs)


def _anchor(q_entries, r0, i, state, weight, d):
    state = np.asarray(state, dtype=float)
    q_entries.append((2 * i, 2 * i, weight))
    q_entries.append((2 * i + 1, 2 * i + 1, weight))
    r0[2 * i] += weight * state[:d]
    r0[2 * i + 1] += weight * state[d:]


def _collect_segment(a, b, d, terms, prior, field, chord,
                     anchor_start=None, anchor_goal=None,
                     mu_overlap=0.0, segments=None):
    """Entry lists (Q, B) and constant linear term for segment [a, b)."""
    n2 = 2 * (b - a)
    q_entries, b_entries = [], []
    r0 = np.zeros((n2, d))

    lo, hi = 2 * a, 2 * b
    for idxs, coeffs, w in terms:
        if not any(lo <= i < hi for i in idxs):
            continue
        own = [(i - lo, c) for i, c in zip(idxs, coeffs) if lo <= i < hi]
        ext = [(i, c) for i, c in zip(idxs, coeffs) if not lo <= i < hi]
        for i, ci in own:
            for j, cj in own:
                q_entries.append((i, j, w * ci * cj))
            for jg, cj in ext:
                b_entries.append((i, jg, -w * ci * cj))

    for t in range(a, b):
        i = 2 * (t - a)
        q_entries.append((i, i, prior.tether_pos))
        q_entries.append((i + 1, i + 1, prior.tether_vel))
        r0[i] += prior.tether_pos * chord[2 * t]
        r0[i + 1] += prior.tether_vel * chord[2 * t + 1]

    if anchor_start is not None:
        _anchor(q_entries, r0, 0, anchor_start, prior.w_end, d)
    if anchor_goal is not None:
        _anchor(q_entries, r0, b - a - 1, anchor_goal, prior.w_end, d)

    if field.gamma > 0 and field.M > 0:
        lam = field.weights()               # (M, H)
        for t in range(a, b):
            i = 2 * (t - a)
            for m in range(field.M):
                lm = lam[m, t]
                if lm <= 0:
                    continue
                q_entries.append((i, i, field.gamma * lm))
                r0[i] += field.gamma * lm * field.targets[m, :d]
                if not field.position_only:
                    q_entries.append((i + 1, i + 1, field.gamma * lm))
                    r0[i + 1] += field.gamma * lm * field.targets[m, d:]

    if mu_overlap > 0 and segments is not None:
        shared = set()
        for (a2, b2) in segments:
            if (a2, b2) == (a, b):
                continue
            shared.update(range(max(a, a2), min(b, b2)))
        for t in sorted(shared):
            i = 2 * (t - a)
            for off in (0, 1):
                q_entries.append((i + off, i + off, mu_overlap))
                b_entries.append((i + off, 2 * t + off, mu_overlap))

    return q_entries, b_entries, r0


def _stitch_weights(segments):
    """Per-segment cross-fade weight vectors over their index ranges."""
    wts = []
    for k, (a, b) in enumerate(segments):
        wv = np.ones(b - a)
        if k > 0:
            m = min(b, segments[k - 1][1]) - a
            wv[:m] = np.minimum(wv[:m], np.linspace(0, 1, m + 2)[1:-1])
        if k < len(segments) - 1:
            lo = max(a, segments[k + 1][0])
            m = b - lo
            wv[lo - a:] = np.minimum(wv[lo - a:],
                                     np.linspace(1, 0, m + 2)[1:-1])
        wts.append(wv)
    return wts


def _stitch(segments, wts, ys, H, d):
    out = np.zeros((2 * H, d))
    tot = np.zeros(2 * H)
    for (a, b), wv, y in zip(segments, wts, ys):
        w2 = np.repeat(wv, 2)
        out[2 * a:2 * b] += w2[:, None] * y
        tot[2 * a:2 * b] += w2
    return out / tot[:, None]


def local_prior_score(segment, alpha_bar, prior: LocalPrior, anchors=None,
                      neighbor_states=None, overlap_targets=None,
                      tether_targets=None) -> np.ndarray:
    """Score of the noisy marginal of one segment's conditioned Gaussian.

    segment: (L, 2d) states. anchors: list of (local index, state) pairs
    conditioned at strength prior.w_end. neighbor_states: (left, right)
    arrays of up to 2 states just outside each boundary, entering the
    straddling energy terms as constants. overlap_targets: list of
    (local index, state, weight) soft pulls. tether_targets: (L, 2d)
    per-step tether targets, zero if omitted. The result is linear in
    the segment, and at alpha_bar=1 it vanishes exactly at the
    conditioned mean.
    """
    segment = np.asarray(segment, dtype=float)
    if segment.ndim != 2 or len(segment) < 1:
        raise ValueError("segment must be a nonempty (L, 2d) array")
    if not (0.0 < alpha_bar <= 1.0):
        raise ValueError("alpha_bar must lie in (0, 1]")
    L, D = segment.shape
    d = D // 2
    left = np.zeros((0, D)) if neighbor_states is None else \
        np.atleast_2d(np.asarray(neighbor_states[0], dtype=float)) \
        if neighbor_states[0] is not None and len(neighbor_states[0]) else \
        np.zeros((0, D))
    right = np.zeros((0, D)) if neighbor_states is None else \
        np.atleast_2d(np.asarray(neighbor_states[1], dtype=float)) \
        if neighbor_states[1] is not None and len(neighbor_states[1]) else \
        np.zeros((0, D))

    # virtual horizon [0, nl + L + nr) with the segment in the middle
    nl, nr = len(left), len(right)
    Hv = nl + L + nr
    a, b = nl, nl + L
    terms = _prior_terms(Hv, prior)
    tt = np.zeros((2 * Hv, d))
    if tether_targets is not None:
        tt[2 * a:2 * b] = _interleave(np.asarray(tether_targets, dtype=float))
    qe, be, r0 = _collect_segment(a, b, d, terms, prior,
                                  empty_field(Hv, D), tt)
    if anchors:
        for (i, state) in anchors:
            _anchor(qe, r0, i, state, prior.w_end, d)
    if overlap_targets:
        for (i, state, w) in overlap_targets:
            _anchor(qe, r0, i, state, w, d)
    sys = _SegmentSystem(a, b, qe, be, r0, Hv)

    glob = np.zeros((2 * Hv, d))
    if nl:
        glob[:2 * nl] = _interleave(left)
    if nr:
        glob[2 * (nl + L):] = _interleave(right)
    r = sys.r0 + sys.B @ glob
    y = _interleave(segment)
    return _deinterleave(sys.score(y, r, alpha_bar))


@dataclass
class GuidedTrajectory:
    """Stitched denoised trajectory plus run diagnostics."""

    states: np.ndarray           # (H, 2d)
    stitch_weights: list         # per-segment cross-fade weight vectors
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def H(self) -> int:
        return len(self.states)

    def to_trace(self, dt: float):
        from .sim import Trace
        d = self.states.shape[1] // 2
        return Trace(self.states.copy(),
                     np.zeros((max(self.H - 1, 0), d)), dt)


def guided_denoise(layout: SegmentLayout, prior: LocalPrior,
                   field: GuidanceField, schedule: DenoiseSchedule,
                   endpoints, mode: str = "deterministic", seed: int = 0,
                   mu_overlap: float = 0.0) -> GuidedTrajectory:
    """Run the reverse process over all segments and stitch the result.

    Per schedule step, every segment's score is evaluated against the
    previous step's stitched full-horizon estimate (synchronous update),
    then updated: deterministic mode follows the noise-free reverse map,
    stochastic mode samples the reverse kernel using one random stream
    per segment. The final stitched clean estimate is returned.

    mu_overlap adds an extra quadratic pull of shared indices toward the
    neighbors' current estimates; the boundary-straddling prior terms
    already condition each segment on its neighbors, so the default adds
    none.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown mode: {mode!r}")
    start = np.asarray(endpoints[0], dtype=float)
    goal = np.asarray(endpoints[1], dtype=float)
    if not (np.isfinite(start).all() and np.isfinite(goal).all()):
        raise ValueError("endpoints must be finite")
    D = len(start)
    d = D // 2
    if field.M > 0 and field.H != layout.H:
        raise ValueError("field horizon does not match layout horizon")
    if field.M > 0 and field.targets.shape[1] != D:
        raise ValueError("field target dimension does not match endpoints")

    H = layout.H
    terms = _prior_terms(H, prior)
    chord = _chord_targets(start, goal, H, prior.dt_plan)
    systems = []
    for (a, b) in layout.segments:
        qe, be, r0 = _collect_segment(
            a, b, d, terms, prior, field, chord,
            anchor_start=start if a == 0 else None,
            anchor_goal=goal if b == H else None,
            mu_overlap=mu_overlap, segments=layout.segments)
        systems.append(_SegmentSystem(a, b, qe, be, r0, H))
    wts = _stitch_weights(layout.segments)

    rngs = [np.random.default_rng([seed, k]) for k in range(layout.K)]
    ys, yhats = [], []
    for k, (a, b) in enumerate(layout.segments):
        n2 = 2 * (b - a)
        if mode == "deterministic":
            ys.append(np.zeros((n2, d)))
        else:
            ys.append(rngs[k].standard_normal((n2, d)))
        yhats.append(np.zeros((n2, d)))

    betas, abars = schedule.betas, schedule.alpha_bars
    for it in range(schedule.T - 1, -1, -1):
        ab = abars[it]
        ab_prev = abars[it - 1] if it > 0 else 1.0
        bt = betas[it]
        at = 1.0 - bt
        glob = _stitch(layout.segments, wts, yhats, H, d)
        new_y, new_yh = [], []
        for k, sys in enumerate(systems):
            y = ys[k]
            sc = sys.score(y, sys.rhs(glob), ab)
            yhat = (y + (1.0 - ab) * sc) / math.sqrt(ab)
            if mode == "deterministic":
                eps = -math.sqrt(1.0 - ab) * sc
                y_next = math.sqrt(ab_prev) * yhat + \
                    math.sqrt(max(1.0 - ab_prev, 0.0)) * eps
            elif it > 0:
                btil = (1.0 - ab_prev) / (1.0 - ab) * bt
                mean = (math.sqrt(ab_prev) * bt * yhat +
                        math.sqrt(at) * (1.0 - ab_prev) * y) / (1.0 - ab)
                y_next = mean + math.sqrt(btil) * \
                    rngs[k].standard_normal(y.shape)
            else:
                y_next = yhat
            if not np.isfinite(y_next).all():
                raise RuntimeError(
                    f"numerical divergence at denoise step {it}")
            new_y.append(y_next)
            new_yh.append(yhat)
        ys, yhats = new_y, new_yh

    glob = _stitch(layout.segments, wts, yhats, H, d)
    states = _deinterleave(glob)

    disagreement = 0.0
    for (k, (a0, b0)), (a1, b1) in zip(enumerate(layout.segments[:-1]),
                                       layout.segments[1:]):
        lo, hi = max(a0, a1), min(b0, b1)
        s0 = _deinterleave(yhats[k][2 * (lo - a0):2 * (hi - a0)])
        s1 = _deinterleave(yhats[k + 1][2 * (lo - a1):2 * (hi - a1)])
        disagreement = max(disagreement, float(np.abs(s0 - s1).max()))
    scale = max(1.0, float(np.abs(states).max()))
    diag = {
        "E_W_final": waypoint_energy(states, field) if field.M else 0.0,
        "overlap_disagreement": disagreement,
        "overlap_flagged": bool(disagreement > 1e-2 * scale),
        "steps": schedule.T,
        "mode": mode,
        "seed": seed,
        "gamma": field.gamma,
        "mu_overlap": mu_overlap,
        "lambda_s": prior.lambda_s,
        "lambda_d": prior.lambda_d,
    }
    return GuidedTrajectory(states, wts, diag)


def closed_form_map(prior: LocalPrior, field: GuidanceField, endpoints,
                    H: int) -> np.ndarray:
    """Exact minimizer of the full-horizon energy: prior + chord tethers
    + endpoint anchors + gamma * waypoint attraction. (H, 2d) states."""
    if H < 2:
        raise ValueError("horizon must have at least 2 steps")
    start = np.asarray(endpoints[0], dtype=float)
    goal = np.asarray(endpoints[1], dtype=float)
    d = len(start) // 2
    if field.M > 0 and field.H != H:
        raise ValueError("field horizon does not match H")
    terms = _prior_terms(H, prior)
    chord = _chord_targets(start, goal, H, prior.dt_plan)
    qe, be, r0 = _collect_segment(0, H, d, terms, prior, field, chord,
                                  anchor_start=start, anchor_goal=goal)
    sys = _SegmentSystem(0, H, qe, be, r0, H)
    y = solveh_banded(sys.ab_Q, sys.r0)
    return _deinterleave(y)
