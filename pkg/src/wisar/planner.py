"""Per-UAV receding-horizon waypoint optimizer.

Each tick the planner searches a horizon of n_l waypoints, spaced exactly
step_len apart, that maximizes the discounted sum of smooth disk-detection
probability over future cloud slices, minus a proximity barrier toward the
nearest neighbor, subject to a turning-angle bound and the Voronoi half-plane
cell induced by connected neighbors. Only the second waypoint is executed.

The solver is a deterministic heading-tree search: each step's heading change
is discretized into n_headings bins inside [-theta_max, theta_max], infeasible
branches are pruned, and the best leaves get one golden-section refinement
pass per heading coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .density import MarkSet
from .lost_person import ParticleCloud
from .terrain import ConfigurationError

DEG = np.pi / 180.0


@dataclass(frozen=True)
class PlannerWeights:
    alpha: float = 10.0         # objective scale, > 1
    epsilon: float = 0.1        # proximity scale in (0, 1)
    k_1: float = 1.0
    k_2: float = 1.0
    xi: float = 2.0             # proximity pole steepness
    theta_max: float = 60.0     # max turning angle per step (degrees)
    n_l: int = 3                # horizon length in waypoints
    step_len: float = 150.0     # v_u * dt (m)
    d_min: float = 100.0        # collision floor (m)
    d_max: float = 15000.0      # communication ceiling (m)
    n_headings: int = 9         # tree branching per level
    n_headings_free: int = 16   # first-level fan when no previous heading
    refine_top: int = 3         # leaves polished by golden-section
    proximity_cap: float = 1e6  # replaces the poles off-feasible
    smooth_frac: float = 0.1    # smooth-POA shoulder = smooth_frac * R

    def validate(self) -> None:
        if self.alpha <= 1:
            raise ConfigurationError("alpha must be > 1")
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must be in (0, 1)")
        if self.d_min >= self.d_max:
            raise ConfigurationError("need d_min < d_max")
        if self.n_l < 2:
            raise ConfigurationError("n_l must be >= 2")
        if self.theta_max <= 0 or self.step_len <= 0 or self.n_headings < 2:
            raise ConfigurationError("bad theta_max/step_len/n_headings")


@dataclass(frozen=True)
class HalfPlane:
    """One linear constraint: y vs a*x + b, or x vs c for vertical bisectors."""

    side: str               # below | above | left | right
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0

    def contains(self, p, tol: float = 0.0) -> bool:
        x, y = float(p[0]), float(p[1])
        if self.side == "below":
            return y <= self.a * x + self.b + tol
        if self.side == "above":
            return y >= self.a * x + self.b - tol
        if self.side == "left":
            return x <= self.c + tol
        return x >= self.c - tol

    def clearance(self, p) -> float:
        """Signed perpendicular distance, positive inside the half-plane."""
        x, y = float(p[0]), float(p[1])
        if self.side in ("below", "above"):
            d = (self.a * x + self.b - y) / np.hypot(self.a, 1.0)
            return d if self.side == "below" else -d
        d = self.c - x
        return d if self.side == "left" else -d


def voronoi_half_planes(self_pos, neighbors) -> list:
    """Perpendicular-bisector constraints keeping self in its Voronoi cell."""
    p = np.asarray(self_pos, dtype=float)
    planes = []
    for nb in neighbors:
        q = np.asarray(nb, dtype=float)
        n = q - p
        dist = np.linalg.norm(n)
        if dist < 1e-9:
            raise ConfigurationError("coincident UAV positions have no bisector")
        m = 0.5 * (p + q)
        if abs(n[1]) <= 1e-12 * dist:
            side = "left" if p[0] < m[0] else "right"
            planes.append(HalfPlane(side=side, c=float(m[0])))
        else:
            a = -n[0] / n[1]
            b = float(m[1] - a * m[0])
            side = "below" if p[1] < a * p[0] + b else "above"
            planes.append(HalfPlane(side=side, a=float(a), b=b))
    return planes


def turning_angle(p_prev, p_cur, p_next) -> float:
    """Absolute heading change between the two segments, in [0, 180] degrees."""
    v1 = np.asarray(p_cur, dtype=float) - np.asarray(p_prev, dtype=float)
    v2 = np.asarray(p_next, dtype=float) - np.asarray(p_cur, dtype=float)
    if np.linalg.norm(v1) < 1e-12 or np.linalg.norm(v2) < 1e-12:
        return 0.0
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    dot = float(v1 @ v2)
    return float(np.degrees(np.arctan2(abs(cross), dot)))


def proximity_cost(d: float, w: PlannerWeights) -> float:
    """Two-pole barrier keeping separation inside (d_min, d_max), capped."""
    if d <= w.d_min or d >= w.d_max:
        return w.proximity_cap
    f = w.k_1 / (d - w.d_min) ** w.xi + w.k_2 / (w.d_max - d) ** w.xi
    return min(f, w.proximity_cap)


@dataclass
class PlanContext:
    """Frozen per-tick inputs for one UAV's planning problem."""

    wp1: np.ndarray                     # current position
    prev_pos: np.ndarray | None         # previous position (turning reference)
    neighbors: list                     # other UAVs' current positions
    half_planes: list                   # own Voronoi cell constraints
    cloud: ParticleCloud
    marks: MarkSet
    stage_slices: tuple                 # cloud slice per horizon stage, len n_l
    R: float                            # detection radius (m)

    def __post_init__(self):
        self.wp1 = np.asarray(self.wp1, dtype=float)
        if self.prev_pos is not None:
            self.prev_pos = np.asarray(self.prev_pos, dtype=float)
        self.neighbors = [np.asarray(n, dtype=float) for n in self.neighbors]


def make_stage_slices(cloud: ParticleCloud, t_seconds: float, dt_plan: float,
                      n_l: int) -> tuple:
    """Cloud slice index for each horizon stage starting at wall time t."""
    return tuple(cloud.slice_for_time(t_seconds + j * dt_plan)
                 for j in range(n_l))


def _heading_vec(theta_deg: float) -> np.ndarray:
    t = theta_deg * DEG
    return np.array([np.cos(t), np.sin(t)])


def _stage_gain(ctx: PlanContext, wp, slice_idx: int, claimed: np.ndarray,
                h: float):
    """(smooth POA over unclaimed particles, hard-coverage mask) at wp."""
    pts = ctx.cloud.at_step(slice_idx)
    dx = pts[:, 0] - wp[0]
    dy = pts[:, 1] - wp[1]
    d = np.sqrt(dx * dx + dy * dy)
    # logistic((R - d) / h) via tanh, which saturates without overflow
    contrib = 0.5 * (1.0 + np.tanh(0.5 * (ctx.R - d) / h))
    gain = float(contrib[~claimed].sum() / ctx.cloud.n_agents)
    return gain, d <= ctx.R


def _score_path(path, ctx: PlanContext, weights: PlannerWeights) -> float:
    """Greedy-marked stage sum minus the wp_2 proximity barrier (unvalidated)."""
    h = weights.smooth_frac * ctx.R
    claimed = ctx.marks.flags.copy()
    total = 0.0
    for j in range(weights.n_l):
        s = ctx.stage_slices[min(j, len(ctx.stage_slices) - 1)]
        gain, covered = _stage_gain(ctx, path[j], s, claimed, h)
        total += weights.alpha * gain
        claimed |= covered
    if ctx.neighbors:
        d_near = min(float(np.hypot(path[1][0] - nb[0], path[1][1] - nb[1]))
                     for nb in ctx.neighbors)
        total -= weights.epsilon * proximity_cost(d_near, weights)
    return total


def horizon_objective(path, ctx: PlanContext, weights: PlannerWeights) -> float:
    """Score a full horizon path (n_l waypoints spaced step_len apart).

    Stage j scores the smooth disk POA on its cloud slice; particles covered
    by earlier stages are claimed greedily so no particle is counted twice
    inside one horizon. The proximity barrier is charged once, at the first
    executed waypoint.
    """
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape != (weights.n_l, 2):
        raise ConfigurationError(f"path must be ({weights.n_l}, 2)")
    spacing = np.linalg.norm(np.diff(path, axis=0), axis=1)
    if np.any(np.abs(spacing - weights.step_len) > 1e-6):
        raise ConfigurationError("consecutive waypoints must be step_len apart")
    return _score_path(path, ctx, weights)


@dataclass
class PlanResult:
    waypoint: np.ndarray        # wp_2, the executed next position
    objective: float            # horizon objective of the chosen path
    heading: float              # heading of the executed segment (degrees)
    path: np.ndarray            # full horizon, (n_l, 2)
    degenerate: bool = False    # all headings blocked; clearance fallback


class _Node:
    __slots__ = ("pos", "heading", "score", "claimed", "deltas")

    def __init__(self, pos, heading, score, claimed, deltas):
        self.pos = pos
        self.heading = heading
        self.score = score
        self.claimed = claimed
        self.deltas = deltas


def _golden_max(f, lo: float, hi: float, iters: int = 14):
    """Golden-section maximization on [lo, hi]; returns (x_best, f_best)."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def plan_step(ctx: PlanContext, weights: PlannerWeights) -> PlanResult:
    """Choose the next waypoint by heading-tree search plus local refinement.

    Feasibility is structural for turning (headings are drawn inside the
    allowed fan) and pruned for half-planes. When every first-level heading
    is blocked, falls back to the heading whose waypoint has maximum signed
    clearance from the violated constraints and flags the result degenerate.
    """
    weights.validate()
    wp1 = ctx.wp1
    step = weights.step_len
    h = weights.smooth_frac * ctx.R

    prev_heading = None
    if ctx.prev_pos is not None:
        v = wp1 - ctx.prev_pos
        if np.linalg.norm(v) > 1e-9:
            prev_heading = float(np.degrees(np.arctan2(v[1], v[0])))

    if prev_heading is None:
        first_fan = np.linspace(0.0, 360.0, weights.n_headings_free,
                                endpoint=False)
        free_first = True
    else:
        first_fan = prev_heading + np.linspace(-weights.theta_max,
                                               weights.theta_max,
                                               weights.n_headings)
        free_first = False
    deltas = np.linspace(-weights.theta_max, weights.theta_max,
                         weights.n_headings)

    base_claimed = ctx.marks.flags.copy()
    gain0, covered0 = _stage_gain(ctx, wp1, ctx.stage_slices[0], base_claimed, h)
    root_score = weights.alpha * gain0
    root_claimed = base_claimed | covered0

    # level 1: wp_2 candidates, charged with the proximity barrier
    level = []
    clearance_best = (-np.inf, None)  # fallback if everything is blocked
    for theta in first_fan:
        wp2 = wp1 + step * _heading_vec(theta)
        if ctx.half_planes:
            clear = min(hp.clearance(wp2) for hp in ctx.half_planes)
            if clear > clearance_best[0]:
                clearance_best = (clear, theta)
            if clear < 0.0:
                continue
        gain, covered = _stage_gain(ctx, wp2, ctx.stage_slices[min(1, weights.n_l - 1)],
                                    root_claimed, h)
        score = root_score + weights.alpha * gain
        if ctx.neighbors:
            d_near = min(float(np.linalg.norm(wp2 - nb)) for nb in ctx.neighbors)
            score -= weights.epsilon * proximity_cost(d_near, weights)
        level.append(_Node(wp2, float(theta), score, root_claimed | covered,
                           (float(theta),)))

    if not level:
        theta = clearance_best[1] if clearance_best[1] is not None else first_fan[0]
        wp2 = wp1 + step * _heading_vec(theta)
        path = _path_from_deltas(ctx, weights, (float(theta),))
        return PlanResult(waypoint=wp2, objective=-np.inf, heading=float(theta),
                          path=path, degenerate=True)

    deepest = list(level)
    for depth in range(2, weights.n_l):
        nxt = []
        slice_idx = ctx.stage_slices[min(depth, weights.n_l - 1)]
        for node in deepest:
            for d_theta in deltas:
                theta = node.heading + d_theta
                wp = node.pos + step * _heading_vec(theta)
                if ctx.half_planes and any(hp.clearance(wp) < 0.0
                                           for hp in ctx.half_planes):
                    continue
                gain, covered = _stage_gain(ctx, wp, slice_idx, node.claimed, h)
                nxt.append(_Node(wp, float(theta),
                                 node.score + weights.alpha * gain,
                                 node.claimed | covered,
                                 node.deltas + (float(d_theta),)))
        if not nxt:
            break  # keep the deepest feasible frontier
        deepest = nxt

    deepest.sort(key=lambda n: -n.score)
    best_deltas = deepest[0].deltas
    best_value = deepest[0].score

    # golden-section polish, one pass per heading coordinate on top leaves
    full_depth = len(best_deltas) == weights.n_l - 1
    if full_depth and weights.refine_top > 0:
        if free_first:
            first_halfwidth = 180.0 / weights.n_headings_free
        else:
            first_halfwidth = weights.theta_max / max(weights.n_headings - 1, 1)
        delta_halfwidth = weights.theta_max / max(weights.n_headings - 1, 1)

        def evaluate(dl):
            path = _path_from_deltas(ctx, weights, dl)
            if ctx.half_planes:
                for wp in path[1:]:
                    if any(hp.clearance(wp) < 0.0 for hp in ctx.half_planes):
                        return -np.inf
            return _score_path(path, ctx, weights)

        for leaf in deepest[:weights.refine_top]:
            dl = list(leaf.deltas)
            cur = leaf.score
            for i in range(len(dl)):
                if i == 0 and free_first:
                    lo, hi = dl[0] - first_halfwidth, dl[0] + first_halfwidth
                elif i == 0:
                    lo = max(dl[0] - first_halfwidth,
                             prev_heading - weights.theta_max)
                    hi = min(dl[0] + first_halfwidth,
                             prev_heading + weights.theta_max)
                else:
                    lo = max(dl[i] - delta_halfwidth, -weights.theta_max)
                    hi = min(dl[i] + delta_halfwidth, weights.theta_max)

                def f(x, i=i, dl=dl):
                    trial = dl.copy()
                    trial[i] = x
                    return evaluate(trial)

                x, fx = _golden_max(f, lo, hi)
                if fx > cur:
                    dl[i] = x
                    cur = fx
            if cur > best_value:
                best_value = cur
                best_deltas = tuple(dl)

    path = _path_from_deltas(ctx, weights, best_deltas)
    return PlanResult(waypoint=path[1].copy(), objective=float(best_value),
                      heading=float(best_deltas[0]), path=path)


def _path_from_deltas(ctx: PlanContext, weights: PlannerWeights, deltas) -> np.ndarray:
    """Waypoint chain from the first absolute heading plus relative changes.

    Short delta chains (pruned branches, degenerate fallback) are padded by
    continuing straight so the path always has n_l waypoints.
    """
    path = np.empty((weights.n_l, 2))
    path[0] = ctx.wp1
    heading = float(deltas[0])
    x = ctx.wp1[0] + weights.step_len * math.cos(heading * DEG)
    y = ctx.wp1[1] + weights.step_len * math.sin(heading * DEG)
    path[1] = (x, y)
    for j in range(2, weights.n_l):
        idx = j - 1
        if idx < len(deltas):
            heading += float(deltas[idx])
        x += weights.step_len * math.cos(heading * DEG)
        y += weights.step_len * math.sin(heading * DEG)
        path[j] = (x, y)
    return path
