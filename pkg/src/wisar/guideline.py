"""Guideline map: obstacle-aware reference rays fanned out from the LKP.

Each ray is integrated along the negative gradient of an artificial
potential field (constant pull toward the horizon in the ray's bearing plus
short-range obstacle repulsion) and terminates where the terrain becomes
impassable: water below z_0 or slope beyond the walker's limits. Blocked
rays drive the ray-transition behavior that makes simulated agents follow
river edges and skirt steep ground.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .terrain import (
    ConfigurationError,
    SpeedScaleParams,
    TerrainGrid,
    is_water,
    segment_slopes,
)

DEG = np.pi / 180.0


@dataclass(frozen=True)
class ApfParams:
    k_rep: float = 1.0e7        # repulsive scale; dominates k_att inside ~0.65*d_0
    k_att: float = 1.0          # attractive scale
    d_0: float = 200.0          # repulsion activation distance (m)
    integration_step: float = 10.0  # polyline sampling step (m)
    max_length: float = 40_000.0    # ray truncation length (m)

    def validate(self) -> None:
        if min(self.k_rep, self.k_att, self.d_0, self.integration_step,
               self.max_length) <= 0:
            raise ConfigurationError("all ApfParams fields must be positive")


@dataclass(frozen=True)
class Obstacle:
    """Prior-known point obstacle."""

    position: tuple[float, float]

    def __post_init__(self):
        if not np.all(np.isfinite(self.position)):
            raise ConfigurationError("obstacle position must be finite")


@dataclass
class Ray:
    bearing: float                  # degrees in [0, 360)
    polyline: np.ndarray            # (k, 2) points from the LKP outward
    terminated: bool                # blocked by water or steep ground
    termination_reason: str         # none | water | steep | boundary
    _cumlen: np.ndarray = field(default=None, repr=False)

    @property
    def cumlen(self) -> np.ndarray:
        """Cumulative arc length per polyline point."""
        if self._cumlen is None:
            seg = np.linalg.norm(np.diff(self.polyline, axis=0), axis=1)
            self._cumlen = np.concatenate([[0.0], np.cumsum(seg)])
        return self._cumlen

    @property
    def length(self) -> float:
        return float(self.cumlen[-1]) if len(self.polyline) > 1 else 0.0


@dataclass
class GuidelineMap:
    lkp: tuple[float, float]
    delta_theta: float
    rays: list                      # cyclic, sorted by bearing

    @property
    def ray_count(self) -> int:
        return len(self.rays)

    def __getitem__(self, index: int) -> Ray:
        return self.rays[index % len(self.rays)]


def bearing_vector(bearing_deg: float) -> np.ndarray:
    """Unit vector for a bearing measured counterclockwise from +x."""
    b = bearing_deg * DEG
    return np.array([np.cos(b), np.sin(b)])


def apf_potential(pos, obstacles, bearing: float, params: ApfParams) -> float:
    """Potential U = U_att + U_rep at pos.

    The goal sits at infinity along `bearing`, so the attractive term is the
    linear ramp -k_att * (pos . u_bearing): its negative gradient is the
    constant unit pull k_att * u_bearing, the limit direction of the usual
    quadratic well as the goal recedes. Repulsion is the standard inverse
    barrier, active within d_0 of each obstacle.
    """
    pos = np.asarray(pos, dtype=float)
    u = bearing_vector(bearing)
    total = -params.k_att * float(pos @ u)
    for obs in obstacles:
        d = float(np.linalg.norm(pos - np.asarray(obs.position)))
        if d <= params.d_0 and d > 0:
            total += 0.5 * params.k_rep * (1.0 / d - 1.0 / params.d_0) ** 2
    return total


def apf_gradient(pos, obstacles, bearing: float, params: ApfParams) -> np.ndarray:
    """Negative gradient -grad U at pos (unnormalized)."""
    pos = np.asarray(pos, dtype=float)
    g = params.k_att * bearing_vector(bearing)
    for obs in obstacles:
        diff = pos - np.asarray(obs.position, dtype=float)
        d = float(np.linalg.norm(diff))
        if d == 0.0:
            # on top of an obstacle the repulsion direction is undefined;
            # nudge along the bearing and recompute
            diff = 1e-6 * bearing_vector(bearing)
            d = 1e-6
        if d <= params.d_0:
            g += params.k_rep * (1.0 / d - 1.0 / params.d_0) * (diff / d ** 3)
    return g


def apf_direction(pos, obstacles, bearing: float, params: ApfParams) -> np.ndarray:
    """Unit step direction: normalized -grad U."""
    g = apf_gradient(pos, obstacles, bearing, params)
    norm = np.linalg.norm(g)
    if norm == 0.0:
        return bearing_vector(bearing)
    return g / norm


def _truncate(points: np.ndarray, grid: TerrainGrid, speed_params: SpeedScaleParams,
              z_0, n_slope_samples: int = 8):
    """Cut a candidate polyline at the first boundary/water/steep violation.

    Returns (polyline, terminated, reason). `points` must start in bounds.
    """
    inside = grid.in_bounds(points[:, 0], points[:, 1])
    n_ok = len(points)
    reason = "none"
    if not inside.all():
        n_ok = int(np.argmin(inside))  # first out-of-bounds index
        points = points[:n_ok]
        # leaving the area counts as a successful exit, not a blocked ray

    if len(points) > 1 and z_0 is not None:
        water = is_water(grid, points[1:, 0], points[1:, 1], z_0)
        if np.any(water):
            cut = 1 + int(np.argmax(water))
            return points[:cut], True, "water"

    if len(points) > 1:
        gammas = segment_slopes(grid, points[:-1], points[1:], n_slope_samples)
        bad = (gammas < speed_params.gamma_min) | (gammas > speed_params.gamma_max)
        if np.any(bad):
            cut = 1 + int(np.argmax(bad))
            return points[:cut], True, "steep"

    return points, False, reason


def trace_ray(lkp, bearing: float, terrain: TerrainGrid, obstacles,
              params: ApfParams, speed_params: SpeedScaleParams,
              z_0) -> Ray:
    """Integrate one guideline ray from the LKP at the given bearing.

    Steps of `integration_step` follow apf_direction until max_length, the
    grid boundary, water, or an impassable slope. Boundary/max-length exits
    leave the ray unterminated (reason "none"); water and steep ground mark
    it terminated so agents know to transition off it.
    """
    lkp = np.asarray(lkp, dtype=float)
    if not terrain.in_bounds(lkp[0], lkp[1]):
        raise ConfigurationError("LKP outside terrain extent")
    step = params.integration_step
    n_steps = int(np.floor(params.max_length / step))

    if not obstacles:
        # repulsion-free rays are straight lines; build and cut in one pass
        u = bearing_vector(bearing)
        pts = lkp[None, :] + step * np.arange(n_steps + 1)[:, None] * u[None, :]
        pts, terminated, reason = _truncate(pts, terrain, speed_params, z_0)
        return Ray(bearing=bearing % 360.0, polyline=pts,
                   terminated=terminated, termination_reason=reason)

    pts = [lkp]
    pos = lkp.copy()
    terminated = False
    reason = "none"
    for _ in range(n_steps):
        d = apf_direction(pos, obstacles, bearing, params)
        nxt = pos + step * d
        if not terrain.in_bounds(nxt[0], nxt[1]):
            break
        if z_0 is not None and is_water(terrain, nxt[0], nxt[1], z_0):
            terminated, reason = True, "water"
            break
        gamma = segment_slopes(terrain, pos[None, :], nxt[None, :])[0]
        if gamma < speed_params.gamma_min or gamma > speed_params.gamma_max:
            terminated, reason = True, "steep"
            break
        pts.append(nxt)
        pos = nxt
    return Ray(bearing=bearing % 360.0, polyline=np.array(pts),
               terminated=terminated, termination_reason=reason)


def build_guideline_map(lkp, terrain: TerrainGrid, obstacles,
                        delta_theta: float, params: ApfParams,
                        speed_params: SpeedScaleParams, z_0) -> GuidelineMap:
    """One ray per bearing, every delta_theta degrees around the LKP."""
    params.validate()
    if delta_theta <= 0 or abs(360.0 / delta_theta - round(360.0 / delta_theta)) > 1e-9:
        raise ConfigurationError(f"delta_theta must divide 360, got {delta_theta}")
    bearings = np.arange(0.0, 360.0, delta_theta)
    rays = [trace_ray(lkp, b, terrain, obstacles, params, speed_params, z_0)
            for b in bearings]
    return GuidelineMap(lkp=tuple(np.asarray(lkp, dtype=float)),
                        delta_theta=delta_theta, rays=rays)


def transition_ray(guide_map: GuidelineMap, current_index: int, rng) -> int:
    """Hop to a cyclically adjacent ray, left or right with probability 1/2.

    Draws one integer from rng: 0 steps left (index - 1), 1 steps right.
    """
    n = guide_map.ray_count
    if not 0 <= current_index < n:
        raise IndexError(f"ray index {current_index} out of range 0..{n - 1}")
    step = 1 if rng.integers(0, 2) == 1 else -1
    return (current_index + step) % n


def project_onto_polyline(polyline: np.ndarray, cumlen: np.ndarray, point) -> float:
    """Arc length of the closest point on the polyline to `point`."""
    p = np.asarray(point, dtype=float)
    if len(polyline) == 1:
        return 0.0
    a = polyline[:-1]
    b = polyline[1:]
    ab = b - a
    seg_len2 = (ab ** 2).sum(axis=1)
    seg_len2 = np.where(seg_len2 > 0, seg_len2, 1.0)
    t = np.clip(((p - a) * ab).sum(axis=1) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = ((proj - p) ** 2).sum(axis=1)
    i = int(np.argmin(d2))
    return float(cumlen[i] + t[i] * np.sqrt(seg_len2[i]))


def point_at_arclength(polyline: np.ndarray, cumlen: np.ndarray, s: float) -> np.ndarray:
    """Point at arc length s along the polyline, clamped to its ends."""
    if len(polyline) == 1 or s <= 0:
        return polyline[0].copy() if s <= 0 else polyline[-1].copy()
    if s >= cumlen[-1]:
        return polyline[-1].copy()
    i = int(np.searchsorted(cumlen, s, side="right")) - 1
    seg = cumlen[i + 1] - cumlen[i]
    t = (s - cumlen[i]) / seg if seg > 0 else 0.0
    return polyline[i] + t * (polyline[i + 1] - polyline[i])


def target_point_on_ray(ray: Ray, agent_pos, lookahead: float) -> np.ndarray:
    """Virtual pursuit target: `lookahead` meters past the agent's projection.

    Clamps to the ray's final point, so agents chasing a blocked ray pile up
    at the blockage and trigger transitions there.
    """
    s = project_onto_polyline(ray.polyline, ray.cumlen, agent_pos)
    return point_at_arclength(ray.polyline, ray.cumlen, s + lookahead)


def save_ray_dump(guide_map: GuidelineMap, path) -> None:
    """Debug dump, one 'bearing: x0 y0 x1 y1 ...' line per ray."""
    with open(path, "w") as f:
        for ray in guide_map.rays:
            coords = " ".join(f"{v:.3f}" for v in ray.polyline.ravel())
            f.write(f"{ray.bearing:.3f}: {coords}\n")
