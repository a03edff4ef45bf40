"""Agent-based Monte Carlo model of a lost person's movement.

Each simulated agent starts at the LKP, re-samples one behavior strategy per
time step from a mass-function profile, and advances under terrain effects:
walking speed is drawn from a normal distribution and scaled down on slopes,
water and impassable grades cancel movement, and blocked guideline rays
trigger transitions to adjacent bearings. Recording every agent's position
per step yields the spatio-temporal particle cloud used as the predictive
distribution of the lost person.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .guideline import (
    GuidelineMap,
    bearing_vector,
    point_at_arclength,
    project_onto_polyline,
    target_point_on_ray,
    transition_ray,
)
from .terrain import (
    ConfigurationError,
    SpeedScaleParams,
    TerrainGrid,
    elevation_at,
    speed_scale,
)

RM, DT, RT, SP, VE, BT = "RM", "DT", "RT", "SP", "VE", "BT"
STRATEGIES = (RM, DT, RT, SP, VE, BT)

MASS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BehaviorProfile:
    """Probability mass over the six behavior strategies."""

    masses: dict

    def __post_init__(self):
        unknown = set(self.masses) - set(STRATEGIES)
        if unknown:
            raise ConfigurationError(f"unknown strategies {sorted(unknown)}")
        vals = np.array([self.masses.get(s, 0.0) for s in STRATEGIES], dtype=float)
        if np.any(vals < 0):
            raise ConfigurationError("strategy masses must be non-negative")
        if abs(vals.sum() - 1.0) > MASS_TOLERANCE:
            raise ConfigurationError(f"strategy masses sum to {vals.sum()!r}, not 1")
        object.__setattr__(self, "_cdf", np.cumsum(vals))

    def mass(self, strategy: str) -> float:
        return float(self.masses.get(strategy, 0.0))

    def sample(self, rng) -> str:
        idx = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return STRATEGIES[min(idx, len(STRATEGIES) - 1)]

    @classmethod
    def default_hiker(cls) -> "BehaviorProfile":
        # stand-in experienced-hiker profile; scenario input, not ground truth
        return cls({RT: 0.30, DT: 0.25, RM: 0.15, SP: 0.15, VE: 0.10, BT: 0.05})


def select_action(profile: BehaviorProfile, rng) -> str:
    """Draw one strategy with probability equal to its mass."""
    return profile.sample(rng)


@dataclass(frozen=True)
class SpeedModel:
    v_m: float = 0.75   # mean walking speed (m/s)
    sigma: float = 0.25  # standard deviation (m/s)

    def validate(self) -> None:
        if self.v_m <= 0 or self.sigma < 0:
            raise ConfigurationError("need v_m > 0 and sigma >= 0")


def max_travel_radius(speed: SpeedModel, t: float) -> float:
    """Upper envelope (v_m + 4*sigma) * t on plausible displacement."""
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    return (speed.v_m + 4.0 * speed.sigma) * t


@dataclass(frozen=True)
class BehaviorTuning:
    """Locality scales the strategy semantics need."""

    lookahead: float = 100.0            # pursuit distance along rays/trails (m)
    ve_radius: float = 300.0            # View Enhancing search radius (m)
    ve_lattice: float = 30.0            # View Enhancing sample spacing (m)
    trail_capture_radius: float = 200.0  # Route Traveling attraction range (m)
    water_sample_step: float = 10.0     # water test spacing along a step (m)
    slope_samples: int = 8


DEFAULT_TUNING = BehaviorTuning()


class Trail:
    """Trail polyline with cached arc lengths for pursuit queries."""

    def __init__(self, polyline):
        self.polyline = np.asarray(polyline, dtype=float)
        if self.polyline.ndim != 2 or self.polyline.shape[1] != 2:
            raise ConfigurationError("trail polyline must be (k, 2)")
        seg = np.linalg.norm(np.diff(self.polyline, axis=0), axis=1)
        self.cumlen = np.concatenate([[0.0], np.cumsum(seg)])

    def nearest(self, point):
        """(distance, arc length) of the closest trail point to `point`."""
        s = project_onto_polyline(self.polyline, self.cumlen, point)
        p = point_at_arclength(self.polyline, self.cumlen, s)
        return float(np.linalg.norm(p - np.asarray(point, dtype=float))), s

    def point_at(self, s: float):
        return point_at_arclength(self.polyline, self.cumlen, s)


@dataclass
class AgentState:
    position: np.ndarray
    ray_index: int
    heading: float
    history: list = field(default_factory=list)
    backtrack_cursor: int = 0
    active: bool = True

    @classmethod
    def at(cls, position, ray_index: int, heading: float) -> "AgentState":
        p = np.asarray(position, dtype=float)
        return cls(position=p.copy(), ray_index=ray_index, heading=heading,
                   history=[p.copy()])


@dataclass
class ParticleCloud:
    """All agents' recorded positions; slice 0 is the common LKP start."""

    positions: np.ndarray   # (n_a, n_slices, 2) meters
    dt: float               # seconds per step

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 3 or p.shape[2] != 2:
            raise ConfigurationError(f"positions must be (n_a, t_s, 2), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ConfigurationError("cloud contains non-finite positions")
        self.positions = p

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def n_slices(self) -> int:
        return self.positions.shape[1]

    @property
    def duration(self) -> float:
        return (self.n_slices - 1) * self.dt

    def slice_for_time(self, t: float) -> int:
        """Nearest recorded slice to wall time t (half-up, clamped)."""
        return int(np.clip(np.floor(t / self.dt + 0.5), 0, self.n_slices - 1))

    def at_step(self, t_step: int) -> np.ndarray:
        return self.positions[:, t_step, :]


def _ve_offsets(radius: float, lattice: float) -> np.ndarray:
    return _ve_offsets_cached(float(radius), float(lattice))


@lru_cache(maxsize=8)
def _ve_offsets_cached(radius, lattice):
    ticks = np.arange(-radius, radius + 1e-9, lattice)
    ox, oy = np.meshgrid(ticks, ticks)
    offsets = np.stack([ox.ravel(), oy.ravel()], axis=1)
    keep = np.linalg.norm(offsets, axis=1) <= radius
    return offsets[keep]


@lru_cache(maxsize=64)
def _unit_samples(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _probe_segment(terrain: TerrainGrid, start, end, z_0, tuning: BehaviorTuning):
    """Fused slope + water probe along one step segment.

    Samples enough points to satisfy both the slope fit and the water test
    spacing, with one elevation pass. Both endpoints must be in bounds (the
    grid extent is convex, so the whole segment then is too).
    Returns (average slope in degrees, segment touches water).
    """
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    length = float(np.hypot(dx, dy))
    if length == 0.0:
        return 0.0, False
    n = max(tuning.slope_samples,
            int(np.ceil(length / tuning.water_sample_step)) + 1)
    t = _unit_samples(n)
    xs = start[0] + t * dx
    ys = start[1] + t * dy

    # inline bilinear: bounds were checked at the endpoints
    p = terrain.params
    fx = (xs - terrain.origin[0]) * (1.0 / p.cell_size)
    fy = (ys - terrain.origin[1]) * (1.0 / p.cell_size)
    ix = np.minimum(fx.astype(int), p.n_e - 2)
    iy = np.minimum(fy.astype(int), p.n_e - 2)
    tx = fx - ix
    ty = fy - iy
    hm = terrain.heights
    h = (hm[iy, ix] * (1 - tx) * (1 - ty) + hm[iy, ix + 1] * tx * (1 - ty)
         + hm[iy + 1, ix] * (1 - tx) * ty + hm[iy + 1, ix + 1] * tx * ty)

    touches_water = z_0 is not None and bool(np.any(h[1:] < z_0))

    s = t * length
    s_mean = s.mean()
    h_mean = h.mean()
    denom = float(((s - s_mean) ** 2).sum())
    a = float(((s - s_mean) * (h - h_mean)).sum()) / denom
    return float(np.degrees(np.arctan(a))), touches_water


def step_agent(agent: AgentState, strategy: str, terrain: TerrainGrid,
               guidelines: GuidelineMap, speed: SpeedModel,
               speed_params: SpeedScaleParams, dt: float, rng, *,
               z_0=None, trails=(), tuning: BehaviorTuning = DEFAULT_TUNING) -> AgentState:
    """Advance one agent by one time step under the given strategy.

    Returns the same state object, mutated: position moved (or held), history
    appended, ray index updated if a blocked ray forced a transition.
    """
    if not agent.active:
        return agent

    pos = agent.position
    direction = None
    dt_pursuit = False      # DT semantics active (incl. RT fallback)
    bt_target = None

    if strategy == SP:
        pass
    elif strategy == RM:
        heading = rng.uniform(0.0, 360.0)
        direction = bearing_vector(heading)
    elif strategy == VE:
        offsets = _ve_offsets(tuning.ve_radius, tuning.ve_lattice)
        samples = pos[None, :] + offsets
        ok = terrain.in_bounds(samples[:, 0], samples[:, 1])
        samples = samples[ok]
        if len(samples):
            elev = elevation_at(terrain, samples[:, 0], samples[:, 1])
            best = samples[int(np.argmax(elev))]
            to_best = best - pos
            if np.linalg.norm(to_best) > 1e-9:
                direction = to_best / np.linalg.norm(to_best)
    elif strategy == BT:
        cursor = int(np.clip(agent.backtrack_cursor, 0, len(agent.history) - 1))
        bt_target = agent.history[cursor]
        to_t = bt_target - pos
        if np.linalg.norm(to_t) > 1e-9:
            direction = to_t / np.linalg.norm(to_t)
        agent.backtrack_cursor = max(cursor - 1, 0)
    else:
        # RT tries the trail network first, then behaves exactly like DT
        if strategy == RT and trails:
            hits = [(t.nearest(pos), t) for t in trails]
            (dist, s), trail = min(hits, key=lambda h: h[0][0])
            if dist <= tuning.trail_capture_radius:
                target = trail.point_at(s + tuning.lookahead)
                to_t = target - pos
                if np.linalg.norm(to_t) > 1e-9:
                    direction = to_t / np.linalg.norm(to_t)
            else:
                strategy = DT
        else:
            strategy = DT if strategy == RT else strategy
        if strategy == DT:
            dt_pursuit = True
            ray = guidelines[agent.ray_index]
            target = target_point_on_ray(ray, pos, tuning.lookahead)
            to_t = target - pos
            dist = float(np.linalg.norm(to_t))
            if dist > 1e-9:
                direction = to_t / dist
            elif ray.terminated:
                # parked at the blocked end of the ray: hop to a neighbor
                agent.ray_index = transition_ray(guidelines, agent.ray_index, rng)

    moved = np.array(pos, copy=True)
    if direction is not None:
        v_t = max(rng.normal(speed.v_m, speed.sigma), 0.0) if speed.sigma > 0 \
            else speed.v_m
        proposed = pos + v_t * dt * direction
        blocked = False
        if not terrain.in_bounds(proposed[0], proposed[1]):
            blocked = True
        else:
            gamma, touches_water = _probe_segment(terrain, pos, proposed, z_0,
                                                  tuning)
            if gamma < speed_params.gamma_min or gamma > speed_params.gamma_max:
                blocked = True
            elif touches_water:
                blocked = True
            else:
                step_len = v_t * speed_scale(gamma, speed_params) * dt
                if bt_target is not None:
                    # retrace stored points exactly, never overshoot them
                    step_len = min(step_len, float(np.linalg.norm(bt_target - pos)))
                moved = pos + step_len * direction
                if step_len > 1e-12:
                    agent.heading = float(np.degrees(
                        np.arctan2(direction[1], direction[0]))) % 360.0
        if blocked and dt_pursuit:
            agent.ray_index = transition_ray(guidelines, agent.ray_index, rng)

    agent.position = moved
    agent.history.append(moved.copy())
    if strategy != BT:
        agent.backtrack_cursor = max(len(agent.history) - 2, 0)
    return agent


def simulate_cloud(lkp, profile: BehaviorProfile, terrain: TerrainGrid,
                   guidelines: GuidelineMap, speed: SpeedModel,
                   speed_params: SpeedScaleParams, n_a: int, n_steps: int,
                   dt: float, seed: int, *, z_0=None, trails=(),
                   tuning: BehaviorTuning = DEFAULT_TUNING) -> ParticleCloud:
    """Run the Monte Carlo ensemble and record every agent's trajectory.

    Agent i draws from its own generator seeded with (seed, i), so results
    are identical no matter how agents are scheduled. Initial ray indices
    spread uniformly over the guideline bearings. The returned cloud has
    n_steps + 1 slices; slice 0 is all agents at the LKP.
    """
    if n_a < 1 or n_steps < 0:
        raise ConfigurationError("need n_a >= 1 and n_steps >= 0")
    speed.validate()
    lkp = np.asarray(lkp, dtype=float)
    trails = tuple(t if isinstance(t, Trail) else Trail(t) for t in trails)
    n_rays = guidelines.ray_count
    positions = np.empty((n_a, n_steps + 1, 2), dtype=float)

    for i in range(n_a):
        rng = np.random.default_rng([seed, i])
        ray_index = (i * n_rays) // n_a
        agent = AgentState.at(lkp, ray_index, guidelines[ray_index].bearing)
        positions[i, 0] = agent.position
        for k in range(1, n_steps + 1):
            strategy = profile.sample(rng)
            step_agent(agent, strategy, terrain, guidelines, speed,
                       speed_params, dt, rng, z_0=z_0, trails=trails,
                       tuning=tuning)
            positions[i, k] = agent.position

    return ParticleCloud(positions=positions, dt=dt)


# ---------------------------------------------------------------------------
# cloud table format: "agent_id,step,x,y" CSV rows
# ---------------------------------------------------------------------------

def save_cloud(cloud: ParticleCloud, path) -> None:
    n_a, n_s = cloud.n_agents, cloud.n_slices
    ids, steps = np.meshgrid(np.arange(n_a), np.arange(n_s), indexing="ij")
    table = np.column_stack([ids.ravel(), steps.ravel(),
                             cloud.positions.reshape(-1, 2)])
    with open(path, "w") as f:
        f.write(f"# dt={cloud.dt:.6f}\n")
        f.write("agent_id,step,x,y\n")
        np.savetxt(f, table, fmt="%d,%d,%.6f,%.6f")


def load_cloud(path) -> ParticleCloud:
    with open(path) as f:
        header = f.readline()
        if not header.startswith("# dt="):
            raise ConfigurationError(f"missing dt header in {path}")
        dt = float(header.split("=")[1])
        f.readline()  # column names
        rows = np.loadtxt(f, delimiter=",")
    rows = np.atleast_2d(rows)
    n_a = int(rows[:, 0].max()) + 1
    n_s = int(rows[:, 1].max()) + 1
    positions = np.empty((n_a, n_s, 2), dtype=float)
    positions[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2:4]
    return ParticleCloud(positions=positions, dt=dt)
