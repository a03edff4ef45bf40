"""End-to-end mission trials and strategy benchmarking.

A trial wires the whole stack together: procedural terrain, guideline map,
particle cloud, one ground-truth target trajectory, and a UAV fleet running
one of three search strategies:

  RHS  receding-horizon search with Voronoi dynamic partitioning
  TPS  the same optimizer with partitioning disabled
  ISO  a geometry baseline sweeping radial quantile curves of the cloud

Benchmarks pair seeds across strategies so every strategy faces the same
terrain, cloud and target per trial index.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .density import MarkSet
from .fleet import UavState, comm_graph, detect_particles, exchange_pheromones
from .guideline import ApfParams, GuidelineMap, build_guideline_map
from .lost_person import (
    AgentState,
    BehaviorProfile,
    BehaviorTuning,
    ParticleCloud,
    SpeedModel,
    Trail,
    simulate_cloud,
    step_agent,
)
from .planner import (
    PlanContext,
    PlannerWeights,
    PlanResult,
    make_stage_slices,
    plan_step,
    voronoi_half_planes,
)
from .terrain import (
    ConfigurationError,
    SpeedScaleParams,
    TerrainGrid,
    TerrainParams,
    generate_terrain,
    water_level,
)

STRATEGY_NAMES = ("RHS", "TPS", "ISO")


@dataclass(frozen=True)
class MissionConfig:
    """Full scenario description; one trial is a pure function of this."""

    area: float = 65_000.0              # square search area side (m)
    lkp: tuple = (30_000.0, 30_000.0)
    n_uavs: int = 4
    v_u: float = 5.0                    # UAV speed (m/s)
    delay: float = 1800.0               # search starts this long after loss (s)
    R: float = 50.0                     # detection radius (m)
    r_c: float = 15_000.0               # communication range (m)
    time_limit: float = 7200.0          # search budget (s)
    dt_plan: float = 30.0               # fleet tick (s)
    dt_cloud: float = 60.0              # cloud step (s)
    n_a: int = 1080                     # ensemble size
    delta_theta: float = 1.0            # guideline bearing spacing (deg)
    water_percentile: float = 8.0
    start_ring_radius: float = 100.0    # UAV launch ring around the LKP (m)
    strategy: str = "RHS"
    trial_seed: int = 0
    terrain: TerrainParams = field(default_factory=lambda: TerrainParams.preset(
        "severe", n_e=1001))
    apf: ApfParams = field(default_factory=ApfParams)
    speed: SpeedModel = field(default_factory=SpeedModel)
    speed_params: SpeedScaleParams = field(default_factory=SpeedScaleParams)
    profile: BehaviorProfile = field(default_factory=BehaviorProfile.default_hiker)
    weights: PlannerWeights = field(default_factory=PlannerWeights)
    tuning: BehaviorTuning = field(default_factory=BehaviorTuning)
    obstacles: tuple = ()
    trails: tuple = ()                  # polylines, each a tuple of (x, y)

    def validate(self) -> None:
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        extent = (self.terrain.n_e - 1) * self.terrain.cell_size
        if not (0 <= self.lkp[0] <= extent and 0 <= self.lkp[1] <= extent):
            raise ConfigurationError("LKP outside the terrain extent")
        for name in ("v_u", "R", "r_c", "dt_plan", "dt_cloud"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.time_limit < 0 or self.delay < 0 or self.n_uavs < 1:
            raise ConfigurationError("bad time_limit/delay/n_uavs")


def _grid_cells(area: float, cell_size: float) -> int:
    return int(round(area / cell_size)) + 1


def full_mission(roughness: str = "severe", **overrides) -> MissionConfig:
    """The headline scenario: 65 km x 65 km, 2 h budget, 1080 agents."""
    terrain = TerrainParams.preset(roughness, n_e=_grid_cells(65_000.0, 65.0))
    return MissionConfig(terrain=terrain, **overrides)


def desk_mission(roughness: str = "severe", **overrides) -> MissionConfig:
    """CI-speed preset: 16 km x 16 km, 45 min budget, 540 agents."""
    cell = 65.0
    n_e = _grid_cells(16_000.0, cell)
    extent = (n_e - 1) * cell
    terrain = TerrainParams.preset(roughness, n_e=n_e, cell_size=cell)
    defaults = dict(
        area=extent,
        lkp=(extent / 2.0, extent / 2.0),
        time_limit=2700.0,
        n_a=540,
        terrain=terrain,
    )
    defaults.update(overrides)
    return MissionConfig(**defaults)


def derive_seeds(trial_seed: int) -> tuple:
    """(terrain, cloud, target) integer seeds from one trial seed."""
    state = np.random.SeedSequence(trial_seed).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


@dataclass
class World:
    """Everything deterministic the strategies share within one trial."""

    grid: TerrainGrid
    z_0: float
    guidelines: GuidelineMap
    cloud: ParticleCloud
    target_traj: np.ndarray     # (n_slices, 2), same cadence as the cloud
    seeds: tuple                # (terrain, cloud, target)


def build_world(config: MissionConfig) -> World:
    config.validate()
    terrain_seed, cloud_seed, target_seed = derive_seeds(config.trial_seed)
    grid = generate_terrain(config.terrain, terrain_seed)
    z_0 = water_level(grid, config.water_percentile)
    obstacles = list(config.obstacles)
    guidelines = build_guideline_map(config.lkp, grid, obstacles,
                                     config.delta_theta, config.apf,
                                     config.speed_params, z_0)
    n_steps = int(math.ceil((config.delay + config.time_limit) / config.dt_cloud))
    trails = tuple(Trail(np.asarray(t, dtype=float)) for t in config.trails)
    cloud = simulate_cloud(config.lkp, config.profile, grid, guidelines,
                           config.speed, config.speed_params, config.n_a,
                           n_steps, config.dt_cloud, cloud_seed, z_0=z_0,
                           trails=trails, tuning=config.tuning)
    target = simulate_target(config, grid=grid, guidelines=guidelines, z_0=z_0,
                             n_steps=n_steps, seed=target_seed, trails=trails)
    return World(grid=grid, z_0=z_0, guidelines=guidelines, cloud=cloud,
                 target_traj=target,
                 seeds=(terrain_seed, cloud_seed, target_seed))


def simulate_target(config: MissionConfig, *, grid=None, guidelines=None,
                    z_0=None, n_steps=None, seed=None, trails=()) -> np.ndarray:
    """Ground-truth walker: one agent on its own rng stream.

    Unlike the ensemble (whose initial bearings are spread deterministically),
    the target draws its initial guideline ray uniformly at random.
    """
    if grid is None:
        terrain_seed, _, target_seed = derive_seeds(config.trial_seed)
        grid = generate_terrain(config.terrain, terrain_seed)
        z_0 = water_level(grid, config.water_percentile)
        guidelines = build_guideline_map(config.lkp, grid,
                                         list(config.obstacles),
                                         config.delta_theta, config.apf,
                                         config.speed_params, z_0)
        n_steps = int(math.ceil((config.delay + config.time_limit)
                                / config.dt_cloud))
        seed = target_seed
        trails = tuple(Trail(np.asarray(t, dtype=float)) for t in config.trails)

    rng = np.random.default_rng([seed, 0])
    ray = int(rng.integers(0, guidelines.ray_count))
    agent = AgentState.at(config.lkp, ray, guidelines[ray].bearing)
    traj = np.empty((n_steps + 1, 2))
    traj[0] = agent.position
    for k in range(1, n_steps + 1):
        strategy = config.profile.sample(rng)
        step_agent(agent, strategy, grid, guidelines, config.speed,
                   config.speed_params, config.dt_cloud, rng, z_0=z_0,
                   trails=trails, tuning=config.tuning)
        traj[k] = agent.position
    return traj


def target_position_at(traj: np.ndarray, dt: float, t: float) -> np.ndarray:
    """Linear interpolation of the target trajectory at wall time t."""
    if t <= 0:
        return traj[0].copy()
    k = t / dt
    lo = int(min(math.floor(k), len(traj) - 1))
    hi = int(min(lo + 1, len(traj) - 1))
    frac = min(k - lo, 1.0)
    return traj[lo] + frac * (traj[hi] - traj[lo])


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def tps_plan_step(ctx: PlanContext, weights: PlannerWeights) -> PlanResult:
    """The RHS optimizer with the partition constraints stripped."""
    free = PlanContext(wp1=ctx.wp1, prev_pos=ctx.prev_pos,
                       neighbors=ctx.neighbors, half_planes=[],
                       cloud=ctx.cloud, marks=ctx.marks,
                       stage_slices=ctx.stage_slices, R=ctx.R)
    return plan_step(free, weights)


@dataclass
class IsoSweepState:
    """Per-UAV angular positions on their assigned probability-quantile bands.

    Documented approximation of the iso-probability-curve search: UAV i is
    assigned the (i+1)/(n+1) radial quantile of the current cloud slice
    (per-bearing), and sweeps its time-expanding curve angularly at v_u.
    """

    lkp: np.ndarray
    quantiles: tuple
    angles: np.ndarray            # radians, mutated as UAVs advance
    n_bearing_bins: int = 36

    @classmethod
    def init(cls, config: MissionConfig) -> "IsoSweepState":
        n = config.n_uavs
        quantiles = tuple((i + 1) / (n + 1) for i in range(n))
        angles = np.array([2.0 * np.pi * i / n for i in range(n)])
        return cls(lkp=np.asarray(config.lkp, dtype=float),
                   quantiles=quantiles, angles=angles)


def iso_curve_radius(cloud: ParticleCloud, t_step: int, lkp, angle: float,
                     quantile: float, n_bins: int = 36) -> float:
    """Radial quantile of the cloud slice near the given bearing."""
    rel = cloud.at_step(t_step) - np.asarray(lkp, dtype=float)
    r = np.linalg.norm(rel, axis=1)
    theta = np.arctan2(rel[:, 1], rel[:, 0]) % (2.0 * np.pi)
    width = 2.0 * np.pi / n_bins
    diff = np.abs((theta - angle + np.pi) % (2.0 * np.pi) - np.pi)
    in_bin = diff <= width
    sample = r[in_bin] if in_bin.sum() >= 5 else r
    return float(np.quantile(sample, quantile))


def iso_plan_step(uav: UavState, iso: IsoSweepState, cloud: ParticleCloud,
                  t_step: int, step_len: float) -> np.ndarray:
    """Next waypoint along the UAV's quantile curve, one step_len away."""
    i = uav.id
    q = iso.quantiles[i]
    phi = float(iso.angles[i])
    r_here = iso_curve_radius(cloud, t_step, iso.lkp, phi, q,
                              iso.n_bearing_bins)
    unit = np.array([np.cos(phi), np.sin(phi)])
    curve_pt = iso.lkp + r_here * unit
    if np.linalg.norm(uav.position - curve_pt) > 1.5 * step_len:
        target = curve_pt   # approach phase: fly to the assigned band
    else:
        dphi = step_len / max(r_here, step_len)
        phi = (phi + dphi) % (2.0 * np.pi)
        iso.angles[i] = phi
        unit = np.array([np.cos(phi), np.sin(phi)])
        r_next = iso_curve_radius(cloud, t_step, iso.lkp, phi, q,
                                  iso.n_bearing_bins)
        target = iso.lkp + r_next * unit
    to_t = target - uav.position
    dist = float(np.linalg.norm(to_t))
    if dist < 1e-9:
        return uav.position + step_len * unit
    return uav.position + step_len * (to_t / dist)


# ---------------------------------------------------------------------------
# trial loop
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    success: bool
    time_to_find: float | None      # seconds of search time when success
    strategy: str
    trial_seed: int
    seeds: tuple                    # (terrain, cloud, target)
    trajectories: list              # per UAV, list of [x, y]
    ticks: list                     # per-tick telemetry records
    n_marked_total: int

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "time_to_find": self.time_to_find,
            "strategy": self.strategy,
            "trial_seed": self.trial_seed,
            "seeds": list(self.seeds),
            "trajectories": self.trajectories,
            "ticks": self.ticks,
            "n_marked_total": self.n_marked_total,
        }


def _launch_positions(config: MissionConfig) -> list:
    lkp = np.asarray(config.lkp, dtype=float)
    r = config.start_ring_radius
    if r <= 0:
        return [lkp.copy() for _ in range(config.n_uavs)]
    out = []
    for i in range(config.n_uavs):
        ang = 2.0 * np.pi * i / config.n_uavs
        out.append(lkp + r * np.array([np.cos(ang), np.sin(ang)]))
    return out


def run_trial(config: MissionConfig, world: World | None = None) -> TrialResult:
    """One deterministic mission: returns success flag, timing and telemetry.

    Tick order: success check against the true target, particle detection,
    pheromone exchange, concurrent planning on post-exchange marks, move.
    """
    config.validate()
    if world is None:
        world = build_world(config)
    cloud = world.cloud
    weights = replace(config.weights, step_len=config.v_u * config.dt_plan,
                      d_max=min(config.weights.d_max, config.r_c))
    uavs = [UavState.at(i, p, config.n_a)
            for i, p in enumerate(_launch_positions(config))]
    iso = IsoSweepState.init(config) if config.strategy == "ISO" else None

    n_checks = int(math.floor(config.time_limit / config.dt_plan)) + 1 \
        if config.time_limit > 0 else 0
    ticks = []
    success = False
    time_to_find = None

    for k in range(n_checks):
        t = config.delay + k * config.dt_plan
        target_pos = target_position_at(world.target_traj, config.dt_cloud, t)
        dists = [float(np.linalg.norm(u.position - target_pos)) for u in uavs]
        record = {
            "k": k,
            "t": t,
            "positions": [u.position.tolist() for u in uavs],
            "target": target_pos.tolist(),
        }
        if min(dists) <= config.R:
            success = True
            time_to_find = k * config.dt_plan
            record["found_by"] = int(np.argmin(dists))
            ticks.append(record)
            break
        if k == n_checks - 1:
            ticks.append(record)
            break

        t_step = cloud.slice_for_time(t)
        for u in uavs:
            detect_particles(u.position, cloud, t_step, config.R, u.marks)
        graph = comm_graph([u.position for u in uavs], config.r_c)
        exchange_pheromones(uavs, graph)

        waypoints = []
        plans = []
        for u in uavs:
            if config.strategy == "ISO":
                wp = iso_plan_step(u, iso, cloud, t_step, weights.step_len)
                waypoints.append(wp)
                plans.append(None)
                continue
            others = [v.position for v in uavs if v.id != u.id]
            if config.strategy == "RHS":
                linked = [uavs[j].position for j in graph.neighbors(u.id)
                          if np.linalg.norm(uavs[j].position - u.position) > 1e-9]
                half_planes = voronoi_half_planes(u.position, linked)
            else:
                half_planes = []
            ctx = PlanContext(
                wp1=u.position, prev_pos=u.prev_position, neighbors=others,
                half_planes=half_planes, cloud=cloud, marks=u.marks,
                stage_slices=make_stage_slices(cloud, t, config.dt_plan,
                                               weights.n_l),
                R=config.R)
            res = plan_step(ctx, weights) if config.strategy == "RHS" \
                else tps_plan_step(ctx, weights)
            waypoints.append(res.waypoint)
            plans.append(res)

        record["edges"] = sorted(sorted(e) for e in map(tuple, graph.edges))
        record["marks"] = [u.marks.n_marked for u in uavs]
        record["waypoints"] = [np.asarray(w).tolist() for w in waypoints]
        if plans[0] is not None:
            record["objectives"] = [p.objective for p in plans]
            record["degenerate"] = [p.degenerate for p in plans]
        ticks.append(record)

        for u, wp in zip(uavs, waypoints):
            u.move_to(wp)

    return TrialResult(
        success=success,
        time_to_find=time_to_find,
        strategy=config.strategy,
        trial_seed=config.trial_seed,
        seeds=world.seeds,
        trajectories=[[p.tolist() for p in u.trajectory] for u in uavs],
        ticks=ticks,
        n_marked_total=int(np.any(
            np.stack([u.marks.flags for u in uavs]), axis=0).sum()),
    )


def replay_metrics(trial_dict: dict, R: float, dt_plan: float) -> dict:
    """Recompute success metrics from a trial's tick log alone."""
    success = False
    time_to_find = None
    for rec in trial_dict["ticks"]:
        target = np.asarray(rec["target"], dtype=float)
        d = [float(np.linalg.norm(np.asarray(p) - target))
             for p in rec["positions"]]
        if min(d) <= R:
            success = True
            time_to_find = rec["k"] * dt_plan
            break
    return {"success": success, "time_to_find": time_to_find}


# ---------------------------------------------------------------------------
# benchmarking
# ---------------------------------------------------------------------------

def evaluation_indices(t_s: float, t_ben: float, v_s: float,
                       v_ben: float) -> tuple:
    """Relative improvements (T_e, V_e) of a strategy over a benchmark."""
    t_e = (t_ben - t_s) / t_ben
    v_e = (v_s - v_ben) / v_ben
    return t_e, v_e


@dataclass
class StrategyStats:
    name: str
    n_trials: int
    n_success: int
    times_min: list                 # successful trials only

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_trials if self.n_trials else 0.0

    @property
    def avg_time_min(self) -> float | None:
        return float(np.mean(self.times_min)) if self.times_min else None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_trials": self.n_trials,
            "n_success": self.n_success,
            "success_rate": self.success_rate,
            "avg_time_min": self.avg_time_min,
            "times_min": self.times_min,
        }


@dataclass
class BenchmarkReport:
    stats: dict                     # name -> StrategyStats
    improvements: dict              # baseline -> {"T_e_pct", "V_e_pct"}
    n_trials: int
    base_seed: int
    notes: str = ("ISO baseline is a documented quantile-curve approximation "
                  "of the iso-probability search")

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "strategies": {k: v.to_dict() for k, v in self.stats.items()},
            "improvements": self.improvements,
            "notes": self.notes,
        }


def _paired_trial(args) -> list:
    config, strategies, trial_seed = args
    shared = replace(config, trial_seed=trial_seed, strategy=strategies[0])
    world = build_world(shared)
    out = []
    for s in strategies:
        cfg = replace(config, trial_seed=trial_seed, strategy=s)
        r = run_trial(cfg, world)
        out.append({"strategy": s, "success": r.success,
                    "time_to_find": r.time_to_find})
    return out


def run_benchmark(config: MissionConfig, strategies, n_trials: int,
                  base_seed: int, n_jobs: int = 1) -> BenchmarkReport:
    """Paired-seed comparison of search strategies.

    Trial k of every strategy shares one (terrain, cloud, target) world.
    Average time counts successful trials only; T_e/V_e compare RHS against
    each baseline present.
    """
    if n_trials < 1:
        raise ConfigurationError("n_trials must be >= 1")
    strategies = list(strategies)
    for s in strategies:
        if s not in STRATEGY_NAMES:
            raise ConfigurationError(f"unknown strategy {s!r}")

    jobs = [(config, strategies, base_seed + k) for k in range(n_trials)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_paired_trial, jobs))
    else:
        rows = [_paired_trial(j) for j in jobs]

    stats = {}
    for s in strategies:
        outcomes = [r for row in rows for r in row if r["strategy"] == s]
        times = [o["time_to_find"] / 60.0 for o in outcomes if o["success"]]
        stats[s] = StrategyStats(name=s, n_trials=n_trials,
                                 n_success=sum(o["success"] for o in outcomes),
                                 times_min=times)

    improvements = {}
    if "RHS" in stats:
        for s in strategies:
            if s == "RHS":
                continue
            t_s, t_b = stats["RHS"].avg_time_min, stats[s].avg_time_min
            v_s, v_b = stats["RHS"].success_rate, stats[s].success_rate
            t_e = evaluation_indices(t_s, t_b, 1, 1)[0] \
                if t_s is not None and t_b else None
            v_e = evaluation_indices(1, 1, v_s, v_b)[1] if v_b else None
            improvements[s] = {
                "T_e_pct": None if t_e is None else 100.0 * t_e,
                "V_e_pct": None if v_e is None else 100.0 * v_e,
            }
    return BenchmarkReport(stats=stats, improvements=improvements,
                           n_trials=n_trials, base_seed=base_seed)
