"""Behavior sampling, single-step strategy semantics, cloud simulation."""

import numpy as np
import pytest

from wisar.guideline import ApfParams, build_guideline_map
from wisar.lost_person import (
    BT,
    DT,
    RM,
    RT,
    SP,
    STRATEGIES,
    VE,
    AgentState,
    BehaviorProfile,
    BehaviorTuning,
    SpeedModel,
    Trail,
    load_cloud,
    max_travel_radius,
    save_cloud,
    select_action,
    simulate_cloud,
    step_agent,
)
from wisar.terrain import (
    ConfigurationError,
    SpeedScaleParams,
    flat_grid,
    plane_grid,
)

SPEED_P = SpeedScaleParams(gamma_min=-35.0, gamma_max=30.0)
APF = ApfParams(integration_step=10.0, max_length=5000.0)


def make_world(grid=None, delta_theta=30.0, z_0=None, max_length=5000.0):
    grid = grid if grid is not None else flat_grid(101, 100.0, elevation=10.0)
    center = (grid.extent / 2, grid.extent / 2)
    apf = ApfParams(integration_step=10.0, max_length=max_length)
    gm = build_guideline_map(center, grid, [], delta_theta, apf, SPEED_P, z_0)
    return grid, gm, np.array(center)


class TestBehaviorProfile:
    def test_mass_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            BehaviorProfile({DT: 0.5, RM: 0.4})
        with pytest.raises(ConfigurationError):
            BehaviorProfile({DT: 1.1, RM: -0.1})
        BehaviorProfile({DT: 0.5, RM: 0.5})  # ok

    def test_default_hiker_valid(self):
        p = BehaviorProfile.default_hiker()
        assert sum(p.masses.values()) == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_mass_always_selected(self):
        p = BehaviorProfile({DT: 1.0})
        rng = np.random.default_rng(1)
        assert all(select_action(p, rng) == DT for _ in range(100))

    def test_dominant_mass_frequency(self):
        p = BehaviorProfile({DT: 0.8, RM: 0.2})
        rng = np.random.default_rng(2)
        n = 100_000
        hits = sum(1 for _ in range(n) if select_action(p, rng) == DT)
        assert abs(hits / n - 0.8) < 0.01

    def test_uniform_profile_frequencies(self):
        p = BehaviorProfile({s: 1.0 / 6.0 for s in STRATEGIES})
        rng = np.random.default_rng(3)
        n = 100_000
        counts = {s: 0 for s in STRATEGIES}
        for _ in range(n):
            counts[select_action(p, rng)] += 1
        for s in STRATEGIES:
            assert abs(counts[s] / n - 1 / 6) < 0.01


class TestMaxTravelRadius:
    def test_zero_time(self):
        assert max_travel_radius(SpeedModel(), 0.0) == 0.0

    def test_paper_speed_constants(self):
        assert max_travel_radius(SpeedModel(0.75, 0.25), 3600.0) == pytest.approx(6300.0)


class TestStepAgent:
    def test_staying_put_appends_same_point(self):
        grid, gm, lkp = make_world()
        agent = AgentState.at(lkp, 0, 0.0)
        rng = np.random.default_rng(0)
        step_agent(agent, SP, grid, gm, SpeedModel(), SPEED_P, 60.0, rng)
        assert np.allclose(agent.position, lkp)
        assert len(agent.history) == 2
        assert np.allclose(agent.history[-1], lkp)

    def test_dt_flat_sigma_zero_exact_displacement(self):
        grid, gm, lkp = make_world()
        agent = AgentState.at(lkp, 0, 0.0)  # ray 0 points along +x
        rng = np.random.default_rng(0)
        step_agent(agent, DT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0, rng)
        assert np.allclose(agent.position - lkp, (45.0, 0.0), atol=1e-9)

    def test_half_grade_halves_displacement(self):
        slope = np.tan(np.radians(15.0))  # gamma_max / 2
        grid = plane_grid(101, 100.0, gx=slope)
        center = (grid.extent / 2, grid.extent / 2)
        apf = ApfParams(integration_step=10.0, max_length=3000.0)
        gm = build_guideline_map(center, grid, [], 90.0, apf, SPEED_P, None)
        agent = AgentState.at(center, 0, 0.0)
        rng = np.random.default_rng(0)
        step_agent(agent, DT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0, rng)
        moved = np.linalg.norm(agent.position - np.array(center))
        assert moved == pytest.approx(0.75 * 60.0 / 2, rel=1e-6)

    def test_inactive_agent_is_noop(self):
        grid, gm, lkp = make_world()
        agent = AgentState.at(lkp, 0, 0.0)
        agent.active = False
        rng = np.random.default_rng(0)
        step_agent(agent, DT, grid, gm, SpeedModel(), SPEED_P, 60.0, rng)
        assert len(agent.history) == 1

    def test_water_ahead_cancels_and_transitions(self):
        grid = flat_grid(101, 100.0, elevation=10.0)
        h = grid.heights.copy()
        h[:, 52:55] = 0.0  # water band just east of center (x >= 5150ish)
        grid = type(grid)(params=grid.params, heights=h, origin=grid.origin)
        _, gm, lkp = make_world(grid=grid, z_0=5.0)
        agent = AgentState.at((5050.0, 5000.0), 0, 0.0)
        rng = np.random.default_rng(0)
        step_agent(agent, DT, grid, gm, SpeedModel(2.0, 0.0), SPEED_P, 60.0, rng,
                   z_0=5.0)
        assert np.allclose(agent.position, (5050.0, 5000.0))  # cancelled
        assert agent.ray_index in (1, gm.ray_count - 1)       # transitioned

    def test_steep_ahead_cancels_and_transitions(self):
        slope = np.tan(np.radians(40.0))  # beyond gamma_max
        grid = plane_grid(101, 100.0, gx=slope)
        center = (grid.extent / 2, grid.extent / 2)
        apf = ApfParams(integration_step=10.0, max_length=500.0)
        gm = build_guideline_map(center, grid, [], 90.0, apf, SPEED_P, None)
        agent = AgentState.at(center, 0, 0.0)
        rng = np.random.default_rng(0)
        step_agent(agent, DT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0, rng)
        assert np.allclose(agent.position, center)
        assert agent.ray_index in (1, 3)

    def test_ve_climbs_toward_local_peak(self):
        grid = flat_grid(101, 100.0)
        h = grid.heights.copy()
        h[50, 52] = 50.0  # bump 200 m east of center
        grid = type(grid)(params=grid.params, heights=h, origin=grid.origin)
        _, gm, lkp = make_world(grid=grid)
        agent = AgentState.at((5000.0, 5000.0), 0, 0.0)
        rng = np.random.default_rng(0)
        step_agent(agent, VE, grid, gm, SpeedModel(1.0, 0.0), SPEED_P, 60.0, rng)
        delta = agent.position - np.array([5000.0, 5000.0])
        assert delta[0] > 0
        assert abs(delta[1]) < abs(delta[0]) * 0.2

    def test_bt_retraces_history_exactly(self):
        grid, gm, lkp = make_world()
        agent = AgentState.at(lkp, 0, 0.0)
        rng = np.random.default_rng(0)
        # walk two DT steps east, then backtrack twice
        step_agent(agent, DT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0, rng)
        step_agent(agent, DT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0, rng)
        visited = [p.copy() for p in agent.history]
        step_agent(agent, BT, grid, gm, SpeedModel(2.0, 0.0), SPEED_P, 60.0, rng)
        assert any(np.allclose(agent.position, p) for p in visited)
        step_agent(agent, BT, grid, gm, SpeedModel(2.0, 0.0), SPEED_P, 60.0, rng)
        assert any(np.allclose(agent.position, p) for p in visited)

    def test_rt_heads_to_trail_within_capture(self):
        grid, gm, lkp = make_world()
        trail = Trail(np.array([[5000.0, 5100.0], [6000.0, 5100.0]]))
        agent = AgentState.at((5000.0, 5000.0), 0, 0.0)
        rng = np.random.default_rng(0)
        step_agent(agent, RT, grid, gm, SpeedModel(1.0, 0.0), SPEED_P, 60.0, rng,
                   trails=(trail,))
        # pursuit target sits 100 m along the trail from the projection
        assert agent.position[1] > 5000.0
        assert agent.position[0] > 5000.0

    def test_rt_without_trails_falls_back_to_dt(self):
        grid, gm, lkp = make_world()
        a1 = AgentState.at(lkp, 0, 0.0)
        a2 = AgentState.at(lkp, 0, 0.0)
        step_agent(a1, RT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0,
                   np.random.default_rng(7))
        step_agent(a2, DT, grid, gm, SpeedModel(0.75, 0.0), SPEED_P, 60.0,
                   np.random.default_rng(7))
        assert np.allclose(a1.position, a2.position)


class TestSimulateCloud:
    def test_slice_zero_is_lkp(self):
        grid, gm, lkp = make_world(delta_theta=90.0)
        cloud = simulate_cloud(lkp, BehaviorProfile.default_hiker(), grid, gm,
                               SpeedModel(), SPEED_P, n_a=12, n_steps=5,
                               dt=60.0, seed=4)
        assert np.allclose(cloud.positions[:, 0, :], lkp)
        assert cloud.positions.shape == (12, 6, 2)

    def test_stay_put_profile_never_moves(self):
        grid, gm, lkp = make_world(delta_theta=90.0)
        cloud = simulate_cloud(lkp, BehaviorProfile({SP: 1.0}), grid, gm,
                               SpeedModel(), SPEED_P, n_a=6, n_steps=4,
                               dt=60.0, seed=4)
        assert np.allclose(cloud.positions, lkp[None, None, :])

    def test_reproducible_for_fixed_seed(self):
        grid, gm, lkp = make_world(delta_theta=45.0)
        kw = dict(n_a=8, n_steps=6, dt=60.0, seed=11)
        c1 = simulate_cloud(lkp, BehaviorProfile.default_hiker(), grid, gm,
                            SpeedModel(), SPEED_P, **kw)
        c2 = simulate_cloud(lkp, BehaviorProfile.default_hiker(), grid, gm,
                            SpeedModel(), SPEED_P, **kw)
        assert c1.positions.tobytes() == c2.positions.tobytes()

    def test_dt_only_expanding_ring(self):
        grid, gm, lkp = make_world(delta_theta=30.0)
        cloud = simulate_cloud(lkp, BehaviorProfile({DT: 1.0}), grid, gm,
                               SpeedModel(0.75, 0.0), SPEED_P, n_a=12,
                               n_steps=10, dt=60.0, seed=0)
        for k in range(1, 11):
            radii = np.linalg.norm(cloud.positions[:, k, :] - lkp, axis=1)
            assert np.allclose(radii, 0.75 * 60.0 * k, rtol=0.01)

    def test_dt_agents_stay_on_their_rays(self):
        grid, gm, lkp = make_world(delta_theta=30.0)
        cloud = simulate_cloud(lkp, BehaviorProfile({DT: 1.0}), grid, gm,
                               SpeedModel(0.75, 0.1), SPEED_P, n_a=12,
                               n_steps=8, dt=60.0, seed=3)
        from wisar.guideline import project_onto_polyline, point_at_arclength
        for i in range(12):
            ray = gm[(i * gm.ray_count) // 12]
            for k in range(9):
                p = cloud.positions[i, k]
                s = project_onto_polyline(ray.polyline, ray.cumlen, p)
                q = point_at_arclength(ray.polyline, ray.cumlen, s)
                assert np.linalg.norm(p - q) < 10.0  # one integration step

    def test_positions_within_travel_envelope(self):
        grid, gm, lkp = make_world(delta_theta=45.0)
        speed = SpeedModel(0.75, 0.25)
        cloud = simulate_cloud(lkp, BehaviorProfile.default_hiker(), grid, gm,
                               speed, SPEED_P, n_a=20, n_steps=10, dt=60.0,
                               seed=9)
        for k in range(11):
            radii = np.linalg.norm(cloud.positions[:, k, :] - lkp, axis=1)
            assert np.all(radii <= max_travel_radius(speed, k * 60.0) + 1e-9)

    def test_no_agent_in_water(self):
        grid = flat_grid(101, 100.0, elevation=10.0)
        h = grid.heights.copy()
        h[:, 55:60] = 0.0
        h[70:75, :] = 0.0
        grid = type(grid)(params=grid.params, heights=h, origin=grid.origin)
        _, gm, lkp = make_world(grid=grid, z_0=5.0, delta_theta=30.0)
        cloud = simulate_cloud(lkp, BehaviorProfile.default_hiker(), grid, gm,
                               SpeedModel(), SPEED_P, n_a=18, n_steps=15,
                               dt=60.0, seed=21, z_0=5.0)
        from wisar.terrain import is_water
        flat = cloud.positions.reshape(-1, 2)
        assert not np.any(is_water(grid, flat[:, 0], flat[:, 1], 5.0))

    def test_slice_for_time_nearest(self):
        grid, gm, lkp = make_world(delta_theta=90.0)
        cloud = simulate_cloud(lkp, BehaviorProfile({SP: 1.0}), grid, gm,
                               SpeedModel(), SPEED_P, n_a=2, n_steps=4,
                               dt=60.0, seed=0)
        assert cloud.slice_for_time(0.0) == 0
        assert cloud.slice_for_time(89.0) == 1
        assert cloud.slice_for_time(91.0) == 2
        assert cloud.slice_for_time(1e9) == 4


class TestCloudIO:
    def test_roundtrip(self, tmp_path):
        grid, gm, lkp = make_world(delta_theta=90.0)
        cloud = simulate_cloud(lkp, BehaviorProfile.default_hiker(), grid, gm,
                               SpeedModel(), SPEED_P, n_a=5, n_steps=3,
                               dt=60.0, seed=2)
        path = tmp_path / "cloud.csv"
        save_cloud(cloud, path)
        back = load_cloud(path)
        assert back.dt == cloud.dt
        assert np.allclose(back.positions, cloud.positions, atol=1e-6)
