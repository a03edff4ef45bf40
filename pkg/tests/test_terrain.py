"""Terrain generation, elevation interpolation, slopes and speed scaling."""

import numpy as np
import pytest

from wisar.terrain import (
    ConfigurationError,
    DomainError,
    SpeedScaleParams,
    TerrainParams,
    average_slope,
    elevation_at,
    flat_grid,
    generate_terrain,
    is_water,
    load_heightfield,
    plane_grid,
    save_heightfield,
    speed_scale,
    water_level,
)


class TestGenerateTerrain:
    def test_zero_roughness_is_flat_at_el(self):
        params = TerrainParams(n_e=33, el=8.0, r_0=0.0, r_r=10.0, height_scale=1.0)
        grid = generate_terrain(params, seed=3)
        assert np.allclose(grid.heights, 8.0)

    def test_deterministic_for_fixed_seed(self):
        params = TerrainParams(n_e=65, el=8.0, r_0=6.0, r_r=10.0)
        a = generate_terrain(params, seed=42)
        b = generate_terrain(params, seed=42)
        assert np.array_equal(a.heights, b.heights)

    def test_different_seeds_differ(self):
        params = TerrainParams(n_e=65, el=8.0, r_0=6.0, r_r=10.0)
        a = generate_terrain(params, seed=1)
        b = generate_terrain(params, seed=2)
        assert not np.array_equal(a.heights, b.heights)

    def test_higher_r0_gives_rougher_terrain(self):
        # Table-style presets use r_0 = 6 / 11 / 18; compare the extremes
        mild = generate_terrain(TerrainParams(n_e=129, el=8, r_0=6.0, r_r=10.0), seed=7)
        severe = generate_terrain(TerrainParams(n_e=129, el=8, r_0=18.0, r_r=10.0), seed=7)

        def diff_std(g):
            return np.diff(g.heights, axis=1).std()

        assert diff_std(severe) > diff_std(mild)

    def test_higher_rr_attenuates_fine_scale_faster(self):
        # ratio of fine-scale to coarse-scale variation must drop as r_r grows
        slow = generate_terrain(TerrainParams(n_e=129, el=8, r_0=11.0, r_r=8.0), seed=5)
        fast = generate_terrain(TerrainParams(n_e=129, el=8, r_0=11.0, r_r=18.0), seed=5)

        def fine_to_coarse(g):
            fine = np.diff(g.heights, axis=1).std()
            coarse = (g.heights[:, 64:] - g.heights[:, :-64]).std()
            return fine / coarse

        assert fine_to_coarse(fast) < fine_to_coarse(slow)

    def test_invalid_params_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_terrain(TerrainParams(n_e=1), seed=0)
        with pytest.raises(ConfigurationError):
            generate_terrain(TerrainParams(n_e=33, cell_size=0.0), seed=0)
        with pytest.raises(ConfigurationError):
            generate_terrain(TerrainParams(n_e=33, r_0=-1.0), seed=0)

    def test_preset_lookup(self):
        p = TerrainParams.preset("mild", n_e=33)
        assert (p.el, p.r_0, p.r_r) == (8.0, 6.0, 10.0)
        with pytest.raises(ConfigurationError):
            TerrainParams.preset("extreme")


class TestElevationAt:
    def test_exact_at_cell_centers(self):
        grid = generate_terrain(TerrainParams(n_e=17, r_0=4.0, cell_size=10.0), seed=1)
        for i, j in [(0, 0), (3, 5), (16, 16), (8, 1)]:
            assert elevation_at(grid, 10.0 * i, 10.0 * j) == pytest.approx(
                grid.heights[j, i], abs=1e-12
            )

    def test_midpoint_is_mean_of_two_cells(self):
        grid = flat_grid(5, 10.0)
        h = grid.heights.copy()
        h[2, 2] = 10.0
        h[2, 3] = 20.0
        grid = type(grid)(params=grid.params, heights=h, origin=grid.origin)
        assert elevation_at(grid, 25.0, 20.0) == pytest.approx(15.0)

    def test_flat_everywhere(self):
        grid = flat_grid(9, 5.0, elevation=8.0)
        xs = np.linspace(0, 40, 17)
        assert np.allclose(elevation_at(grid, xs, xs), 8.0)

    def test_bounded_by_surrounding_cells(self):
        grid = generate_terrain(TerrainParams(n_e=33, r_0=9.0, cell_size=10.0), seed=9)
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 320, 200)
        y = rng.uniform(0, 320, 200)
        z = elevation_at(grid, x, y)
        ix = np.clip((x // 10).astype(int), 0, 31)
        iy = np.clip((y // 10).astype(int), 0, 31)
        corners = np.stack([
            grid.heights[iy, ix], grid.heights[iy, ix + 1],
            grid.heights[iy + 1, ix], grid.heights[iy + 1, ix + 1],
        ])
        assert np.all(z >= corners.min(axis=0) - 1e-9)
        assert np.all(z <= corners.max(axis=0) + 1e-9)

    def test_out_of_bounds_raises(self):
        grid = flat_grid(5, 10.0)
        with pytest.raises(DomainError):
            elevation_at(grid, -1.0, 0.0)
        with pytest.raises(DomainError):
            elevation_at(grid, 0.0, 40.0001)


class TestWater:
    def test_below_threshold_is_water(self):
        grid = flat_grid(5, 10.0, elevation=3.0)
        assert is_water(grid, 5.0, 5.0, z_0=5.0)

    def test_threshold_is_strict(self):
        grid = flat_grid(5, 10.0, elevation=5.0)
        assert not is_water(grid, 5.0, 5.0, z_0=5.0)

    def test_flat_above_threshold_has_no_water(self):
        grid = flat_grid(9, 10.0, elevation=8.0)
        z0 = 5.0
        xs, ys = np.meshgrid(np.linspace(0, 80, 9), np.linspace(0, 80, 9))
        assert not np.any(is_water(grid, xs, ys, z0))

    def test_water_level_percentile(self):
        grid = generate_terrain(TerrainParams(n_e=65, r_0=11.0), seed=4)
        z0 = water_level(grid, percentile=8.0)
        frac = np.mean(grid.heights < z0)
        assert 0.05 < frac < 0.11


class TestAverageSlope:
    def test_flat_is_zero(self):
        grid = flat_grid(9, 10.0, elevation=2.0)
        assert average_slope(grid, (5, 5), (70, 60)) == pytest.approx(0.0)

    def test_unit_plane_gives_45_degrees(self):
        grid = plane_grid(9, 10.0, gx=1.0)
        assert average_slope(grid, (5, 40), (70, 40)) == pytest.approx(45.0)

    def test_antisymmetric_under_reversal(self):
        grid = plane_grid(9, 10.0, gx=1.0)
        fwd = average_slope(grid, (5, 40), (70, 40))
        back = average_slope(grid, (70, 40), (5, 40))
        assert fwd == pytest.approx(-back)
        grid2 = generate_terrain(TerrainParams(n_e=33, r_0=8.0, cell_size=10.0), seed=2)
        fwd = average_slope(grid2, (30, 40), (200, 250))
        back = average_slope(grid2, (200, 250), (30, 40))
        assert fwd == pytest.approx(-back, abs=1e-9)

    def test_coincident_points_zero(self):
        grid = plane_grid(9, 10.0, gx=1.0)
        assert average_slope(grid, (30, 30), (30, 30)) == 0.0


class TestSpeedScale:
    P = SpeedScaleParams(gamma_min=-35.0, gamma_max=30.0)

    def test_flat_is_one(self):
        assert speed_scale(0.0, self.P) == 1.0

    def test_limits_are_zero(self):
        assert speed_scale(30.0, self.P) == 0.0
        assert speed_scale(-35.0, self.P) == 0.0

    def test_half_incline_is_half(self):
        assert speed_scale(15.0, self.P) == pytest.approx(0.5)

    def test_out_of_range_clamps_to_zero(self):
        assert speed_scale(50.0, self.P) == 0.0
        assert speed_scale(-80.0, self.P) == 0.0

    def test_continuous_at_zero_and_monotone(self):
        gammas = np.linspace(-35, 30, 131)
        q = np.array([speed_scale(g, self.P) for g in gammas])
        assert q.max() == 1.0
        # non-increasing in |gamma| on each side
        neg = q[gammas <= 0]
        pos = q[gammas >= 0]
        assert np.all(np.diff(neg) >= -1e-12)
        assert np.all(np.diff(pos) <= 1e-12)


class TestHeightfieldIO:
    def test_roundtrip(self, tmp_path):
        grid = generate_terrain(TerrainParams(n_e=17, r_0=5.0, cell_size=10.0), seed=11)
        path = tmp_path / "field.txt"
        save_heightfield(grid, path)
        back = load_heightfield(path)
        assert back.params.n_e == 17
        assert back.params.cell_size == 10.0
        assert np.allclose(back.heights, grid.heights, atol=1e-6)

    def test_save_is_reproducible(self, tmp_path):
        grid = generate_terrain(TerrainParams(n_e=17, r_0=5.0), seed=11)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_heightfield(grid, p1)
        save_heightfield(grid, p2)
        assert p1.read_bytes() == p2.read_bytes()
