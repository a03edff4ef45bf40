"""Procedural terrain: generation, elevation queries, water masks, slopes.

The heightfield is a square grid of elevations (meters). World coordinates
are continuous; `elevation_at` interpolates bilinearly between cell centers,
so slope and water queries work anywhere inside the grid extent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TERRAIN_PRESETS = {
    # [el, r_0, r_r] roughness presets: mild / moderate / severe
    "mild": (8.0, 6.0, 10.0),
    "moderate": (8.0, 11.0, 18.0),
    "severe": (5.0, 18.0, 8.0),
}

DEFAULT_WATER_PERCENTILE = 8.0  # z_0 = this percentile of the height matrix


@dataclass(frozen=True)
class TerrainParams:
    """Knobs for the fractal heightfield generator.

    el, r_0 and r_r are abstract roughness-tool units; height_scale maps one
    unit to meters so slopes come out in a plausible hiking range.
    """

    n_e: int = 1001            # grid edge size (cells)
    el: float = 8.0            # base elevation (abstract units)
    r_0: float = 6.0           # initial roughness (abstract units)
    r_r: float = 10.0          # roughness rate; higher smooths out faster
    cell_size: float = 65.0    # meters per cell
    height_scale: float = 40.0  # meters per abstract unit

    def validate(self) -> None:
        if self.n_e < 2:
            raise ConfigurationError(f"n_e must be >= 2, got {self.n_e}")
        if self.cell_size <= 0:
            raise ConfigurationError(f"cell_size must be > 0, got {self.cell_size}")
        if self.r_0 < 0:
            raise ConfigurationError(f"r_0 must be >= 0, got {self.r_0}")
        if self.r_r <= 0:
            raise ConfigurationError(f"r_r must be > 0, got {self.r_r}")
        if self.height_scale <= 0:
            raise ConfigurationError("height_scale must be > 0")

    @classmethod
    def preset(cls, name: str, **overrides) -> "TerrainParams":
        try:
            el, r_0, r_r = TERRAIN_PRESETS[name]
        except KeyError:
            raise ConfigurationError(
                f"unknown terrain preset {name!r}; choose from {sorted(TERRAIN_PRESETS)}"
            ) from None
        return cls(el=el, r_0=r_0, r_r=r_r, **overrides)


@dataclass(frozen=True)
class SpeedScaleParams:
    """Maximum decline/incline angles a walker can handle (degrees)."""

    gamma_min: float = -35.0   # steepest passable decline, < 0
    gamma_max: float = 30.0    # steepest passable incline, > 0

    def validate(self) -> None:
        if not (self.gamma_min < 0 < self.gamma_max):
            raise ConfigurationError(
                f"need gamma_min < 0 < gamma_max, got ({self.gamma_min}, {self.gamma_max})"
            )


class ConfigurationError(ValueError):
    """Invalid generator or mission parameters."""


class DomainError(ValueError):
    """Query outside the grid extent."""


@dataclass
class TerrainGrid:
    """Immutable heightfield with continuous bilinear elevation queries."""

    params: TerrainParams
    heights: np.ndarray                  # (n_e, n_e), heights[j, i] at (x_i, y_j)
    origin: tuple[float, float] = (0.0, 0.0)  # world coordinate of cell (0, 0)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        n = self.params.n_e
        if h.shape != (n, n):
            raise ConfigurationError(f"heights must be {n}x{n}, got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ConfigurationError("heights contain non-finite values")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @property
    def extent(self) -> float:
        """Side length of the grid in meters."""
        return (self.params.n_e - 1) * self.params.cell_size

    @property
    def x_range(self) -> tuple[float, float]:
        return self.origin[0], self.origin[0] + self.extent

    @property
    def y_range(self) -> tuple[float, float]:
        return self.origin[1], self.origin[1] + self.extent

    def in_bounds(self, x, y):
        """True where (x, y) lies inside the grid extent (edges inclusive)."""
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


def generate_terrain(params: TerrainParams, seed: int) -> TerrainGrid:
    """Generate a fractal heightfield via diamond-square midpoint displacement.

    Displacement amplitude at subdivision level k is
    ``height_scale * r_0 * 2**(-k * r_r / 10)``: r_0 scales overall roughness
    while r_r controls how fast roughness dies out toward fine scales (r_r = 10
    reproduces the classic per-level halving). Bitwise deterministic for a
    fixed (params, seed).
    """
    params.validate()
    rng = np.random.default_rng(seed)
    n_e = params.n_e

    # diamond-square needs a (2^k + 1) grid; generate the smallest one that
    # covers n_e and crop
    size = 1
    while size + 1 < n_e:
        size *= 2
    n = size + 1

    base = params.el * params.height_scale
    h = np.full((n, n), base, dtype=float)

    def amplitude(level: int) -> float:
        return params.height_scale * params.r_0 * 2.0 ** (-level * params.r_r / 10.0)

    corners = np.array([[0, 0], [0, size], [size, 0], [size, size]])
    h[corners[:, 0], corners[:, 1]] = base + amplitude(0) * rng.standard_normal(4)

    step = size
    level = 1
    while step > 1:
        half = step // 2
        amp = amplitude(level)

        # diamond: square centers get the corner mean plus noise
        idx = np.arange(half, size, step)
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        h[rr, cc] = 0.25 * (
            h[rr - half, cc - half]
            + h[rr - half, cc + half]
            + h[rr + half, cc - half]
            + h[rr + half, cc + half]
        ) + amp * rng.standard_normal(rr.shape)

        # square: edge midpoints average their 3-4 diamond neighbors
        for rows, cols in (
            (np.arange(0, n, step), np.arange(half, size, step)),
            (np.arange(half, size, step), np.arange(0, n, step)),
        ):
            rr, cc = np.meshgrid(rows, cols, indexing="ij")
            acc = np.zeros(rr.shape)
            cnt = np.zeros(rr.shape)
            for dr, dc in ((-half, 0), (half, 0), (0, -half), (0, half)):
                r2, c2 = rr + dr, cc + dc
                ok = (r2 >= 0) & (r2 < n) & (c2 >= 0) & (c2 < n)
                acc += np.where(ok, h[np.clip(r2, 0, n - 1), np.clip(c2, 0, n - 1)], 0.0)
                cnt += ok
            h[rr, cc] = acc / cnt + amp * rng.standard_normal(rr.shape)

        step = half
        level += 1

    return TerrainGrid(params=params, heights=h[:n_e, :n_e])


def elevation_at(grid: TerrainGrid, x, y):
    """Bilinear elevation at world coordinates (scalar or array, meters)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(grid.in_bounds(x, y)):
        raise DomainError("elevation query outside grid extent")
    cs = grid.params.cell_size
    n = grid.params.n_e
    fx = (x - grid.origin[0]) / cs
    fy = (y - grid.origin[1]) / cs
    ix = np.clip(np.floor(fx).astype(int), 0, n - 2)
    iy = np.clip(np.floor(fy).astype(int), 0, n - 2)
    tx = fx - ix
    ty = fy - iy
    h = grid.heights
    out = (
        h[iy, ix] * (1 - tx) * (1 - ty)
        + h[iy, ix + 1] * tx * (1 - ty)
        + h[iy + 1, ix] * (1 - tx) * ty
        + h[iy + 1, ix + 1] * tx * ty
    )
    return float(out) if out.ndim == 0 else out


def water_level(grid: TerrainGrid, percentile: float = DEFAULT_WATER_PERCENTILE) -> float:
    """z_0 threshold below which terrain counts as river/lake."""
    return float(np.percentile(grid.heights, percentile))


def is_water(grid: TerrainGrid, x, y, z_0: float):
    """True where the interpolated elevation is strictly below z_0."""
    return elevation_at(grid, x, y) < z_0


def average_slope(grid: TerrainGrid, p_from, p_to, n_samples: int = 8) -> float:
    """Average slope (degrees) along a segment, signed uphill-positive.

    Samples n_samples elevations uniformly along the segment and fits a
    least-squares line h = a*s + b against arc length s; returns atan(a).
    Coincident endpoints give 0 by definition.
    """
    slopes = segment_slopes(
        grid,
        np.asarray(p_from, dtype=float)[None, :],
        np.asarray(p_to, dtype=float)[None, :],
        n_samples,
    )
    return float(slopes[0])


def segment_slopes(grid: TerrainGrid, starts: np.ndarray, ends: np.ndarray,
                   n_samples: int = 8) -> np.ndarray:
    """Vectorized `average_slope` over (m, 2) segment start/end arrays."""
    if n_samples < 2:
        raise ConfigurationError("n_samples must be >= 2")
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    lengths = np.linalg.norm(ends - starts, axis=1)          # (m,)
    t = np.linspace(0.0, 1.0, n_samples)                     # (k,)
    xs = starts[:, 0:1] + t[None, :] * (ends[:, 0:1] - starts[:, 0:1])
    ys = starts[:, 1:2] + t[None, :] * (ends[:, 1:2] - starts[:, 1:2])
    h = elevation_at(grid, xs, ys)                           # (m, k)
    s = lengths[:, None] * t[None, :]                        # arc length samples
    # closed-form least squares slope per row
    s_mean = s.mean(axis=1, keepdims=True)
    h_mean = h.mean(axis=1, keepdims=True)
    denom = ((s - s_mean) ** 2).sum(axis=1)
    num = ((s - s_mean) * (h - h_mean)).sum(axis=1)
    a = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    return np.degrees(np.arctan(a))


def speed_scale(gamma: float, p: SpeedScaleParams) -> float:
    """Piecewise-linear walking-speed scaling factor q(gamma) in [0, 1].

    q(0) = 1 and q falls linearly to 0 at gamma_min (decline) or gamma_max
    (incline). Slopes beyond either limit clamp to 0: the segment is
    impassable rather than an error.
    """
    if gamma < p.gamma_min or gamma > p.gamma_max:
        return 0.0
    if gamma < 0.0:
        return 1.0 - gamma / p.gamma_min
    return 1.0 - gamma / p.gamma_max


# ---------------------------------------------------------------------------
# heightfield text format: header "n_e cell_size origin_x origin_y", then
# n_e rows of n_e space-separated heights
# ---------------------------------------------------------------------------

def save_heightfield(grid: TerrainGrid, path) -> None:
    with open(path, "w") as f:
        f.write(f"{grid.params.n_e} {grid.params.cell_size:.6f} "
                f"{grid.origin[0]:.6f} {grid.origin[1]:.6f}\n")
        np.savetxt(f, grid.heights, fmt="%.6f")


def load_heightfield(path) -> TerrainGrid:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4:
            raise ConfigurationError(f"bad heightfield header in {path}")
        n_e = int(header[0])
        cell_size = float(header[1])
        origin = (float(header[2]), float(header[3]))
        heights = np.loadtxt(f)
    heights = heights.reshape(n_e, n_e)
    params = TerrainParams(n_e=n_e, cell_size=cell_size)
    return TerrainGrid(params=params, heights=heights, origin=origin)


def flat_grid(n_e: int, cell_size: float, elevation: float = 0.0,
              origin: tuple[float, float] = (0.0, 0.0)) -> TerrainGrid:
    """Uniform-height grid, handy for controlled scenarios and tests."""
    params = TerrainParams(n_e=n_e, el=elevation, r_0=0.0, cell_size=cell_size,
                           height_scale=1.0)
    heights = np.full((n_e, n_e), float(elevation))
    return TerrainGrid(params=params, heights=heights, origin=origin)


def plane_grid(n_e: int, cell_size: float, gx: float = 0.0, gy: float = 0.0,
               base: float = 0.0, origin: tuple[float, float] = (0.0, 0.0)) -> TerrainGrid:
    """Tilted plane z = base + gx*x + gy*y, for analytic slope checks."""
    params = TerrainParams(n_e=n_e, el=base, r_0=0.0, cell_size=cell_size,
                           height_scale=1.0)
    xs = origin[0] + np.arange(n_e) * cell_size
    ys = origin[1] + np.arange(n_e) * cell_size
    heights = base + gx * xs[None, :] + gy * ys[:, None]
    return TerrainGrid(params=params, heights=heights, origin=origin)
