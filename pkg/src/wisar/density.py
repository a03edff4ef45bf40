"""Probability density over the particle cloud and disk detection integrals.

The cloud's empirical measure is smoothed per time slice with a 2-D kernel
density estimate. Pheromone marks remove individual particles from every
estimate while the normalization stays at the full ensemble size, so searched
mass leaves the map instead of being renormalized away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lost_person import ParticleCloud
from .terrain import ConfigurationError

KERNELS = ("gaussian", "epanechnikov")


@dataclass(frozen=True)
class DensityParams:
    h_s: float = 250.0          # spatial bandwidth (m)
    kernel: str = "gaussian"

    def validate(self) -> None:
        if self.h_s <= 0:
            raise ConfigurationError("h_s must be > 0")
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"kernel must be one of {KERNELS}")


class MarkSet:
    """Monotone 'searched' flags over particle indices: set once, never clear."""

    def __init__(self, n_particles: int, flags=None):
        self._flags = np.zeros(n_particles, dtype=bool)
        if flags is not None:
            self._flags |= np.asarray(flags, dtype=bool)

    @property
    def flags(self) -> np.ndarray:
        out = self._flags.view()
        out.setflags(write=False)
        return out

    @property
    def n_particles(self) -> int:
        return len(self._flags)

    @property
    def n_marked(self) -> int:
        return int(self._flags.sum())

    def mark(self, indices) -> None:
        self._flags[np.asarray(indices, dtype=int)] = True

    def merge(self, other: "MarkSet") -> None:
        self._flags |= other._flags

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self._flags)

    def copy(self) -> "MarkSet":
        return MarkSet(len(self._flags), self._flags)

    def __eq__(self, other):
        return isinstance(other, MarkSet) and np.array_equal(self._flags, other._flags)


def _kernel_values(u2: np.ndarray, kernel: str) -> np.ndarray:
    """Radially symmetric 2-D kernel evaluated at squared scaled distance."""
    if kernel == "gaussian":
        return np.exp(-0.5 * u2) / (2.0 * np.pi)
    # epanechnikov: (2/pi)(1 - |u|^2) inside the unit disk
    return np.where(u2 <= 1.0, (2.0 / np.pi) * (1.0 - u2), 0.0)


def kde_at(cloud: ParticleCloud, t_step: int, x, y, params: DensityParams,
           marks: MarkSet) -> float:
    """Estimated density (1/m^2) at (x, y) for the given time slice.

    Sums kernels over unmarked particles only, but normalizes by the full
    ensemble size, so marking particles drains total probability mass.
    """
    return float(kde_grid(cloud, t_step, np.asarray([x], dtype=float),
                          np.asarray([y], dtype=float), params, marks)[0])


def kde_grid(cloud: ParticleCloud, t_step: int, xs, ys, params: DensityParams,
             marks: MarkSet) -> np.ndarray:
    """Vectorized `kde_at` over paired query coordinate arrays."""
    params.validate()
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    pts = cloud.at_step(t_step)
    alive = pts[~marks.flags]
    n = cloud.n_agents
    if len(alive) == 0:
        return np.zeros(xs.shape)
    h = params.h_s
    out = np.empty(len(xs))
    # chunk queries so the (queries x particles) matrix stays modest
    chunk = max(1, int(4e6 / max(len(alive), 1)))
    for lo in range(0, len(xs), chunk):
        hi = min(lo + chunk, len(xs))
        dx = (xs[lo:hi, None] - alive[None, :, 0]) / h
        dy = (ys[lo:hi, None] - alive[None, :, 1]) / h
        out[lo:hi] = _kernel_values(dx * dx + dy * dy, params.kernel).sum(axis=1)
    return out / (n * h * h)


def silverman_bandwidth(cloud: ParticleCloud, t_step: int) -> float:
    """Rule-of-thumb bandwidth 1.06 * sigma * n^(-1/6) for the slice spread."""
    pts = cloud.at_step(t_step)
    n = len(pts)
    sigma = float(np.sqrt(pts.var(axis=0).mean()))
    if sigma == 0.0:
        return 1.0  # degenerate slice (all particles coincide)
    return 1.06 * sigma * n ** (-1.0 / 6.0)


def poa_disk(cloud: ParticleCloud, t_step: int, center, R: float,
             marks: MarkSet) -> float:
    """Probability of area: unmarked-particle fraction inside the closed disk.

    Exact integral of the empirical measure; this is the scoring ground truth
    the smooth surrogate approximates.
    """
    if R <= 0:
        raise ConfigurationError("R must be > 0")
    pts = cloud.at_step(t_step)
    d = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1)
    return float(np.sum((d <= R) & ~marks.flags) / cloud.n_agents)


def poa_disk_smooth(cloud: ParticleCloud, t_step: int, center, R: float,
                    params: DensityParams, marks: MarkSet) -> float:
    """Differentiable POA surrogate: logistic shoulder of width h_s at the rim."""
    if R <= 0:
        raise ConfigurationError("R must be > 0")
    pts = cloud.at_step(t_step)
    d = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1)
    # logistic((R - d) / h_s), written with tanh so huge |z| cannot overflow
    contrib = 0.5 * (1.0 + np.tanh(0.5 * (R - d) / params.h_s))
    return float(np.sum(contrib[~marks.flags]) / cloud.n_agents)


def rasterize_density(cloud: ParticleCloud, t_step: int, params: DensityParams,
                      marks: MarkSet, extent, shape) -> np.ndarray:
    """Evaluate the KDE on a regular grid.

    extent is (xmin, xmax, ymin, ymax); shape is (ny, nx). Row j, column i
    holds the density at the (i, j)-th grid node, y increasing with j.
    """
    xmin, xmax, ymin, ymax = extent
    ny, nx = shape
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    gx, gy = np.meshgrid(xs, ys)
    vals = kde_grid(cloud, t_step, gx.ravel(), gy.ravel(), params, marks)
    return vals.reshape(ny, nx)


def save_heatmap(matrix: np.ndarray, extent, path) -> None:
    """Plain-text matrix with a '# xmin xmax ymin ymax ny nx' header."""
    ny, nx = matrix.shape
    with open(path, "w") as f:
        f.write(f"# {extent[0]:.6f} {extent[1]:.6f} {extent[2]:.6f} "
                f"{extent[3]:.6f} {ny} {nx}\n")
        np.savetxt(f, matrix, fmt="%.10e")
