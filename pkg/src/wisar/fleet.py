"""Fleet-level coordination: range-limited links and pheromone exchange.

Everything here runs at the tick barrier. Detection marks particles in a
UAV's own cognitive map; one exchange round then unions each UAV's marks with
those of its direct neighbors. Information crosses multiple hops only over
successive ticks through intermediaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .density import MarkSet
from .lost_person import ParticleCloud


@dataclass(frozen=True)
class CommGraph:
    """Undirected link set over UAV ids, edges within communication range."""

    n: int
    edges: frozenset   # of frozenset({i, j}) pairs

    def neighbors(self, i: int) -> list:
        out = [j for j in range(self.n) if i != j
               and frozenset((i, j)) in self.edges]
        return out

    def connected(self, i: int, j: int) -> bool:
        return frozenset((i, j)) in self.edges


@dataclass
class UavState:
    id: int
    position: np.ndarray
    marks: MarkSet                   # this UAV's searched-particle flags
    prev_position: np.ndarray | None = None
    trajectory: list = field(default_factory=list)

    @classmethod
    def at(cls, uav_id: int, position, n_particles: int) -> "UavState":
        p = np.asarray(position, dtype=float)
        return cls(id=uav_id, position=p.copy(), marks=MarkSet(n_particles),
                   trajectory=[p.copy()])

    def move_to(self, waypoint) -> None:
        self.prev_position = self.position.copy()
        self.position = np.asarray(waypoint, dtype=float).copy()
        self.trajectory.append(self.position.copy())


@dataclass(frozen=True)
class PheromoneMsg:
    sender: int
    marked_indices: tuple

    def validate(self, n_particles: int) -> None:
        if any(not 0 <= i < n_particles for i in self.marked_indices):
            raise ValueError("pheromone indices out of range")


def comm_graph(positions, r_c: float) -> CommGraph:
    """Edges between every pair of UAVs within r_c of each other."""
    pts = np.asarray(positions, dtype=float)
    n = len(pts)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pts[i] - pts[j]) <= r_c:
                edges.add(frozenset((i, j)))
    return CommGraph(n=n, edges=frozenset(edges))


def nearest_neighbor(i: int, positions):
    """Index of the closest other UAV, ties to the lowest id; None if alone."""
    pts = np.asarray(positions, dtype=float)
    if len(pts) < 2:
        return None
    d = np.linalg.norm(pts - pts[i], axis=1)
    d[i] = np.inf
    return int(np.argmin(d))   # argmin takes the first (lowest id) on ties


def detect_particles(uav_pos, cloud: ParticleCloud, t_step: int, R: float,
                     marks: MarkSet) -> np.ndarray:
    """Mark unmarked particles inside the closed detection disk.

    Returns the newly marked indices; `marks` is updated in place.
    """
    pts = cloud.at_step(t_step)
    d = np.linalg.norm(pts - np.asarray(uav_pos, dtype=float), axis=1)
    new = np.flatnonzero((d <= R) & ~marks.flags)
    marks.mark(new)
    return new


def exchange_pheromones(uavs, graph: CommGraph) -> None:
    """Single-hop mark union across current links, symmetric and idempotent.

    All unions read pre-exchange snapshots, so in a chain A-B-C the middle
    UAV learns both ends' marks this tick while A and C stay unaware of each
    other until a later tick relays them.
    """
    before = {u.id: u.marks.copy() for u in uavs}
    for u in uavs:
        for j in graph.neighbors(u.id):
            u.marks.merge(before[j])
