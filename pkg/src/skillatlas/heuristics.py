"""Static layout heuristics: BFS goal-affinity and corner/wall/hole danger fields."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .gridworld import CellKind, GridCoord, GridLayout, OutOfBounds

# Attenuation magnitudes for the danger heuristic.
CORNER_DANGER = 1.0
WALL_DANGER = 0.4
HOLE_DANGER = 1.0
HOLE_NEIGHBOR_DANGER = 0.6


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Dense field over grid cells, values in [0, 1], indexed ``values[y, x]``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("heatmap values must be 2-D")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, width: int, height: int) -> "Heatmap":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __getitem__(self, c: tuple[int, int]) -> float:
        x, y = c
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise OutOfBounds(f"{tuple(c)} outside {self.width}x{self.height} heatmap")
        return float(self.values[y, x])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Heatmap):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


def bfs_distance_field(
    layout: GridLayout, targets: Iterable[tuple[int, int]]
) -> list[list[int | None]]:
    """Minimum 4-connected step count to the nearest target, ``None`` where unreachable.

    Walls and holes are impassable.
    """
    tgt = [tuple(t) for t in targets]
    if not tgt:
        raise ValueError("targets must be non-empty")
    for t in tgt:
        if not layout.in_bounds(t):
            raise OutOfBounds(f"target {t} out of bounds")
    dist = kernels.bfs_distance(layout.passable_mask(), np.array(tgt, dtype=np.int64))
    return [[None if d < 0 else d for d in row] for row in dist.tolist()]


def affinity_heuristic(layout: GridLayout) -> Heatmap:
    """``1 - d/d_max`` over reachable cells, 0 elsewhere."""
    targets = layout.targets
    if not targets:
        raise ValueError("layout has no target or goal cell")
    dist = kernels.bfs_distance(layout.passable_mask(), np.array(targets, dtype=np.int64))
    reach = dist >= 0
    out = np.zeros(dist.shape)
    d_max = int(dist[reach].max())
    if d_max == 0:
        out[reach] = 1.0
    else:
        out[reach] = 1.0 - dist[reach] / d_max
    return Heatmap(out)


def danger_heuristic(layout: GridLayout) -> Heatmap:
    out = np.zeros((layout.height, layout.width))
    if layout.kind == "sokoban":
        for c in layout.cells_of(CellKind.FLOOR):
            if layout.is_corner(c):
                out[c.y, c.x] = CORNER_DANGER
            elif any(layout.blocked(n) for n in _neighbors(c)):
                out[c.y, c.x] = WALL_DANGER
    else:
        for h in layout.cells_of(CellKind.HOLE):
            out[h.y, h.x] = HOLE_DANGER
            for n in _neighbors(h):
                if layout.in_bounds(n) and layout.cell(n) in (CellKind.FLOOR, CellKind.START):
                    out[n.y, n.x] = max(out[n.y, n.x], HOLE_NEIGHBOR_DANGER)
    return Heatmap(out)


def _neighbors(c: GridCoord) -> tuple[GridCoord, ...]:
    x, y = c
    return (GridCoord(x, y - 1), GridCoord(x, y + 1), GridCoord(x - 1, y), GridCoord(x + 1, y))
