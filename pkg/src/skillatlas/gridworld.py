"""Deterministic, seeded Sokoban and FrozenLake grids.

Both environments share one value-typed state (:class:`GridState`) that carries the
privileged layout information used for heatmap evolution and reward shaping.
Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row; arrays are indexed
``[y, x]``.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from .reward import RewardConfig

GENERATION_RETRY_BUDGET = 1000
DEFAULT_MAX_STEPS = 100


class InfeasibleGeneration(ValueError):
    def __init__(self, message: str, budget: int = GENERATION_RETRY_BUDGET):
        super().__init__(f"{message} (retry budget {budget})")
        self.budget = budget


class SteppedTerminal(RuntimeError):
    pass


class OutOfBounds(ValueError):
    pass


class GridCoord(NamedTuple):
    x: int
    y: int


class CellKind(enum.IntEnum):
    FLOOR = 0
    WALL = 1
    TARGET = 2
    HOLE = 3
    GOAL = 4
    START = 5


class Terminal(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


class Direction(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


DELTAS = {
    Direction.UP: (0, -1),
    Direction.DOWN: (0, 1),
    Direction.LEFT: (-1, 0),
    Direction.RIGHT: (1, 0),
}


@dataclass(frozen=True)
class Action:
    direction: Direction
    well_formed: bool = True


ACTIONS = tuple(Action(d) for d in Direction)


@dataclass(frozen=True, eq=False)
class GridLayout:
    """Immutable cell grid. ``kind`` is ``"sokoban"`` or ``"frozenlake"``."""

    width: int
    height: int
    cells: np.ndarray
    seed: int
    kind: str

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=np.int8)
        if cells.shape != (self.height, self.width):
            raise ValueError(f"cells shape {cells.shape} != ({self.height}, {self.width})")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "_rows", tuple(tuple(int(c) for c in row) for row in cells))
        goal_kind = CellKind.TARGET if self.kind == "sokoban" else CellKind.GOAL
        object.__setattr__(self, "target_set", frozenset(self.cells_of(goal_kind)))
        dead = frozenset(
            c for c in self.cells_of(CellKind.FLOOR) if self.is_corner(c)
        ) if self.kind == "sokoban" else frozenset()
        object.__setattr__(self, "dead_corners", dead)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridLayout):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.seed == other.seed
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.seed, self.cells.tobytes()))

    def cell(self, c: tuple[int, int]) -> CellKind:
        return CellKind(self._rows[c[1]][c[0]])

    def in_bounds(self, c: tuple[int, int]) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def blocked(self, c: tuple[int, int]) -> bool:
        """Out of bounds or a wall."""
        x, y = c
        return not (0 <= x < self.width and 0 <= y < self.height) or self._rows[y][x] == CellKind.WALL

    def cells_of(self, *kinds: CellKind) -> list[GridCoord]:
        wanted = {int(k) for k in kinds}
        return [
            GridCoord(x, y)
            for y, row in enumerate(self._rows)
            for x, v in enumerate(row)
            if v in wanted
        ]

    @property
    def targets(self) -> list[GridCoord]:
        """Goal-like cells: Sokoban targets or the FrozenLake goal."""
        return sorted(self.target_set)

    def passable_mask(self) -> np.ndarray:
        """Cells an entity may stand on without ending the episode."""
        return ((self.cells != CellKind.WALL) & (self.cells != CellKind.HOLE)).astype(np.uint8)

    def is_corner(self, c: tuple[int, int]) -> bool:
        x, y = c
        vertical = self.blocked((x, y - 1)) or self.blocked((x, y + 1))
        horizontal = self.blocked((x - 1, y)) or self.blocked((x + 1, y))
        return vertical and horizontal


@dataclass(frozen=True)
class GridState:
    layout: GridLayout
    player: GridCoord
    boxes: tuple[GridCoord, ...] = ()
    step_index: int = 0
    terminal: Terminal = Terminal.RUNNING
    timed_out: bool = False
    # Last pushed box; None until the first push.
    focus: GridCoord | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(sorted(GridCoord(*b) for b in self.boxes)))
        object.__setattr__(self, "player", GridCoord(*self.player))
        if self.focus is not None:
            object.__setattr__(self, "focus", GridCoord(*self.focus))

    @property
    def key(self) -> tuple:
        """Occupancy hash key: layout seed, player and box positions."""
        return (self.layout.seed, self.player, self.boxes)

    @property
    def primary(self) -> GridCoord:
        """Coordinate of the manipulated entity: the last pushed box in Sokoban."""
        if not self.boxes:
            return self.player
        return self.focus if self.focus is not None else self.boxes[0]


@dataclass(frozen=True)
class TrajectoryStep:
    coord: GridCoord
    action: Action
    env_reward: float
    format_valid: bool = True


@dataclass
class Trajectory:
    steps: list[TrajectoryStep]
    initial_coord: GridCoord
    outcome: Outcome
    layout_seed: int
    # Populated by rollouts; not part of equality-relevant statistics.
    frames: list[GridState] = field(default_factory=list, repr=False)
    rewards: list = field(default_factory=list, repr=False)

    @property
    def final_coord(self) -> GridCoord:
        return self.steps[-1].coord if self.steps else self.initial_coord

    @property
    def coords(self) -> list[GridCoord]:
        return [s.coord for s in self.steps]


# --------------------------------------------------------------------------- generation


def _check_capacity(floor_cells: int, needed: int) -> None:
    if needed > floor_cells:
        raise InfeasibleGeneration(
            f"need {needed} free cells but only {floor_cells} floor cells available"
        )


def generate_sokoban(
    seed: int,
    width: int,
    height: int,
    n_boxes: int,
    *,
    border: bool = True,
    interior_walls: int = 0,
    pull_steps: int | None = None,
    min_box_distance: int = 2,
) -> tuple[GridLayout, GridState]:
    """Generate a solvable Sokoban room by reverse play.

    Boxes start on their targets and the player pulls them away with a random walk.
    Every reverse move is a legal forward push when replayed backwards, so the
    resulting state is solvable by construction. Reverse pulls can never leave a box
    in a corner, so the eager deadlock rule does not fire along the solution.

    ``border`` surrounds the room with walls; without it the grid edge plays that role.
    ``interior_walls`` extra wall cells are scattered while keeping the floor connected.
    """
    pad = 1 if border else 0
    interior = max(0, width - 2 * pad) * max(0, height - 2 * pad)
    _check_capacity(interior - interior_walls, n_boxes + 1)
    if width < 4 or height < 4:
        raise ValueError("width and height must be >= 4")
    if n_boxes < 1:
        raise ValueError("n_boxes must be >= 1")
    if pull_steps is None:
        pull_steps = 4 * (width + height)

    rng = random.Random(seed)
    for _ in range(GENERATION_RETRY_BUDGET):
        cells = np.zeros((height, width), dtype=np.int8)
        if border:
            cells[0, :] = cells[-1, :] = CellKind.WALL
            cells[:, 0] = cells[:, -1] = CellKind.WALL
        floor = [(x, y) for y in range(pad, height - pad) for x in range(pad, width - pad)]
        for x, y in rng.sample(floor, interior_walls):
            cells[y, x] = CellKind.WALL
        floor = [c for c in floor if cells[c[1], c[0]] != CellKind.WALL]
        if not _connected(cells, floor):
            continue
        picks = rng.sample(floor, n_boxes + 1)
        targets = picks[:n_boxes]
        for x, y in targets:
            cells[y, x] = CellKind.TARGET
        layout = GridLayout(width, height, cells, seed, "sokoban")
        boxes = set(targets)
        player = picks[-1]
        for _ in range(pull_steps):
            d = DELTAS[Direction(rng.randrange(4))]
            nxt = (player[0] + d[0], player[1] + d[1])
            if layout.blocked(nxt) or nxt in boxes:
                continue
            behind = (player[0] - d[0], player[1] - d[1])
            if behind in boxes and rng.random() < 0.7:
                boxes.remove(behind)
                boxes.add(player)
            player = nxt
        if any(b in targets for b in boxes):
            continue
        if any(layout.is_corner(b) for b in boxes):
            continue
        dist = min(abs(b[0] - t[0]) + abs(b[1] - t[1]) for b in boxes for t in targets)
        if dist < min_box_distance:
            continue
        return layout, GridState(layout, GridCoord(*player), tuple(GridCoord(*b) for b in boxes))
    raise InfeasibleGeneration("no unsolved reverse-play state found")


def _connected(cells: np.ndarray, floor: list[tuple[int, int]]) -> bool:
    from .kernels import bfs_distance

    if not floor:
        return False
    passable = (cells != CellKind.WALL).astype(np.uint8)
    dist = bfs_distance(passable, np.array([floor[0]], dtype=np.int64))
    return all(dist[y, x] >= 0 for x, y in floor)


def _path_exists(layout: GridLayout, start: tuple[int, int], goal: tuple[int, int]) -> bool:
    from .kernels import bfs_distance

    dist = bfs_distance(layout.passable_mask(), np.array([goal], dtype=np.int64))
    return bool(dist[start[1], start[0]] >= 0)


def generate_frozenlake(
    seed: int, width: int, height: int, hole_fraction: float
) -> tuple[GridLayout, GridState]:
    """Start at the top-left corner, goal at the bottom-right.

    Exactly ``round(hole_fraction * (width * height - 2))`` holes are placed uniformly
    at random; layouts without a start-to-goal path are rejected and redrawn.
    """
    if not 0.0 <= hole_fraction < 1.0:
        raise ValueError("hole_fraction must lie in [0, 1)")
    if width < 1 or height < 1 or width * height < 2:
        raise ValueError("grid must have at least two cells")
    start, goal = (0, 0), (width - 1, height - 1)
    free = [(x, y) for y in range(height) for x in range(width) if (x, y) not in (start, goal)]
    n_holes = int(math.floor(hole_fraction * len(free) + 0.5))
    rng = random.Random(seed)
    for _ in range(GENERATION_RETRY_BUDGET):
        cells = np.zeros((height, width), dtype=np.int8)
        cells[start[1], start[0]] = CellKind.START
        cells[goal[1], goal[0]] = CellKind.GOAL
        for x, y in rng.sample(free, n_holes):
            cells[y, x] = CellKind.HOLE
        layout = GridLayout(width, height, cells, seed, "frozenlake")
        if _path_exists(layout, start, goal):
            return layout, GridState(layout, GridCoord(*start))
    raise InfeasibleGeneration("no layout with a start-to-goal path")


def initial_state(layout: GridLayout, player: tuple[int, int] | None = None,
                  boxes: tuple = ()) -> GridState:
    if player is None:
        starts = layout.cells_of(CellKind.START)
        if not starts:
            raise ValueError("layout has no start cell; pass player explicitly")
        player = starts[0]
    return GridState(layout, GridCoord(*player), tuple(boxes))


def step_budget(width: int, height: int) -> int:
    return DEFAULT_MAX_STEPS if width * height <= 64 else 2 * width * height


# --------------------------------------------------------------------------- dynamics


def step(
    state: GridState,
    action: Action,
    config: RewardConfig,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> tuple[GridState, TrajectoryStep]:
    """Advance one step. Returns the successor state and the logged step."""
    if state.terminal is not Terminal.RUNNING:
        raise SteppedTerminal(f"state already terminal ({state.terminal.value})")
    layout = state.layout
    idx = state.step_index + 1
    player, boxes, focus = state.player, state.boxes, state.focus
    terminal = Terminal.RUNNING

    if action.well_formed:
        dx, dy = DELTAS[action.direction]
        nxt = GridCoord(player.x + dx, player.y + dy)
        if layout.kind == "sokoban":
            if not layout.blocked(nxt):
                if nxt in boxes:
                    beyond = GridCoord(nxt.x + dx, nxt.y + dy)
                    if not layout.blocked(beyond) and beyond not in boxes:
                        boxes = tuple(beyond if b == nxt else b for b in boxes)
                        player = nxt
                        focus = beyond
                else:
                    player = nxt
            if all(b in layout.target_set for b in boxes):
                terminal = Terminal.SUCCESS
            elif any(b in layout.dead_corners for b in boxes):
                terminal = Terminal.FAILURE
        else:
            if layout.in_bounds(nxt):
                player = nxt
            kind = layout.cell(player)
            if kind == CellKind.GOAL:
                terminal = Terminal.SUCCESS
            elif kind == CellKind.HOLE:
                terminal = Terminal.FAILURE

    timed_out = False
    if terminal is Terminal.RUNNING and idx >= max_steps:
        terminal, timed_out = Terminal.FAILURE, True

    if terminal is Terminal.SUCCESS:
        reward = config.success
    elif terminal is Terminal.FAILURE:
        reward = config.failure
    else:
        reward = 0.0
    new_state = GridState(layout, player, boxes, idx, terminal, timed_out, focus)
    return new_state, TrajectoryStep(new_state.primary, action, reward, action.well_formed)


def outcome_of(state: GridState) -> Outcome:
    if state.terminal is Terminal.SUCCESS:
        return Outcome.SUCCESS
    if state.timed_out or state.terminal is Terminal.RUNNING:
        return Outcome.TIMEOUT
    return Outcome.FAILURE


def replay(initial: GridState, actions: list[Action], config: RewardConfig,
           max_steps: int = DEFAULT_MAX_STEPS) -> Trajectory:
    """Run an action sequence from ``initial`` until it ends or the state turns terminal."""
    state = initial
    steps: list[TrajectoryStep] = []
    frames: list[GridState] = []
    for a in actions:
        if state.terminal is not Terminal.RUNNING:
            break
        state, st = step(state, a, config, max_steps)
        steps.append(st)
        frames.append(state)
    return Trajectory(steps, initial.primary, outcome_of(state), initial.layout.seed, frames)


# --------------------------------------------------------------------------- projection


def project_continuous(
    pos_x: float, pos_z: float, origin: tuple[float, float] = (0.0, 0.0), resolution: float = 0.25
) -> GridCoord:
    """Quantize a continuous floor-plane position onto the grid.

    Points on a cell boundary belong to the higher-index cell.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    cx = math.floor((pos_x - origin[0]) / resolution)
    cz = math.floor((pos_z - origin[1]) / resolution)
    if cx < 0 or cz < 0:
        raise OutOfBounds(f"({pos_x}, {pos_z}) projects to negative cell ({cx}, {cz})")
    return GridCoord(cx, cz)


def cell_center(c: GridCoord, origin: tuple[float, float] = (0.0, 0.0),
                resolution: float = 0.25) -> tuple[float, float]:
    return (origin[0] + (c.x + 0.5) * resolution, origin[1] + (c.y + 0.5) * resolution)


# --------------------------------------------------------------------------- text format

_CELL_CHARS = {
    CellKind.FLOOR: ".",
    CellKind.WALL: "#",
    CellKind.TARGET: "T",
    CellKind.HOLE: "H",
    CellKind.GOAL: "G",
    CellKind.START: "S",
}
# Overlays beyond the base alphabet keep round-trips lossless when entities share a cell.
_BOX_ON = {CellKind.FLOOR: "B", CellKind.TARGET: "*"}
_PLAYER_ON = {
    CellKind.FLOOR: "P",
    CellKind.TARGET: "+",
    CellKind.GOAL: "g",
    CellKind.START: "s",
    CellKind.HOLE: "x",
}
_DECODE: dict[str, tuple[CellKind, str | None]] = {ch: (k, None) for k, ch in _CELL_CHARS.items()}
_DECODE.update({ch: (k, "box") for k, ch in _BOX_ON.items()})
_DECODE.update({ch: (k, "player") for k, ch in _PLAYER_ON.items()})
_FROZEN_CHARS = set("HGSgsx")


def dump_layout(layout: GridLayout, state: GridState | None = None) -> str:
    """Serialize a layout (and optionally entity positions) to the text grid format."""
    lines = [f"{layout.width} {layout.height}"]
    boxes = set(state.boxes) if state else set()
    player = state.player if state else None
    for y in range(layout.height):
        row = []
        for x in range(layout.width):
            kind = layout.cell((x, y))
            if (x, y) == player:
                row.append(_PLAYER_ON[kind])
            elif (x, y) in boxes:
                row.append(_BOX_ON[kind])
            else:
                row.append(_CELL_CHARS[kind])
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def load_layout(text: str, seed: int = 0) -> tuple[GridLayout, GridState | None]:
    lines = text.rstrip("\n").split("\n")
    try:
        width, height = (int(v) for v in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad header line {lines[0]!r}") from exc
    rows = lines[1:]
    if len(rows) != height or any(len(r) != width for r in rows):
        raise ValueError("grid body does not match declared dimensions")
    cells = np.zeros((height, width), dtype=np.int8)
    player = None
    boxes = []
    frozen = False
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch not in _DECODE:
                raise ValueError(f"unknown cell character {ch!r} at ({x}, {y})")
            kind, entity = _DECODE[ch]
            frozen = frozen or ch in _FROZEN_CHARS
            cells[y, x] = kind
            if entity == "player":
                player = GridCoord(x, y)
            elif entity == "box":
                boxes.append(GridCoord(x, y))
    layout = GridLayout(width, height, cells, seed, "frozenlake" if frozen else "sokoban")
    if player is None:
        return layout, None
    return layout, GridState(layout, player, tuple(boxes))

