import heapq
import itertools

import numpy as np
import pytest

from skillatlas.gridworld import CellKind, GridLayout, load_layout
from skillatlas.reward import PRESETS


@pytest.fixture
def sokoban_cfg():
    return PRESETS["sokoban"]


def layout_from(text: str, seed: int = 0):
    """Parse a body-only grid (no header line)."""
    rows = [r for r in text.strip().splitlines()]
    header = f"{len(rows[0])} {len(rows)}\n"
    return load_layout(header + "\n".join(rows) + "\n", seed=seed)


def ucs_distances(layout: GridLayout, targets) -> dict:
    """Uniform-cost search from every cell independently; reference for BFS."""
    passable = {
        (x, y)
        for y in range(layout.height)
        for x in range(layout.width)
        if layout.cells[y, x] not in (CellKind.WALL, CellKind.HOLE)
    }
    tset = {tuple(t) for t in targets}
    out = {}
    for start in itertools.product(range(layout.width), range(layout.height)):
        if start in tset:
            out[start] = 0
            continue
        if start not in passable:
            out[start] = None
            continue
        frontier = [(0, start)]
        seen = {start: 0}
        found = None
        while frontier:
            d, (x, y) = heapq.heappop(frontier)
            if (x, y) in tset:
                found = d
                break
            if d > seen.get((x, y), 1 << 30):
                continue
            for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                if (nx, ny) in passable:
                    nd = d + 1
                    if nd < seen.get((nx, ny), 1 << 30):
                        seen[(nx, ny)] = nd
                        heapq.heappush(frontier, (nd, (nx, ny)))
        out[start] = found
    return out


def random_layout(rng: np.random.Generator, max_side: int = 8):
    """Random walls/holes layout with at least one target cell."""
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    cells = rng.choice(
        [CellKind.FLOOR, CellKind.WALL, CellKind.HOLE], size=(h, w), p=[0.6, 0.25, 0.15]
    ).astype(np.int8)
    n_t = int(rng.integers(1, 3))
    for _ in range(n_t):
        cells[int(rng.integers(h)), int(rng.integers(w))] = CellKind.TARGET
    return GridLayout(w, h, cells, int(rng.integers(1 << 30)), "sokoban")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
