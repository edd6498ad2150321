import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillatlas.gridworld import CellKind, OutOfBounds, generate_frozenlake, generate_sokoban
from skillatlas.heuristics import (
    CORNER_DANGER,
    WALL_DANGER,
    Heatmap,
    affinity_heuristic,
    bfs_distance_field,
    danger_heuristic,
)

from .conftest import layout_from, random_layout, ucs_distances


def test_bfs_matches_ucs_on_random_layouts():
    rng = np.random.default_rng(11)
    for _ in range(200):
        layout = random_layout(rng)
        targets = layout.targets
        got = bfs_distance_field(layout, targets)
        ref = ucs_distances(layout, targets)
        for (x, y), d in ref.items():
            assert got[y][x] == d


def test_bfs_empty_targets():
    layout, _ = generate_sokoban(0, 6, 6, 1)
    with pytest.raises(ValueError):
        bfs_distance_field(layout, [])


def test_bfs_simple_corridor():
    layout, _ = layout_from("#####\n#P.T#\n#####")
    d = bfs_distance_field(layout, [(3, 1)])
    assert d[1] == [None, 2, 1, 0, None]


def test_affinity_values():
    layout, _ = layout_from("#####\n#P.T#\n#####")
    a = affinity_heuristic(layout)
    # d_max = 2: values 1 - d/2
    assert a[(3, 1)] == 1.0
    assert a[(2, 1)] == 0.5
    assert a[(1, 1)] == 0.0
    assert a[(0, 0)] == 0.0


def test_affinity_single_cell():
    layout, _ = layout_from("#T#")
    assert affinity_heuristic(layout)[(1, 0)] == 1.0


def test_danger_sokoban_corners_and_walls():
    layout, _ = layout_from("#####\n#P..#\n#.BT#\n#...#\n#####")
    d = danger_heuristic(layout)
    assert d[(1, 1)] == CORNER_DANGER
    assert d[(3, 3)] == CORNER_DANGER
    assert d[(2, 1)] == WALL_DANGER
    assert d[(2, 2)] == 0.0
    assert d[(3, 2)] == 0.0  # target cells are never dangerous
    assert d[(0, 0)] == 0.0  # walls carry no value


def test_danger_frozenlake():
    layout, _ = layout_from("S.H\n...\n..G")
    d = danger_heuristic(layout)
    assert d[(2, 0)] == 1.0
    assert d[(1, 0)] == 0.6
    assert d[(2, 1)] == 0.6
    assert d[(2, 2)] == 0.0  # goal is not attenuated
    assert d[(0, 0)] == 0.0


def test_heatmap_indexing():
    h = Heatmap(np.arange(6.0).reshape(2, 3) / 10)
    assert h[(2, 1)] == 0.5
    with pytest.raises(OutOfBounds):
        h[(3, 0)]
    with pytest.raises(ValueError):
        h.values[0, 0] = 1.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 5000), env=st.sampled_from(["sokoban", "frozenlake"]))
def test_heuristics_in_unit_range(seed, env):
    layout = (generate_sokoban(seed, 7, 7, 1)[0] if env == "sokoban"
              else generate_frozenlake(seed, 6, 6, 0.25)[0])
    for m in (affinity_heuristic(layout), danger_heuristic(layout)):
        assert m.shape == (layout.height, layout.width)
        assert m.values.min() >= 0.0 and m.values.max() <= 1.0
    a = affinity_heuristic(layout)
    for t in layout.targets:
        assert a[t] == 1.0
    walls = layout.cells == CellKind.WALL
    assert not a.values[walls].any()


def test_bfs_empty_3x3_corner():
    layout, _ = layout_from("T..\n...\n...")
    d = bfs_distance_field(layout, [(0, 0)])
    assert d[2][2] == 4
    assert d[0][0] == 0


def test_bfs_walled_off_cell():
    layout, _ = layout_from("T.#.\n..#.")
    d = bfs_distance_field(layout, [(0, 0)])
    assert d[0][3] is None and d[1][3] is None
