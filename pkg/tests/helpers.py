"""Shared builders and brute-force oracles for the test-suite."""
import math
import random

import numpy as np

from skillatlas.atlas import AtlasState
from skillatlas.gridworld import (
    ACTIONS,
    Direction,
    GridCoord,
    Outcome,
    Trajectory,
    TrajectoryStep,
)
from skillatlas.heuristics import Heatmap


def synthetic_trajectory(rng: random.Random, width: int, height: int, seed: int = 0,
                         outcome: Outcome | None = None, max_len: int = 12) -> Trajectory:
    n = rng.randint(1, max_len)
    steps = [
        TrajectoryStep(GridCoord(rng.randrange(width), rng.randrange(height)),
                       ACTIONS[rng.randrange(4)], 0.0)
        for _ in range(n)
    ]
    if outcome is None:
        outcome = rng.choice(list(Outcome))
    return Trajectory(steps, GridCoord(0, 0), outcome, seed)


def brute_force_batch(trajectories, width, height):
    """Cell-by-cell counting reference for the batch danger and affinity maps."""
    fails = [t for t in trajectories if t.outcome is not Outcome.SUCCESS]
    succs = [t for t in trajectories if t.outcome is Outcome.SUCCESS]
    danger = np.zeros((height, width))
    affinity = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            if fails:
                hits = sum(1 for t in fails if tuple(t.steps[-1].coord) == (x, y))
                danger[y, x] = hits / len(fails)
            terms = []
            for t in succs:
                c = sum(1 for s in t.steps if tuple(s.coord) == (x, y))
                if c:
                    terms.append(c / (len(t.steps) * len(succs)))
            affinity[y, x] = math.fsum(terms)
    return danger, affinity


def random_atlas(rng: np.random.Generator, epoch: int = 0, total: int = 10) -> AtlasState:
    h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    maps = [Heatmap(rng.random((h, w))) for _ in range(4)]
    return AtlasState(*maps, epoch=epoch, total_epochs=total)




def value_iteration(layout, reward_cfg, blend, gamma, tol=1e-13, max_iter=20_000):
    """Q* on a deterministic FrozenLake layout, shaping applied per transition.

    States are player cells; hole and goal cells are absorbing with zero future value.
    Returns ``{cell: [q_up, q_down, q_left, q_right]}`` for non-terminal cells.
    """
    from skillatlas.gridworld import CellKind, GridState, Terminal, step
    from skillatlas.reward import shaped_reward

    cells = [(x, y) for y in range(layout.height) for x in range(layout.width)
             if layout.cells[y, x] not in (CellKind.HOLE, CellKind.GOAL)]
    model = {}
    for c in cells:
        s = GridState(layout, c)
        row = []
        for a in ACTIONS:
            nxt, st = step(s, a, reward_cfg, max_steps=10**9)
            r = shaped_reward(st, GridCoord(*c), blend, reward_cfg).total
            row.append((r, tuple(nxt.player), nxt.terminal is not Terminal.RUNNING))
        model[c] = row
    v = {c: 0.0 for c in cells}
    for _ in range(max_iter):
        q = {c: [r + (0.0 if done else gamma * v[n]) for r, n, done in model[c]] for c in cells}
        nv = {c: max(q[c]) for c in cells}
        delta = max((abs(nv[c] - v[c]) for c in cells), default=0.0)
        v = nv
        if delta < tol:
            break
    return q
