"""Teacher-free evolution of the danger and affinity heatmaps.

Trajectory statistics from each rollout batch are folded into running maps with an
exponential moving average, then blended with the static layout heuristics using an
annealed mixing coefficient. Every input here is a :class:`Trajectory` or a
:class:`GridLayout`; nothing accepts free text or model output.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .gridworld import GridLayout, Outcome, Trajectory
from .heuristics import Heatmap, affinity_heuristic, danger_heuristic

DEFAULT_ALPHA = 0.85
CHECKPOINT_VERSION = 1


class MixedLayouts(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BatchStats:
    danger_batch: Heatmap
    affinity_batch: Heatmap
    n_fail: int
    n_succ: int


@dataclass(frozen=True)
class AtlasState:
    danger_heuristic: Heatmap
    affinity_heuristic: Heatmap
    danger_stat: Heatmap
    affinity_stat: Heatmap
    epoch: int = 0
    alpha: float = DEFAULT_ALPHA
    total_epochs: int = 1
    layout_seed: int = 0
    schedule: str = "linear"

    def __post_init__(self) -> None:
        shapes = {m.shape for m in self.maps()}
        if len(shapes) != 1:
            raise DimensionMismatch(f"atlas maps disagree on shape: {sorted(shapes)}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.epoch < 0 or self.total_epochs < 1:
            raise ValueError("epoch must be >= 0 and total_epochs >= 1")

    def maps(self) -> tuple[Heatmap, Heatmap, Heatmap, Heatmap]:
        return (self.danger_heuristic, self.affinity_heuristic, self.danger_stat, self.affinity_stat)

    @property
    def shape(self) -> tuple[int, int]:
        return self.danger_heuristic.shape


def init_atlas(
    layout: GridLayout,
    alpha: float = DEFAULT_ALPHA,
    total_epochs: int = 1,
    schedule: str = "linear",
) -> AtlasState:
    zeros = Heatmap.zeros(layout.width, layout.height)
    return AtlasState(
        danger_heuristic=danger_heuristic(layout),
        affinity_heuristic=affinity_heuristic(layout),
        danger_stat=zeros,
        affinity_stat=zeros,
        epoch=0,
        alpha=alpha,
        total_epochs=total_epochs,
        layout_seed=layout.seed,
        schedule=schedule,
    )


def accumulate_batch(
    trajectories: Sequence[Trajectory], width: int, height: int
) -> BatchStats:
    """Batch danger and affinity maps from one rollout batch.

    Danger is the distribution of terminal positions over failed (and timed-out)
    trajectories. Affinity adds ``1 / (len(tau) * n_succ)`` per visited coordinate of
    each successful trajectory, so each success contributes total mass 1/n_succ.
    """
    seeds = {t.layout_seed for t in trajectories}
    if len(seeds) > 1:
        raise MixedLayouts(f"trajectories span layouts {sorted(seeds)}")
    fails = [t for t in trajectories if t.outcome is not Outcome.SUCCESS]
    succs = [t for t in trajectories if t.outcome is Outcome.SUCCESS]

    if fails:
        ends = [t.final_coord for t in fails]
        danger = kernels.accumulate_weighted(
            height, width,
            np.array([c.x for c in ends], dtype=np.int64),
            np.array([c.y for c in ends], dtype=np.int64),
            np.full(len(ends), 1.0 / len(fails)),
        )
    else:
        danger = np.zeros((height, width))

    xs: list[int] = []
    ys: list[int] = []
    ws: list[float] = []
    for t in succs:
        if not t.steps:
            continue
        w = 1.0 / (len(t.steps) * len(succs))
        for c in t.coords:
            xs.append(c.x)
            ys.append(c.y)
            ws.append(w)
    affinity = kernels.accumulate_weighted(
        height, width, np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64),
        np.array(ws, dtype=np.float64),
    )
    return BatchStats(Heatmap(danger), Heatmap(affinity), len(fails), len(succs))


def ema_update(atlas: AtlasState, batch: BatchStats) -> AtlasState:
    """``stat <- alpha * stat + (1 - alpha) * batch`` per field; advances the epoch."""
    for m in (batch.danger_batch, batch.affinity_batch):
        if m.shape != atlas.shape:
            raise DimensionMismatch(f"batch map {m.shape} vs atlas {atlas.shape}")
    a = atlas.alpha
    return replace(
        atlas,
        danger_stat=Heatmap(kernels.ema(atlas.danger_stat.values, batch.danger_batch.values, a)),
        affinity_stat=Heatmap(
            kernels.ema(atlas.affinity_stat.values, batch.affinity_batch.values, a)
        ),
        epoch=atlas.epoch + 1,
    )


def beta_schedule(epoch: int, total_epochs: int, kind: str = "linear") -> float:
    if total_epochs < 1 or epoch < 0:
        raise ValueError("need total_epochs >= 1 and epoch >= 0")
    frac = min(epoch / total_epochs, 1.0)
    if kind == "linear":
        return frac
    if kind == "cosine":
        return 0.5 - 0.5 * math.cos(math.pi * frac)
    raise ValueError(f"unknown schedule {kind!r}")


def blend_final(atlas: AtlasState, beta: float | None = None) -> tuple[Heatmap, Heatmap]:
    """Blend heuristics toward statistics. ``beta`` overrides the schedule when given."""
    if beta is None:
        beta = beta_schedule(atlas.epoch, atlas.total_epochs, atlas.schedule)
    if beta == 0.0:
        return atlas.danger_heuristic, atlas.affinity_heuristic
    if beta == 1.0:
        return atlas.danger_stat, atlas.affinity_stat
    out = []
    for h, s in ((atlas.danger_heuristic, atlas.danger_stat),
                 (atlas.affinity_heuristic, atlas.affinity_stat)):
        out.append(Heatmap(np.clip((1.0 - beta) * h.values + beta * s.values, 0.0, 1.0)))
    return out[0], out[1]


# --------------------------------------------------------------------------- checkpoints


def atlas_to_text(atlas: AtlasState) -> str:
    doc = {
        "version": CHECKPOINT_VERSION,
        "layout_seed": atlas.layout_seed,
        "alpha": atlas.alpha,
        "epoch": atlas.epoch,
        "total_epochs": atlas.total_epochs,
        "schedule": atlas.schedule,
        "danger_heuristic": atlas.danger_heuristic.values.tolist(),
        "affinity_heuristic": atlas.affinity_heuristic.values.tolist(),
        "danger_stat": atlas.danger_stat.values.tolist(),
        "affinity_stat": atlas.affinity_stat.values.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def atlas_from_text(text: str) -> AtlasState:
    doc = json.loads(text)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported atlas checkpoint version {doc.get('version')!r}")
    return AtlasState(
        danger_heuristic=Heatmap(doc["danger_heuristic"]),
        affinity_heuristic=Heatmap(doc["affinity_heuristic"]),
        danger_stat=Heatmap(doc["danger_stat"]),
        affinity_stat=Heatmap(doc["affinity_stat"]),
        epoch=int(doc["epoch"]),
        alpha=float(doc["alpha"]),
        total_epochs=int(doc["total_epochs"]),
        layout_seed=int(doc["layout_seed"]),
        schedule=doc.get("schedule", "linear"),
    )


class AtlasRegistry(dict):
    """One atlas per layout seed."""

    def snapshot(self, beta: float | None = None) -> dict[int, tuple[Heatmap, Heatmap]]:
        return {seed: blend_final(a, beta) for seed, a in self.items()}
