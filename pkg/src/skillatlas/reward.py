"""Dense reward shaping from the blended heatmaps.

The shaped reward on a step is::

    total = env + format + lambda_danger * danger_raw + lambda_affinity * affinity_raw

where ``danger_raw = -danger(p_next)`` and ``affinity_raw`` is the change in affinity
potential between the previous and the new primary-entity coordinate.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import IO, Iterable

from .gridworld import GridCoord, TrajectoryStep
from .heuristics import Heatmap


@dataclass(frozen=True)
class RewardConfig:
    success: float = 1.0
    failure: float = -0.1
    format_penalty: float = -0.5
    lambda_danger: float = 0.05
    lambda_affinity: float = 0.05
    gamma: float = 0.99
    use_gamma_correction: bool = False

    def __post_init__(self) -> None:
        if self.lambda_danger < 0 or self.lambda_affinity < 0:
            raise ValueError("shaping coefficients must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def sparse(self) -> "RewardConfig":
        """Same environment rewards with shaping switched off."""
        return RewardConfig(**{**asdict(self), "lambda_danger": 0.0, "lambda_affinity": 0.0})


PRESETS: dict[str, RewardConfig] = {
    "sokoban": RewardConfig(1.0, -0.1, -0.5, 0.05, 0.05),
    "frozenlake": RewardConfig(1.0, -0.1, -0.5, 0.05, 0.05),
    "navigation": RewardConfig(1.0, -0.1, -0.5, 0.1, 0.1),
    "primitiveskill": RewardConfig(1.0, 0.0, -0.5, 0.3, 0.3),
}


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-step decomposition. ``danger`` and ``affinity`` are the weighted terms."""

    env: float
    danger: float
    affinity: float
    format: float
    total: float
    danger_raw: float = 0.0
    affinity_raw: float = 0.0

    @property
    def visual(self) -> float:
        return self.danger + self.affinity


def danger_penalty(p_next: tuple[int, int], danger_final: Heatmap) -> float:
    return -danger_final[p_next]


def affinity_gain(
    p: tuple[int, int],
    p_next: tuple[int, int],
    affinity_final: Heatmap,
    gamma: float = 1.0,
    use_gamma_correction: bool = False,
) -> float:
    phi, phi_next = affinity_final[p], affinity_final[p_next]
    if use_gamma_correction:
        return gamma * phi_next - phi
    return phi_next - phi


def shaped_reward(
    step: TrajectoryStep,
    p_prev: GridCoord,
    atlas_blend: tuple[Heatmap, Heatmap],
    config: RewardConfig,
) -> RewardBreakdown:
    danger_map, affinity_map = atlas_blend
    if danger_map.shape != affinity_map.shape:
        raise ValueError("danger and affinity maps differ in shape")
    d_raw = danger_penalty(step.coord, danger_map)
    a_raw = affinity_gain(
        p_prev, step.coord, affinity_map, config.gamma, config.use_gamma_correction
    )
    fmt = 0.0 if step.format_valid else config.format_penalty
    d = config.lambda_danger * d_raw
    a = config.lambda_affinity * a_raw
    total = step.env_reward + fmt + d + a
    return RewardBreakdown(step.env_reward, d, a, fmt, total, d_raw, a_raw)


# --------------------------------------------------------------------------- waterfall log

WATERFALL_COLUMNS = ("episode", "step", "env", "danger", "affinity", "format", "total")


class WaterfallWriter:
    """Appends one CSV row per shaped step."""

    def __init__(self, fh: IO[str]):
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(WATERFALL_COLUMNS)

    def write_episode(self, episode: int, breakdowns: Iterable[RewardBreakdown]) -> None:
        self._w.writerows(
            (episode, i, repr(b.env), repr(b.danger), repr(b.affinity), repr(b.format),
             repr(b.total))
            for i, b in enumerate(breakdowns)
        )


def read_waterfall(fh: IO[str], episode: int | None = None) -> list[dict[str, float]]:
    rows = []
    for row in csv.DictReader(fh):
        if episode is not None and int(row["episode"]) != episode:
            continue
        rows.append({k: (int(v) if k in ("episode", "step") else float(v)) for k, v in row.items()})
    return rows
