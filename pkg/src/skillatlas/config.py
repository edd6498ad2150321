"""Run configuration: a flat YAML mapping with one canonical serialization."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .gridworld import step_budget
from .reward import PRESETS, RewardConfig

ENVIRONMENTS = ("sokoban", "frozenlake")
SCHEDULES = ("linear", "cosine")
REWARD_OVERRIDE_KEYS = {f.name for f in fields(RewardConfig)}


def _key_line(text: str, key: str) -> int | None:
    """1-based line of a top-level key in a YAML document."""
    node = yaml.compose(text)
    if not isinstance(node, yaml.MappingNode):
        return None
    for k, _ in node.value:
        if k.value == key:
            return k.start_mark.line + 1
    return None


class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass
class RunConfig:
    environment: str = "sokoban"
    width: int = 6
    height: int = 6
    n_boxes: int = 1
    hole_fraction: float = 0.2
    reward_preset: str | None = None
    reward_overrides: dict[str, Any] = field(default_factory=dict)
    epochs: int = 200
    batch_size: int = 128
    alpha: float = 0.85
    schedule: str = "linear"
    anneal_epochs: int | None = None
    train_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    eval_seeds: list[int] = field(default_factory=lambda: [1000, 1001, 1002, 1003])
    master_seed: int = 0
    out_dir: str = "runs"
    eval_episodes: int = 32
    learning_rate: float = 0.1
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    max_steps: int | None = None
    heatmap_every: int = 50
    checkpoint_every: int = 50
    emit_waterfall: bool = True
    emit_pool_log: bool = True
    exemplar_candidates: int = 8
    top_k_skills: int = 3
    top_k_exemplars: int = 4
    cell_px: int = 40

    def __post_init__(self) -> None:
        self.validate()

    # ------------------------------------------------------------------ derived
    @property
    def reward(self) -> RewardConfig:
        base = PRESETS[self.reward_preset or self.environment]
        return dataclasses.replace(base, **self.reward_overrides)

    @property
    def horizon(self) -> int:
        return self.max_steps if self.max_steps is not None else step_budget(self.width, self.height)

    @property
    def anneal_horizon(self) -> int:
        return self.anneal_epochs if self.anneal_epochs is not None else self.epochs

    # ------------------------------------------------------------------ checks
    def validate(self) -> None:
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"must be one of {ENVIRONMENTS}", "environment")
        preset = self.reward_preset or self.environment
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}",
                              "reward_preset")
        bad = set(self.reward_overrides) - REWARD_OVERRIDE_KEYS
        if bad:
            raise ConfigError(f"unknown override keys {sorted(bad)}", "reward_overrides")
        try:
            self.reward
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "reward_overrides") from None
        if int(self.eval_episodes) < 0:
            raise ConfigError("must be >= 0", "eval_episodes")
        for name in ("width", "height", "epochs", "batch_size", "cell_px"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be >= 1", name)
        if self.environment == "sokoban" and (self.width < 4 or self.height < 4):
            raise ConfigError("sokoban grids need width and height >= 4", "width")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("must lie in [0, 1)", "alpha")
        if not 0.0 <= self.hole_fraction < 1.0:
            raise ConfigError("must lie in [0, 1)", "hole_fraction")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"must be one of {SCHEDULES}", "schedule")
        if not self.train_seeds:
            raise ConfigError("needs at least one seed", "train_seeds")
        overlap = sorted(set(self.train_seeds) & set(self.eval_seeds))
        if overlap:
            raise ConfigError(
                f"seed {overlap[0]} appears in both train_seeds and eval_seeds", "eval_seeds"
            )
        if not 0.0 < self.eps_decay_fraction <= 1.0:
            raise ConfigError("must lie in (0, 1]", "eps_decay_fraction")

    # ------------------------------------------------------------------ io
    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError("unknown key", key)
        try:
            return cls(**doc)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {exc}",
                              line=mark.line + 1 if mark else None) from None
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigError("top level must be a mapping")
        try:
            return cls.from_dict(doc)
        except ConfigError as exc:
            if exc.field is None or exc.line is not None:
                raise
            msg = str(exc).split(": ", 1)[-1]
            raise ConfigError(msg, exc.field, _key_line(text, exc.field)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))
