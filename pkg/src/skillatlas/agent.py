"""Policies and the rollout / learn / evolve training loop.

Each epoch collects a batch of episodes with the current policy, shaping every step
against a frozen snapshot of the blended heatmaps. The policy then learns from the
shaped transitions, and only afterwards do the heatmaps, exemplar pool and skill
ranking evolve from the batch.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .atlas import (
    AtlasRegistry,
    AtlasState,
    accumulate_batch,
    atlas_from_text,
    atlas_to_text,
    blend_final,
    ema_update,
    init_atlas,
)
from .config import RunConfig
from .gridworld import (
    ACTIONS,
    Action,
    GridCoord,
    GridLayout,
    GridState,
    Outcome,
    Terminal,
    Trajectory,
    generate_frozenlake,
    generate_sokoban,
    outcome_of,
    step,
)
from .heuristics import Heatmap
from .memory import (
    ExemplarPool,
    PoolEvent,
    PromptDocument,
    SkillBook,
    assemble_prompt,
    insert_with_eviction,
    load_rulebook,
    mine_keyframes,
)
from .reward import RewardBreakdown, RewardConfig, shaped_reward


class SeedOverlap(ValueError):
    pass


class Policy(Protocol):
    uses_prompt: bool

    def act(self, obs: GridState, prompt: PromptDocument | None, rng: random.Random,
            greedy: bool = False) -> Action: ...

    def learn(self, transitions: list["Transition"]) -> None: ...


@dataclass(frozen=True)
class Transition:
    key: tuple
    action: int
    reward: float
    next_key: tuple
    done: bool


class TabularAgent:
    """One-step Q-learning over occupancy keys with epsilon-greedy exploration."""

    uses_prompt = False

    def __init__(self, learning_rate: float = 0.1, gamma: float = 0.99, epsilon: float = 1.0):
        self.q: dict[tuple, list[float]] = {}
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.epsilon = epsilon

    def act(self, obs: GridState, prompt: PromptDocument | None, rng: random.Random,
            greedy: bool = False) -> Action:
        if not greedy and rng.random() < self.epsilon:
            return ACTIONS[rng.randrange(4)]
        q = self.q.get(obs.key)
        if q is None:
            return ACTIONS[rng.randrange(4)]
        best = max(q)
        ties = [i for i in range(4) if q[i] == best]
        return ACTIONS[ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]]

    def learn(self, transitions: list[Transition]) -> None:
        q, lr, g = self.q, self.learning_rate, self.gamma
        for t in transitions:
            row = q.get(t.key)
            if row is None:
                row = q[t.key] = [0.0, 0.0, 0.0, 0.0]
            if t.done:
                target = t.reward
            else:
                nxt = q.get(t.next_key)
                target = t.reward + g * (max(nxt) if nxt is not None else 0.0)
            row[t.action] += lr * (target - row[t.action])

    def to_json(self) -> str:
        rows = sorted(
            [k[0], k[1][0], k[1][1], [list(b) for b in k[2]], v] for k, v in self.q.items()
        )
        doc = {"learning_rate": self.learning_rate, "gamma": self.gamma,
               "epsilon": self.epsilon, "q": rows}
        return json.dumps(doc) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TabularAgent":
        doc = json.loads(text)
        agent = cls(doc["learning_rate"], doc["gamma"], doc["epsilon"])
        for seed, px, py, boxes, v in doc["q"]:
            key = (seed, GridCoord(px, py), tuple(GridCoord(*b) for b in boxes))
            agent.q[key] = [float(x) for x in v]
        return agent


class RandomPolicy:
    uses_prompt = False

    def act(self, obs, prompt, rng, greedy=False) -> Action:
        return ACTIONS[rng.randrange(4)]

    def learn(self, transitions) -> None:
        pass


class MalformedActionWrapper:
    """Replaces a fraction of the wrapped policy's actions with malformed emissions."""

    def __init__(self, policy: Policy, rate: float):
        self.policy = policy
        self.rate = rate
        self.uses_prompt = policy.uses_prompt

    def act(self, obs, prompt, rng, greedy=False) -> Action:
        a = self.policy.act(obs, prompt, rng, greedy)
        if rng.random() < self.rate:
            return Action(a.direction, well_formed=False)
        return a

    def learn(self, transitions) -> None:
        self.policy.learn(transitions)


# --------------------------------------------------------------------------- run state


def make_layout(cfg: RunConfig, seed: int) -> tuple[GridLayout, GridState]:
    if cfg.environment == "sokoban":
        return generate_sokoban(seed, cfg.width, cfg.height, cfg.n_boxes)
    return generate_frozenlake(seed, cfg.width, cfg.height, cfg.hole_fraction)


@dataclass
class EpochMetrics:
    epoch: int
    success_rate: float
    mean_return: float
    mean_env: float
    mean_danger: float
    mean_affinity: float
    pool_size: int

    COLUMNS = ("epoch", "success_rate", "mean_return", "mean_env", "mean_danger",
               "mean_affinity", "pool_size")

    def row(self) -> list:
        return [self.epoch, repr(self.success_rate), repr(self.mean_return), repr(self.mean_env),
                repr(self.mean_danger), repr(self.mean_affinity), self.pool_size]


@dataclass
class TrainingRun:
    config: RunConfig
    policy: Policy
    layouts: dict[int, tuple[GridLayout, GridState]]
    atlases: AtlasRegistry
    pool: ExemplarPool
    skills: SkillBook
    rng: random.Random
    metrics: list[EpochMetrics] = field(default_factory=list)
    epoch: int = 0
    episodes_done: int = 0
    pool_events: list[tuple[int, PoolEvent]] = field(default_factory=list)
    last_prompts: dict[int, str] = field(default_factory=dict)
    last_transitions: list[Transition] = field(default_factory=list, repr=False)

    @property
    def reward_config(self) -> RewardConfig:
        return self.config.reward


def new_run(config: RunConfig, policy: Policy | None = None) -> TrainingRun:
    if policy is None:
        policy = TabularAgent(config.learning_rate, config.gamma, config.eps_start)
    layouts = {s: make_layout(config, s) for s in config.train_seeds}
    atlases = AtlasRegistry(
        {s: init_atlas(lay, config.alpha, config.anneal_horizon, config.schedule)
         for s, (lay, _) in layouts.items()}
    )
    return TrainingRun(
        config=config,
        policy=policy,
        layouts=layouts,
        atlases=atlases,
        pool=ExemplarPool(),
        skills=SkillBook(load_rulebook(config.environment)),
        rng=random.Random(f"train-{config.master_seed}"),
    )


def epsilon_at(cfg: RunConfig, epoch: int) -> float:
    span = cfg.eps_decay_fraction * cfg.epochs
    frac = min(epoch / span, 1.0) if span > 0 else 1.0
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def heatmap_digest(blend: tuple[Heatmap, Heatmap]) -> str:
    h = hashlib.sha256()
    for m in blend:
        h.update(m.values.tobytes())
    return h.hexdigest()


# --------------------------------------------------------------------------- episodes


@dataclass
class Episode:
    trajectory: Trajectory
    initial: GridState
    breakdowns: list[RewardBreakdown]
    snapshot_digest: str
    blend: tuple[Heatmap, Heatmap] | None = field(default=None, repr=False)

    @property
    def shaped_return(self) -> float:
        return sum(b.total for b in self.breakdowns)


def run_episode(
    policy: Policy,
    initial: GridState,
    blend: tuple[Heatmap, Heatmap],
    reward: RewardConfig,
    rng: random.Random,
    max_steps: int,
    greedy: bool = False,
    transitions: list[Transition] | None = None,
    prompt_fn: Callable[[GridState], PromptDocument] | None = None,
    digest: str = "",
) -> Episode:
    state = initial
    p_prev = initial.primary
    steps, frames, breakdowns = [], [], []
    while state.terminal is Terminal.RUNNING:
        prompt = prompt_fn(state) if prompt_fn is not None and policy.uses_prompt else None
        action = policy.act(state, prompt, rng, greedy)
        nxt, st = step(state, action, reward, max_steps)
        b = shaped_reward(st, p_prev, blend, reward)
        if transitions is not None:
            transitions.append(
                Transition(state.key, int(action.direction), b.total, nxt.key,
                           nxt.terminal is not Terminal.RUNNING)
            )
        steps.append(st)
        frames.append(nxt)
        breakdowns.append(b)
        p_prev = st.coord
        state = nxt
    traj = Trajectory(steps, initial.primary, outcome_of(state), initial.layout.seed, frames,
                      breakdowns)
    return Episode(traj, initial, breakdowns, digest, blend)


def rollout_batch(run: TrainingRun, n_episodes: int) -> list[Trajectory]:
    """Collect ``n_episodes`` under the current policy against a frozen heatmap snapshot.

    Layout seeds are visited round-robin. Shaped transitions are kept on
    ``run.last_transitions`` for the learning step.
    """
    episodes = _rollout(run, n_episodes)
    return [e.trajectory for e in episodes]


def _rollout(run: TrainingRun, n_episodes: int) -> list[Episode]:
    cfg = run.config
    seeds = cfg.train_seeds
    snapshot = run.atlases.snapshot()
    digests = {s: heatmap_digest(b) for s, b in snapshot.items()}
    reward = run.reward_config
    prompt_fns = {
        s: _prompt_fn(run, snapshot[s]) for s in seeds
    }
    # One document per layout per batch keeps the pipeline exercised for non-visual policies.
    if not run.policy.uses_prompt:
        for s in seeds:
            run.last_prompts[s] = prompt_fns[s](run.layouts[s][1]).manifest()
    run.last_transitions = []
    episodes = []
    for i in range(n_episodes):
        seed = seeds[(run.episodes_done + i) % len(seeds)]
        initial = run.layouts[seed][1]
        ep = run_episode(run.policy, initial, snapshot[seed], reward, run.rng, cfg.horizon,
                         transitions=run.last_transitions, prompt_fn=prompt_fns[seed],
                         digest=digests[seed])
        episodes.append(ep)
    return episodes


def _prompt_fn(run: TrainingRun, blend: tuple[Heatmap, Heatmap]):
    pool = run.pool
    skills = run.skills.top(len(run.skills.skills))
    cfg = run.config

    def build(obs: GridState) -> PromptDocument:
        return assemble_prompt(blend, pool, skills, obs, cfg.top_k_skills, cfg.top_k_exemplars,
                               cfg.cell_px)

    return build


# --------------------------------------------------------------------------- training


EpochCallback = Callable[[TrainingRun, list[Episode]], None]


def train(run: TrainingRun, epochs: int,
          callbacks: Iterable[EpochCallback] = ()) -> list[EpochMetrics]:
    """Run ``epochs`` rounds of rollout, learning and memory evolution."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    cfg = run.config
    callbacks = list(callbacks)
    for _ in range(epochs):
        if isinstance(run.policy, TabularAgent):
            run.policy.epsilon = epsilon_at(cfg, run.epoch)
        episodes = _rollout(run, cfg.batch_size)
        run.policy.learn(run.last_transitions)
        _evolve(run, episodes)
        run.episodes_done += len(episodes)
        run.epoch += 1
        run.metrics.append(_metrics(run, episodes))
        for cb in callbacks:
            cb(run, episodes)
    return run.metrics


def _evolve(run: TrainingRun, episodes: list[Episode]) -> None:
    by_seed: dict[int, list[Trajectory]] = {}
    for e in episodes:
        by_seed.setdefault(e.trajectory.layout_seed, []).append(e.trajectory)
    for seed, atlas in list(run.atlases.items()):
        trajs = by_seed.get(seed)
        if trajs:
            h, w = atlas.shape
            run.atlases[seed] = ema_update(atlas, accumulate_batch(trajs, w, h))
        else:
            run.atlases[seed] = _bump(atlas)

    # Newest failures and successes feed the exemplar pool.
    half = max(1, run.config.exemplar_candidates // 2)
    fails = [e for e in episodes if e.trajectory.outcome is not Outcome.SUCCESS][-half:]
    succs = [e for e in episodes if e.trajectory.outcome is Outcome.SUCCESS][-half:]
    base = run.episodes_done
    for e in fails + succs:
        idx = base + episodes.index(e)
        for cand in mine_keyframes(e.trajectory, e.trajectory.frames, e.initial, episode=idx):
            events: list[PoolEvent] = []
            run.pool = insert_with_eviction(run.pool, cand, events)
            run.pool_events.extend((run.epoch + 1, ev) for ev in events)
    run.skills.update()


def _bump(atlas: AtlasState) -> AtlasState:
    return replace(atlas, epoch=atlas.epoch + 1)


def _metrics(run: TrainingRun, episodes: list[Episode]) -> EpochMetrics:
    n = len(episodes)
    if n == 0:
        return EpochMetrics(run.epoch, 0.0, 0.0, 0.0, 0.0, 0.0, len(run.pool))
    succ = sum(e.trajectory.outcome is Outcome.SUCCESS for e in episodes)
    tot = env = dng = aff = 0.0
    for e in episodes:
        for b in e.breakdowns:
            tot += b.total
            env += b.env
            dng += b.danger
            aff += b.affinity
    return EpochMetrics(run.epoch, succ / n, tot / n, env / n, dng / n, aff / n, len(run.pool))


# --------------------------------------------------------------------------- evaluation


@dataclass
class EvalResult:
    success_rate: float
    n_episodes: int
    empty: bool
    records: list[dict] = field(default_factory=list)

    COLUMNS = ("episode", "layout_seed", "outcome", "steps", "shaped_return")


def evaluate(run: TrainingRun, n_episodes: int, greedy: bool = True,
             eval_seeds: list[int] | None = None) -> EvalResult:
    """Success rate on held-out layouts; heuristics only, no learning, no memory writes."""
    cfg = run.config
    seeds = list(eval_seeds if eval_seeds is not None else cfg.eval_seeds)
    overlap = sorted(set(seeds) & set(run.layouts))
    if overlap:
        raise SeedOverlap(f"validation seed {overlap[0]} is a training seed")
    if n_episodes <= 0:
        return EvalResult(0.0, 0, True)
    if not seeds:
        raise ValueError("no evaluation seeds configured")
    rng = random.Random(f"eval-{cfg.master_seed}")
    reward = run.reward_config
    records = []
    wins = 0
    envs = {s: make_layout(cfg, s) for s in seeds}
    blends = {s: blend_final(init_atlas(lay, cfg.alpha, cfg.anneal_horizon), 0.0)
              for s, (lay, _) in envs.items()}
    for i in range(n_episodes):
        s = seeds[i % len(seeds)]
        ep = run_episode(run.policy, envs[s][1], blends[s], reward, rng, cfg.horizon, greedy)
        ok = ep.trajectory.outcome is Outcome.SUCCESS
        wins += ok
        records.append({"episode": i, "layout_seed": s, "outcome": ep.trajectory.outcome.value,
                        "steps": len(ep.trajectory.steps),
                        "shaped_return": repr(ep.shaped_return)})
    return EvalResult(wins / n_episodes, n_episodes, False, records)


def memory_digest(run: TrainingRun) -> str:
    """SHA-256 over atlases, exemplar pool and skill ranking state."""
    h = hashlib.sha256()
    for seed in sorted(run.atlases):
        h.update(atlas_to_text(run.atlases[seed]).encode())
    h.update(run.pool.to_json().encode())
    sk = run.skills
    h.update(json.dumps([sk.ranking, sorted(sk.hits.items()), sk.updates,
                         [(s.category.value, s.text, s.priority) for s in sk.skills]]).encode())
    return h.hexdigest()


# --------------------------------------------------------------------------- checkpoints


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(run: TrainingRun, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for seed, atlas in run.atlases.items():
        (d / f"atlas_{seed}.json").write_text(atlas_to_text(atlas), encoding="utf-8")
    if isinstance(run.policy, TabularAgent):
        (d / "qtable.json").write_text(run.policy.to_json(), encoding="utf-8")
    (d / "pool.json").write_text(run.pool.to_json(), encoding="utf-8")
    meta = {"epoch": run.epoch, "train_seeds": list(run.config.train_seeds),
            "config": run.config.to_dict()}
    (d / "checkpoint.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return d


def load_checkpoint(directory: str | Path, config: RunConfig | None = None) -> TrainingRun:
    """Rebuild a run from a checkpoint directory. ``config`` overrides evaluation fields."""
    d = Path(directory)
    try:
        meta = json.loads((d / "checkpoint.json").read_text(encoding="utf-8"))
        saved = RunConfig.from_dict(meta["config"])
        atlases = AtlasRegistry(
            {int(s): atlas_from_text((d / f"atlas_{s}.json").read_text(encoding="utf-8"))
             for s in meta["train_seeds"]}
        )
        qfile = d / "qtable.json"
        policy = (TabularAgent.from_json(qfile.read_text(encoding="utf-8")) if qfile.exists()
                  else TabularAgent(saved.learning_rate, saved.gamma, saved.eps_end))
        pool = ExemplarPool.from_json((d / "pool.json").read_text(encoding="utf-8"))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"cannot load checkpoint {d}: {exc}") from exc
    cfg = saved
    if config is not None:
        cfg = RunConfig.from_dict({**config.to_dict(), "train_seeds": saved.train_seeds})
    run = new_run(cfg, policy)
    run.atlases = atlases
    run.pool = pool
    run.epoch = int(meta["epoch"])
    return run
