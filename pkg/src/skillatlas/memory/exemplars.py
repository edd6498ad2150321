"""Episodic exemplar pool: keyframe mining, structural embedding, retrieval, eviction."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ..gridworld import (
    CellKind,
    GridState,
    Outcome,
    Trajectory,
    dump_layout,
    load_layout,
)

POOL_CAP = 3
DEFAULT_TOP_K = 4
DEDUP_THRESHOLD = 0.999
EMBED_DIM = 64
MAX_CANDIDATES = 2


class AlignmentMismatch(ValueError):
    pass


class Tag(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class Exemplar:
    frame: str
    tag: Tag
    embedding: tuple[float, ...]
    inserted_at: int = -1
    source_episode: int = -1

    def state(self) -> GridState:
        _, st = load_layout(self.frame)
        assert st is not None
        return st


# --------------------------------------------------------------------------- embedding


def _pool4(mask: np.ndarray) -> np.ndarray:
    """Max-pool a boolean grid onto 4x4 blocks (blocks may overlap on small grids)."""
    h, w = mask.shape
    out = np.zeros((4, 4))
    for by in range(4):
        y0, y1 = (by * h) // 4, max((by * h) // 4 + 1, ((by + 1) * h) // 4)
        for bx in range(4):
            x0, x1 = (bx * w) // 4, max((bx * w) // 4 + 1, ((bx + 1) * w) // 4)
            out[by, bx] = float(mask[y0:y1, x0:x1].any())
    return out


def _pool2(mask: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros((2, 2))
    for by in range(2):
        for bx in range(2):
            block = mask[(by * h) // 2 : max((by * h) // 2 + 1, ((by + 1) * h) // 2),
                         (bx * w) // 2 : max((bx * w) // 2 + 1, ((bx + 1) * w) // 2)]
            out[by, bx] = float(block.any())
    return out


def embed(frame: GridState) -> np.ndarray:
    """Deterministic 64-d structural embedding, L2-normalized.

    Layout: 3 cell-kind channels (wall, target/goal, hole) max-pooled to 4x4 (48),
    normalized player position (2), up to three box positions (6), 2x2 pooled box
    occupancy (4) and 2x2 pooled player occupancy (4).
    """
    layout = frame.layout
    cells = layout.cells
    h, w = cells.shape
    parts = [
        _pool4(cells == CellKind.WALL).ravel(),
        _pool4((cells == CellKind.TARGET) | (cells == CellKind.GOAL)).ravel(),
        _pool4(cells == CellKind.HOLE).ravel(),
    ]
    sx, sy = max(w - 1, 1), max(h - 1, 1)
    coords = [frame.player.x / sx, frame.player.y / sy]
    for i in range(3):
        if i < len(frame.boxes):
            b = frame.boxes[i]
            coords += [b.x / sx, b.y / sy]
        else:
            coords += [0.0, 0.0]
    box_mask = np.zeros((h, w), dtype=bool)
    for b in frame.boxes:
        box_mask[b.y, b.x] = True
    player_mask = np.zeros((h, w), dtype=bool)
    player_mask[frame.player.y, frame.player.x] = True
    parts += [np.array(coords), _pool2(box_mask).ravel(), _pool2(player_mask).ravel()]
    v = np.concatenate(parts)
    return v / np.linalg.norm(v)


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    return float(math.fsum(x * y for x, y in zip(a, b)))


# --------------------------------------------------------------------------- mining


def mine_keyframes(
    trajectory: Trajectory,
    frames: Sequence[GridState],
    initial: GridState | None = None,
    embedder: Callable[[GridState], np.ndarray] = embed,
    episode: int = -1,
) -> list[Exemplar]:
    """Pick inflection frames from one trajectory.

    ``frames[i]`` is the state after step ``i``. Failures yield the frame just before the
    terminal step (``initial`` when the first step already failed). Successes yield the
    frames at which a sub-goal completes, keeping the last two.
    """
    if len(frames) != len(trajectory.steps):
        raise AlignmentMismatch(f"{len(frames)} frames for {len(trajectory.steps)} steps")
    if not frames:
        return []
    out: list[GridState] = []
    if trajectory.outcome is Outcome.SUCCESS:
        tag = Tag.POSITIVE
        count = _on_target(initial) if initial is not None else None
        for f in frames:
            c = _on_target(f)
            if count is not None and c > count:
                out.append(f)
            count = c
        out = out[-MAX_CANDIDATES:]
    else:
        tag = Tag.NEGATIVE
        if len(frames) >= 2:
            out.append(frames[-2])
        elif initial is not None:
            out.append(initial)
        else:
            raise AlignmentMismatch("single-step failure needs the initial frame")
    return [
        Exemplar(dump_layout(f.layout, f), tag, tuple(embedder(f).tolist()), -1, episode)
        for f in out
    ]


def _on_target(state: GridState) -> int:
    layout = state.layout
    if layout.kind == "sokoban":
        return sum(b in layout.target_set for b in state.boxes)
    return int(state.player in layout.target_set)


# --------------------------------------------------------------------------- pool


@dataclass(frozen=True)
class ExemplarPool:
    positives: tuple[Exemplar, ...] = ()
    negatives: tuple[Exemplar, ...] = ()
    sequence_counter: int = 0
    cap: int = POOL_CAP

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)

    def all(self) -> tuple[Exemplar, ...]:
        return self.positives + self.negatives

    def to_json(self) -> str:
        doc = {
            "cap": self.cap,
            "sequence_counter": self.sequence_counter,
            "exemplars": [
                {
                    "frame": e.frame,
                    "tag": e.tag.value,
                    "embedding": list(e.embedding),
                    "inserted_at": e.inserted_at,
                    "source_episode": e.source_episode,
                }
                for e in self.all()
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExemplarPool":
        doc = json.loads(text)
        items = [
            Exemplar(d["frame"], Tag(d["tag"]), tuple(d["embedding"]), d["inserted_at"],
                     d["source_episode"])
            for d in doc["exemplars"]
        ]
        return cls(
            tuple(e for e in items if e.tag is Tag.POSITIVE),
            tuple(e for e in items if e.tag is Tag.NEGATIVE),
            doc["sequence_counter"],
            doc["cap"],
        )


@dataclass
class PoolEvent:
    sequence: int
    action: str  # inserted | evicted | rejected
    tag: str
    source_episode: int
    pool_size: int


def insert_with_eviction(
    pool: ExemplarPool, candidate: Exemplar, events: list[PoolEvent] | None = None
) -> ExemplarPool:
    """Append to the candidate's tag class, evicting that class's oldest member past cap.

    Near-duplicates (cosine above 0.999 against the same class) are rejected.
    """
    members = pool.positives if candidate.tag is Tag.POSITIVE else pool.negatives
    if any(cosine(candidate.embedding, m.embedding) > DEDUP_THRESHOLD for m in members):
        if events is not None:
            events.append(PoolEvent(pool.sequence_counter, "rejected", candidate.tag.value,
                                    candidate.source_episode, len(pool)))
        return pool
    seq = pool.sequence_counter
    item = replace(candidate, inserted_at=seq)
    members = members + (item,)
    evicted = ()
    if len(members) > pool.cap:
        evicted, members = members[: len(members) - pool.cap], members[len(members) - pool.cap :]
    if candidate.tag is Tag.POSITIVE:
        new = replace(pool, positives=members, sequence_counter=seq + 1)
    else:
        new = replace(pool, negatives=members, sequence_counter=seq + 1)
    if events is not None:
        events.append(PoolEvent(seq, "inserted", candidate.tag.value, candidate.source_episode,
                                len(new)))
        for e in evicted:
            events.append(PoolEvent(seq, "evicted", e.tag.value, e.source_episode, len(new)))
    return new


def retrieve_top_k(
    obs: GridState | Sequence[float],
    pool: ExemplarPool,
    k: int = DEFAULT_TOP_K,
    embedder: Callable[[GridState], np.ndarray] = embed,
) -> list[Exemplar]:
    """Top-k exemplars by cosine similarity over both tag classes; newest wins ties."""
    if k < 0:
        raise ValueError("k must be >= 0")
    query = embedder(obs) if isinstance(obs, GridState) else np.asarray(obs)
    q = query.tolist()
    scored = [(cosine(q, e.embedding), e.inserted_at, e) for e in pool.all()]
    scored.sort(key=lambda t: (-t[0], -t[1]))
    return [e for _, _, e in scored[:k]]
