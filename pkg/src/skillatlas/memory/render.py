"""Heatmap and frame rasterization. Images are RGBA ``uint8`` arrays of shape (H, W, 4)."""
from __future__ import annotations

import enum
from pathlib import Path

import numpy as np
from PIL import Image

from .. import kernels
from ..gridworld import CellKind, GridState
from ..heuristics import Heatmap

DEFAULT_CELL_PX = 40


class Channel(enum.Enum):
    DANGER = "danger"
    AFFINITY = "affinity"


_CHANNEL_RGB = {Channel.DANGER: (255, 0, 0), Channel.AFFINITY: (0, 255, 0)}

_FRAME_RGB = {
    CellKind.FLOOR: (200, 200, 200),
    CellKind.WALL: (60, 60, 60),
    CellKind.TARGET: (230, 200, 80),
    CellKind.HOLE: (20, 40, 120),
    CellKind.GOAL: (80, 200, 80),
    CellKind.START: (170, 200, 230),
}
_BOX_RGB = (150, 90, 30)
_PLAYER_RGB = (200, 40, 160)


def render_heatmap(
    heatmap: Heatmap, channel: Channel | str, cell_px: int = DEFAULT_CELL_PX
) -> np.ndarray:
    """Uniform blocks of pure red (danger) or green (affinity); alpha = round(255 * v)."""
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    r, g, b = _CHANNEL_RGB[Channel(channel)]
    return kernels.paint_rgba(np.ascontiguousarray(heatmap.values), r, g, b, cell_px)


def render_frame(state: GridState, cell_px: int = DEFAULT_CELL_PX) -> np.ndarray:
    """Flat-colored top-down view of a grid state (opaque)."""
    layout = state.layout
    small = np.zeros((layout.height, layout.width, 4), dtype=np.uint8)
    small[..., 3] = 255
    for kind, rgb in _FRAME_RGB.items():
        small[layout.cells == kind, :3] = rgb
    for bx in state.boxes:
        small[bx.y, bx.x, :3] = _BOX_RGB
    small[state.player.y, state.player.x, :3] = _PLAYER_RGB
    return np.repeat(np.repeat(small, cell_px, axis=0), cell_px, axis=1)


def save_png(image: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image, mode="RGBA").save(path, format="PNG", optimize=False)
    return path


def heatmap_filename(seed: int, epoch: int, channel: Channel | str) -> str:
    return f"atlas_{seed}_{epoch}_{Channel(channel).value}.png"
