"""Pure-Python grid-field kernels, used when the compiled extension is absent."""
from __future__ import annotations

import math
from collections import deque

import numpy as np

_STEPS = ((0, -1), (0, 1), (-1, 0), (1, 0))


def bfs_distance(passable: np.ndarray, sources: np.ndarray) -> np.ndarray:
    h, w = passable.shape
    dist = [[-1] * w for _ in range(h)]
    open_ = passable.tolist()
    queue: deque[tuple[int, int]] = deque()
    for x, y in sources.tolist():
        if dist[y][x] != 0:
            dist[y][x] = 0
            queue.append((x, y))
    while queue:
        x, y = queue.popleft()
        d = dist[y][x] + 1
        for dx, dy in _STEPS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and open_[ny][nx] and dist[ny][nx] == -1:
                dist[ny][nx] = d
                queue.append((nx, ny))
    return np.array(dist, dtype=np.int32).reshape(h, w)


def accumulate_weighted(
    height: int, width: int, xs: np.ndarray, ys: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    out = [[0.0] * width for _ in range(height)]
    for x, y, wt in zip(xs.tolist(), ys.tolist(), weights.tolist()):
        out[y][x] += wt
    return np.array(out, dtype=np.float64).reshape(height, width)


def ema(stat: np.ndarray, batch: np.ndarray, alpha: float) -> np.ndarray:
    h, w = stat.shape
    s, b = stat.tolist(), batch.tolist()
    out = [
        [min(1.0, max(0.0, alpha * s[y][x] + (1.0 - alpha) * b[y][x])) for x in range(w)]
        for y in range(h)
    ]
    return np.array(out, dtype=np.float64).reshape(h, w)


def paint_rgba(values: np.ndarray, r: int, g: int, b: int, cell_px: int) -> np.ndarray:
    h, w = values.shape
    img = np.empty((h * cell_px, w * cell_px, 4), dtype=np.uint8)
    img[..., 0], img[..., 1], img[..., 2] = r, g, b
    for y, row in enumerate(values.tolist()):
        for x, v in enumerate(row):
            a = math.floor(255.0 * min(1.0, max(0.0, v)) + 0.5)
            img[y * cell_px : (y + 1) * cell_px, x * cell_px : (x + 1) * cell_px, 3] = a
    return img
