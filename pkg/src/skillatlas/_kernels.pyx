# cython: language_level=3
"""Compiled grid-field kernels. Mirrors ``_kernels_py`` call-for-call."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def bfs_distance(const cnp.uint8_t[:, :] passable, const cnp.int64_t[:, :] sources):
    cdef Py_ssize_t h = passable.shape[0]
    cdef Py_ssize_t w = passable.shape[1]
    cdef Py_ssize_t n = sources.shape[0]
    dist_arr = np.full((h, w), -1, dtype=np.int32)
    cdef cnp.int32_t[:, :] dist = dist_arr
    cdef cnp.int64_t[:] qx = np.empty(h * w + n, dtype=np.int64)
    cdef cnp.int64_t[:] qy = np.empty(h * w + n, dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0, i, k
    cdef long x, y, nx, ny
    cdef long dx[4]
    cdef long dy[4]
    dx[:] = [0, 0, -1, 1]
    dy[:] = [-1, 1, 0, 0]
    for i in range(n):
        x = sources[i, 0]
        y = sources[i, 1]
        if dist[y, x] != 0:
            dist[y, x] = 0
            qx[tail] = x
            qy[tail] = y
            tail += 1
    while head < tail:
        x = qx[head]
        y = qy[head]
        head += 1
        for k in range(4):
            nx = x + dx[k]
            ny = y + dy[k]
            if nx < 0 or ny < 0 or nx >= w or ny >= h:
                continue
            if not passable[ny, nx] or dist[ny, nx] != -1:
                continue
            dist[ny, nx] = dist[y, x] + 1
            qx[tail] = nx
            qy[tail] = ny
            tail += 1
    return dist_arr


def accumulate_weighted(Py_ssize_t height, Py_ssize_t width,
                        const cnp.int64_t[:] xs, const cnp.int64_t[:] ys,
                        const double[:] weights):
    out_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t i
    for i in range(xs.shape[0]):
        out[ys[i], xs[i]] += weights[i]
    return out_arr


def ema(const double[:, :] stat, const double[:, :] batch, double alpha):
    cdef Py_ssize_t h = stat.shape[0]
    cdef Py_ssize_t w = stat.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t y, x
    cdef double v
    for y in range(h):
        for x in range(w):
            v = alpha * stat[y, x] + (1.0 - alpha) * batch[y, x]
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            out[y, x] = v
    return out_arr


def paint_rgba(const double[:, :] values, int r, int g, int b, Py_ssize_t cell_px):
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    img_arr = np.empty((h * cell_px, w * cell_px, 4), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, :] img = img_arr
    cdef Py_ssize_t y, x, py, px
    cdef double v
    cdef cnp.uint8_t a
    for y in range(h):
        for x in range(w):
            v = values[y, x]
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            a = <cnp.uint8_t>floor(255.0 * v + 0.5)
            for py in range(y * cell_px, (y + 1) * cell_px):
                for px in range(x * cell_px, (x + 1) * cell_px):
                    img[py, px, 0] = r
                    img[py, px, 1] = g
                    img[py, px, 2] = b
                    img[py, px, 3] = a
    return img_arr
