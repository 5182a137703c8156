"""Uniform cell grid over an environment with wall-blocked faces.

Walls are zero-thickness segments, so blocking is decided per face: the face
between two neighbouring cells is closed when a wall crosses the segment
joining the two cell centres.  Flow solving, filament transport and
connectivity checks all share this topology.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from sniffy.environment.model import Environment
from sniffy.geometry import Vec2, segments_intersect_array

_CHUNK = 4096


def _blocked(moves: np.ndarray, walls: np.ndarray) -> np.ndarray:
    out = np.zeros(len(moves), dtype=bool)
    for start in range(0, len(moves), _CHUNK):
        out[start:start + _CHUNK] = segments_intersect_array(moves[start:start + _CHUNK], walls)
    return out


class GridTopology:
    """Cells of size ``h`` covering ``[0, width] x [0, height]``.

    ``open_x[j, i]`` is the face between cells ``(j, i-1)`` and ``(j, i)``
    (``i`` in ``0..nx``); ``open_y[j, i]`` between ``(j-1, i)`` and ``(j, i)``.
    Faces on the arena border are always closed here; vents are handled by
    the flow solver.
    """

    def __init__(self, env: Environment, h: float):
        if h <= 0:
            raise ValueError("cell size must be positive")
        self.h = float(h)
        self.nx = max(1, int(math.ceil(env.width / h - 1e-9)))
        self.ny = max(1, int(math.ceil(env.height / h - 1e-9)))
        nx, ny = self.nx, self.ny
        walls = env.walls_array()

        xc = (np.arange(nx) + 0.5) * h
        yc = (np.arange(ny) + 0.5) * h
        self.open_x = np.zeros((ny, nx + 1), dtype=bool)
        self.open_y = np.zeros((ny + 1, nx), dtype=bool)
        if nx > 1:
            X0, Y = np.meshgrid(xc[:-1], yc)
            moves = np.stack([X0.ravel(), Y.ravel(), (X0 + h).ravel(), Y.ravel()], axis=1)
            self.open_x[:, 1:nx] = ~_blocked(moves, walls).reshape(ny, nx - 1)
        if ny > 1:
            X, Y0 = np.meshgrid(xc, yc[:-1])
            moves = np.stack([X.ravel(), Y0.ravel(), X.ravel(), (Y0 + h).ravel()], axis=1)
            self.open_y[1:ny, :] = ~_blocked(moves, walls).reshape(ny - 1, nx)
        self.labels = self._label()

    def _label(self) -> np.ndarray:
        nx, ny = self.nx, self.ny
        idx = np.arange(nx * ny).reshape(ny, nx)
        jx, ix = np.nonzero(self.open_x[:, 1:nx])
        jy, iy = np.nonzero(self.open_y[1:ny, :])
        rows = np.concatenate([idx[jx, ix], idx[jy, iy]])
        cols = np.concatenate([idx[jx, ix + 1], idx[jy + 1, iy]])
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nx * ny, nx * ny))
        _, labels = connected_components(graph, directed=False)
        return labels.reshape(ny, nx)

    def cell_of(self, p: Vec2) -> tuple[int, int]:
        i = min(self.nx - 1, max(0, int(math.floor(p.x / self.h))))
        j = min(self.ny - 1, max(0, int(math.floor(p.y / self.h))))
        return j, i

    def center(self, j: int, i: int) -> Vec2:
        return Vec2(float((i + 0.5) * self.h), float((j + 0.5) * self.h))

    def component_mask(self, p: Vec2) -> np.ndarray:
        """Boolean mask of the cells connected to the cell containing ``p``."""
        j, i = self.cell_of(p)
        return self.labels == self.labels[j, i]

    def connected(self, p: Vec2, q: Vec2) -> bool:
        return bool(self.labels[self.cell_of(p)] == self.labels[self.cell_of(q)])
