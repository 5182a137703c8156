"""Pure-Python/numpy versions of the compiled kernels in ``_core.pyx``."""

from __future__ import annotations

import math

import numpy as np

from sniffy.geometry import segments_intersect_array

NATIVE = False


def splat_gaussians(out, xs, ys, sigmas, masses, h, cutoff):
    """Add ``mass * N(center, sigma^2 I)`` of every filament onto grid nodes of ``out``."""
    n = len(xs)
    if n == 0:
        return
    ny1, nx1 = out.shape
    reach = np.ceil(cutoff * sigmas / h).astype(int)
    P = 2 * int(reach.max()) + 1
    offs = np.arange(P) - int(reach.max())
    ci = np.floor(xs / h + 0.5).astype(int)
    cj = np.floor(ys / h + 0.5).astype(int)
    gi = ci[:, None] + offs[None, :]
    gj = cj[:, None] + offs[None, :]
    inv = 1.0 / (2.0 * sigmas * sigmas)
    dx = gi * h - xs[:, None]
    dy = gj * h - ys[:, None]
    lim = (cutoff * sigmas)[:, None]
    wx = np.where((np.abs(dx) <= lim) & (gi >= 0) & (gi < nx1), np.exp(-dx * dx * inv[:, None]), 0.0)
    wy = np.where((np.abs(dy) <= lim) & (gj >= 0) & (gj < ny1), np.exp(-dy * dy * inv[:, None]), 0.0)
    wx *= (masses * inv / math.pi)[:, None]  # mass / (2 pi sigma^2)
    patch = wy[:, :, None] * wx[:, None, :]
    jj = np.clip(gj, 0, ny1 - 1)[:, :, None]
    ii = np.clip(gi, 0, nx1 - 1)[:, None, :]
    np.add.at(out, (np.broadcast_to(jj, patch.shape), np.broadcast_to(ii, patch.shape)), patch)


def moves_clear(x0, y0, x1, y1, walls):
    moves = np.stack([x0, y0, x1, y1], axis=1)
    out = np.ones(len(x0), dtype=bool)
    for start in range(0, len(moves), 4096):
        out[start:start + 4096] = ~segments_intersect_array(moves[start:start + 4096], walls)
    return out
