"""Import of user-supplied 2D binary occupancy images (PGM P5 or ASCII 0/1)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from sniffy.environment.model import Environment, Rect, Vent, clearance
from sniffy.geometry import Segment, Vec2


class OccupancyError(ValueError):
    pass


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) and return occupancy (True = occupied).

    Dark pixels (below half of maxval) are occupied, following the usual
    map-server convention.
    """
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise OccupancyError("only binary PGM (P5) is supported")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise OccupancyError("truncated PGM payload")
    img = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width)
    return img < (maxval + 1) / 2


def read_ascii_grid(path: str | Path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([c == "1" for c in line.replace(" ", "").replace(",", "")])
    if not rows or len({len(r) for r in rows}) != 1:
        raise OccupancyError("ASCII grid rows must be non-empty and of equal length")
    return np.array(rows, dtype=bool)


def read_occupancy(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.read_bytes()[:2] == b"P5":
        return read_pgm(path)
    return read_ascii_grid(path)


def largest_free_region(occupied: np.ndarray) -> np.ndarray:
    """Free mask reduced to its largest 4-connected region."""
    free = ~np.asarray(occupied, dtype=bool)
    labels, n = ndimage.label(free)
    if n == 0:
        raise OccupancyError("occupancy image has no free space")
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def _edges(free: np.ndarray, h: float) -> list[tuple[Segment, Vec2]]:
    """Maximal axis-aligned boundary segments of ``free`` with inward normals.

    ``free`` is indexed ``[j, i]`` with ``j`` growing along +y.
    """
    ny, nx = free.shape
    padded = np.zeros((ny + 2, nx + 2), dtype=bool)
    padded[1:-1, 1:-1] = free
    out: list[tuple[Segment, Vec2]] = []
    # horizontal edges on line y = j*h; free below (normal -y) or above (+y)
    for j in range(ny + 1):
        below = padded[j, 1:-1]
        above = padded[j + 1, 1:-1]
        for mask, normal in ((below & ~above, Vec2(0.0, -1.0)), (above & ~below, Vec2(0.0, 1.0))):
            i = 0
            while i < nx:
                if mask[i]:
                    k = i
                    while k < nx and mask[k]:
                        k += 1
                    out.append((Segment(Vec2(round(i * h, 10), round(j * h, 10)),
                                        Vec2(round(k * h, 10), round(j * h, 10))), normal))
                    i = k
                else:
                    i += 1
    for i in range(nx + 1):
        left = padded[1:-1, i]
        right = padded[1:-1, i + 1]
        for mask, normal in ((left & ~right, Vec2(-1.0, 0.0)), (right & ~left, Vec2(1.0, 0.0))):
            j = 0
            while j < ny:
                if mask[j]:
                    k = j
                    while k < ny and mask[k]:
                        k += 1
                    out.append((Segment(Vec2(round(i * h, 10), round(j * h, 10)),
                                        Vec2(round(i * h, 10), round(k * h, 10))), normal))
                    j = k
                else:
                    j += 1
    return out


def load_occupancy_image(
    grid: np.ndarray,
    cell_size: float,
    seed: int = 0,
    vent_width: float = 1.0,
    env_id: str | None = None,
) -> Environment:
    """Environment from an occupancy raster (True/1 = occupied, row 0 = top).

    Only the largest connected free region is kept as the test area; other
    free pockets are filled.  Source, spawn region and vents are placed with
    ``seed``.
    """
    occupied = np.asarray(grid, dtype=bool)
    if occupied.ndim != 2 or occupied.size == 0:
        raise OccupancyError("occupancy grid must be a non-empty 2D array")
    if not np.any(~occupied):
        raise OccupancyError("occupancy image has no free space")
    free = largest_free_region(occupied)[::-1, :]  # flip so row index grows with +y
    if int(free.sum()) < 4:
        raise OccupancyError("free region too small for a source and a spawn point")
    ny, nx = free.shape
    h = float(cell_size)
    edges = _edges(free, h)
    walls = tuple(s for s, _ in edges)
    rng = np.random.default_rng(seed)

    cells = np.argwhere(free)
    order = rng.permutation(len(cells))
    centres = [Vec2((i + 0.5) * h, (j + 0.5) * h) for j, i in cells[order]]
    clear = [clearance(p, walls) for p in centres]
    best = int(np.argmax(clear))
    src_idx = next((k for k, c in enumerate(clear) if c >= 0.5), best)
    source = centres[src_idx]
    dists = [(p - source).norm() for p in centres]
    spawn_idx = max(range(len(centres)), key=lambda k: (min(clear[k], 0.5), dists[k]))
    anchor = centres[spawn_idx]
    half = 1.5
    width, height = nx * h, ny * h
    region = Rect(max(0.0, anchor.x - half), max(0.0, anchor.y - half),
                  min(width, anchor.x + half), min(height, anchor.y + half))

    long_edges = [k for k, (s, _) in enumerate(edges) if s.length() >= min(vent_width, 2 * h)]
    if not long_edges:
        long_edges = list(range(len(edges)))
    picks = rng.choice(len(long_edges), size=min(2, len(long_edges)), replace=False)
    vents = []
    for p in picks:
        seg, normal = edges[long_edges[int(p)]]
        L = seg.length()
        span = min(vent_width, L)
        off = float(rng.uniform(0.0, L - span)) if L > span else 0.0
        off = round(off / h) * h
        d = (seg.b - seg.a).unit()
        a = seg.a + d * off
        vents.append(Vent(a, a + d * span, normal))
    if len(vents) < 2:
        vents.append(vents[0])
    return Environment(
        id=env_id or f"occ-{seed}",
        width=width,
        height=height,
        walls=walls,
        inlets=(vents[0],),
        outlets=(vents[1],),
        source=source,
        spawn_region=region,
        seed=int(seed),
        meta={"source": "occupancy", "cell_size": h, "spawn_anchor": [anchor.x, anchor.y]},
    )
