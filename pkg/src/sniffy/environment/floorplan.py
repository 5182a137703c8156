"""Procedural indoor floor plans.

Rooms are produced by recursive axis-aligned partitioning of the arena: every
partition wall gets one door, so the room adjacency graph is a tree and every
room stays reachable.  Optional free-standing box obstacles are kept far
enough from other walls that they never close a passage.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from sniffy.environment.grid import GridTopology
from sniffy.environment.model import (
    Environment,
    Rect,
    Vent,
    boundary_walls,
    clearance,
)
from sniffy.geometry import Segment, Vec2

SNAP = 0.1
_WALL_MARGIN = 0.2
_OBSTACLE_GAP = 0.7
_SOURCE_CLEARANCE = 0.5
_SPAWN_CLEARANCE = 0.5


class GenerationError(ValueError):
    """Raised when a floor-plan configuration cannot be realised."""


@dataclass(frozen=True)
class FloorplanConfig:
    width: float = 10.0
    height: float = 10.0
    room_count: int = 0
    door_width: float = 1.0
    obstacles: int = 0
    vent_width: float = 1.0
    spawn_size: float = 3.0
    spawn_distance: float = 3.0      # preferred spawn-centre to source distance [m]
    min_room: float = 2.0
    grid: float = 0.1


def _snap(v: float) -> float:
    return round(round(v / SNAP) * SNAP, 10)


def _uniform_snapped(rng: np.random.Generator, lo: float, hi: float) -> float:
    lo_k = math.ceil(lo / SNAP - 1e-9)
    hi_k = math.floor(hi / SNAP + 1e-9)
    if hi_k < lo_k:
        raise GenerationError(f"empty placement interval [{lo}, {hi}]")
    return round(int(rng.integers(lo_k, hi_k + 1)) * SNAP, 10)


def _aabb_gap(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    dx = max(0.0, a[0] - b[2], b[0] - a[2])
    dy = max(0.0, a[1] - b[3], b[1] - a[3])
    return math.sqrt(dx * dx + dy * dy)


def _seg_box(s: Segment) -> tuple[float, float, float, float]:
    return (min(s.a.x, s.b.x), min(s.a.y, s.b.y), max(s.a.x, s.b.x), max(s.a.y, s.b.y))


def _partition(rng, cfg: FloorplanConfig, walls: list[Segment]) -> None:
    rects = [(0.0, 0.0, cfg.width, cfg.height)]
    # (orientation, wall coordinate, gap lo, gap hi); orientation "v" = wall at x=coord
    doors: list[tuple[str, float, float, float]] = []
    min_room = cfg.min_room
    for _ in range(max(0, cfg.room_count - 1)):
        order = sorted(range(len(rects)),
                       key=lambda k: -(rects[k][2] - rects[k][0]) * (rects[k][3] - rects[k][1]))
        placed = False
        for k in order:
            x0, y0, x1, y1 = rects[k]
            w, h = x1 - x0, y1 - y0
            options = []
            if w >= 2 * min_room:
                options.append("v")
            if h >= 2 * min_room:
                options.append("h")
            if not options:
                continue
            if len(options) == 2:
                if abs(w - h) < 1e-9:
                    rng.shuffle(options)
                elif h > w:
                    options.reverse()
            for orient in options:
                span = h if orient == "v" else w
                if span < cfg.door_width + 2 * _WALL_MARGIN:
                    continue
                for _attempt in range(50):
                    if orient == "v":
                        c = _uniform_snapped(rng, x0 + min_room, x1 - min_room)
                        ends = (("h", y0), ("h", y1))
                    else:
                        c = _uniform_snapped(rng, y0 + min_room, y1 - min_room)
                        ends = (("v", x0), ("v", x1))
                    # a new wall must not end inside an existing door gap
                    if any(o == e_o and abs(coord - e_c) < 1e-9 and lo - _WALL_MARGIN <= c <= hi + _WALL_MARGIN
                           for (e_o, e_c) in ends for (o, coord, lo, hi) in doors):
                        continue
                    lo_edge, hi_edge = (y0, y1) if orient == "v" else (x0, x1)
                    lo = _uniform_snapped(rng, lo_edge + _WALL_MARGIN, hi_edge - _WALL_MARGIN - cfg.door_width)
                    hi = round(lo + cfg.door_width, 10)
                    doors.append((orient, c, lo, hi))
                    if orient == "v":
                        if lo > y0:
                            walls.append(Segment(Vec2(c, y0), Vec2(c, lo)))
                        if hi < y1:
                            walls.append(Segment(Vec2(c, hi), Vec2(c, y1)))
                        rects[k:k + 1] = [(x0, y0, c, y1), (c, y0, x1, y1)]
                    else:
                        if lo > x0:
                            walls.append(Segment(Vec2(x0, c), Vec2(lo, c)))
                        if hi < x1:
                            walls.append(Segment(Vec2(hi, c), Vec2(x1, c)))
                        rects[k:k + 1] = [(x0, y0, x1, c), (x0, c, x1, y1)]
                    placed = True
                    break
                if placed:
                    break
            if placed:
                break
        if not placed:
            raise GenerationError(
                f"cannot place {cfg.room_count} rooms with door width {cfg.door_width} "
                f"in a {cfg.width}x{cfg.height} m arena"
            )


def _place_obstacles(rng, cfg: FloorplanConfig, walls: list[Segment]) -> list[tuple[float, float, float, float]]:
    boxes: list[tuple[float, float, float, float]] = []
    for _ in range(cfg.obstacles):
        for _attempt in range(100):
            bw = _uniform_snapped(rng, 0.4, 1.2)
            bh = _uniform_snapped(rng, 0.4, 1.2)
            if cfg.width - bw - 2 * _OBSTACLE_GAP < 0 or cfg.height - bh - 2 * _OBSTACLE_GAP < 0:
                break
            x0 = _uniform_snapped(rng, _OBSTACLE_GAP, cfg.width - bw - _OBSTACLE_GAP)
            y0 = _uniform_snapped(rng, _OBSTACLE_GAP, cfg.height - bh - _OBSTACLE_GAP)
            box = (x0, y0, round(x0 + bw, 10), round(y0 + bh, 10))
            gap = min([_aabb_gap(box, _seg_box(s)) for s in walls] + [_aabb_gap(box, b) for b in boxes])
            if gap >= _OBSTACLE_GAP:
                boxes.append(box)
                break
    for x0, y0, x1, y1 in boxes:
        c = [Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)]
        walls.extend(Segment(c[i], c[(i + 1) % 4]) for i in range(4))
    return boxes


def _pick_vent(rng, cfg: FloorplanConfig, side: int, main: np.ndarray, topo: GridTopology) -> Vent:
    length = cfg.width if side in (0, 2) else cfg.height
    vw = min(cfg.vent_width, length - 2 * _WALL_MARGIN)
    for _attempt in range(100):
        s0 = _uniform_snapped(rng, _WALL_MARGIN, length - _WALL_MARGIN - vw)
        s1 = round(s0 + vw, 10)
        if side == 0:
            vent = Vent(Vec2(s0, 0.0), Vec2(s1, 0.0), Vec2(0.0, 1.0))
        elif side == 1:
            vent = Vent(Vec2(cfg.width, s0), Vec2(cfg.width, s1), Vec2(-1.0, 0.0))
        elif side == 2:
            vent = Vent(Vec2(s0, cfg.height), Vec2(s1, cfg.height), Vec2(0.0, -1.0))
        else:
            vent = Vent(Vec2(0.0, s0), Vec2(0.0, s1), Vec2(1.0, 0.0))
        # every cell behind the span must belong to the flow volume
        n = max(1, int(round(vw / topo.h)))
        ok = True
        for q in range(n):
            t = (q + 0.5) / n
            p = vent.a + (vent.b - vent.a) * t + vent.normal * (0.5 * topo.h)
            if not main[topo.cell_of(p)]:
                ok = False
                break
        if ok:
            return vent
    raise GenerationError(f"no free span for a vent on side {side}")


def generate_environment(seed: int, config: FloorplanConfig | None = None) -> Environment:
    """Build a deterministic floor plan with vents, a gas source and a spawn region."""
    cfg = config or FloorplanConfig()
    if cfg.width < 4.0 or cfg.height < 4.0:
        raise GenerationError("arena must be at least 4 m per side")
    if cfg.room_count < 0 or cfg.obstacles < 0:
        raise GenerationError("room_count and obstacles must be non-negative")
    if cfg.door_width <= 0:
        raise GenerationError("door_width must be positive")
    rng = np.random.default_rng(seed)

    walls = boundary_walls(cfg.width, cfg.height)
    _partition(rng, cfg, walls)
    boxes = _place_obstacles(rng, cfg, walls)

    probe = Environment(
        id="", width=cfg.width, height=cfg.height, walls=tuple(walls), inlets=(), outlets=(),
        source=Vec2(0.0, 0.0), spawn_region=Rect(0, 0, 0, 0), seed=seed,
    )
    topo = GridTopology(probe, cfg.grid)
    centers_x = (np.arange(topo.nx) + 0.5) * topo.h
    centers_y = (np.arange(topo.ny) + 0.5) * topo.h
    in_box = np.zeros((topo.ny, topo.nx), dtype=bool)
    for x0, y0, x1, y1 in boxes:
        in_box |= ((centers_x[None, :] > x0) & (centers_x[None, :] < x1)
                   & (centers_y[:, None] > y0) & (centers_y[:, None] < y1))
    counts = np.bincount(topo.labels[~in_box].ravel())
    main_label = int(np.argmax(counts))
    main = topo.labels == main_label
    if np.any(~main & ~in_box):
        raise GenerationError("floor plan is not connected")

    cells = np.argwhere(main)
    order = rng.permutation(len(cells))
    source = None
    for idx in order:
        p = topo.center(*cells[idx])
        if clearance(p, walls) >= _SOURCE_CLEARANCE:
            source = p
            break
    if source is None:
        raise GenerationError("no admissible source position")

    sides = [0, 1, 2, 3]
    inlet_side = int(rng.integers(4))
    outlet_side = int(rng.choice([s for s in sides if s != inlet_side]))
    inlet = _pick_vent(rng, cfg, inlet_side, main, topo)
    outlet = _pick_vent(rng, cfg, outlet_side, main, topo)

    min_sep = cfg.spawn_distance
    candidates = []
    far_best, far_d = None, -1.0
    for j, i in cells[order]:
        p = topo.center(j, i)
        d = (p - source).norm()
        if clearance(p, walls) < _SPAWN_CLEARANCE:
            continue
        if d >= min_sep:
            candidates.append(p)
            break
        if d > far_d:
            far_best, far_d = p, d
    centre = candidates[0] if candidates else far_best
    if centre is None:
        raise GenerationError("no admissible spawn region")
    half = cfg.spawn_size / 2
    region = Rect(
        round(max(0.0, centre.x - half), 10), round(max(0.0, centre.y - half), 10),
        round(min(cfg.width, centre.x + half), 10), round(min(cfg.height, centre.y + half), 10),
    )
    meta = {k: v for k, v in asdict(cfg).items()}
    meta["spawn_anchor"] = [centre.x, centre.y]
    return Environment(
        id=f"env-{seed}",
        width=cfg.width,
        height=cfg.height,
        walls=tuple(walls),
        inlets=(inlet,),
        outlets=(outlet,),
        source=source,
        spawn_region=region,
        seed=int(seed),
        meta=meta,
    )
