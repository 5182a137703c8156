"""Environment description shared by the generator, flow solver and simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from sniffy.geometry import Segment, Vec2, walls_to_array


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, p: Vec2) -> bool:
        return self.x0 <= p.x <= self.x1 and self.y0 <= p.y <= self.y1

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass(frozen=True)
class Vent:
    """Inlet or outlet span on a wall; ``normal`` points into the flow volume."""

    a: Vec2
    b: Vec2
    normal: Vec2

    def length(self) -> float:
        return (self.b - self.a).norm()

    def distance_to(self, p: Vec2) -> float:
        ab = self.b - self.a
        denom = ab.dot(ab)
        s = 0.0 if denom == 0.0 else min(1.0, max(0.0, (p - self.a).dot(ab) / denom))
        return (p - (self.a + ab * s)).norm()


@dataclass(frozen=True)
class Environment:
    id: str
    width: float
    height: float
    walls: tuple[Segment, ...]
    inlets: tuple[Vent, ...]
    outlets: tuple[Vent, ...]
    source: Vec2
    spawn_region: Rect
    seed: int
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def walls_array(self) -> np.ndarray:
        return walls_to_array(self.walls)

    def inside(self, p: Vec2) -> bool:
        return 0.0 <= p.x <= self.width and 0.0 <= p.y <= self.height

    def to_dict(self) -> dict[str, Any]:
        def vent(v: Vent) -> list[float]:
            return [float(c) for c in (v.a.x, v.a.y, v.b.x, v.b.y, v.normal.x, v.normal.y)]

        return {
            "id": self.id,
            "size": [float(self.width), float(self.height)],
            "walls": [[float(c) for c in (s.a.x, s.a.y, s.b.x, s.b.y)] for s in self.walls],
            "inlets": [vent(v) for v in self.inlets],
            "outlets": [vent(v) for v in self.outlets],
            "source": [float(self.source.x), float(self.source.y)],
            "spawn_region": [float(self.spawn_region.x0), float(self.spawn_region.y0),
                             float(self.spawn_region.x1), float(self.spawn_region.y1)],
            "seed": self.seed,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Environment":
        def vent(r: list[float]) -> Vent:
            return Vent(Vec2(r[0], r[1]), Vec2(r[2], r[3]), Vec2(r[4], r[5]))

        return cls(
            id=str(d["id"]),
            width=float(d["size"][0]),
            height=float(d["size"][1]),
            walls=tuple(Segment(Vec2(float(w[0]), float(w[1])), Vec2(float(w[2]), float(w[3])))
                        for w in d["walls"]),
            inlets=tuple(vent(v) for v in d["inlets"]),
            outlets=tuple(vent(v) for v in d["outlets"]),
            source=Vec2(float(d["source"][0]), float(d["source"][1])),
            spawn_region=Rect(*(float(c) for c in d["spawn_region"])),
            seed=int(d["seed"]),
            meta=dict(d.get("meta", {})),
        )


def boundary_walls(width: float, height: float) -> list[Segment]:
    c = [Vec2(0.0, 0.0), Vec2(width, 0.0), Vec2(width, height), Vec2(0.0, height)]
    return [Segment(c[i], c[(i + 1) % 4]) for i in range(4)]


def point_segment_distance(p: Vec2, s: Segment) -> float:
    ab = s.b - s.a
    t = (p - s.a).dot(ab) / ab.dot(ab)
    t = min(1.0, max(0.0, t))
    return (p - (s.a + ab * t)).norm()


def clearance(p: Vec2, walls: tuple[Segment, ...] | list[Segment]) -> float:
    """Distance from ``p`` to the nearest wall."""
    return min((point_segment_distance(p, s) for s in walls), default=float("inf"))
