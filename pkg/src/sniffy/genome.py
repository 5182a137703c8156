"""The 13 evolvable controller parameters and their evolution ranges."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

# (name, lower, upper), in the order of the genome vector
GENES: tuple[tuple[str, float, float], ...] = (
    ("omega", -5.0, 5.0),
    ("phi_p", -5.0, 5.0),
    ("phi_g", -5.0, 5.0),
    ("omega_prime", -5.0, 5.0),
    ("r_r", 0.0, 5.0),
    ("t_wp", 0.0, 100.0),
    ("d_wp", 0.0, 5.0),
    ("d_laser", 0.0, 5.0),
    ("d_swarm", 0.0, 5.0),
    ("d_line", 0.0, 1.0),
    ("k_laser", 0.0, 20.0),
    ("k_swarm", 0.0, 20.0),
    ("d_laser_prime", 0.0, 5.0),
)
NAMES = tuple(g[0] for g in GENES)
LOWER = np.array([g[1] for g in GENES])
UPPER = np.array([g[2] for g in GENES])


class GenomeError(ValueError):
    pass


@dataclass(frozen=True)
class Genome:
    omega: float          # waypoint inertia while seeking
    phi_p: float          # pull toward the personal best
    phi_g: float          # pull toward the swarm best
    omega_prime: float    # waypoint inertia while exploring
    r_r: float            # weight of the random exploration point
    t_wp: float           # waypoint timeout [s]
    d_wp: float           # waypoint reached distance [m]
    d_laser: float        # wall-following trigger distance [m]
    d_swarm: float        # attraction-repulsion trigger distance [m]
    d_line: float         # line-following corridor half width [m]
    k_laser: float        # laser repulsion gain
    k_swarm: float        # agent repulsion gain
    d_laser_prime: float  # laser repulsion threshold [m]

    def __post_init__(self) -> None:
        for (name, lo, hi), value in zip(GENES, astuple(self)):
            if not math.isfinite(value) or value < lo or value > hi:
                raise GenomeError(f"{name}={value} outside evolution range [{lo}, {hi}]")

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "Genome":
        values = [float(v) for v in values]
        if len(values) != len(GENES):
            raise GenomeError(f"expected {len(GENES)} genes, got {len(values)}")
        return cls(*values)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "Genome":
        values: dict[str, float] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GenomeError(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in NAMES:
                raise GenomeError(f"unknown genome key {key!r}")
            try:
                values[key] = float(value)
            except ValueError:
                raise GenomeError(f"{key}: not a number: {value!r}") from None
        missing = [n for n in NAMES if n not in values]
        if missing:
            raise GenomeError(f"missing genome keys: {', '.join(missing)}")
        return cls(**values)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "Genome":
        return cls.from_text(Path(path).read_text())


MANUAL = Genome(
    omega=0.5, phi_p=0.8, phi_g=2.0, omega_prime=0.3, r_r=0.7, t_wp=10.0, d_wp=0.5,
    d_laser=1.5, d_swarm=1.5, d_line=0.2, k_laser=5.0, k_swarm=15.0, d_laser_prime=1.5,
)

EVOLVED = Genome(
    omega=0.271, phi_p=-0.333, phi_g=1.856, omega_prime=1.571, r_r=2.034, t_wp=51.979,
    d_wp=2.690, d_laser=1.407, d_swarm=0.782, d_line=0.469, k_laser=16.167, k_swarm=10.032,
    d_laser_prime=0.594,
)

PRESETS = {"manual": MANUAL, "evolved": EVOLVED}


def load_preset(name_or_path: str | Path) -> Genome:
    """A bundled preset name (``manual``/``evolved``) or a preset file path."""
    key = str(name_or_path).lower()
    if key in PRESETS:
        return PRESETS[key]
    return Genome.load(name_or_path)


def clip(values: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(values, LOWER), UPPER)
