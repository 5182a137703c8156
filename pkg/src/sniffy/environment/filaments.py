"""Filament gas dispersion on top of a flow field.

The source emits filaments at a rate drawn once per simulation.  Each
filament is a 2D Gaussian puff that is advected by the interpolated flow,
performs an isotropic random walk, widens as ``sigma0 * sqrt(1 + age/tau)``
and is removed once it drifts within one flow cell of an outlet.  Moves that
would cross a wall are rejected.  Snapshots of the summed Gaussian kernels
are stored once per frame interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sniffy import _backend
from sniffy.environment.flow import FlowField
from sniffy.environment.model import Environment, clearance
from sniffy.geometry import Vec2


class GasError(ValueError):
    pass


@dataclass(frozen=True)
class FilamentConfig:
    sigma0: float = 0.1
    growth_tau: float = 20.0
    release_rate: tuple[float, float] = (5.0, 20.0)
    # turbulent random walk of filament centres [m^2/s]; small, so transport is
    # dominated by the flow and plumes stay patchy instead of smoothing out
    diffusivity: float = 0.002
    step: float = 0.1
    frame_interval: float = 1.0
    cell_size: float = 0.1
    spinup: float = 60.0
    mass: float = 1.0
    # concentration units per unit filament mass; masses stay integral so the
    # released/removed/live bookkeeping is exact
    concentration_scale: float = 0.01
    cutoff: float = 4.0
    release_limit: Optional[int] = None


@dataclass
class Filament:
    center: Vec2
    width: float
    mass: float
    alive: bool = True


@dataclass
class MassLog:
    """Per-step cumulative released / removed mass and live mass."""

    released: np.ndarray
    removed: np.ndarray
    live: np.ndarray


@dataclass
class GasFieldSequence:
    frames: np.ndarray  # (n_frames, ny + 1, nx + 1) float32, values on grid nodes
    cell_size: float
    frame_interval: float = 1.0
    mass_log: Optional[MassLog] = field(default=None, compare=False, repr=False)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def frame_index(self, t: float) -> int:
        k = int(math.floor(t / self.frame_interval))
        return min(max(k, 0), self.n_frames - 1)

    def sample(self, x: float, y: float, t: float) -> float:
        return sample_concentration(self, Vec2(x, y), t)


def sample_concentration(seq: GasFieldSequence, pos: Vec2, t: float) -> float:
    """Bilinear concentration at ``pos`` in the frame active at time ``t``.

    Frames are held constant over their interval; times past the end clamp to
    the last frame.
    """
    frame = seq.frames[seq.frame_index(t)]
    return node_bilinear(frame, seq.cell_size, pos.x, pos.y)


def node_bilinear(frame: np.ndarray, h: float, x: float, y: float) -> float:
    ny = frame.shape[0] - 1
    nx = frame.shape[1] - 1
    gx = x / h
    gy = y / h
    if gx < 0.0:
        gx = 0.0
    elif gx > nx:
        gx = float(nx)
    if gy < 0.0:
        gy = 0.0
    elif gy > ny:
        gy = float(ny)
    i0 = int(gx)
    j0 = int(gy)
    if i0 > nx - 1:
        i0 = nx - 1
    if j0 > ny - 1:
        j0 = ny - 1
    fx = gx - i0
    fy = gy - j0
    c00 = float(frame[j0, i0])
    c10 = float(frame[j0, i0 + 1])
    c01 = float(frame[j0 + 1, i0])
    c11 = float(frame[j0 + 1, i0 + 1])
    return (c00 * (1.0 - fx) + c10 * fx) * (1.0 - fy) + (c01 * (1.0 - fx) + c11 * fx) * fy


def filament_width(age: np.ndarray | float, sigma0: float, tau: float):
    return sigma0 * np.sqrt(1.0 + np.asarray(age) / tau)


def _outlet_distance(xs: np.ndarray, ys: np.ndarray, env: Environment) -> np.ndarray:
    best = np.full(len(xs), np.inf)
    for vent in env.outlets:
        ax, ay = vent.a.x, vent.a.y
        dx, dy = vent.b.x - ax, vent.b.y - ay
        L2 = dx * dx + dy * dy
        s = np.clip(((xs - ax) * dx + (ys - ay) * dy) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(xs))
        d = np.sqrt((xs - ax - s * dx) ** 2 + (ys - ay - s * dy) ** 2)
        best = np.minimum(best, d)
    return best


def simulate_filaments(
    env: Environment,
    flow: FlowField,
    duration: float = 100.0,
    seed: int = 0,
    config: FilamentConfig | None = None,
    source: Vec2 | None = None,
) -> GasFieldSequence:
    """Run the filament model and return ``floor(duration / frame_interval)`` frames.

    Recording starts after ``config.spinup`` seconds so the plume is developed
    when an episode begins.
    """
    cfg = config or FilamentConfig()
    src = source if source is not None else env.source
    if duration < cfg.frame_interval:
        raise GasError("duration must cover at least one frame interval")
    if not env.inside(src):
        raise GasError("source outside the arena")
    fj = min(flow.fluid.shape[0] - 1, max(0, int(src.y / flow.cell_size)))
    fi = min(flow.fluid.shape[1] - 1, max(0, int(src.x / flow.cell_size)))
    if not flow.fluid[fj, fi] or clearance(src, env.walls) <= 0.0:
        raise GasError(f"gas source {src} lies inside a wall")

    kernels = _backend.kernels()
    rng = np.random.default_rng(seed)
    rate = float(rng.uniform(*cfg.release_rate))
    n_frames = int(math.floor(duration / cfg.frame_interval + 1e-9))
    nx = int(math.ceil(env.width / cfg.cell_size - 1e-9))
    ny = int(math.ceil(env.height / cfg.cell_size - 1e-9))
    frames = np.zeros((n_frames, ny + 1, nx + 1), dtype=np.float32)
    walls = env.walls_array()
    centred = flow.centered()
    dt = cfg.step
    walk = math.sqrt(2.0 * cfg.diffusivity * dt)
    remove_dist = flow.cell_size

    xs = np.zeros(0)
    ys = np.zeros(0)
    birth = np.zeros(0)
    masses = np.zeros(0)
    released = removed = 0.0
    n_released = 0
    log_rel, log_rem, log_live = [], [], []
    accum = 0.0
    total_time = cfg.spinup + n_frames * cfg.frame_interval
    n_steps = int(math.ceil(total_time / dt - 1e-9))
    next_frame = 0
    buffer = np.zeros((ny + 1, nx + 1))
    for k in range(n_steps + 1):
        t = k * dt
        while next_frame < n_frames and t >= cfg.spinup + next_frame * cfg.frame_interval - 1e-9:
            buffer.fill(0.0)
            sig = filament_width(t - birth, cfg.sigma0, cfg.growth_tau)
            kernels.splat_gaussians(buffer, xs, ys, sig, masses * cfg.concentration_scale,
                                    cfg.cell_size, cfg.cutoff)
            frames[next_frame] = np.maximum(buffer, 0.0)
            next_frame += 1
        if next_frame >= n_frames:
            break
        # release
        accum += rate * dt
        n_new = int(math.floor(accum))
        accum -= n_new
        if cfg.release_limit is not None:
            n_new = max(0, min(n_new, cfg.release_limit - n_released))
        if n_new:
            xs = np.concatenate([xs, np.full(n_new, src.x)])
            ys = np.concatenate([ys, np.full(n_new, src.y)])
            birth = np.concatenate([birth, np.full(n_new, t)])
            masses = np.concatenate([masses, np.full(n_new, cfg.mass)])
            released += n_new * cfg.mass
            n_released += n_new
        # transport
        if len(xs):
            vel = flow.sample_many(xs, ys, centred)
            noise = rng.standard_normal((len(xs), 2))
            nxs = xs + vel[:, 0] * dt + walk * noise[:, 0]
            nys = ys + vel[:, 1] * dt + walk * noise[:, 1]
            ok = kernels.moves_clear(xs, ys, nxs, nys, walls)
            ok &= (nxs >= 0.0) & (nxs <= env.width) & (nys >= 0.0) & (nys <= env.height)
            xs = np.where(ok, nxs, xs)
            ys = np.where(ok, nys, ys)
            gone = _outlet_distance(xs, ys, env) <= remove_dist
            if np.any(gone):
                removed += float(masses[gone].sum())
                keep = ~gone
                xs, ys, birth, masses = xs[keep], ys[keep], birth[keep], masses[keep]
        log_rel.append(released)
        log_rem.append(removed)
        log_live.append(float(masses.sum()))
    log = MassLog(np.array(log_rel), np.array(log_rem), np.array(log_live))
    return GasFieldSequence(frames, cfg.cell_size, cfg.frame_interval, mass_log=log)
