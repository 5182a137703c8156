"""Point-mass swarm episodes: P-controlled velocity, laser rangers, crashes and cost.

Each control step has two phases.  First every live agent samples the gas
field and personal/swarm bests are updated; then every live agent runs its
controller and the world integrates the commands, recasts the lasers and
applies the crash rules.  A crashed agent is frozen where it crashed and
stops reporting readings.

The same loop exists twice: :func:`_run_python` below is the reference and
``sniffy._core.run_episode`` is the compiled twin.  Both produce bit-identical
trajectories.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from sniffy import _backend
from sniffy.baselines import (
    PROBE_CLEARANCE,
    PROBE_OFFSET,
    PROBE_TIMEOUT,
    PROBE_TOLERANCE,
    STEP_LENGTH,
    AnemotaxisPolicy,
    ChemotaxisPolicy,
)
from sniffy.controller import (
    AgentState,
    Event,
    Mode,
    Observation,
    PsoPolicy,
    SniffyBug,
    SwarmShared,
    update_bests,
)
from sniffy.environment.bundle import Bundle
from sniffy.environment.filaments import node_bilinear
from sniffy.environment.flow import bilinear_centered
from sniffy.environment.model import clearance
from sniffy.genome import Genome
from sniffy.geometry import DEFAULT_MAX_RANGE, Vec2, cast_lasers, move_crosses_wall
from sniffy.rng import keyed_normal

POLICY_CODES = {"pso": 0, "chemotaxis": 1, "anemotaxis": 2}
CAUSE_NONE, CAUSE_WALL, CAUSE_AGENT = 0, 1, 2
CAUSE_NAMES = ("", "wall", "agent")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    kp: float = 3.0
    episode_length: float = 100.0
    n_agents: int = 3
    v_desired: float = 0.5
    wall_crash: float = 0.1
    agent_crash: float = 0.5
    noise_sigma: float = 0.0
    success_radius: float = 1.5
    laser_range: float = DEFAULT_MAX_RANGE
    threshold: float = 0.05
    r_rand: float = 10.0
    spawn_separation: float = 1.0
    spawn_clearance: float = 0.4

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.episode_length > 0.0:
            raise ValueError("episode length must be positive")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if self.kp * self.dt > 1.0:
            raise ValueError("kp * dt > 1 makes the velocity loop overshoot")

    @property
    def n_steps(self) -> int:
        return int(round(self.episode_length / self.dt))


@dataclass
class RunMetrics:
    """Outcome of one episode.

    ``trajectory`` has shape (n_steps + 1, n_agents, 2): the state at the
    start of every step plus the final state.  Costs, distances and arrival
    times are all computed from these samples.
    """

    env_id: str
    policy: str
    seed: int
    cost: np.ndarray
    crashed: np.ndarray
    crash_cause: list[str]
    crash_time: np.ndarray
    min_distance: np.ndarray
    time_to_source: np.ndarray
    success: bool
    trajectory: np.ndarray
    source: Vec2
    dt: float
    events: list[Event] = field(default_factory=list)
    trajectory_hash: str = ""

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.cost))

    @property
    def first_arrival(self) -> float:
        return float(np.min(self.time_to_source))

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.cost)):
            out.append({
                "env_id": self.env_id, "policy": self.policy, "seed": self.seed, "agent": i,
                "cost": self.cost[i], "crashed": int(self.crashed[i]), "crash_cause": self.crash_cause[i],
                "min_distance": self.min_distance[i], "time_to_source": self.time_to_source[i],
                "success": int(self.success), "trajectory_hash": self.trajectory_hash,
            })
        return out


METRIC_FIELDS = ["env_id", "policy", "seed", "agent", "cost", "crashed", "crash_cause", "min_distance",
                 "time_to_source", "success", "trajectory_hash"]


# --------------------------------------------------------------------------
# world


@dataclass
class World:
    pos: np.ndarray          # (A, 2)
    vel: np.ndarray          # (A, 2)
    lasers: np.ndarray       # (A, 4)
    crashed: np.ndarray      # (A,) bool
    cause: np.ndarray        # (A,) int, CAUSE_*

    @classmethod
    def at_rest(cls, positions: np.ndarray, walls: np.ndarray, laser_range: float = DEFAULT_MAX_RANGE) -> "World":
        pos = np.array(positions, dtype=float).reshape(-1, 2)
        n = len(pos)
        lasers = np.array([cast_lasers(float(p[0]), float(p[1]), walls, laser_range) for p in pos]).reshape(n, 4)
        return cls(pos, np.zeros((n, 2)), lasers, np.zeros(n, dtype=bool), np.zeros(n, dtype=np.int8))

    def copy(self) -> "World":
        return World(self.pos.copy(), self.vel.copy(), self.lasers.copy(), self.crashed.copy(), self.cause.copy())


def step_world(world: World, commands: np.ndarray, dt: float, walls: np.ndarray,
               config: SimConfig = SimConfig()) -> World:
    """Integrate one control step and apply the crash rules; returns a new world.

    A live agent crashes into a wall when any laser reads strictly less than
    ``config.wall_crash`` or its move crosses a wall; two agents crash when
    strictly closer than ``config.agent_crash``.  Crashed agents do not move.
    """
    w = world.copy()
    kp = config.kp
    n = len(w.pos)
    for i in range(n):
        if w.crashed[i]:
            continue
        cx, cy = float(commands[i][0]), float(commands[i][1])
        x, y = float(w.pos[i, 0]), float(w.pos[i, 1])
        vx = float(w.vel[i, 0])
        vy = float(w.vel[i, 1])
        vx = vx + kp * (cx - vx) * dt
        vy = vy + kp * (cy - vy) * dt
        nx = x + vx * dt
        ny = y + vy * dt
        if move_crosses_wall(x, y, nx, ny, walls):
            w.crashed[i] = True
            w.cause[i] = CAUSE_WALL
            w.vel[i] = 0.0
            continue
        w.pos[i] = (nx, ny)
        w.vel[i] = (vx, vy)
        lz = cast_lasers(nx, ny, walls, config.laser_range)
        w.lasers[i] = lz
        if min(lz) < config.wall_crash:
            w.crashed[i] = True
            w.cause[i] = CAUSE_WALL
    hit = [False] * n
    for i in range(n):
        for j in range(i + 1, n):
            if w.crashed[i] and w.crashed[j]:
                continue
            dx = float(w.pos[i, 0]) - float(w.pos[j, 0])
            dy = float(w.pos[i, 1]) - float(w.pos[j, 1])
            if math.sqrt(dx * dx + dy * dy) < config.agent_crash:
                hit[i] = hit[j] = True
    for i in range(n):
        if hit[i] and not w.crashed[i]:
            w.crashed[i] = True
            w.cause[i] = CAUSE_AGENT
    for i in range(n):
        if w.crashed[i]:
            w.vel[i] = 0.0
    return w


# --------------------------------------------------------------------------
# spawning


def spawn_positions(bundle: Bundle, seed: int, config: SimConfig = SimConfig()) -> np.ndarray:
    """Sample start positions in the spawn region, mutually ``spawn_separation`` apart.

    Candidates must be inside the arena, keep ``spawn_clearance`` from walls
    and lie in the flow component that contains the source (so a path to the
    source exists).  After too many rejections the remaining agents are
    placed on a ring around the environment's spawn anchor.
    """
    env = bundle.env
    rng = np.random.default_rng([seed & 0xFFFFFFFF, seed >> 32 & 0xFFFFFFFF, 0x5B4A])
    fluid = bundle.flow.fluid
    h = bundle.flow.cell_size
    reg = env.spawn_region

    def ok(p: Vec2, placed: list[Vec2]) -> bool:
        if not env.inside(p):
            return False
        i, j = int(p.x / h), int(p.y / h)
        if not (0 <= j < fluid.shape[0] and 0 <= i < fluid.shape[1] and fluid[j, i]):
            return False
        if clearance(p, env.walls) < config.spawn_clearance:
            return False
        return all((p - q).norm() >= config.spawn_separation for q in placed)

    placed: list[Vec2] = []
    tries = 0
    while len(placed) < config.n_agents and tries < 5000:
        tries += 1
        u = rng.random(2)
        p = Vec2(float(reg.x0 + u[0] * (reg.x1 - reg.x0)), float(reg.y0 + u[1] * (reg.y1 - reg.y0)))
        if ok(p, placed):
            placed.append(p)
    if len(placed) < config.n_agents:
        ax, ay = env.meta.get("spawn_anchor", [(reg.x0 + reg.x1) / 2, (reg.y0 + reg.y1) / 2])
        ring = 0
        while len(placed) < config.n_agents:
            ring += 1
            r = config.spawn_separation * ring
            for k in range(12):
                a = 2 * math.pi * k / 12
                p = Vec2(ax + r * math.cos(a), ay + r * math.sin(a))
                if ok(p, placed):
                    placed.append(p)
                    if len(placed) == config.n_agents:
                        break
            if ring > 50:
                raise ValueError(f"cannot place {config.n_agents} agents in {env.id}")
    return np.array([[p.x, p.y] for p in placed])


# --------------------------------------------------------------------------
# episodes


def make_policy(policy: str | object):
    if not isinstance(policy, str):
        return policy
    if policy == "pso":
        return PsoPolicy()
    if policy == "chemotaxis":
        return ChemotaxisPolicy()
    if policy == "anemotaxis":
        return AnemotaxisPolicy()
    raise ValueError(f"unknown policy {policy!r}; choose from pso, chemotaxis, anemotaxis")


def _prepare(bundle: Bundle) -> dict:
    c = bundle.flow.centered()
    return {
        "walls": bundle.env.walls_array(),
        "frames": np.ascontiguousarray(bundle.gas.frames, dtype=np.float32),
        "wind_u": np.ascontiguousarray(c[..., 0]),
        "wind_v": np.ascontiguousarray(c[..., 1]),
    }


def run_episode(bundle: Bundle, policy: str | object, genome: Genome, seed: int,
                config: SimConfig = SimConfig(), backend: str | None = None,
                spawn: np.ndarray | None = None, record_events: bool = True) -> RunMetrics:
    """Simulate one episode; deterministic in (bundle, policy, genome, seed, config)."""
    if config.dt > bundle.gas.frame_interval:
        raise ValueError("dt must not exceed the gas frame interval")
    if spawn is None:
        spawn = spawn_positions(bundle, seed, config)
    spawn = np.asarray(spawn, dtype=float).reshape(config.n_agents, 2)
    kern = _backend.kernels(backend)
    name = policy if isinstance(policy, str) else getattr(policy, "name", "custom")
    native = getattr(kern, "NATIVE", False) and isinstance(policy, str)
    if native:
        traj, crashed, cause, crash_step, raw_events = kern.run_episode(
            _prepare(bundle), bundle.gas.cell_size, bundle.gas.frame_interval, bundle.flow.cell_size,
            bundle.env.width, bundle.env.height, spawn, genome.to_array(), POLICY_CODES[policy],
            int(seed), _config_tuple(config), bool(record_events),
            (PROBE_OFFSET, STEP_LENGTH, PROBE_TOLERANCE, PROBE_TIMEOUT, PROBE_CLEARANCE))
        events = [Event(t, a, "waypoint" if k == 0 else "mode", Mode(m), Vec2(px, py), Vec2(gx, gy), r)
                  for (t, a, k, m, px, py, gx, gy, r) in raw_events]
        events.sort(key=lambda e: (e.t, e.agent))
    else:
        traj, crashed, cause, crash_step, events = _run_python(bundle, make_policy(policy), genome, seed,
                                                              config, spawn, record_events)
    return _metrics(bundle, name, seed, config, traj, crashed, cause, crash_step, events)


def _config_tuple(c: SimConfig) -> tuple:
    return (c.dt, c.kp, c.n_steps, c.v_desired, c.wall_crash, c.agent_crash, c.noise_sigma,
            c.laser_range, c.threshold, c.r_rand)


def _run_python(bundle: Bundle, policy, genome: Genome, seed: int, config: SimConfig,
                spawn: np.ndarray, record_events: bool = True):
    prep = _prepare(bundle)
    walls, frames = prep["walls"], prep["frames"]
    wind_u, wind_v = prep["wind_u"], prep["wind_v"]
    gh, fint, fh = bundle.gas.cell_size, bundle.gas.frame_interval, bundle.flow.cell_size
    n_frames = frames.shape[0]
    A, N, dt = config.n_agents, config.n_steps, config.dt
    arena = (bundle.env.width, bundle.env.height)

    world = World.at_rest(spawn, walls, config.laser_range)
    ctls = [SniffyBug(genome, i, seed, policy, config.v_desired, config.r_rand, arena) for i in range(A)]
    states = [AgentState(pos=Vec2(float(spawn[i, 0]), float(spawn[i, 1]))) for i in range(A)]
    shared = SwarmShared(threshold=config.threshold)
    traj = np.empty((N + 1, A, 2))
    traj[0] = world.pos
    crash_step = np.full(A, -1, dtype=np.int64)
    cmds = np.zeros((A, 2))
    pos = [(float(world.pos[i, 0]), float(world.pos[i, 1])) for i in range(A)]

    for n in range(N):
        t = n * dt
        fi = min(max(int(math.floor(t / fint)), 0), n_frames - 1)
        frame = frames[fi]
        readings: list[Optional[float]] = [None] * A
        for i in range(A):
            if not world.crashed[i]:
                states[i].pos = Vec2(pos[i][0], pos[i][1])
                readings[i] = node_bilinear(frame, gh, pos[i][0], pos[i][1])
        new_best = update_bests(states, readings, shared)
        for i in range(A):
            if world.crashed[i]:
                cmds[i] = 0.0
                continue
            neigh = []
            for j in range(A):
                if j == i:
                    continue
                rx = pos[i][0] - pos[j][0]
                ry = pos[i][1] - pos[j][1]
                if config.noise_sigma > 0.0:
                    rx = rx + config.noise_sigma * keyed_normal(seed, i, n, 2 * j)
                    ry = ry + config.noise_sigma * keyed_normal(seed, i, n, 2 * j + 1)
                neigh.append(Vec2(rx, ry))
            wind = Vec2(bilinear_centered(wind_u, fh, pos[i][0], pos[i][1]),
                        bilinear_centered(wind_v, fh, pos[i][0], pos[i][1]))
            lz = world.lasers[i]
            obs = Observation(Vec2(pos[i][0], pos[i][1]),
                              (float(lz[0]), float(lz[1]), float(lz[2]), float(lz[3])),
                              readings[i], neigh, wind)
            cmd = ctls[i].step(states[i], shared, obs, t, new_best)
            cmds[i] = (cmd.x, cmd.y)
        before = world.crashed.copy()
        world = step_world(world, cmds, dt, walls, config)
        for i in range(A):
            if world.crashed[i] and not before[i]:
                crash_step[i] = n + 1
            pos[i] = (float(world.pos[i, 0]), float(world.pos[i, 1]))
        traj[n + 1] = world.pos

    events: list[Event] = []
    if record_events:
        for c in ctls:
            events.extend(c.events)
        events.sort(key=lambda e: (e.t, e.agent))
    return traj, world.crashed.copy(), world.cause.copy(), crash_step, events


def _metrics(bundle: Bundle, policy: str, seed: int, config: SimConfig, traj: np.ndarray,
             crashed: np.ndarray, cause: np.ndarray, crash_step: np.ndarray, events: list[Event]) -> RunMetrics:
    src = bundle.env.source
    dist = distances_to_source(traj, src)
    crashed = np.asarray(crashed, dtype=bool)
    cost = dist.mean(axis=0) + np.where(crashed, 1.0, 0.0)
    reached = dist <= config.success_radius
    tts = np.full(traj.shape[1], config.episode_length)
    for i in range(traj.shape[1]):
        hits = np.flatnonzero(reached[:, i])
        if len(hits):
            tts[i] = hits[0] * config.dt
    crash_time = np.where(np.asarray(crash_step) >= 0, np.asarray(crash_step) * config.dt, np.nan)
    m = RunMetrics(
        env_id=bundle.env.id, policy=policy, seed=seed, cost=cost, crashed=crashed,
        crash_cause=[CAUSE_NAMES[int(c)] for c in cause], crash_time=crash_time,
        min_distance=dist.min(axis=0), time_to_source=tts, success=bool(reached.any()),
        trajectory=traj, source=src, dt=config.dt, events=events,
    )
    m.trajectory_hash = trajectory_hash(traj, crashed)
    return m


def distances_to_source(traj: np.ndarray, source: Vec2) -> np.ndarray:
    dx = traj[..., 0] - source.x
    dy = traj[..., 1] - source.y
    return np.sqrt(dx * dx + dy * dy)


def trajectory_hash(traj: np.ndarray, crashed: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(traj, dtype="<f8").tobytes())
    h.update(np.asarray(crashed, dtype=np.uint8).tobytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# batches


def evaluate_genome(genome: Genome, bundles: Sequence[Bundle], seeds: Iterable[int], policy: str = "pso",
                    config: SimConfig = SimConfig(), backend: str | None = None) -> float:
    """Mean over (bundle x seed) of the per-agent mean cost."""
    if not bundles:
        raise ValueError("need at least one bundle")
    seeds = list(seeds)
    costs = [run_episode(b, policy, genome, s, config, backend, record_events=False).mean_cost
             for b in bundles for s in seeds]
    return float(np.mean(costs))


_WORKER: dict = {}


def _init_batch_worker(bundles, policy, genome, config, record_events) -> None:
    _WORKER.update(bundles=bundles, policy=policy, genome=genome, config=config, record_events=record_events)


def _batch_job(job: tuple[int, int]) -> RunMetrics:
    env, seed = job
    w = _WORKER
    return run_episode(w["bundles"][env], w["policy"], w["genome"], seed, w["config"],
                       record_events=w["record_events"])


def run_batch(bundles: Sequence[Bundle], policy: str, genome: Genome, seeds: np.ndarray,
              config: SimConfig = SimConfig(), jobs: int = 1, record_events: bool = False) -> list[RunMetrics]:
    """One episode per (bundle, seed) with ``seeds`` shaped (n_bundles, k); env-major order.

    Results do not depend on ``jobs``: every episode is a pure function of its inputs.
    """
    seeds = np.asarray(seeds, dtype=np.int64).reshape(len(bundles), -1)
    work = [(e, int(s)) for e in range(len(bundles)) for s in seeds[e]]
    args = (list(bundles), policy, genome, config, record_events)
    if jobs <= 1 or len(work) < 2:
        _init_batch_worker(*args)
        try:
            return [_batch_job(j) for j in work]
        finally:
            _WORKER.clear()
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_batch_worker, initargs=args) as pool:
        return list(pool.map(_batch_job, work, chunksize=max(1, len(work) // (4 * jobs))))


def format_float(x: float) -> str:
    return repr(float(x))


def metrics_csv(runs: Iterable[RunMetrics], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.DictWriter(buf, fieldnames=METRIC_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in runs:
        for row in r.rows():
            w.writerow({k: format_float(v) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})
    return buf.getvalue()


def read_metrics_csv(path: str | Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def events_csv(events: Iterable[Event]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "agent", "kind", "mode", "x", "y", "goal_x", "goal_y", "reading"])
    for e in events:
        w.writerow([format_float(e.t), e.agent, e.kind, e.mode.name, format_float(e.pos.x), format_float(e.pos.y),
                    format_float(e.goal.x), format_float(e.goal.y), format_float(e.reading)])
    return buf.getvalue()


@dataclass
class Summary:
    runs: int
    success_rate: float
    mean_distance: float
    mean_time: float
    crash_rate: float

    def as_dict(self) -> dict:
        return {"runs": self.runs, "success_rate": self.success_rate, "mean_distance": self.mean_distance,
                "mean_time": self.mean_time, "crash_rate": self.crash_rate}


def summarize(runs: Sequence[RunMetrics]) -> Summary:
    """Success rate, mean per-agent cost-distance and mean per-agent time to source (capped)."""
    if not runs:
        return Summary(0, math.nan, math.nan, math.nan, math.nan)
    return Summary(
        runs=len(runs),
        success_rate=float(np.mean([r.success for r in runs])),
        mean_distance=float(np.mean([r.cost - np.where(r.crashed, 1.0, 0.0) for r in runs])),
        mean_time=float(np.mean([r.time_to_source for r in runs])),
        crash_rate=float(np.mean([r.crashed.mean() for r in runs])),
    )


def summarize_rows(rows: Sequence[dict]) -> Summary:
    """:func:`summarize` computed from metrics CSV rows (one row per agent)."""
    if not rows:
        return Summary(0, math.nan, math.nan, math.nan, math.nan)
    runs: dict[tuple[str, str, str], list[dict]] = {}
    for r in rows:
        runs.setdefault((r["env_id"], r["policy"], r["seed"]), []).append(r)
    return Summary(
        runs=len(runs),
        success_rate=float(np.mean([int(g[0]["success"]) for g in runs.values()])),
        mean_distance=float(np.mean([np.mean([float(r["cost"]) - float(r["crashed"]) for r in g])
                                     for g in runs.values()])),
        mean_time=float(np.mean([np.mean([float(r["time_to_source"]) for r in g]) for g in runs.values()])),
        crash_rate=float(np.mean([np.mean([float(r["crashed"]) for r in g]) for g in runs.values()])),
    )


def with_config(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **changes)
