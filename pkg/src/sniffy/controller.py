"""Sniffy Bug agent controller.

Two layers:

* waypoint generation -- a particle-swarm update of each agent's goal, in an
  exploring flavour (inertia + random point) before anyone smelled gas and a
  seeking flavour (inertia + personal best + swarm best) afterwards;
* waypoint tracking -- a three-state bug algorithm: line following, wall
  following and attraction-repulsion swarming.

Agents fly at constant yaw, so the four lasers are world-axis aligned:
index 0 looks along +x, 1 along +y, 2 along -x, 3 along -y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Protocol, Sequence

from sniffy.genome import Genome
from sniffy.geometry import AXES, ZERO, Vec2
from sniffy.rng import SLOT_ALPHA, SLOT_BETA, SLOT_RAND_X, SLOT_RAND_Y, keyed_uniform

V_DESIRED = 0.5
R_RAND = 10.0
DETECTION_THRESHOLD = 0.05


class Mode(IntEnum):
    LINE_FOLLOWING = 0
    WALL_FOLLOWING = 1
    ATTRACTION_REPULSION = 2


# --------------------------------------------------------------------------
# gas sensor


def sensor_reading(v_rl: float, r_l: float = 68e3, v_c: float = 3.0) -> float:
    """MOX sensor resistance (ohm) from the load-resistor voltage of a divider."""
    if not v_rl > 0.0:
        raise ValueError(f"load voltage must be positive, got {v_rl}")
    if v_rl > v_c:
        raise ValueError(f"load voltage {v_rl} exceeds circuit voltage {v_c}")
    return (v_c / v_rl - 1.0) * r_l


class BiasCorrector:
    """Removes the sensor-specific offset using the low-passed gas-free start.

    The first ``warmup`` samples drive a first-order low-pass filter; its final
    value is frozen as the baseline and subtracted from every later sample.
    Until warm-up completes :meth:`push` returns ``None``.
    """

    def __init__(self, alpha: float = 0.05, warmup: int = 100):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.alpha = alpha
        self.warmup = warmup
        self.count = 0
        self._state: Optional[float] = None
        self.baseline: Optional[float] = None

    @property
    def valid(self) -> bool:
        return self.baseline is not None

    def push(self, raw: float) -> Optional[float]:
        if self.baseline is not None:
            return raw - self.baseline
        self._state = raw if self._state is None else self._state + self.alpha * (raw - self._state)
        self.count += 1
        if self.count >= self.warmup:
            self.baseline = self._state
        return None


# --------------------------------------------------------------------------
# waypoint generation


def random_point(pos: Vec2, u1: float, u2: float, r_rand: float = R_RAND) -> Vec2:
    """Point in the axis-aligned square of side ``r_rand`` centred on ``pos``."""
    return Vec2(pos.x + (u1 - 0.5) * r_rand, pos.y + (u2 - 0.5) * r_rand)


# Inertia weights above one make the step recurrence grow geometrically when
# waypoints are replanned often; steps are capped (direction kept) so goals
# stay finite.  The cap is far outside any arena, so tracking is unaffected.
MAX_STEP = 1000.0


def cap_step(vx: float, vy: float) -> Vec2:
    n = math.sqrt(vx * vx + vy * vy)
    if n > MAX_STEP:
        return Vec2(vx / n * MAX_STEP, vy / n * MAX_STEP)
    return Vec2(vx, vy)


def explore_velocity(prev_goal: Vec2, pos: Vec2, rand_pt: Vec2, genome: Genome) -> Vec2:
    """Exploration step: inertia toward the last goal plus a pull to a random point."""
    return cap_step(
        genome.omega_prime * (prev_goal.x - pos.x) + genome.r_r * (rand_pt.x - pos.x),
        genome.omega_prime * (prev_goal.y - pos.y) + genome.r_r * (rand_pt.y - pos.y),
    )


def seek_velocity(prev_goal: Vec2, pos: Vec2, personal_best: Vec2, swarm_best: Vec2,
                  alpha: float, beta: float, genome: Genome) -> Vec2:
    """PSO step toward the personal and swarm best positions."""
    a = genome.phi_p * alpha
    b = genome.phi_g * beta
    return cap_step(
        genome.omega * (prev_goal.x - pos.x) + a * (personal_best.x - pos.x) + b * (swarm_best.x - pos.x),
        genome.omega * (prev_goal.y - pos.y) + a * (personal_best.y - pos.y) + b * (swarm_best.y - pos.y),
    )


@dataclass
class WallFollowState:
    search_dir: int = 1       # +1 anticlockwise, -1 clockwise
    left_corridor: bool = False
    leave_distance: float = math.inf


@dataclass
class AgentState:
    pos: Vec2
    vel: Vec2 = ZERO
    mode: Mode = Mode.LINE_FOLLOWING
    goal: Vec2 = ZERO
    prev_goal: Vec2 = ZERO
    line_start: Vec2 = ZERO
    personal_best: Optional[Vec2] = None
    personal_best_reading: float = 0.0
    last_wp_time: float = 0.0
    iteration: int = 0
    initialised: bool = False
    wf: WallFollowState = field(default_factory=WallFollowState)
    lasers: tuple[float, float, float, float] = (4.0, 4.0, 4.0, 4.0)
    held: bool = False
    crashed: bool = False
    policy_state: object = None


@dataclass
class SwarmShared:
    threshold: float = DETECTION_THRESHOLD
    best_pos: Optional[Vec2] = None
    best_reading: float = 0.0

    @property
    def gas_mode(self) -> bool:
        return self.best_pos is not None


def update_bests(agents: Sequence[AgentState], readings: Sequence[Optional[float]],
                 shared: SwarmShared) -> bool:
    """Fold one round of readings into personal and swarm bests.

    ``None`` readings (crashed agents) are skipped.  The swarm best is the
    argmax over personal bests; returns True when it strictly improved.
    """
    for agent, r in zip(agents, readings):
        if r is None:
            continue
        if r > shared.threshold and r > agent.personal_best_reading:
            agent.personal_best = agent.pos
            agent.personal_best_reading = r
    improved = False
    for agent in agents:
        if agent.personal_best is not None and agent.personal_best_reading > shared.best_reading:
            shared.best_reading = agent.personal_best_reading
            shared.best_pos = agent.personal_best
            improved = True
    return improved


def waypoint_trigger(state: AgentState, genome: Genome, now: float, new_best: bool) -> bool:
    """Replan when the goal is reached, the waypoint timed out, or the swarm smelled a new best."""
    if (state.pos - state.goal).norm() < genome.d_wp:
        return True
    if now - state.last_wp_time > genome.t_wp:
        return True
    return new_best


def initial_goal(pos: Vec2, seed: int, agent: int, r_rand: float = R_RAND) -> Vec2:
    u1 = keyed_uniform(seed, agent, 0, SLOT_RAND_X)
    u2 = keyed_uniform(seed, agent, 0, SLOT_RAND_Y)
    return random_point(pos, u1, u2, r_rand)


def next_waypoint(state: AgentState, shared: SwarmShared, genome: Genome, seed: int, agent: int,
                  r_rand: float = R_RAND) -> Vec2:
    """New PSO goal for the upcoming waypoint iteration (``state.iteration + 1``)."""
    it = state.iteration + 1
    pos = state.pos
    if shared.gas_mode:
        alpha = keyed_uniform(seed, agent, it, SLOT_ALPHA)
        beta = keyed_uniform(seed, agent, it, SLOT_BETA)
        pbest = state.personal_best if state.personal_best is not None else pos
        v = seek_velocity(state.goal, pos, pbest, shared.best_pos, alpha, beta, genome)
    else:
        rand_pt = random_point(pos, keyed_uniform(seed, agent, it, SLOT_RAND_X),
                               keyed_uniform(seed, agent, it, SLOT_RAND_Y), r_rand)
        v = explore_velocity(state.goal, pos, rand_pt, genome)
    return pos + v


# --------------------------------------------------------------------------
# waypoint tracking


def cross_track(pos: Vec2, start: Vec2, goal: Vec2) -> Vec2:
    """Vector from the closest point of the start-goal line to ``pos``."""
    d = goal - start
    dd = d.dot(d)
    if dd == 0.0:
        return pos - start
    t = (pos - start).dot(d) / dd
    return Vec2(pos.x - (start.x + t * d.x), pos.y - (start.y + t * d.y))


def best_axis(direction: Vec2) -> int:
    """Laser index whose axis has the largest projection on ``direction``."""
    best, best_k = -math.inf, 0
    for k in range(4):
        p = AXES[k].dot(direction)
        if p > best:
            best, best_k = p, k
    return best_k


def line_follow_axis(state: AgentState, genome: Genome) -> int:
    e = cross_track(state.pos, state.line_start, state.goal)
    if e.norm() > genome.d_line:
        return best_axis(-e)
    return best_axis(state.goal - state.pos)


def line_follow_command(state: AgentState, genome: Genome, v_desired: float = V_DESIRED) -> tuple[Vec2, Mode]:
    """Axis-aligned motion along the virtual line; hands over to wall following when blocked."""
    k = line_follow_axis(state, genome)
    if state.lasers[k] > genome.d_laser:
        return AXES[k] * v_desired, Mode.LINE_FOLLOWING
    return ZERO, Mode.WALL_FOLLOWING


def start_wall_follow(state: AgentState, genome: Genome) -> None:
    to_goal = state.goal - state.pos
    desired = best_axis(to_goal)
    state.wf.search_dir = -1 if AXES[desired].cross(to_goal) < 0.0 else 1
    off = cross_track(state.pos, state.line_start, state.goal).norm()
    state.wf.left_corridor = off > genome.d_line
    state.wf.leave_distance = to_goal.norm() if state.wf.left_corridor else math.inf


def obstacle_avoided(state: AgentState, genome: Genome) -> bool:
    """Green-zone test: left the line corridor and re-entered it closer to the goal."""
    off = cross_track(state.pos, state.line_start, state.goal).norm()
    dist = (state.goal - state.pos).norm()
    if not state.wf.left_corridor:
        if off > genome.d_line:
            state.wf.left_corridor = True
            state.wf.leave_distance = dist
        return False
    return off <= genome.d_line and dist < state.wf.leave_distance


def wall_follow_command(state: AgentState, genome: Genome, v_desired: float = V_DESIRED) -> Vec2:
    """Scan from the laser facing the goal in the search direction; take the first safe one.

    With every laser below ``d_laser`` the agent holds position and sets
    ``state.held``.
    """
    desired = best_axis(state.goal - state.pos)
    for j in range(4):
        k = (desired + state.wf.search_dir * j) % 4
        if state.lasers[k] > genome.d_laser:
            state.held = False
            return AXES[k] * v_desired
    state.held = True
    return ZERO


def attraction_repulsion_command(pos: Vec2, neighbors: Sequence[Vec2], lasers: Sequence[float],
                                 goal: Vec2, genome: Genome, v_desired: float = V_DESIRED) -> Vec2:
    """Sum of agent repulsion, laser repulsion and goal attraction, rescaled to ``v_desired``.

    ``neighbors`` holds relative vectors (own position minus neighbour).
    """
    ax = ay = 0.0
    for rel in neighbors:
        d = math.sqrt(rel.x * rel.x + rel.y * rel.y)
        if d > 0.0 and d < genome.d_swarm:
            w = genome.k_swarm * (genome.d_swarm - d) / d
            ax += w * rel.x
            ay += w * rel.y
    for k in range(4):
        if lasers[k] < genome.d_laser_prime:
            w = genome.k_laser * (genome.d_laser_prime - lasers[k])
            ax -= w * AXES[k].x
            ay -= w * AXES[k].y
    gx, gy = goal.x - pos.x, goal.y - pos.y
    gn = math.sqrt(gx * gx + gy * gy)
    if gn > 0.0:
        ax += gx / gn * v_desired
        ay += gy / gn * v_desired
    an = math.sqrt(ax * ax + ay * ay)
    if an > 0.0:
        return Vec2(ax / an * v_desired, ay / an * v_desired)
    if gn > 0.0:
        return Vec2(gx / gn * v_desired, gy / gn * v_desired)
    return ZERO


# --------------------------------------------------------------------------
# full controller


@dataclass
class Observation:
    pos: Vec2
    lasers: tuple[float, float, float, float]
    reading: float
    neighbors: list[Vec2]
    wind: Vec2 = ZERO


class WaypointPolicy(Protocol):
    name: str

    def triggered(self, ctl: "SniffyBug", state: AgentState, shared: SwarmShared,
                  obs: Observation, now: float, new_best: bool) -> bool: ...

    def waypoint(self, ctl: "SniffyBug", state: AgentState, shared: SwarmShared,
                 obs: Observation, now: float) -> Vec2: ...


class PsoPolicy:
    name = "pso"

    def triggered(self, ctl, state, shared, obs, now, new_best):
        return waypoint_trigger(state, ctl.genome, now, new_best)

    def waypoint(self, ctl, state, shared, obs, now):
        goal = next_waypoint(state, shared, ctl.genome, ctl.seed, ctl.agent, ctl.r_rand)
        state.iteration += 1
        return goal


@dataclass
class Event:
    t: float
    agent: int
    kind: str  # "waypoint" or "mode"
    mode: Mode
    pos: Vec2
    goal: Vec2
    reading: float


class SniffyBug:
    """One agent's controller: waypoint policy plus the tracking state machine."""

    def __init__(self, genome: Genome, agent: int, seed: int, policy: WaypointPolicy | None = None,
                 v_desired: float = V_DESIRED, r_rand: float = R_RAND,
                 arena: tuple[float, float] | None = None):
        self.genome = genome
        self.agent = agent
        self.seed = seed
        self.policy = policy or PsoPolicy()
        self.v_desired = v_desired
        self.r_rand = r_rand
        self.arena = arena
        self.events: list[Event] = []

    def _log(self, kind: str, state: AgentState, now: float, reading: float) -> None:
        self.events.append(Event(now, self.agent, kind, state.mode, state.pos, state.goal, reading))

    def set_goal(self, state: AgentState, goal: Vec2, now: float) -> None:
        state.prev_goal = state.goal
        state.goal = goal
        state.line_start = state.pos
        state.last_wp_time = now

    def step(self, state: AgentState, shared: SwarmShared, obs: Observation, now: float,
             new_best: bool) -> Vec2:
        state.pos = obs.pos
        state.lasers = obs.lasers
        mode_before = state.mode
        if not state.initialised:
            state.initialised = True
            goal = initial_goal(state.pos, self.seed, self.agent, self.r_rand)
            self.set_goal(state, goal, now)
            state.prev_goal = goal
            self._log("waypoint", state, now, obs.reading)
        elif self.policy.triggered(self, state, shared, obs, now, new_best):
            goal = self.policy.waypoint(self, state, shared, obs, now)
            self.set_goal(state, goal, now)
            if state.mode == Mode.WALL_FOLLOWING:
                state.mode = Mode.LINE_FOLLOWING
            self._log("waypoint", state, now, obs.reading)
        cmd = self.track(state, obs)
        if state.mode != mode_before:
            self._log("mode", state, now, obs.reading)
        return cmd

    def track(self, state: AgentState, obs: Observation) -> Vec2:
        g = self.genome
        state.held = False
        near = False
        for rel in obs.neighbors:
            if math.sqrt(rel.x * rel.x + rel.y * rel.y) < g.d_swarm:
                near = True
                break
        if near:
            state.mode = Mode.ATTRACTION_REPULSION
        elif state.mode == Mode.ATTRACTION_REPULSION:
            state.mode = Mode.LINE_FOLLOWING
        if state.mode == Mode.ATTRACTION_REPULSION:
            return attraction_repulsion_command(state.pos, obs.neighbors, state.lasers, state.goal, g,
                                                self.v_desired)
        if state.mode == Mode.WALL_FOLLOWING:
            if not obstacle_avoided(state, g):
                return wall_follow_command(state, g, self.v_desired)
            state.mode = Mode.LINE_FOLLOWING
        cmd, mode = line_follow_command(state, g, self.v_desired)
        if mode == Mode.WALL_FOLLOWING:
            state.mode = Mode.WALL_FOLLOWING
            start_wall_follow(state, g)
            return wall_follow_command(state, g, self.v_desired)
        return cmd
