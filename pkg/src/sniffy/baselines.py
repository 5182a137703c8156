"""Chemotaxis and anemotaxis waypoint placement.

Both reuse the full Sniffy Bug tracking machine (line following, wall
following, attraction-repulsion); only the goal placement differs from the
PSO policy.  Goals are clamped to the arena bounding box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from sniffy.controller import (
    R_RAND,
    AgentState,
    explore_velocity,
    random_point,
    waypoint_trigger,
)
from sniffy.genome import Genome
from sniffy.geometry import Vec2
from sniffy.rng import SLOT_RAND_X, SLOT_RAND_Y, keyed_uniform

PROBE_OFFSET = 0.3
STEP_LENGTH = 2.0
PROBE_TOLERANCE = 0.1
PROBE_TIMEOUT = 5.0
# a probe leg needs this much free laser range, otherwise it goes the other way
PROBE_CLEARANCE = PROBE_OFFSET + 0.2


def clamp_to_arena(p: Vec2, arena: Optional[tuple[float, float]]) -> Vec2:
    if arena is None:
        return p
    w, h = arena
    return Vec2(min(max(p.x, 0.0), w), min(max(p.y, 0.0), h))


# --------------------------------------------------------------------------
# chemotaxis


@dataclass
class ChemotaxisState:
    """Probe sub-state: phase 0 idle, 1 heading to the x probe, 2 to the y probe."""

    phase: int = 0
    probe_start: float = 0.0
    samples: list[tuple[Vec2, float]] = field(default_factory=list)
    # goal that was active when the probe started; the inertia term of the
    # exploration fallback refers to it rather than to the probe points
    prev_goal: Vec2 = Vec2(0.0, 0.0)


def concentration_gradient(samples: list[tuple[Vec2, float]]) -> Optional[Vec2]:
    """Planar gradient through three (position, reading) samples, None if degenerate."""
    (p0, r0), (p1, r1), (p2, r2) = samples
    a, b = p1.x - p0.x, p1.y - p0.y
    c, d = p2.x - p0.x, p2.y - p0.y
    det = a * d - b * c
    if abs(det) < 1e-9:
        return None
    d1, d2 = r1 - r0, r2 - r0
    gx = (d * d1 - b * d2) / det
    gy = (-c * d1 + a * d2) / det
    if not (math.isfinite(gx) and math.isfinite(gy)):
        return None
    return Vec2(gx, gy)


def chemotaxis_waypoint(pos: Vec2, readings: tuple[float, float, float], prev_goal: Vec2,
                        rand_pt: Vec2, genome: Genome,
                        probe_offsets: tuple[Vec2, Vec2] = (Vec2(PROBE_OFFSET, 0.0), Vec2(0.0, PROBE_OFFSET)),
                        step_len: float = STEP_LENGTH,
                        arena: Optional[tuple[float, float]] = None) -> Vec2:
    """Goal one step up the concentration gradient, or an exploration goal without one.

    ``readings`` are taken at the probe origin and at origin + each offset.
    """
    origin = Vec2(0.0, 0.0)
    grad = concentration_gradient([(origin, readings[0]), (probe_offsets[0], readings[1]),
                                   (probe_offsets[1], readings[2])])
    if grad is not None and grad.norm() > 0.0:
        goal = pos + grad.unit() * step_len
    else:
        goal = pos + explore_velocity(prev_goal, pos, rand_pt, genome)
    return clamp_to_arena(goal, arena)


class ChemotaxisPolicy:
    name = "chemotaxis"

    def __init__(self, probe_offset: float = PROBE_OFFSET, step_len: float = STEP_LENGTH):
        self.probe_offset = probe_offset
        self.step_len = step_len

    def _st(self, state: AgentState) -> ChemotaxisState:
        if state.policy_state is None:
            state.policy_state = ChemotaxisState()
        return state.policy_state

    def triggered(self, ctl, state, shared, obs, now, new_best):
        st = self._st(state)
        if st.phase == 0:
            return waypoint_trigger(state, ctl.genome, now, False)
        arrived = (state.pos - state.goal).norm() < PROBE_TOLERANCE
        return arrived or now - st.probe_start > PROBE_TIMEOUT

    def waypoint(self, ctl, state, shared, obs, now):
        st = self._st(state)
        if st.phase == 0:
            st.samples = [(state.pos, obs.reading)]
            st.prev_goal = state.goal
            sx = 1.0 if obs.lasers[0] > PROBE_CLEARANCE else -1.0
            st.phase = 1
            st.probe_start = now
            return state.pos + Vec2(sx * self.probe_offset, 0.0)
        st.samples.append((state.pos, obs.reading))
        if st.phase == 1:
            sy = 1.0 if obs.lasers[1] > PROBE_CLEARANCE else -1.0
            st.phase = 2
            st.probe_start = now
            return state.pos + Vec2(0.0, sy * self.probe_offset)
        st.phase = 0
        grad = concentration_gradient(st.samples)
        it = state.iteration + 1
        state.iteration = it
        if grad is not None and grad.norm() > 0.0:
            goal = state.pos + grad.unit() * self.step_len
        else:
            rand_pt = random_point(state.pos, keyed_uniform(ctl.seed, ctl.agent, it, SLOT_RAND_X),
                                   keyed_uniform(ctl.seed, ctl.agent, it, SLOT_RAND_Y), ctl.r_rand)
            goal = state.pos + explore_velocity(st.prev_goal, state.pos, rand_pt, ctl.genome)
        return clamp_to_arena(goal, ctl.arena)


# --------------------------------------------------------------------------
# anemotaxis


@dataclass
class AnemotaxisState:
    in_plume: bool = False
    last_in_plume: Optional[Vec2] = None


def anemotaxis_waypoint(pos: Vec2, reading: float, wind: Vec2, state: AnemotaxisState,
                        prev_goal: Vec2, rand_pt: Vec2, genome: Genome, threshold: float,
                        step_len: float = STEP_LENGTH, r_rand: float = R_RAND,
                        arena: Optional[tuple[float, float]] = None,
                        square_pt: Optional[tuple[float, float]] = None) -> Vec2:
    """Upwind in the plume, random around the last plume point after losing it, else explore.

    ``square_pt`` holds the two uniforms used for random goals around a
    point (the same ones that produced ``rand_pt``).
    """
    u1, u2 = square_pt if square_pt is not None else (
        (rand_pt.x - pos.x) / r_rand + 0.5, (rand_pt.y - pos.y) / r_rand + 0.5)
    if reading > threshold:
        state.last_in_plume = pos
        wn = wind.norm()
        if wn > 0.0:
            goal = Vec2(pos.x - step_len * wind.x / wn, pos.y - step_len * wind.y / wn)
        else:
            goal = random_point(pos, u1, u2, r_rand)
    elif state.last_in_plume is not None:
        goal = random_point(state.last_in_plume, u1, u2, r_rand)
    else:
        goal = pos + explore_velocity(prev_goal, pos, rand_pt, genome)
    return clamp_to_arena(goal, arena)


class AnemotaxisPolicy:
    name = "anemotaxis"

    def __init__(self, step_len: float = STEP_LENGTH):
        self.step_len = step_len

    def _st(self, state: AgentState) -> AnemotaxisState:
        if state.policy_state is None:
            state.policy_state = AnemotaxisState()
        return state.policy_state

    def triggered(self, ctl, state, shared, obs, now, new_best):
        st = self._st(state)
        in_plume = obs.reading > shared.threshold
        changed = in_plume != st.in_plume
        st.in_plume = in_plume
        if in_plume:
            st.last_in_plume = state.pos
        return changed or waypoint_trigger(state, ctl.genome, now, False)

    def waypoint(self, ctl, state, shared, obs, now):
        st = self._st(state)
        it = state.iteration + 1
        u1 = keyed_uniform(ctl.seed, ctl.agent, it, SLOT_RAND_X)
        u2 = keyed_uniform(ctl.seed, ctl.agent, it, SLOT_RAND_Y)
        rand_pt = random_point(state.pos, u1, u2, ctl.r_rand)
        state.iteration = it
        return anemotaxis_waypoint(state.pos, obs.reading, obs.wind, st, state.goal, rand_pt,
                                   ctl.genome, shared.threshold, self.step_len, ctl.r_rand,
                                   ctl.arena, (u1, u2))


POLICIES = {"pso": None, "chemotaxis": ChemotaxisPolicy, "anemotaxis": AnemotaxisPolicy}
