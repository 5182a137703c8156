import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import sniffy.controller as controller
from sniffy.baselines import (
    PROBE_OFFSET,
    STEP_LENGTH,
    AnemotaxisState,
    anemotaxis_waypoint,
    chemotaxis_waypoint,
    clamp_to_arena,
    concentration_gradient,
)
from sniffy.controller import explore_velocity, random_point
from sniffy.genome import MANUAL
from sniffy.geometry import Vec2
from sniffy.sim import SimConfig, run_episode


def test_gradient_sign():
    goal = chemotaxis_waypoint(Vec2(2, 2), (0.1, 0.2, 0.1), Vec2(0, 0), Vec2(0, 0), MANUAL)
    assert (goal.x, goal.y) == pytest.approx((2 + STEP_LENGTH, 2.0), abs=1e-12)


def test_flat_readings_fall_back_to_exploration():
    pos, prev, rnd = Vec2(3, 3), Vec2(4, 2), Vec2(1, 5)
    goal = chemotaxis_waypoint(pos, (0.2, 0.2, 0.2), prev, rnd, MANUAL)
    assert goal == pos + explore_velocity(prev, pos, rnd, MANUAL)


def test_degenerate_probe_geometry():
    samples = [(Vec2(0, 0), 0.1), (Vec2(1, 1), 0.2), (Vec2(2, 2), 0.3)]
    assert concentration_gradient(samples) is None


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-1, 1))
def test_planar_field_gradient_recovered(gx, gy, c):
    pts = [Vec2(0.4, 0.1), Vec2(0.7, 0.1), Vec2(0.4, -0.2)]
    samples = [(p, gx * p.x + gy * p.y + c) for p in pts]
    g = concentration_gradient(samples)
    assert (g.x, g.y) == pytest.approx((gx, gy), abs=1e-6)


def test_cone_field_goals_approach_peak():
    peak = Vec2(7.0, 6.0)

    def field(p: Vec2) -> float:
        return 10.0 - (p - peak).norm()

    rng = np.random.default_rng(1)
    for _ in range(50):
        pos = Vec2(*rng.uniform(0, 20, 2))
        dist = (pos - peak).norm()
        while dist > STEP_LENGTH:
            readings = (field(pos), field(pos + Vec2(PROBE_OFFSET, 0)), field(pos + Vec2(0, PROBE_OFFSET)))
            pos = chemotaxis_waypoint(pos, readings, Vec2(0, 0), Vec2(0, 0), MANUAL)
            new = (pos - peak).norm()
            assert new < dist
            dist = new


def test_anemotaxis_upwind_in_plume():
    s = AnemotaxisState()
    goal = anemotaxis_waypoint(Vec2(5, 5), 0.2, Vec2(1, 0), s, Vec2(0, 0), Vec2(0, 0), MANUAL, 0.05)
    assert goal == Vec2(5 - STEP_LENGTH, 5)
    assert s.last_in_plume == Vec2(5, 5)


def test_anemotaxis_zero_wind_in_plume_is_random():
    s = AnemotaxisState()
    goal = anemotaxis_waypoint(Vec2(5, 5), 0.2, Vec2(0, 0), s, Vec2(0, 0), Vec2(0, 0), MANUAL, 0.05,
                               square_pt=(0.25, 0.75))
    assert goal == random_point(Vec2(5, 5), 0.25, 0.75)


def test_anemotaxis_never_in_plume_explores():
    s = AnemotaxisState()
    pos, prev, rnd = Vec2(3, 4), Vec2(5, 5), Vec2(1, 2)
    goal = anemotaxis_waypoint(pos, 0.0, Vec2(1, 0), s, prev, rnd, MANUAL, 0.05)
    assert goal == pos + explore_velocity(prev, pos, rnd, MANUAL)
    assert s.last_in_plume is None


def test_anemotaxis_lost_plume_searches_around_last_point():
    s = AnemotaxisState(last_in_plume=Vec2(6, 6))
    rng = np.random.default_rng(0)
    for _ in range(200):
        u = tuple(rng.random(2))
        goal = anemotaxis_waypoint(Vec2(1, 1), 0.0, Vec2(1, 0), s, Vec2(0, 0), Vec2(0, 0), MANUAL, 0.05,
                                   square_pt=u)
        assert abs(goal.x - 6) <= 5 and abs(goal.y - 6) <= 5


def test_goals_are_clamped_to_arena():
    assert clamp_to_arena(Vec2(-1, 12), (10, 10)) == Vec2(0, 10)
    goal = chemotaxis_waypoint(Vec2(9.5, 5), (0.1, 0.2, 0.1), Vec2(0, 0), Vec2(0, 0), MANUAL, arena=(10, 10))
    assert goal == Vec2(10, 5)
    s = AnemotaxisState()
    goal = anemotaxis_waypoint(Vec2(0.5, 5), 0.2, Vec2(1, 0), s, Vec2(0, 0), Vec2(0, 0), MANUAL, 0.05,
                               arena=(10, 10))
    assert goal == Vec2(0, 5)


@pytest.mark.parametrize("policy", ["pso", "chemotaxis", "anemotaxis"])
def test_all_policies_share_the_tracking_machine(policy, room_bundle, monkeypatch):
    calls = {"track": 0, "line": 0, "wall": 0, "ar": 0}

    def counting(name, fn):
        def wrapper(*a, **k):
            calls[name] += 1
            return fn(*a, **k)
        return wrapper

    monkeypatch.setattr(controller.SniffyBug, "track", counting("track", controller.SniffyBug.track))
    monkeypatch.setattr(controller, "line_follow_command", counting("line", controller.line_follow_command))
    monkeypatch.setattr(controller, "wall_follow_command", counting("wall", controller.wall_follow_command))
    monkeypatch.setattr(controller, "attraction_repulsion_command",
                        counting("ar", controller.attraction_repulsion_command))
    cfg = SimConfig(episode_length=40.0)
    run = run_episode(room_bundle, policy, MANUAL, 4, cfg, backend="python")
    live_steps = 0
    for i in range(cfg.n_agents):
        live_steps += cfg.n_steps if not run.crashed[i] else int(round(run.crash_time[i] / cfg.dt))
    assert calls["track"] == live_steps
    assert calls["line"] > 0
    assert calls["line"] + calls["wall"] + calls["ar"] >= live_steps
    # goals stay inside the arena for the baselines
    if policy != "pso":
        for e in run.events:
            if e.kind == "waypoint" and e.t > 0:
                assert 0 <= e.goal.x <= room_bundle.env.width and 0 <= e.goal.y <= room_bundle.env.height
