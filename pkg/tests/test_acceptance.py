"""End-to-end acceptance checks, one test per criterion.

The stochastic criteria (6, 7, 8) share one desk-scale experiment per root
seed 1, 2 and 3: 20 environments from ``sniffy gen-env`` defaults, then a
pop-24, 60-generation evolution with and without doping.  Validation uses
spawn seeds that the evolution never drew.
"""

from __future__ import annotations

import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import march, random_scene
from sniffy.cli import eval_seeds, load_bundles, main
from sniffy.controller import (
    attraction_repulsion_command,
    explore_velocity,
    next_waypoint,
    random_point,
    seek_velocity,
    sensor_reading,
    AgentState,
    SwarmShared,
)
from sniffy.environment import simulate_filaments
from sniffy.evolution import DifficultyLedger, EvoConfig, doping_probabilities, evolve
from sniffy.genome import EVOLVED, MANUAL
from sniffy.geometry import Ray, Segment, Vec2, raycast, walls_to_array
from sniffy.rng import keyed_uniform
from sniffy.sim import SimConfig, World, distances_to_source, run_batch, run_episode, step_world, summarize

pytestmark = pytest.mark.acceptance

ROOTS = (1, 2, 3)
HOLDOUT = 7919          # offset that keeps validation spawn seeds away from the evolution's own draws


class Experiment:
    """Lazily built bundles and evolutions for one root seed."""

    def __init__(self, root: int, base: Path):
        self.root = root
        out = base / f"root{root}"
        assert main(["gen-env", "--seed", str(root), "--out", str(out), "--quiet", "--jobs", "1"]) == 0
        self.bundles = load_bundles([str(out)])
        self._evolved: dict[bool, tuple] = {}

    def evolved(self, doping: bool):
        if doping not in self._evolved:
            t0 = time.perf_counter()
            result = evolve(EvoConfig(seed=self.root, doping=doping), self.bundles)
            self._evolved[doping] = (result, time.perf_counter() - t0)
        return self._evolved[doping]

    def validate(self, policy: str, genome, per_env: int):
        seeds = eval_seeds(self.root + HOLDOUT, len(self.bundles), per_env)
        return run_batch(self.bundles, policy, genome, seeds)


@pytest.fixture(scope="session")
def experiments(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    cache: dict[int, Experiment] = {}

    def get(root: int) -> Experiment:
        if root not in cache:
            cache[root] = Experiment(root, base)
        return cache[root]
    return get


# --------------------------------------------------------------------------
# 1. equation units


def test_criterion_1_equation_units():
    t0 = time.perf_counter()
    tol = 1e-9
    # sensor divider
    assert abs(sensor_reading(1.5, 68e3, 3.0) - 68e3) <= tol
    assert abs(sensor_reading(1.0, 68e3, 3.0) - 136e3) <= tol
    assert sensor_reading(3.0, 68e3, 3.0) == 0.0
    # exploration step
    v = explore_velocity(Vec2(1, 0), Vec2(0, 0), Vec2(0, 1), EVOLVED)
    assert abs(v.x - 1.571) <= tol and abs(v.y - 2.034) <= tol
    # seeking step
    v = seek_velocity(Vec2(1, 0), Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), 1.0, 1.0, EVOLVED)
    assert abs(v.x - 2.127) <= tol and abs(v.y - 1.523) <= tol
    # goal = position + step
    state = AgentState(pos=Vec2(2, 3), goal=Vec2(3, 2))
    goal = next_waypoint(state, SwarmShared(), MANUAL, seed=1, agent=0)
    r = random_point(Vec2(2, 3), keyed_uniform(1, 0, 1, 0), keyed_uniform(1, 0, 1, 1))
    step = explore_velocity(Vec2(3, 2), Vec2(2, 3), r, MANUAL)
    assert abs(goal.x - (2 + step.x)) <= tol and abs(goal.y - (3 + step.y)) <= tol
    # laser repulsion term and constant-speed normalisation
    cmd = attraction_repulsion_command(Vec2(0, 0), [], (0.3, 4.0, 4.0, 4.0), Vec2(0, 2), EVOLVED)
    assert abs(-0.5 * cmd.x / cmd.y - 16.167 * 0.294) <= tol
    assert abs(math.hypot(cmd.x, cmd.y) - 0.5) <= tol
    cmd = attraction_repulsion_command(Vec2(0, 0), [], (4.0,) * 4, Vec2(3, 4), EVOLVED)
    assert abs(cmd.x - 0.3) <= tol and abs(cmd.y - 0.4) <= tol
    # difficulty-weighted sampling
    led = DifficultyLedger(2)
    led.record(0, 1.0)
    led.record(1, 3.0)
    assert np.allclose(doping_probabilities(led), [0.25, 0.75], rtol=0, atol=tol)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(1, 60))
        led = DifficultyLedger(m)
        for i in range(m):
            for _ in range(int(rng.integers(0, 5))):
                led.record(i, float(rng.exponential(3.0)))
        assert abs(doping_probabilities(led).sum() - 1.0) <= 1e-12
    assert time.perf_counter() - t0 < 5.0


# --------------------------------------------------------------------------
# 2. raycasting


def test_criterion_2_raycast_against_marching_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        segs = random_scene(rng, 50)
        pairs = [((s.a.x, s.a.y), (s.b.x, s.b.y)) for s in segs]
        o = rng.uniform(1, 9, 2)
        ang = rng.uniform(0, 2 * np.pi)
        d = (math.cos(ang), math.sin(ang))
        got = raycast(Ray(Vec2(*o), Vec2(*d), 4.0), segs)
        worst = max(worst, abs(got - march(o, d, pairs, 4.0)))
    assert worst <= 1e-3
    assert time.perf_counter() - t0 < 30.0


# --------------------------------------------------------------------------
# 3. environment physics


def test_criterion_3_flow_and_gas_invariants(experiments):
    exp = experiments(1)
    t0 = time.perf_counter()
    for b in exp.bundles:
        div = b.flow.divergence()[b.flow.fluid]
        assert np.max(np.abs(div)) <= 1e-3, b.id
        gas = simulate_filaments(b.env, b.flow, duration=100.0, seed=b.env.seed)
        assert np.array_equal(gas.frames, b.gas.frames), b.id
        log = gas.mass_log
        assert np.array_equal(log.released - log.removed, log.live), b.id
        assert gas.frames.min() >= 0.0, b.id
    assert time.perf_counter() - t0 < 300.0


# --------------------------------------------------------------------------
# 4. crash rules


def _settle(positions, walls):
    cfg = SimConfig()
    w = World.at_rest(positions, walls)
    return step_world(w, np.zeros((len(w.pos), 2)), cfg.dt, walls, cfg)


def test_criterion_4_crash_thresholds():
    def wall(x):
        return walls_to_array([Segment(Vec2(x, -5.0), Vec2(x, 5.0))])
    none = np.zeros((0, 4))
    below = _settle([[0.0, 0.0]], wall(0.09))
    assert below.crashed[0] and below.cause[0] == 1
    at = _settle([[0.0, 0.0]], wall(0.1))
    assert at.lasers[0, 0] == 0.1 and not at.crashed[0]
    close = _settle([[0.0, 0.0], [0.4999, 0.0]], none)
    assert close.crashed.all() and (close.cause == 2).all()
    exact = _settle([[0.0, 0.0], [0.5, 0.0]], none)
    assert not exact.crashed.any()


# --------------------------------------------------------------------------
# 5. cost definition


def test_criterion_5_cost_recomputed_from_trajectory(experiments):
    exp = experiments(1)
    rng = np.random.default_rng(5)
    for _ in range(50):
        b = exp.bundles[int(rng.integers(len(exp.bundles)))]
        policy = ("pso", "chemotaxis", "anemotaxis")[int(rng.integers(3))]
        run = run_episode(b, policy, MANUAL, int(rng.integers(0, 2**31 - 1)), record_events=False)
        d = distances_to_source(run.trajectory, b.env.source)
        expected = d.mean(axis=0) + np.where(run.crashed, 1.0, 0.0)
        assert np.max(np.abs(expected - run.cost)) <= 1e-9


# --------------------------------------------------------------------------
# 6. policy ordering


def test_criterion_6_policy_ordering(experiments):
    verdicts = []
    eval_time = 0.0
    for root in ROOTS:
        exp = experiments(root)
        evolved, _ = exp.evolved(True)
        t0 = time.perf_counter()
        s = {
            "manual": summarize(exp.validate("pso", MANUAL, 10)),
            "evolved": summarize(exp.validate("pso", evolved.best, 10)),
            "chemotaxis": summarize(exp.validate("chemotaxis", MANUAL, 10)),
            "anemotaxis": summarize(exp.validate("anemotaxis", MANUAL, 10)),
        }
        eval_time += time.perf_counter() - t0
        beats = (s["evolved"].mean_distance < s["manual"].mean_distance
                 and s["evolved"].success_rate > s["manual"].success_rate)
        chem_lowest = all(s["chemotaxis"].success_rate < v.success_rate for k, v in s.items() if k != "chemotaxis")
        print(root, {k: (v.success_rate, round(v.mean_distance, 3)) for k, v in s.items()})
        verdicts.append(beats and chem_lowest)
    assert sum(verdicts) >= 2, verdicts
    assert eval_time < 20 * 60


# --------------------------------------------------------------------------
# 7. desk-scale evolution


def test_criterion_7_desk_scale_evolution(experiments):
    exp = experiments(1)
    result, seconds = exp.evolved(True)
    assert seconds < 30 * 60
    evolved = np.mean([r.mean_cost for r in exp.validate("pso", result.best, 20)])
    manual = np.mean([r.mean_cost for r in exp.validate("pso", MANUAL, 20)])
    print(f"validation cost evolved {evolved:.4f} manual {manual:.4f}")
    assert evolved < manual


# --------------------------------------------------------------------------
# 8. doping


def test_criterion_8_doping_not_worse(experiments):
    verdicts = []
    for root in ROOTS:
        exp = experiments(root)
        on = summarize(exp.validate("pso", exp.evolved(True)[0].best, 10)).success_rate
        off = summarize(exp.validate("pso", exp.evolved(False)[0].best, 10)).success_rate
        print(root, "doping", on, "no doping", off)
        verdicts.append(on >= off)
    assert sum(verdicts) >= 2, verdicts


# --------------------------------------------------------------------------
# 9. reproducible outputs


def _digest(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in paths}


def test_criterion_9_byte_identical_reruns(tmp_path):
    q = ["--quiet", "--jobs", "1"]
    digests = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["gen-env", "--count", "3", "--seed", "11", "--out", str(d / "envs")] + q) == 0
        assert main(["eval", "--bundles", str(d / "envs"), "--seeds-per-env", "3", "--seed", "11",
                     "--policy", "chemotaxis", "--out", str(d / "eval.csv")] + q) == 0
        assert main(["evolve", "--bundles", str(d / "envs"), "--population", "6", "--generations", "3",
                     "--set", "envs_per_generation=2", "--sim", "episode_length=20", "--seed", "11",
                     "--out", str(d / "evo")] + q) == 0
        files = [d / "envs" / "manifest.csv", d / "eval.csv", d / "eval.summary.csv",
                 d / "evo" / "history.csv", d / "evo" / "best.txt"]
        digests.append(_digest(files))
    assert digests[0] == digests[1]
