"""Genetic optimisation of the controller genome with doping.

A generational GA in the style of pagmo's simple genetic algorithm:
tournament selection, exponential crossover and bounded polynomial
mutation, plus one elite.  Every generation evaluates the population on a
subset of the training environments; with doping the subset is drawn with
probability proportional to each environment's recorded difficulty (the
mean of the last three per-environment population medians).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from sniffy.environment.bundle import Bundle
from sniffy.genome import GENES, LOWER, MANUAL, UPPER, Genome
from sniffy.sim import SimConfig, run_episode


class EvoError(ValueError):
    pass


@dataclass(frozen=True)
class EvoConfig:
    population: int = 24
    generations: int = 60
    tournament_size: int = 2
    crossover_prob: float = 0.9
    crossover_rate: float = 0.9      # cr inside exponential crossover
    mutation_prob: float = 0.1       # per gene
    eta: float = 1.0                 # polynomial mutation distribution index
    envs_per_generation: int = 6
    seeds_per_env: int = 2
    doping: bool = True
    seed: int = 0
    elitism: int = 1
    history_size: int = 3
    final_seeds: int = 4             # seeds per env when re-scoring the final candidates
    checkpoint_every: int = 5
    policy: str = "pso"
    seed_manual: bool = True         # put the manual preset into the first population

    def __post_init__(self) -> None:
        for name in ("crossover_prob", "crossover_rate", "mutation_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise EvoError(f"{name} must lie in [0, 1], got {v}")
        if self.population < 2 or self.population % 2:
            raise EvoError(f"population must be even and >= 2, got {self.population}")
        if self.generations < 1:
            raise EvoError("generations must be >= 1")
        if self.tournament_size < 2:
            raise EvoError("tournament size must be >= 2")
        if self.envs_per_generation < 1 or self.seeds_per_env < 1:
            raise EvoError("need at least one environment and seed per generation")
        if not 0 <= self.elitism < self.population:
            raise EvoError("elitism must be smaller than the population")
        if self.eta < 0:
            raise EvoError("eta must be nonnegative")

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, values: dict[str, str | object]) -> "EvoConfig":
        """Build from string (or typed) values; unknown keys are rejected by name."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise EvoError(f"unknown config key: {key}")
            default = getattr(cls, key)
            kwargs[key] = _coerce(key, raw, type(default))
        return cls(**kwargs)


def _coerce(key: str, raw, kind):
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return kind(text)
    except ValueError:
        raise EvoError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise EvoError(f"line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


# --------------------------------------------------------------------------
# doping


class DifficultyLedger:
    """Per-environment history of the last ``size`` population medians."""

    def __init__(self, n_envs: int, size: int = 3):
        if n_envs < 1:
            raise EvoError("ledger needs at least one environment")
        self.size = size
        self.history: list[deque] = [deque(maxlen=size) for _ in range(n_envs)]

    def __len__(self) -> int:
        return len(self.history)

    def record(self, env: int, median: float) -> None:
        self.history[env].append(float(median))

    def difficulty(self, env: int) -> Optional[float]:
        h = self.history[env]
        return sum(h) / len(h) if h else None

    def difficulties(self) -> np.ndarray:
        """D(i); environments without history get the mean of the known difficulties."""
        known = [d for d in (self.difficulty(i) for i in range(len(self))) if d is not None]
        fill = sum(known) / len(known) if known else 1.0
        return np.array([fill if d is None else d for d in (self.difficulty(i) for i in range(len(self)))])

    def to_dict(self) -> dict:
        return {"size": self.size, "history": [list(h) for h in self.history]}

    @classmethod
    def from_dict(cls, d: dict) -> "DifficultyLedger":
        led = cls(len(d["history"]), d["size"])
        for i, h in enumerate(d["history"]):
            led.history[i].extend(h)
        return led


def doping_probabilities(ledger: DifficultyLedger, doping: bool = True) -> np.ndarray:
    """P(i) = D(i) / sum D, or uniform without doping or when every D is zero."""
    m = len(ledger)
    if not doping:
        return np.full(m, 1.0 / m)
    d = np.maximum(ledger.difficulties(), 0.0)
    total = float(d.sum())
    if not total > 0.0 or not math.isfinite(total):
        return np.full(m, 1.0 / m)
    return d / total


def select_environments(probabilities: Sequence[float], n: int, rng: np.random.Generator) -> list[int]:
    """Draw ``n`` distinct indices sequentially, each proportional to the remaining mass."""
    p = np.array(probabilities, dtype=float)
    m = len(p)
    if n > m:
        raise EvoError(f"cannot pick {n} of {m} environments")
    alive = np.ones(m, dtype=bool)
    out = []
    for _ in range(n):
        w = np.where(alive, p, 0.0)
        total = w.sum()
        if not total > 0.0:
            w = alive.astype(float)
            total = w.sum()
        u = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
        idx = min(idx, m - 1)
        while not alive[idx] or w[idx] == 0.0:
            # guard against landing on a zero-width slot through rounding
            idx = (idx - 1) % m
        alive[idx] = False
        out.append(idx)
    return out


# --------------------------------------------------------------------------
# variation operators


def tournament_select(costs: Sequence[float], size: int, rng: np.random.Generator) -> int:
    """Lowest-cost member of ``size`` uniformly drawn contestants (drawn with replacement)."""
    if size < 1:
        raise EvoError("tournament size must be positive")
    picks = rng.integers(0, len(costs), size=size)
    best = int(picks[0])
    for i in picks[1:]:
        if costs[int(i)] < costs[best]:
            best = int(i)
    return best


def exponential_crossover(parent_a: np.ndarray, parent_b: np.ndarray, cr: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Copy a wrapped run of genes from ``parent_b`` into a copy of ``parent_a``.

    The run starts at a random gene and always has length >= 1; it extends
    while successive uniform draws stay below ``cr``.
    """
    a = np.asarray(parent_a, dtype=float)
    b = np.asarray(parent_b, dtype=float)
    n = len(a)
    child = a.copy()
    start = int(rng.integers(0, n))
    length = 0
    while True:
        k = (start + length) % n
        child[k] = b[k]
        length += 1
        if length >= n or not rng.random() < cr:
            break
    return child


def polynomial_mutation(genes: np.ndarray, prob: float, eta: float, rng: np.random.Generator,
                        lower: np.ndarray = LOWER, upper: np.ndarray = UPPER) -> np.ndarray:
    """Bounded polynomial mutation (Deb), applied to each gene with probability ``prob``."""
    y = np.array(genes, dtype=float)
    mut_pow = 1.0 / (eta + 1.0)
    for k in range(len(y)):
        if not rng.random() < prob:
            continue
        lo, hi = float(lower[k]), float(upper[k])
        span = hi - lo
        if span <= 0.0:
            continue
        d1 = (y[k] - lo) / span
        d2 = (hi - y[k]) / span
        r = rng.random()
        if r < 0.5:
            xy = 1.0 - d1
            val = 2.0 * r + (1.0 - 2.0 * r) * xy ** (eta + 1.0)
            dq = val ** mut_pow - 1.0
        else:
            xy = 1.0 - d2
            val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy ** (eta + 1.0)
            dq = 1.0 - val ** mut_pow
        y[k] = min(max(y[k] + dq * span, lo), hi)
    return y


# --------------------------------------------------------------------------
# evaluation


_WORKER: dict = {}


def _init_worker(bundles, sim_config, policy):
    _WORKER["bundles"] = bundles
    _WORKER["config"] = sim_config
    _WORKER["policy"] = policy


def _job(args) -> float:
    genes, env, seed = args
    b = _WORKER["bundles"][env]
    return run_episode(b, _WORKER["policy"], Genome.from_array(genes), int(seed), _WORKER["config"],
                       record_events=False).mean_cost


class Evaluator:
    """Runs (genome, env, seed) jobs serially or on a process pool; results keep job order."""

    def __init__(self, bundles: Sequence[Bundle], sim_config: SimConfig = SimConfig(), policy: str = "pso",
                 jobs: int = 1):
        self.bundles = list(bundles)
        self.sim_config = sim_config
        self.policy = policy
        self.jobs = max(1, int(jobs))
        self._pool: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def run(self, jobs: list[tuple[np.ndarray, int, int]]) -> np.ndarray:
        if self.jobs == 1:
            _init_worker(self.bundles, self.sim_config, self.policy)
            return np.array([_job(j) for j in jobs])
        if self._pool is None:
            self._pool = ProcessPoolExecutor(self.jobs, initializer=_init_worker,
                                             initargs=(self.bundles, self.sim_config, self.policy))
        chunk = max(1, len(jobs) // (4 * self.jobs))
        return np.array(list(self._pool.map(_job, jobs, chunksize=chunk)))

    def cost_matrix(self, population: np.ndarray, envs: Sequence[int], seeds: np.ndarray) -> np.ndarray:
        """(population, len(envs)) mean cost over the per-env seeds."""
        jobs = [(population[p], int(e), int(s)) for p in range(len(population))
                for j, e in enumerate(envs) for s in seeds[j]]
        flat = self.run(jobs)
        return flat.reshape(len(population), len(envs), seeds.shape[1]).mean(axis=2)


# --------------------------------------------------------------------------
# main loop


@dataclass
class GenerationRecord:
    generation: int
    best_cost: float
    median_cost: float
    mean_cost: float
    env_ids: list[str]
    best_genes: list[float]


@dataclass
class EvoResult:
    best: Genome
    best_cost: float
    history: list[GenerationRecord]
    population: np.ndarray
    final_costs: np.ndarray          # one entry per final candidate


@dataclass
class _State:
    generation: int
    population: np.ndarray
    ledger: DifficultyLedger
    rng: np.random.Generator
    history: list[GenerationRecord] = field(default_factory=list)


def initial_population(config: EvoConfig, rng: np.random.Generator) -> np.ndarray:
    pop = LOWER + rng.random((config.population, len(GENES))) * (UPPER - LOWER)
    if config.seed_manual:
        pop[0] = MANUAL.to_array()
    return pop


def breed(population: np.ndarray, costs: np.ndarray, config: EvoConfig, rng: np.random.Generator) -> np.ndarray:
    order = np.argsort(costs, kind="stable")
    new = [population[i].copy() for i in order[:config.elitism]]
    while len(new) < config.population:
        a = population[tournament_select(costs, config.tournament_size, rng)]
        b = population[tournament_select(costs, config.tournament_size, rng)]
        if rng.random() < config.crossover_prob:
            child = exponential_crossover(a, b, config.crossover_rate, rng)
        else:
            child = a.copy()
        new.append(polynomial_mutation(child, config.mutation_prob, config.eta, rng))
    return np.array(new)


def evolve(config: EvoConfig, bundles: Sequence[Bundle], sim_config: SimConfig = SimConfig(), jobs: int = 1,
           checkpoint: str | Path | None = None, resume: bool = False,
           stop_after: int | None = None,
           progress: Callable[[GenerationRecord], None] | None = None) -> Optional[EvoResult]:
    """Run the GA; deterministic in ``config.seed`` and the bundle list.

    With ``checkpoint`` set, state is written every ``checkpoint_every``
    generations; ``resume=True`` continues from that file.  ``stop_after``
    halts after the given number of generations (returns None), which is how
    an interrupted run is simulated.
    """
    if not bundles:
        raise EvoError("need at least one bundle")
    if config.envs_per_generation > len(bundles):
        raise EvoError(f"envs_per_generation={config.envs_per_generation} exceeds {len(bundles)} bundles")
    ids = [b.id for b in bundles]
    if resume:
        if checkpoint is None or not Path(checkpoint).exists():
            raise EvoError(f"no checkpoint to resume from: {checkpoint}")
        state = load_checkpoint(checkpoint, config, ids)
    else:
        rng = np.random.default_rng(config.seed)
        state = _State(0, initial_population(config, rng), DifficultyLedger(len(bundles), config.history_size), rng)

    with Evaluator(bundles, sim_config, config.policy, jobs) as ev:
        while state.generation < config.generations:
            if stop_after is not None and state.generation >= stop_after:
                return None
            g = state.generation
            rng = state.rng
            probs = doping_probabilities(state.ledger, config.doping)
            envs = select_environments(probs, config.envs_per_generation, rng)
            seeds = rng.integers(0, 2**31 - 1, size=(len(envs), config.seeds_per_env))
            cm = ev.cost_matrix(state.population, envs, seeds)
            costs = cm.mean(axis=1)
            for j, e in enumerate(envs):
                state.ledger.record(e, float(np.median(cm[:, j])))
            best = int(np.argmin(costs))
            rec = GenerationRecord(g, float(costs[best]), float(np.median(costs)), float(costs.mean()),
                                   [ids[e] for e in envs], [float(x) for x in state.population[best]])
            state.history.append(rec)
            if progress:
                progress(rec)
            if g + 1 < config.generations:
                state.population = breed(state.population, costs, config, rng)
            state.generation = g + 1
            if checkpoint is not None and (state.generation % config.checkpoint_every == 0
                                           or state.generation == config.generations):
                save_checkpoint(checkpoint, config, ids, state)

        # final pick: the last population, every generation's best and the
        # seeded preset, each scored on every training environment
        extra = [MANUAL.to_array()] if config.seed_manual else []
        candidates = final_candidates(state.population, state.history, extra)
        rng = state.rng
        seeds = rng.integers(0, 2**31 - 1, size=(len(bundles), config.final_seeds))
        cm = ev.cost_matrix(candidates, list(range(len(bundles))), seeds)
    final = cm.mean(axis=1)
    best = int(np.argmin(final))
    return EvoResult(Genome.from_array(candidates[best]), float(final[best]), state.history,
                     state.population, final)


def final_candidates(population: np.ndarray, history: Sequence[GenerationRecord],
                     extra: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Rows of ``population``, then per-generation bests, then ``extra``; duplicates dropped."""
    rows: list[np.ndarray] = []
    seen: set[bytes] = set()
    for row in list(population) + [np.asarray(r.best_genes, dtype=float) for r in history] + list(extra):
        key = np.asarray(row, dtype=float).tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(np.asarray(row, dtype=float))
    return np.array(rows)


# --------------------------------------------------------------------------
# files


def history_csv(history: Sequence[GenerationRecord], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "best_cost", "median_cost", "mean_cost", "env_ids"])
    for r in history:
        w.writerow([r.generation, repr(r.best_cost), repr(r.median_cost), repr(r.mean_cost), ";".join(r.env_ids)])
    return buf.getvalue()


def save_checkpoint(path: str | Path, config: EvoConfig, ids: list[str], state: _State) -> None:
    data = {
        "config": asdict(config),
        "env_ids": ids,
        "generation": state.generation,
        "population": state.population.tolist(),
        "ledger": state.ledger.to_dict(),
        "rng": state.rng.bit_generator.state,
        "history": [asdict(r) for r in state.history],
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(data))
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, config: EvoConfig, ids: list[str]) -> _State:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise EvoError(f"unreadable checkpoint {path}: {exc}") from None
    if data["config"] != asdict(config):
        raise EvoError("checkpoint was written with a different configuration")
    if data["env_ids"] != ids:
        raise EvoError("checkpoint was written for a different bundle set")
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng"]
    history = [GenerationRecord(**r) for r in data["history"]]
    return _State(data["generation"], np.array(data["population"], dtype=float),
                  DifficultyLedger.from_dict(data["ledger"]), rng, history)
