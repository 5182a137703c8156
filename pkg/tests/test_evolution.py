import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from sniffy.evolution import (
    DifficultyLedger,
    EvoConfig,
    EvoError,
    doping_probabilities,
    evolve,
    exponential_crossover,
    final_candidates,
    history_csv,
    initial_population,
    parse_config_text,
    polynomial_mutation,
    select_environments,
    tournament_select,
)
from sniffy.genome import LOWER, MANUAL, UPPER
from sniffy.sim import SimConfig

SHORT = SimConfig(episode_length=10.0)
SMALL = EvoConfig(population=4, generations=3, envs_per_generation=2, seeds_per_env=1, final_seeds=1,
                  checkpoint_every=1, seed=5)


def ledger_with(histories):
    led = DifficultyLedger(len(histories))
    for i, h in enumerate(histories):
        for v in h:
            led.record(i, v)
    return led


# --------------------------------------------------------------------------
# doping


def test_no_history_is_uniform():
    assert np.array_equal(doping_probabilities(DifficultyLedger(4)), np.full(4, 0.25))


def test_probabilities_hand_value():
    p = doping_probabilities(ledger_with([[1.0], [3.0]]))
    assert p.tolist() == pytest.approx([0.25, 0.75], abs=1e-12)


def test_doping_off_is_uniform():
    p = doping_probabilities(ledger_with([[1.0], [3.0], []]), doping=False)
    assert np.array_equal(p, np.full(3, 1 / 3))


def test_all_zero_difficulty_falls_back_to_uniform():
    assert np.array_equal(doping_probabilities(ledger_with([[0.0], [0.0]])), [0.5, 0.5])


def test_missing_history_takes_mean_of_known():
    led = ledger_with([[2.0], [4.0], []])
    assert led.difficulties().tolist() == [2.0, 4.0, 3.0]


def test_ledger_keeps_last_three():
    led = ledger_with([[1.0, 2.0, 3.0, 10.0]])
    assert list(led.history[0]) == [2.0, 3.0, 10.0]
    assert led.difficulty(0) == pytest.approx(5.0, abs=1e-12)
    assert DifficultyLedger.from_dict(json.loads(json.dumps(led.to_dict()))).difficulty(0) == led.difficulty(0)


ledgers = st.lists(st.lists(st.floats(0.0, 20.0), max_size=5), min_size=1, max_size=30)


@given(ledgers)
def test_probabilities_always_a_distribution(histories):
    led = ledger_with(histories)
    p = doping_probabilities(led)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-12
    d = led.difficulties()
    if d.sum() > 0:
        assert p[int(np.argmax(d))] >= 1.0 / len(p) - 1e-15


def test_empirical_frequencies_match():
    led = ledger_with([[1.0], [2.0, 4.0], [0.5], [5.0, 5.0, 2.0], []])
    p = doping_probabilities(led)
    rng = np.random.default_rng(0)
    counts = np.bincount([select_environments(p, 1, rng)[0] for _ in range(100_000)], minlength=5)
    assert np.max(np.abs(counts / 1e5 - p)) < 0.01


def test_select_all_and_distinct():
    rng = np.random.default_rng(1)
    assert sorted(select_environments([0.1, 0.2, 0.7], 3, rng)) == [0, 1, 2]
    for _ in range(200):
        ids = select_environments(np.full(20, 0.05), 6, rng)
        assert len(set(ids)) == 6
    with pytest.raises(EvoError):
        select_environments([0.5, 0.5], 3, rng)


def test_uniform_selection_chi_square():
    rng = np.random.default_rng(2)
    counts = np.bincount([i for _ in range(10_000) for i in select_environments(np.full(10, 0.1), 3, rng)],
                         minlength=10)
    assert stats.chisquare(counts).pvalue > 0.01


def test_hard_environment_is_nearly_always_drawn():
    p = np.ones(100)
    p[37] = 100.0
    p /= p.sum()
    rng = np.random.default_rng(3)
    hits = sum(37 in select_environments(p, 10, rng) for _ in range(2000))
    assert hits / 2000 >= 0.99


# --------------------------------------------------------------------------
# variation operators


def test_tournament_equal_costs_uniform():
    rng = np.random.default_rng(4)
    counts = np.bincount([tournament_select([1.0] * 8, 2, rng) for _ in range(40_000)], minlength=8)
    assert stats.chisquare(counts).pvalue > 0.01


def test_tournament_selection_pressure():
    rng = np.random.default_rng(5)
    n, size = 10, 3
    costs = np.arange(n, dtype=float)
    rate = np.mean([tournament_select(costs, size, rng) == 0 for _ in range(100_000)])
    expected = 1 - (1 - 1 / n) ** size
    assert abs(rate - expected) <= 0.02 * expected


def test_crossover_cases():
    rng = np.random.default_rng(6)
    a, b = np.zeros(13), np.ones(13)
    for _ in range(100):
        assert exponential_crossover(a, b, 0.0, rng).sum() == 1.0
    x = np.arange(13.0)
    assert np.array_equal(exponential_crossover(x, x, 0.9, rng), x)


def test_crossover_block_is_contiguous():
    a, b = np.zeros(13), np.ones(13)
    for seed in range(10_000):
        child = exponential_crossover(a, b, 0.9, np.random.default_rng(seed))
        donated = child.astype(bool)
        # a wrapped contiguous block has at most one rising edge around the ring
        rises = np.sum(donated & ~np.roll(donated, 1))
        assert donated.any() and (rises == 1 or donated.all())


def test_mutation_identity_and_range():
    rng = np.random.default_rng(7)
    g = MANUAL.to_array()
    assert np.array_equal(polynomial_mutation(g, 0.0, 1.0, rng), g)
    pop = LOWER + rng.random((10_000, 13)) * (UPPER - LOWER)
    for k in range(10):
        for row in pop[k * 1000:(k + 1) * 1000]:
            m = polynomial_mutation(row, 1.0, 1.0, rng)
            assert np.all(m >= LOWER) and np.all(m <= UPPER)


def test_mutation_symmetric_at_centre():
    rng = np.random.default_rng(8)
    centre = (LOWER + UPPER) / 2
    draws = np.array([polynomial_mutation(centre, 1.0, 1.0, rng) for _ in range(100_000 // 13 + 1)])
    offset = (draws - centre).mean(axis=0) / (UPPER - LOWER)
    assert np.all(np.abs(offset) < 0.01)


# --------------------------------------------------------------------------
# configuration


def test_config_validation_and_parsing():
    with pytest.raises(EvoError):
        EvoConfig(population=5)
    with pytest.raises(EvoError):
        EvoConfig(mutation_prob=1.5)
    with pytest.raises(EvoError):
        EvoConfig.from_mapping({"populaton": "4"})
    cfg = EvoConfig.from_mapping(parse_config_text("population = 8  # small\ndoping=off\n"))
    assert cfg.population == 8 and cfg.doping is False
    with pytest.raises(EvoError):
        EvoConfig.from_mapping({"doping": "maybe"})


def test_initial_population_in_range_and_seeded():
    pop = initial_population(EvoConfig(), np.random.default_rng(0))
    assert pop.shape == (24, 13)
    assert np.array_equal(pop[0], MANUAL.to_array())
    assert np.all(pop >= LOWER) and np.all(pop <= UPPER)


def test_final_candidates_deduplicate():
    pop = np.array([[1.0, 2.0], [3.0, 4.0]])
    from sniffy.evolution import GenerationRecord
    hist = [GenerationRecord(0, 1.0, 1.0, 1.0, [], [5.0, 6.0]), GenerationRecord(1, 1.0, 1.0, 1.0, [], [1.0, 2.0])]
    out = final_candidates(pop, hist, [np.array([5.0, 6.0]), np.array([7.0, 8.0])])
    assert out.tolist() == [[1, 2], [3, 4], [5, 6], [7, 8]]


# --------------------------------------------------------------------------
# the loop


def test_single_generation_leaves_population(bundles):
    cfg = dataclasses.replace(SMALL, generations=1, crossover_prob=0.0, mutation_prob=0.0)
    res = evolve(cfg, bundles, SHORT)
    assert np.array_equal(res.population, initial_population(cfg, np.random.default_rng(cfg.seed)))
    assert len(res.history) == 1


def test_evolution_deterministic_and_in_range(bundles):
    a = evolve(SMALL, bundles, SHORT)
    b = evolve(SMALL, bundles, SHORT)
    assert history_csv(a.history) == history_csv(b.history)
    assert a.best == b.best and np.array_equal(a.final_costs, b.final_costs)
    assert np.all(a.population >= LOWER) and np.all(a.population <= UPPER)
    assert a.best_cost == a.final_costs.min()
    for rec in a.history:
        assert len(set(rec.env_ids)) == SMALL.envs_per_generation
        assert rec.best_cost <= rec.median_cost


def test_parallel_evaluation_matches_serial(bundles):
    a = evolve(SMALL, bundles, SHORT, jobs=1)
    b = evolve(SMALL, bundles, SHORT, jobs=2)
    assert history_csv(a.history) == history_csv(b.history) and a.best == b.best


def test_resume_equals_uninterrupted(bundles, tmp_path):
    full = evolve(SMALL, bundles, SHORT)
    ck = tmp_path / "ck.json"
    assert evolve(SMALL, bundles, SHORT, checkpoint=ck, stop_after=2) is None
    resumed = evolve(SMALL, bundles, SHORT, checkpoint=ck, resume=True)
    assert history_csv(resumed.history) == history_csv(full.history)
    assert resumed.best == full.best
    with pytest.raises(EvoError):
        evolve(dataclasses.replace(SMALL, seed=6), bundles, SHORT, checkpoint=ck, resume=True)
    with pytest.raises(EvoError):
        evolve(SMALL, bundles, SHORT, checkpoint=tmp_path / "missing.json", resume=True)


def test_too_many_envs_per_generation(bundles):
    with pytest.raises(EvoError):
        evolve(dataclasses.replace(SMALL, envs_per_generation=4), bundles, SHORT)
