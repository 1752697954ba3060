import math
import random

import numpy as np
import pytest
from scipy import stats

from kmcnet.agents import Discrete, sample_discrete
from kmcnet.kmc import Limits
from kmcnet.simulation import FOLLOW
from conftest import make_config, make_sim
from kmcnet.simulation import Simulation


def test_sample_discrete_examples():
    for u in (1e-9, 0.5, 1.0):
        assert sample_discrete([1, 0, 0], u) == 0
    assert sample_discrete([0.5, 0.5], 0.25) == 0
    assert sample_discrete([0.5, 0.5], 0.75) == 1


def test_sample_discrete_errors():
    with pytest.raises(ValueError):
        sample_discrete([], 0.5)
    with pytest.raises(ValueError):
        sample_discrete([0, 0], 0.5)


def test_sample_discrete_frequencies():
    rng = random.Random(4)
    d = Discrete([0.2, 0.3, 0.5])
    counts = np.bincount([d.sample(1.0 - rng.random()) for _ in range(1_000_000)], minlength=3)
    assert np.all(np.abs(counts / 1e6 - [0.2, 0.3, 0.5]) < 0.005)


def test_discrete_matches_function():
    w = [0.1, 0.0, 0.6, 0.3]
    d = Discrete(w)
    for u in np.linspace(1e-6, 1, 500):
        assert d.sample(float(u)) == sample_discrete(w, float(u))


def test_single_type_attributes_fixed():
    sim = make_sim(initial_agents=10)
    assert set(sim.pop.type_of) == {0}
    assert set(sim.pop.region) == {0}
    assert set(sim.pop.language) == {0}


def test_zero_weight_region_never_used():
    sim = make_sim(initial_agents=2000,
                   attributes={"regions": [{"name": "a", "add_weight": 1},
                                           {"name": "b", "add_weight": 0}]})
    assert set(sim.pop.region) == {0}


def test_empty_population_rates():
    sim = make_sim(add_rate=0.7, agent={"follow_rate": 1.0, "tweet_rate": 1.0})
    assert len(sim.pop) == 0
    assert sim.rates.total == pytest.approx(0.7)


def test_follow_subtree_homogeneous():
    sim = make_sim(initial_agents=100, agent={"follow_rate": 0.25})
    assert sim.follow_tree.total == pytest.approx(25.0)
    assert sim.rates[FOLLOW] == pytest.approx(25.0)


def two_types(n):
    return make_config(initial_agents=n, agent_types=[
        {"name": "standard", "add_weight": 0.9, "follow_rate": 0.1},
        {"name": "celebrity", "add_weight": 0.1, "follow_rate": 0.3}])


def test_type_counts_binomial():
    sim = Simulation(two_types(10_000), seed=3)
    n_cel = len(sim.pop.members[1])
    assert abs(n_cel - 1000) < 3 * math.sqrt(10_000 * 0.1 * 0.9)
    assert sim.follow_tree.total == pytest.approx(0.1 * len(sim.pop.members[0])
                                                  + 0.3 * n_cel)


def test_attribute_marginals_goodness_of_fit():
    sim = make_sim(initial_agents=100_000, attributes={
        "languages": ["en", "fr", "es"], "ideologies": ["l", "r"],
        "regions": [{"name": "a", "add_weight": 3, "language_weights": [0.7, 0.2, 0.1],
                     "ideology_weights": [0.4, 0.6]},
                    {"name": "b", "add_weight": 1, "language_weights": [0.1, 0.1, 0.8],
                     "ideology_weights": [0.9, 0.1]}]})
    pop = sim.pop
    region = np.array(pop.region)
    lang = np.array(pop.language)
    _, p = stats.chisquare(np.bincount(region), 100_000 * np.array([0.75, 0.25]))
    assert p > 0.001
    for r, w in ((0, [0.7, 0.2, 0.1]), (1, [0.1, 0.1, 0.8])):
        obs = np.bincount(lang[region == r], minlength=3)
        _, p = stats.chisquare(obs, obs.sum() * np.array(w))
        assert p > 0.001


def test_add_rate_poisson_over_seeds():
    T, r = 200.0, 0.5
    finals = []
    for s in range(20):
        sim = make_sim(seed=s, initial_agents=5, add_rate=r)
        sim.run(Limits(max_sim_time=T))
        finals.append(len(sim.pop) - 5)
    sigma = math.sqrt(r * T / 20)
    assert abs(np.mean(finals) - r * T) < 3 * sigma


def test_add_rate_long_window():
    sim = make_sim(seed=1, add_rate=1.0)
    sim.run(Limits(max_sim_time=10_000))
    assert abs(len(sim.pop) - 10_000) < 3 * 100


def test_add_schedule_breakpoint():
    sim = make_sim(seed=2, add_rate=[[0, 2.0], [500, 0.0]])
    sim.run(Limits(max_sim_time=2000))
    assert sim.clock.sim_time == 2000 or sim.rates.total == 0
    assert all(t <= 500 for t in sim.pop.created_at)
    assert abs(len(sim.pop) - 1000) < 5 * math.sqrt(1000)


def test_members_follow_rates_shared_per_type():
    sim = Simulation(two_types(500), seed=0)
    sim.run(Limits(max_events=2000))
    expect = 0.1 * len(sim.followers_active[0]) + 0.3 * len(sim.followers_active[1])
    assert sim.follow_tree.total == pytest.approx(expect)
