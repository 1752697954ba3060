import math
import random
import statistics
from collections import Counter

import numpy as np
import pytest

from kmcnet.config import OmegaSpec
from kmcnet.diffusion import (MUSICAL, POLITICAL, HUMOROUS, TrendingBuffer, TrendingEntry,
                              build_omega, compatible, expected_rebroadcasts, hazard_table,
                              transmission_alpha, trending_push, trending_sample)
from kmcnet.kmc import Limits
from kmcnet.simulation import RETWEET
from conftest import make_sim


# -- Omega -------------------------------------------------------------------

def test_exponential_normalized():
    om = build_omega(OmegaSpec("exponential", 1, 600, 600))
    assert math.fsum(om.bin_masses()) == pytest.approx(1.0, abs=1e-9)
    assert om.value(0.5) == 0.0 and om.value(600.0) == 0.0 and om.value(700) == 0.0


def test_reciprocal_constant_and_peak():
    om = build_omega(OmegaSpec("reciprocal", 1, 600, 600))
    assert om.normalization == pytest.approx(1 / math.log(600), rel=1e-12)
    assert max(range(om.bins), key=lambda i: om.density[i]) == 0
    # bin average of a/t over the first bin
    lo, hi = om.edges[0], om.edges[1]
    assert om.density[0] == pytest.approx(math.log(hi / lo) / math.log(600) / (hi - lo),
                                          rel=1e-12)
    assert math.fsum(om.bin_masses()) == pytest.approx(1.0, abs=1e-9)


def test_log_grid_normalized():
    for form in ("exponential", "reciprocal"):
        om = build_omega(OmegaSpec(form, 1, 600, 20, "log"))
        assert om.edges[0] == 1 and om.edges[-1] == 600
        assert math.fsum(om.bin_masses()) == pytest.approx(1.0, abs=1e-9)


def test_table_form():
    om = build_omega(OmegaSpec("table", 0, 4, 4, "linear", (1, 1, 2, 0)))
    assert om.density == pytest.approx((0.25, 0.25, 0.5, 0.0))
    with pytest.raises(ValueError, match="negative"):
        build_omega(OmegaSpec("table", 0, 4, 2, "linear", (1, -1)))
    with pytest.raises(ValueError, match="normaliz"):
        build_omega(OmegaSpec("table", 0, 4, 2, "linear", (0, 0)))


def test_expected_rebroadcasts():
    om = build_omega(OmegaSpec("exponential", 1, 600, 600))
    assert expected_rebroadcasts(0.0, 10, om) == 0.0
    assert expected_rebroadcasts(1.0, 10, om, 600) == pytest.approx(10.0, abs=1e-9)
    h = om.edges[5]    # bin edge: the table integrates the density exactly up to here
    assert expected_rebroadcasts(0.5, 10, om, h) == pytest.approx(
        5 * (math.exp(-1) - math.exp(-h)) / (math.exp(-1) - math.exp(-600)), rel=1e-9)


@pytest.mark.parametrize("alpha", [0.05, 0.5, 0.99])
def test_conditional_hazard_integrates_to_alpha(alpha):
    om = build_omega(OmegaSpec("reciprocal", 1, 600, 50, "log"))
    hz = hazard_table(om, alpha, "conditional")
    cum = math.fsum(h * w for h, w in zip(hz, om.widths()))
    assert 1 - math.exp(-cum) == pytest.approx(alpha, rel=1e-9)
    lit = hazard_table(om, alpha, "literal")
    assert lit == pytest.approx([alpha * d for d in om.density])


# -- gating ------------------------------------------------------------------

def attr_sim(n_agents=0, **kw):
    return make_sim(initial_agents=n_agents, attributes={
        "languages": ["en", "fr"], "ideologies": ["l", "r"],
        "regions": [{"name": "a"}, {"name": "b"}]}, **kw)


def add(sim, region=0, language=0, ideology=0, t=0):
    aid = sim.pop.append(t, region, language, ideology, sim.clock.sim_time)
    sim.network.add_node(aid)
    return aid


def test_transmission_alpha_table():
    sim = attr_sim()
    a = add(sim)
    same = add(sim)
    other_ideo = add(sim, ideology=1)
    all_diff = add(sim, region=1, language=1, ideology=1)
    pop = sim.pop
    assert transmission_alpha(pop, a, same, POLITICAL, 0.3) == 0.3
    assert transmission_alpha(pop, a, other_ideo, POLITICAL, 0.3) == 0.0
    assert transmission_alpha(pop, a, other_ideo, HUMOROUS, 0.3) == 0.3
    assert transmission_alpha(pop, a, all_diff, HUMOROUS, 0.3) == 0.0
    assert transmission_alpha(pop, a, all_diff, MUSICAL, 0.3) == 0.3


def test_compatible_exhaustive():
    for key in range(8):
        assert compatible(key, POLITICAL) == (key == 7)
        assert compatible(key, HUMOROUS) == bool(key & 1)
        assert compatible(key, MUSICAL)


# -- broadcasts --------------------------------------------------------------

def star(n, alpha=0.5, hazard="literal", content="musical", omega=None, **kw):
    sim = make_sim(initial_agents=n + 1, agent={"content_weights": {content: 1},
                                                "hashtag_probability": kw.pop("hashtag", 0.0)},
                   omega=omega or {"bins": 600},
                   diffusion={"base_alpha": alpha, "hazard": hazard, **kw})
    for leaf in range(1, n + 1):
        sim.add_edge(leaf, 0)
    return sim


def test_tweet_without_followers_has_zero_rate():
    sim = star(0)
    br = sim.tweet_broadcast(0)
    assert br.rate == 0.0
    assert sim.diffusion.broadcast_rate(br, 5.0) == 0.0
    assert sim.rates[RETWEET] == 0.0


def test_tweet_rate_increases_retweet_total():
    sim = make_sim(initial_agents=20, agent={"follow_rate": 1.0, "tweet_rate": 1.0,
                                             "content_weights": {"musical": 1}},
                   omega={"t_min": 0.0}, diffusion={"base_alpha": 0.5})
    sim.run(Limits(max_edges=200))
    for _ in range(200):
        before = sim.rates[RETWEET]
        rec = sim.step()
        if rec.kind == "tweet" and sim.network.in_deg[rec.detail[0]] > 0:
            assert sim.rates[RETWEET] > before
            return
    pytest.fail("no tweet by an author with followers")


def test_hashtag_always_trending():
    sim = star(3, hashtag=1.0)
    for _ in range(5):
        sim.tweet_broadcast(1)
    assert len(sim.diffusion.trending) == 5


def test_content_preference():
    sim = star(3, content="musical")
    assert {sim.tweet_broadcast(0).content for _ in range(50)} == {MUSICAL}


def test_literal_rate_is_alpha_omega_n():
    sim = star(10, alpha=0.2, hazard="literal")
    d = sim.diffusion
    br = sim.tweet_broadcast(0)
    om = d.omega
    for age in (0.5, 1.0, 3.7, 250.0, 599.9, 601.0):
        assert d.broadcast_rate(br, age) == pytest.approx(0.2 * 10 * om.value(age), rel=1e-12)


def test_rate_zero_when_all_rebroadcast():
    sim = star(3, alpha=1.0, hazard="conditional")
    br = sim.tweet_broadcast(0)
    d = sim.diffusion
    for leaf in (1, 2, 3):
        d.do_rebroadcast(sim, br, leaf)
    assert br.elig == {7: 0}
    assert d.broadcast_rate(br, 2.0) == 0.0


def test_bin_crossing_changes_rate_by_density_ratio():
    sim = star(5, alpha=0.1, hazard="literal")
    d = sim.diffusion
    br = sim.tweet_broadcast(0)
    assert br.bin == -1 and br.rate == 0.0
    d.cross(d.next_boundary())
    assert br.bin == 0
    r0 = sim.diffusion.tree[br.slot]
    d.cross(d.next_boundary())
    assert br.bin == 1
    r1 = sim.diffusion.tree[br.slot]
    om = d.omega
    assert r1 / r0 == pytest.approx(om.density[1] / om.density[0], rel=1e-12)


def test_no_live_broadcasts_zero_total():
    sim = star(4)
    assert sim.diffusion.total == 0.0
    assert sim.diffusion.linear_scan_total(0.0) == 0.0


def test_tree_matches_linear_scan_during_run():
    sim = make_sim(seed=3, initial_agents=150, add_rate=0.2,
                   agent={"follow_rate": 0.2, "tweet_rate": 0.05, "followback_probability": 0.3},
                   attributes={"languages": ["en", "fr"], "ideologies": ["l", "r"],
                               "regions": [{"name": "a"}, {"name": "b"}]},
                   follow={"unfollow": "random", "unfollow_rate": 0.01},
                   omega={"form": "reciprocal", "bins": 30, "spacing": "log"},
                   diffusion={"base_alpha": 0.1})
    d = sim.diffusion
    for _ in range(3000):
        sim.step()
        scan = d.linear_scan_total(sim.clock.sim_time)
        assert d.total == pytest.approx(scan, rel=1e-9, abs=1e-12)


# -- selection and rebroadcast -------------------------------------------------

def test_single_pair_selection():
    sim = star(1, alpha=0.5)
    br = sim.tweet_broadcast(0)
    sim.diffusion.cross(sim.diffusion.next_boundary())
    got, agent = sim.diffusion.select_rebroadcast(sim, 1e-9)
    assert got is br and agent == 1


def test_selection_proportional_to_rates():
    sim = make_sim(initial_agents=6, agent={"content_weights": {"musical": 1}},
                   omega={"t_min": 0.0}, diffusion={"base_alpha": 0.3, "hazard": "literal"})
    sim.add_edge(2, 0)
    for f in (3, 4, 5):
        sim.add_edge(f, 1)
    a = sim.tweet_broadcast(0)
    b = sim.tweet_broadcast(1)
    assert b.rate == pytest.approx(3 * a.rate)
    rng = random.Random(1)
    d = sim.diffusion
    c = Counter(d.select_rebroadcast(sim, (1 - rng.random()) * d.total)[0].id
                for _ in range(100_000))
    assert abs(c[a.id] / 1e5 - 0.25) < 0.01


def test_zero_alpha_partition_never_rebroadcasts():
    sim = attr_sim(agent={"content_weights": {"political": 1}},
                   diffusion={"base_alpha": 1.0}, omega={"t_min": 0.0})
    author = add(sim)
    match = [add(sim) for _ in range(5)]
    mismatch = [add(sim, ideology=1) for _ in range(5)]
    for f in match + mismatch:
        sim.add_edge(f, author)
    br = sim.tweet_broadcast(author)
    assert set(br.elig) == {7}
    sim.run(Limits())
    rb = sim.diffusion.cascades[br.origin].rebroadcasters
    assert rb == {author, *match}


def test_chain_full_transmission():
    sim = make_sim(initial_agents=3, agent={"content_weights": {"musical": 1}},
                   diffusion={"base_alpha": 1.0})
    sim.add_edge(1, 0)
    sim.add_edge(2, 1)
    br = sim.tweet_broadcast(0)
    sim.run(Limits())
    c = sim.diffusion.cascades[br.origin]
    assert c.rebroadcasters - {0} == {1, 2}
    assert sorted((p, ch, dep) for p, ch, dep, _ in c.edges) == [(0, 1, 1), (1, 2, 2)]


def test_second_rebroadcast_rejected():
    sim = star(2, alpha=1.0)
    br = sim.tweet_broadcast(0)
    d = sim.diffusion
    assert d.do_rebroadcast(sim, br, 1) is not None
    n_live, count = len(d.live), d.rebroadcast_count
    assert d.do_rebroadcast(sim, br, 1) is None
    assert len(d.live) == n_live and d.rebroadcast_count == count


def test_star_alpha_one_everyone_rebroadcasts():
    sim = star(200, alpha=1.0, hazard="conditional")
    br = sim.tweet_broadcast(0)
    sim.run(Limits())
    assert sim.diffusion.cascades[br.origin].count == 200


def test_star_mean_matches_alpha_n():
    counts = []
    for s in range(100):
        sim = star(100, alpha=0.3, hazard="conditional", omega={"bins": 60})
        sim.rng.seed(s)
        br = sim.tweet_broadcast(0)
        sim.run(Limits())
        c = sim.diffusion.cascades.get(br.origin)
        counts.append(c.count if c else 0)
    # binomial(100, 0.3) per seed
    assert abs(np.mean(counts) - 30) < 4 * math.sqrt(100 * 0.21 / 100)


def test_rebroadcast_removes_agent_from_sibling_pools():
    # 1 and 2 follow 0; 2 also follows 1. When 1 rebroadcasts, 2 is eligible
    # in 1's broadcast; when 2 then rebroadcasts, it leaves both pools.
    sim = make_sim(initial_agents=3, agent={"content_weights": {"musical": 1}},
                   diffusion={"base_alpha": 0.5})
    sim.add_edge(1, 0)
    sim.add_edge(2, 0)
    sim.add_edge(2, 1)
    br = sim.tweet_broadcast(0)
    d = sim.diffusion
    child = d.do_rebroadcast(sim, br, 1)
    assert br.elig == {7: 1} and child.elig == {7: 1}
    d.do_rebroadcast(sim, child, 2)
    assert br.elig == {7: 0} and child.elig == {7: 0}


def test_new_follower_joins_live_broadcast():
    sim = star(2, alpha=0.5)
    br = sim.tweet_broadcast(0)
    extra = sim.add_agent()
    sim.add_edge(extra, 0)
    assert br.elig == {7: 3}
    sim.remove_edge(extra, 0)
    assert br.elig == {7: 2}


# -- pruning -----------------------------------------------------------------

def test_prune_past_support():
    sim = star(3, alpha=0.2, omega={"t_max": 10.0, "bins": 9})
    br = sim.tweet_broadcast(0)
    d = sim.diffusion
    assert d.prune_live(0.0, 5.0) == 0
    assert d.prune_live(0.0, 11.0) == 1
    assert br.id not in d.live and d.total == 0.0


def test_prune_epsilon_zero_keeps_zero_rate_in_support():
    sim = star(0, alpha=0.2, prune_epsilon=0.0)
    br = sim.tweet_broadcast(0)
    d = sim.diffusion
    d.cross(d.next_boundary())
    assert br.id in d.live
    assert d.prune_live(0.0, 2.0) == 0
    assert d.prune_live(1e-9, 2.0) == 1


def test_pruning_preserves_statistics():
    def total(eps, seed):
        sim = make_sim(seed=seed, initial_agents=300,
                       agent={"follow_rate": 0.01, "tweet_rate": 0.002,
                              "content_weights": {"musical": 1}},
                       omega={"bins": 60}, diffusion={"base_alpha": 0.05, "prune_epsilon": eps})
        sim.run(Limits(max_sim_time=800))
        return sim.diffusion.rebroadcast_count
    a = [total(1e-12, s) for s in range(20)]
    b = [total(0.0, s) for s in range(20)]
    assert sum(a) > 0
    se = math.sqrt(statistics.variance(a) / len(a) + statistics.variance(b) / len(b))
    assert abs(statistics.mean(a) - statistics.mean(b)) <= 4 * se


# -- cascade provenance --------------------------------------------------------

def test_cascade_is_tree_rooted_at_author():
    sim = make_sim(seed=4, initial_agents=300,
                   agent={"follow_rate": 0.02, "tweet_rate": 0.002,
                          "content_weights": {"musical": 1}},
                   omega={"bins": 40, "spacing": "log", "form": "reciprocal"},
                   diffusion={"base_alpha": 0.05})
    sim.run(Limits(max_sim_time=600))
    top = sim.diffusion.most_rebroadcasted()
    assert top is not None and top.count > 0
    parents = {}
    for p, ch, depth, _ in top.edges:
        assert ch not in parents
        parents[ch] = p
    assert top.author not in parents
    assert set(parents) | {top.author} == top.rebroadcasters
    for ch in parents:
        seen, x = set(), ch
        while x != top.author:
            assert x not in seen
            seen.add(x)
            x = parents[x]


# -- trending ----------------------------------------------------------------

def entry(i):
    return TrendingEntry(i, i, MUSICAL)


def test_trending_fifo():
    b = TrendingBuffer(3)
    for i in range(4):
        trending_push(b, entry(i))
    assert len(b) == 3 and [e.broadcast for e in b] == [1, 2, 3]


def test_trending_capacity_one():
    b = TrendingBuffer(1)
    for i in range(5):
        trending_push(b, entry(i))
        assert trending_sample(b, 0.7).broadcast == i


def test_trending_empty_and_uniform():
    b = TrendingBuffer(10)
    assert trending_sample(b, 0.5) is None
    for i in range(10):
        b.push(entry(i))
    rng = random.Random(0)
    c = Counter(trending_sample(b, 1 - rng.random()).broadcast for _ in range(100_000))
    assert all(abs(v / 1e5 - 0.1) < 0.01 for v in c.values())
