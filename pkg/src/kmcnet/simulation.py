"""The social-network model driven by the kMC loop.

Top-level event categories, each owning one leaf of ``Simulation.rates``:

* ADD      agent creation, rate from the add-rate schedule
* FOLLOW   one leaf per agent type: following members x follow rate
* TWEET    one leaf per agent type: members x tweet rate
* RETWEET  live-broadcast tree
* UNFOLLOW agents x unfollow rate
"""
from __future__ import annotations

import math
import random
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional

from . import graph
from .agents import Discrete, Population
from .config import SimulationConfig
from .diffusion import Diffusion
from .graph import IndexedSet, Network, decode_edge
from .kmc import EventRecord, Limits, RateTree, SimClock, kmc_step, run

ADD, FOLLOW, TWEET, RETWEET, UNFOLLOW = range(5)
CATEGORY_NAMES = ("add", "follow", "tweet", "retweet", "unfollow")


@dataclass
class Stats:
    events: list[int] = field(default_factory=lambda: [0] * 5)
    noops: list[int] = field(default_factory=lambda: [0] * 5)
    followbacks: int = 0
    pruned: int = 0
    model_usage: dict[str, int] = field(default_factory=dict)


class Simulation:
    """Complete simulation state plus the event handlers the kMC loop calls."""

    def __init__(self, config: SimulationConfig, seed: Optional[int] = None, omega=None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.clock = SimClock()
        self.pending_time: Optional[float] = None
        self.stats = Stats()

        self.pop = Population(config)
        fc = config.follow
        self.network = Network(self.pop, fc.degree, graph.needs_degree_index(fc))
        self.diffusion = Diffusion(config, omega)

        n_types = len(config.agent_types)
        self.follow_rates = [t.follow_rate for t in config.agent_types]
        self.tweet_rates = [t.tweet_rate for t in config.agent_types]
        self.quotas = [t.follow_quota for t in config.agent_types]
        self.followback_p = [t.followback_probability for t in config.agent_types]
        self.followers_active = [IndexedSet() for _ in range(n_types)]
        self.follow_tree = RateTree(n_types)
        self.tweet_tree = RateTree(n_types)
        self.rates = RateTree(5)

        self.follow_fn = graph.FOLLOW_FUNCTIONS[fc.model]
        self.type_target_sampler = Discrete(fc.type_weights) if fc.type_weights else None
        self.combined_sampler = Discrete(fc.combined_weights) if fc.combined_weights else None
        self.unfollow_rate = fc.unfollow_rate if fc.unfollow != "none" else 0.0

        self.schedule_times = [t for t, _ in config.add_rate]
        self.schedule_rates = [r for _, r in config.add_rate]
        self.schedule_set = frozenset(self.schedule_times)
        self.add_enabled = True
        self.prune_interval = config.diffusion.prune_interval
        self._next_prune = self.prune_interval

        for _ in range(config.initial_agents):
            self.add_agent()
        self._sync()

    # -- rate bookkeeping -----------------------------------------------------

    def current_add_rate(self) -> float:
        if not self.add_enabled:
            return 0.0
        ma = self.config.max_agents
        if ma is not None and len(self.pop) >= ma:
            return 0.0
        i = bisect_right(self.schedule_times, self.clock.sim_time) - 1
        return self.schedule_rates[max(i, 0)]

    def _sync(self) -> None:
        self.rates.assign((self.current_add_rate(), self.follow_tree.total,
                           self.tweet_tree.total, self.diffusion.tree.total,
                           len(self.pop) * self.unfollow_rate))

    def _refresh_type(self, t: int) -> None:
        self.follow_tree.update(t, len(self.followers_active[t]) * self.follow_rates[t])
        self.tweet_tree.update(t, len(self.pop.members[t]) * self.tweet_rates[t])

    def set_type_rates(self, t: int, follow_rate: Optional[float] = None,
                       tweet_rate: Optional[float] = None) -> None:
        """Change a type's per-agent rates mid-run (drops any pending draw)."""
        if follow_rate is not None:
            self.follow_rates[t] = follow_rate
        if tweet_rate is not None:
            self.tweet_rates[t] = tweet_rate
        self._refresh_type(t)
        self._sync()
        self.pending_time = None

    def set_add_enabled(self, enabled: bool) -> None:
        self.add_enabled = enabled
        self._sync()
        self.pending_time = None

    # -- kMC model protocol ---------------------------------------------------

    def next_breakpoint(self) -> float:
        t = self.diffusion.next_boundary()
        i = bisect_right(self.schedule_times, self.clock.sim_time)
        if i < len(self.schedule_times) and self.schedule_times[i] < t:
            t = self.schedule_times[i]
        return t

    def cross_breakpoint(self, t: float) -> None:
        d = self.diffusion
        n0 = len(d.live)
        d.cross(t)
        self.stats.pruned += n0 - len(d.live)
        self.rates.update(RETWEET, d.tree.total)
        if self.schedule_times and t in self.schedule_set:
            self._sync()

    def limit_reached(self, limits: Limits) -> bool:
        if limits.max_agents is not None and len(self.pop) >= limits.max_agents:
            return True
        if limits.max_edges is not None and self.network.edge_count >= limits.max_edges:
            return True
        return False

    def execute(self, category: int, residual: float) -> EventRecord:
        if category == ADD:
            detail = (self.add_agent(),)
            ok = True
        elif category == FOLLOW:
            detail = self.follow_event(residual)
            ok = detail is not None
        elif category == TWEET:
            detail = self.tweet_event(residual)
            ok = True
        elif category == RETWEET:
            detail = self.retweet_event(residual)
            ok = detail is not None
        else:
            detail = self.unfollow_event()
            ok = detail is not None
        stats = self.stats
        stats.events[category] += 1
        if not ok:
            stats.noops[category] += 1
        if stats.events[TWEET] + stats.events[RETWEET] >= self._next_prune:
            self._next_prune += self.prune_interval
            stats.pruned += self.diffusion.prune_live(self.diffusion.prune_epsilon,
                                                      self.clock.sim_time)
        self._sync()
        return EventRecord(self.clock.step_count, self.clock.sim_time,
                           CATEGORY_NAMES[category], ok, detail or ())

    def step(self, until: float = math.inf) -> Optional[EventRecord]:
        return kmc_step(self, until)

    def run(self, limits: Optional[Limits] = None) -> "Simulation":
        if limits is None:
            limits = Limits(max_sim_time=self.config.max_sim_time,
                            max_wall_time=self.config.max_wall_time)
        return run(self, limits)

    # -- events ---------------------------------------------------------------

    def add_agent(self) -> int:
        pop = self.pop
        t, r, lang, ideo = pop.sample_attributes(self.rng)
        aid = pop.append(t, r, lang, ideo, self.clock.sim_time)
        self.network.add_node(aid)
        self.followers_active[t].add(aid)
        self._refresh_type(t)
        return aid

    def add_edge(self, a: int, b: int) -> bool:
        if not self.network.link(a, b):
            return False
        self.diffusion.on_follow(self, a, b)
        return True

    def remove_edge(self, a: int, b: int) -> bool:
        if not self.network.unlink(a, b):
            return False
        self.diffusion.on_unfollow(self, a, b)
        return True

    def follow_back(self, a: int, b: int) -> bool:
        """After ``a -> b``: ``b`` follows back with its type's probability."""
        p = self.followback_p[self.pop.type_of[b]]
        if p <= 0.0 or self.rng.random() >= p:
            return False
        if self.add_edge(b, a):
            self.stats.followbacks += 1
            return True
        return False

    def follow_event(self, residual: float):
        t, _ = self.follow_tree.find(residual)
        follower = self.followers_active[t].pick(self.rng)
        target = self.follow_fn(self, follower)
        if target is None or not self.add_edge(follower, target):
            return None
        quota = self.quotas[t]
        if quota:
            self.pop.follows_made[follower] += 1
            if self.pop.follows_made[follower] >= quota:
                self.followers_active[t].remove(follower)
                self._refresh_type(t)
        else:
            self.pop.follows_made[follower] += 1
        back = self.follow_back(follower, target)
        return (follower, target, back)

    def tweet_event(self, residual: float):
        t, _ = self.tweet_tree.find(residual)
        members = self.pop.members[t]
        author = members[int(self.rng.random() * len(members))]
        br = self.diffusion.make_tweet(self, author)
        return (author, br.id)

    def retweet_event(self, residual: float):
        d = self.diffusion
        br, agent = d.select_rebroadcast(self, residual)
        if agent is None:
            return None
        child = d.do_rebroadcast(self, br, agent)
        if child is None:
            return None
        return (agent, br.id, child.id)

    def unfollow_event(self):
        net = self.network
        mode = self.config.follow.unfollow
        pool = net.edges if mode == "random" else net.flags
        if not len(pool):
            return None
        a, b = decode_edge(pool.pick(self.rng))
        self.remove_edge(a, b)
        return (a, b)

    # -- inspection -----------------------------------------------------------

    def tweet_broadcast(self, author: int):
        """Inject an original broadcast outside the event loop (experiments)."""
        br = self.diffusion.make_tweet(self, author)
        self._sync()
        self.pending_time = None
        return br
