"""Agent attributes, type profiles and the population store.

Agents are dense integer ids in creation order; per-agent attributes live in
parallel compact arrays rather than per-agent objects so that populations of
10^6 agents fit comfortably in memory.
"""
from __future__ import annotations

from array import array
from bisect import bisect_left
from itertools import accumulate
from typing import Sequence

from .config import SimulationConfig


def sample_discrete(weights: Sequence[float], u: float) -> int:
    """Index ``i`` of the first cumulative weight reaching ``u * sum(weights)``."""
    if len(weights) == 0:
        raise ValueError("weights must be nonempty")
    cum = list(accumulate(weights))
    if not cum[-1] > 0:
        raise ValueError("weights must have a positive sum")
    return min(bisect_left(cum, u * cum[-1]), len(cum) - 1)


class Discrete:
    """Reusable weighted sampler over a fixed weight vector."""

    __slots__ = ("cum", "n")

    def __init__(self, weights: Sequence[float]):
        if len(weights) == 0:
            raise ValueError("weights must be nonempty")
        if any(not w >= 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        total = sum(weights)
        if not total > 0:
            raise ValueError("weights must have a positive sum")
        self.cum = [c / total for c in accumulate(weights)]
        self.cum[-1] = 1.0
        self.n = len(weights)

    def sample(self, u: float) -> int:
        if self.n == 1:
            return 0
        return min(bisect_left(self.cum, u), self.n - 1)


class Population:
    """Attribute arrays and per-type membership for every agent."""

    def __init__(self, config: SimulationConfig):
        self.profiles = config.agent_types
        attrs = config.attributes
        self.attributes = attrs
        self.type_of = array("i")
        self.region = array("i")
        self.language = array("i")
        self.ideology = array("i")
        self.created_at = array("d")
        self.tweets = array("i")
        self.retweets = array("i")
        self.follows_made = array("i")
        self.members: list[list[int]] = [[] for _ in self.profiles]

        self._type_sampler = Discrete([t.add_weight for t in self.profiles])
        self._region_sampler = Discrete([r.add_weight for r in attrs.regions])
        self._language_samplers = [Discrete(r.language_weights) for r in attrs.regions]
        self._ideology_samplers = [Discrete(r.ideology_weights) for r in attrs.regions]
        self.content_samplers = [Discrete(t.content_weights) for t in self.profiles]
        self.tweet_rate_of_type = [t.tweet_rate for t in self.profiles]

    def __len__(self) -> int:
        return len(self.type_of)

    def sample_attributes(self, rng) -> tuple[int, int, int, int]:
        """Type and region from add weights; language and ideology from that
        region's conditional weights."""
        t = self._type_sampler.sample(1.0 - rng.random())
        r = self._region_sampler.sample(1.0 - rng.random())
        lang = self._language_samplers[r].sample(1.0 - rng.random())
        ideo = self._ideology_samplers[r].sample(1.0 - rng.random())
        return t, r, lang, ideo

    def append(self, type_index: int, region: int, language: int, ideology: int,
               now: float) -> int:
        aid = len(self.type_of)
        self.type_of.append(type_index)
        self.region.append(region)
        self.language.append(language)
        self.ideology.append(ideology)
        self.created_at.append(now)
        self.tweets.append(0)
        self.retweets.append(0)
        self.follows_made.append(0)
        self.members[type_index].append(aid)
        return aid

    def tweet_rate(self, agent: int) -> float:
        return self.tweet_rate_of_type[self.type_of[agent]]

    def match_key(self, author: int, viewer: int) -> int:
        """Bit mask of shared attributes: 1 language, 2 region, 4 ideology."""
        return ((self.language[author] == self.language[viewer])
                | (self.region[author] == self.region[viewer]) << 1
                | (self.ideology[author] == self.ideology[viewer]) << 2)
