"""Directed follow graph, degree bins and the follow / unfollow models.

An edge ``a -> b`` means *a follows b*; ``a`` joins ``b``'s audience.
"""
from __future__ import annotations

from array import array
from typing import Iterator, Optional

from .agents import Discrete
from .config import FOLLOW_MODELS
from .kmc import RateTree

EDGE_SHIFT = 1 << 32


def encode_edge(a: int, b: int) -> int:
    return a * EDGE_SHIFT + b


def decode_edge(e: int) -> tuple[int, int]:
    return divmod(e, EDGE_SHIFT)


class IndexedSet:
    """Set with O(1) add, remove and uniform pick (swap-with-last removal)."""

    __slots__ = ("items", "pos")

    def __init__(self, items=()):
        self.items: list = []
        self.pos: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> bool:
        if x in self.pos:
            return False
        self.pos[x] = len(self.items)
        self.items.append(x)
        return True

    def remove(self, x) -> bool:
        i = self.pos.pop(x, None)
        if i is None:
            return False
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i
        return True

    def pick(self, rng):
        items = self.items
        return items[int(rng.random() * len(items))]

    def __contains__(self, x) -> bool:
        return x in self.pos

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator:
        return iter(self.items)

    def __getstate__(self):
        return self.items

    def __setstate__(self, items):
        self.items = items
        self.pos = {x: i for i, x in enumerate(items)}


class DegreeIndex:
    """Agents binned by (type, degree).

    Bin ``(t, k)`` weighs ``k * |bin|`` in type ``t``'s degree tree, and each
    type weighs its total degree in ``type_tree``; descending both and picking a
    uniform bin member selects agent ``i`` with probability ``k_i / sum_j k_j``.
    """

    def __init__(self, n_types: int):
        self.bins: list[dict[int, IndexedSet]] = [{} for _ in range(n_types)]
        self.trees = [RateTree(16) for _ in range(n_types)]
        self.type_tree = RateTree(n_types)

    def _set_bin_weight(self, t: int, k: int) -> None:
        tree = self.trees[t]
        if k >= tree.capacity:
            tree.grow(k + 1)
        b = self.bins[t].get(k)
        tree.update(k, float(k * len(b)) if b is not None else 0.0)
        self.type_tree.update(t, tree.total)

    def insert(self, agent: int, t: int, k: int) -> None:
        b = self.bins[t].get(k)
        if b is None:
            b = self.bins[t][k] = IndexedSet()
        b.add(agent)
        if k:
            self._set_bin_weight(t, k)

    def remove(self, agent: int, t: int, k: int) -> None:
        b = self.bins[t][k]
        b.remove(agent)
        if not b:
            del self.bins[t][k]
        if k:
            self._set_bin_weight(t, k)

    def move(self, agent: int, t: int, old: int, new: int) -> None:
        self.remove(agent, t, old)
        self.insert(agent, t, new)

    def type_total(self, t: int) -> float:
        return self.trees[t].total

    def pick(self, rng, t: Optional[int] = None) -> Optional[int]:
        """Degree-proportional agent (within type ``t`` if given); ``None`` when
        all candidate degrees are zero."""
        if t is None:
            if not self.type_tree.total > 0:
                return None
            t = self.type_tree.select(1.0 - rng.random())
        tree = self.trees[t]
        if not tree.total > 0:
            return None
        k = tree.select(1.0 - rng.random())
        return self.bins[t][k].pick(rng)

    def snapshot(self) -> list[dict[int, list[int]]]:
        return [{k: sorted(b) for k, b in sorted(bins.items())} for bins in self.bins]


class Network:
    """Adjacency, audience partitions, degrees, edge and chatty-flag registries."""

    def __init__(self, population, degree_kind: str = "cumulative", indexed: bool = False):
        self.pop = population
        self.following: list[Optional[set]] = []
        # audience[b][key] = followers of b sharing attribute mask `key` with b
        self.audience: list[Optional[dict[int, IndexedSet]]] = []
        self.in_deg = array("i")
        self.out_deg = array("i")
        self.followee_rate_sum = array("d")
        self.edges = IndexedSet()
        self.flags = IndexedSet()
        self.degree_kind = degree_kind
        self.index = DegreeIndex(len(population.profiles)) if indexed else None

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degree(self, agent: int) -> int:
        kind = self.degree_kind
        if kind == "cumulative":
            return self.in_deg[agent] + self.out_deg[agent]
        if kind == "in":
            return self.in_deg[agent]
        return self.out_deg[agent]

    def add_node(self, agent: int) -> None:
        self.following.append(None)
        self.audience.append(None)
        self.in_deg.append(0)
        self.out_deg.append(0)
        self.followee_rate_sum.append(0.0)
        if self.index is not None:
            self.index.insert(agent, self.pop.type_of[agent], 0)

    def follows(self, a: int, b: int) -> bool:
        f = self.following[a]
        return f is not None and b in f

    def followers(self, b: int) -> list[int]:
        aud = self.audience[b]
        if not aud:
            return []
        return [x for key in sorted(aud) for x in aud[key]]

    def follower_count(self, b: int) -> int:
        return self.in_deg[b]

    def link(self, a: int, b: int) -> bool:
        """Insert ``a -> b``; False for self-edges and duplicates."""
        if a == b:
            return False
        f = self.following[a]
        if f is None:
            f = self.following[a] = set()
        elif b in f:
            return False
        f.add(b)
        pop = self.pop
        aud = self.audience[b]
        if aud is None:
            aud = self.audience[b] = {}
        key = pop.match_key(b, a)
        part = aud.get(key)
        if part is None:
            part = aud[key] = IndexedSet()
        part.add(a)
        idx = self.index
        if idx is not None:
            da, db = self.degree(a), self.degree(b)
        self.out_deg[a] += 1
        self.in_deg[b] += 1
        if idx is not None:
            if self.degree(a) != da:
                idx.move(a, pop.type_of[a], da, self.degree(a))
            if self.degree(b) != db:
                idx.move(b, pop.type_of[b], db, self.degree(b))
        self.edges.add(a * EDGE_SHIFT + b)
        self._flag_chatty(a, b)
        return True

    def unlink(self, a: int, b: int) -> bool:
        f = self.following[a]
        if f is None or b not in f:
            return False
        f.discard(b)
        pop = self.pop
        aud = self.audience[b]
        key = pop.match_key(b, a)
        part = aud[key]
        part.remove(a)
        if not part:
            del aud[key]
        idx = self.index
        if idx is not None:
            da, db = self.degree(a), self.degree(b)
        self.out_deg[a] -= 1
        self.in_deg[b] -= 1
        if idx is not None:
            if self.degree(a) != da:
                idx.move(a, pop.type_of[a], da, self.degree(a))
            if self.degree(b) != db:
                idx.move(b, pop.type_of[b], db, self.degree(b))
        e = a * EDGE_SHIFT + b
        self.edges.remove(e)
        self.flags.remove(e)
        if self.out_deg[a]:
            self.followee_rate_sum[a] -= pop.tweet_rate(b)
        else:
            self.followee_rate_sum[a] = 0.0
        return True

    def _flag_chatty(self, a: int, b: int) -> bool:
        """Flag ``b`` for ``a`` when b's tweet rate beats the mean rate of a's
        earlier followees. A first followee is never flagged."""
        prior = self.out_deg[a] - 1
        rate = self.pop.tweet_rate(b)
        flagged = prior > 0 and rate > self.followee_rate_sum[a] / prior
        if flagged:
            self.flags.add(a * EDGE_SHIFT + b)
        self.followee_rate_sum[a] += rate
        return flagged

    def iter_edges(self) -> Iterator[tuple[int, int]]:
        for a, f in enumerate(self.following):
            if f:
                for b in sorted(f):
                    yield a, b


# -- follow models ------------------------------------------------------------
# Each model returns an acceptable target (not the follower, not yet followed)
# or None, which the caller counts as a no-op follow event.

def _acceptable(sim, follower: int, target: Optional[int]) -> bool:
    return target is not None and target != follower and not sim.network.follows(follower, target)


def follow_random(sim, follower: int) -> Optional[int]:
    n = len(sim.pop)
    if n < 2:
        return None
    rng = sim.rng
    for _ in range(sim.config.follow.retries):
        r = int(rng.random() * (n - 1))
        if r >= follower:
            r += 1
        if not sim.network.follows(follower, r):
            return r
    return None


def _uniform_other(sim, follower: int, candidates) -> Optional[int]:
    if not candidates or (len(candidates) == 1 and candidates[0] == follower):
        return None
    return candidates[int(sim.rng.random() * len(candidates))]


def degree_proportional_agent(net: Network, rng) -> Optional[int]:
    """Agent drawn with probability proportional to its degree.

    Every edge contributes one unit of in-degree to its target and one of
    out-degree to its source, so a uniform edge endpoint is an exact
    degree-weighted draw."""
    edges = net.edges
    if not len(edges):
        return None
    a, b = divmod(edges.pick(rng), EDGE_SHIFT)
    kind = net.degree_kind
    if kind == "in":
        return b
    if kind == "out":
        return a
    return a if rng.random() < 0.5 else b


def follow_preferential(sim, follower: int) -> Optional[int]:
    net = sim.network
    for _ in range(sim.config.follow.retries):
        target = degree_proportional_agent(net, sim.rng)
        if target is None:
            return follow_random(sim, follower)
        if _acceptable(sim, follower, target):
            return target
    return None


def _pick_type(sim) -> Optional[int]:
    members = sim.pop.members
    for _ in range(sim.config.follow.retries):
        t = sim.type_target_sampler.sample(1.0 - sim.rng.random())
        if members[t]:
            return t
    return None


def follow_by_agent_type(sim, follower: int) -> Optional[int]:
    for _ in range(sim.config.follow.retries):
        t = _pick_type(sim)
        if t is None:
            return None
        target = _uniform_other(sim, follower, sim.pop.members[t])
        if _acceptable(sim, follower, target):
            return target
    return None


def follow_agent_type_preferential(sim, follower: int) -> Optional[int]:
    idx = sim.network.index
    for _ in range(sim.config.follow.retries):
        t = _pick_type(sim)
        if t is None:
            return None
        target = idx.pick(sim.rng, t)
        if target is None:
            target = _uniform_other(sim, follower, sim.pop.members[t])
        if _acceptable(sim, follower, target):
            return target
    return None


def follow_via_trending(sim, follower: int) -> Optional[int]:
    from .diffusion import compatible

    pop = sim.pop
    net = sim.network
    seen = set()
    eligible = []
    for entry in sim.diffusion.trending:
        author = entry.author
        if author == follower or author in seen or net.follows(follower, author):
            continue
        if compatible(pop.match_key(author, follower), entry.content):
            eligible.append(author)
            seen.add(author)
    if not eligible:
        return None
    return eligible[int(sim.rng.random() * len(eligible))]


FOLLOW_FUNCTIONS = {
    "random": follow_random,
    "preferential": follow_preferential,
    "agent": follow_by_agent_type,
    "agent_preferential": follow_agent_type_preferential,
    "trending": follow_via_trending,
}


def follow_combined(sim, follower: int) -> Optional[int]:
    i = sim.combined_sampler.sample(1.0 - sim.rng.random())
    name = FOLLOW_MODELS[i]
    sim.stats.model_usage[name] = sim.stats.model_usage.get(name, 0) + 1
    return FOLLOW_FUNCTIONS[name](sim, follower)


FOLLOW_FUNCTIONS["combined"] = follow_combined


def make_combined_sampler(weights) -> Discrete:
    return Discrete(weights)


def needs_degree_index(follow_cfg) -> bool:
    if follow_cfg.model == "agent_preferential":
        return True
    if follow_cfg.model == "combined":
        w = dict(zip(FOLLOW_MODELS, follow_cfg.combined_weights))
        return w["agent_preferential"] > 0
    return False
