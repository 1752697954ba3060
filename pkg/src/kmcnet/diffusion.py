"""Broadcasts, rebroadcast rates and cascades.

A live broadcast's rate is the sum over its author's audience partitions of
``eligible members * per-member hazard``. The hazard follows the tabulated delay
density Omega and the partition's transmission probability alpha; it is held
constant inside each Omega bin and refreshed when a broadcast's age crosses a
bin edge.

Two hazard forms are available:

``literal``      hazard = alpha * Omega(age)
``conditional``  hazard = alpha * Omega(age) / (1 - alpha * F(age)), F the CDF of
                 Omega; each viewer then rebroadcasts with total probability
                 exactly ``alpha * F(age)``, so a frozen audience of N yields
                 ``alpha * N * integral(Omega)`` rebroadcasts on average.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .config import CONTENT_CLASSES, OmegaSpec
from .kmc import RateTree

POLITICAL, HUMOROUS, MUSICAL = 0, 1, 2
ALL_MATCH = 0b111
LANGUAGE_MATCH = 0b001

# per-viewer survival floor; caps the conditional hazard when alpha * F -> 1
SURVIVAL_FLOOR = 1e-12


def compatible(match_key: int, content: int) -> bool:
    """Transmission gate between two agents for one content class."""
    if content == POLITICAL:
        return match_key == ALL_MATCH
    if content == HUMOROUS:
        return bool(match_key & LANGUAGE_MATCH)
    return True


def transmission_alpha(pop, author: int, viewer: int, content: int, base_alpha: float) -> float:
    return base_alpha if compatible(pop.match_key(author, viewer), content) else 0.0


# -- Omega --------------------------------------------------------------------

@dataclass(frozen=True)
class OmegaTable:
    """Piecewise-constant delay density on ``edges[0] .. edges[-1]``."""

    edges: tuple[float, ...]
    density: tuple[float, ...]
    normalization: float

    @property
    def t_min(self) -> float:
        return self.edges[0]

    @property
    def t_max(self) -> float:
        return self.edges[-1]

    @property
    def bins(self) -> int:
        return len(self.density)

    def widths(self) -> list[float]:
        e = self.edges
        return [e[i + 1] - e[i] for i in range(len(self.density))]

    def bin_masses(self) -> list[float]:
        return [d * w for d, w in zip(self.density, self.widths())]

    def cdf_edges(self) -> list[float]:
        out = [0.0]
        for m in self.bin_masses():
            out.append(out[-1] + m)
        return out

    def integral(self, horizon: float) -> float:
        """Mass of Omega on ``[t_min, horizon]``."""
        total = 0.0
        e = self.edges
        for i, d in enumerate(self.density):
            lo, hi = e[i], e[i + 1]
            if horizon <= lo:
                break
            total += d * (min(hi, horizon) - lo)
        return total

    def value(self, age: float) -> float:
        from bisect import bisect_right

        if age < self.t_min or age >= self.t_max:
            return 0.0
        return self.density[bisect_right(self.edges, age) - 1]


def _grid(spec: OmegaSpec) -> list[float]:
    n = spec.bins
    lo, hi = spec.t_min, spec.t_max
    if spec.spacing == "log":
        r = math.log(hi / lo)
        e = [lo * math.exp(r * i / n) for i in range(n + 1)]
    else:
        e = [lo + (hi - lo) * i / n for i in range(n + 1)]
    e[0], e[-1] = lo, hi
    return e


def build_omega(spec: OmegaSpec) -> OmegaTable:
    """Tabulate and normalize a delay density. Analytic forms use exact bin
    averages so the table integrates the continuous density bin by bin."""
    edges = _grid(spec)
    if spec.form == "exponential":
        masses = [math.exp(-edges[i]) - math.exp(-edges[i + 1]) for i in range(spec.bins)]
    elif spec.form == "reciprocal":
        if spec.t_min <= 0:
            raise ValueError("reciprocal density needs t_min > 0")
        masses = [math.log(edges[i + 1] / edges[i]) for i in range(spec.bins)]
    elif spec.form == "table":
        raw = spec.table
        if raw is None or len(raw) != spec.bins:
            raise ValueError("table density must supply one value per bin")
        for i, v in enumerate(raw):
            if not v >= 0:
                raise ValueError(f"negative density {v!r} in bin {i}")
        masses = [v * (edges[i + 1] - edges[i]) for i, v in enumerate(raw)]
    else:
        raise ValueError(f"unknown density form {spec.form!r}")
    total = math.fsum(masses)
    if not total > 0 or math.isinf(total):
        raise ValueError("density is not normalizable")
    density = tuple(m / total / (edges[i + 1] - edges[i]) for i, m in enumerate(masses))
    return OmegaTable(tuple(edges), density, 1.0 / total)


def hazard_table(omega: OmegaTable, alpha: float, mode: str) -> list[float]:
    """Per-viewer rebroadcast hazard in each Omega bin."""
    if alpha <= 0:
        return [0.0] * omega.bins
    if mode == "literal":
        return [alpha * d for d in omega.density]
    cdf = omega.cdf_edges()
    out = []
    for j, w in enumerate(omega.widths()):
        s0 = max(1.0 - alpha * min(cdf[j], 1.0), SURVIVAL_FLOOR)
        s1 = max(1.0 - alpha * min(cdf[j + 1], 1.0), SURVIVAL_FLOOR * s0)
        out.append(math.log(s0 / s1) / w if w > 0 else 0.0)
    return out


def expected_rebroadcasts(alpha: float, n_subscribers: int, omega: OmegaTable,
                          horizon: Optional[float] = None) -> float:
    if horizon is None:
        horizon = omega.t_max
    if horizon > omega.t_max:
        raise ValueError("horizon beyond the density support")
    return alpha * n_subscribers * omega.integral(horizon)


# -- trending -----------------------------------------------------------------

class TrendingEntry(NamedTuple):
    broadcast: int
    author: int
    content: int


class TrendingBuffer:
    """Fixed-capacity FIFO of recent hashtagged broadcasts."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: deque = deque(maxlen=capacity)

    def push(self, entry: TrendingEntry) -> None:
        self.entries.append(entry)

    def sample(self, u: float) -> Optional[TrendingEntry]:
        if not self.entries:
            return None
        n = len(self.entries)
        return self.entries[min(int(u * n), n - 1)]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def trending_push(buffer: TrendingBuffer, entry: TrendingEntry) -> None:
    buffer.push(entry)


def trending_sample(buffer: TrendingBuffer, u: float) -> Optional[TrendingEntry]:
    return buffer.sample(u)


# -- broadcasts and cascades --------------------------------------------------

class Broadcast:
    __slots__ = ("id", "author", "origin", "content", "hashtagged", "created_at", "depth",
                 "slot", "bin", "elig", "rate", "audience_size")

    def __init__(self, bid, author, origin, content, hashtagged, created_at, depth):
        self.id = bid
        self.author = author
        self.origin = origin
        self.content = content
        self.hashtagged = hashtagged
        self.created_at = created_at
        self.depth = depth
        self.slot = -1
        self.bin = -1
        self.elig: dict[int, int] = {}
        self.rate = 0.0
        self.audience_size = 0


class Cascade:
    """Provenance of one original broadcast and all its rebroadcasts."""

    __slots__ = ("origin", "author", "content", "created_at", "rebroadcasters", "live",
                 "edges", "count", "audience")

    def __init__(self, origin, author, content, created_at):
        self.origin = origin
        self.author = author
        self.content = content
        self.created_at = created_at
        # everyone who has broadcast this content, author included
        self.rebroadcasters = {author}
        # author -> live broadcast id, for every live broadcast of this cascade
        self.live: dict[int, int] = {}
        # (parent agent, child agent, depth, child audience size at rebroadcast)
        self.edges: list[tuple[int, int, int, int]] = []
        self.count = 0
        self.audience = 0


class Diffusion:
    """Live broadcasts, their rate tree, scheduled Omega-bin crossings,
    cascade provenance and the trending buffer."""

    def __init__(self, config, omega: Optional[OmegaTable] = None):
        dc = config.diffusion
        self.omega = omega if omega is not None else build_omega(dc.omega)
        self.mode = dc.hazard
        self.prune_epsilon = dc.prune_epsilon
        self.base_alpha = dc.base_alpha
        # alpha[content][match_key]
        self.alpha = [[dc.base_alpha[c] if compatible(k, c) else 0.0 for k in range(8)]
                      for c in range(len(CONTENT_CLASSES))]
        cache: dict[float, list[float]] = {}
        self.hazard = []
        for c in range(len(CONTENT_CLASSES)):
            row = []
            for k in range(8):
                a = self.alpha[c][k]
                if a > 0 and a not in cache:
                    cache[a] = hazard_table(self.omega, a, self.mode)
                row.append(cache[a] if a > 0 else None)
            self.hazard.append(row)
        self.edges = self.omega.edges
        self.nbins = self.omega.bins
        self.tree = RateTree(64)
        self.free_slots: list[int] = []
        self.next_slot = 0
        self.slot_owner: dict[int, int] = {}
        self.live: dict[int, Broadcast] = {}
        self.by_author: dict[int, dict[int, None]] = {}
        self.cascades: dict[int, Cascade] = {}
        self.top: Optional[Cascade] = None
        self.trending = TrendingBuffer(dc.trending_capacity)
        self.heap: list[tuple[float, int]] = []
        self.next_id = 0
        self.broadcast_count = 0
        self.rebroadcast_count = 0

    # -- rates ----------------------------------------------------------------

    @property
    def total(self) -> float:
        return self.tree.total

    def _rate_in_bin(self, br: Broadcast, j: int) -> float:
        if j < 0 or j >= self.nbins:
            return 0.0
        hz = self.hazard[br.content]
        elig = br.elig
        if len(elig) == 1:
            for k, n in elig.items():
                return n * hz[k][j]
        return math.fsum([n * hz[k][j] for k, n in elig.items() if n])

    def _refresh(self, br: Broadcast) -> None:
        br.rate = self._rate_in_bin(br, br.bin)
        self.tree.update(br.slot, br.rate)

    def bin_at(self, br: Broadcast, t_now: float) -> int:
        """Bin index of ``br`` at ``t_now``; -1 before support, ``bins`` after.
        Uses the same ``created_at + edge`` sums as the crossing schedule."""
        t0 = br.created_at
        lo, hi = 0, len(self.edges)
        while lo < hi:
            mid = (lo + hi) // 2
            if t0 + self.edges[mid] <= t_now:
                lo = mid + 1
            else:
                hi = mid
        return lo - 1

    def broadcast_rate(self, br: Broadcast, t_now: float) -> float:
        return self._rate_in_bin(br, self.bin_at(br, t_now))

    def linear_scan_total(self, t_now: float) -> float:
        return math.fsum(self.broadcast_rate(br, t_now) for br in self.live.values())

    # -- lifecycle ------------------------------------------------------------

    def _alloc_slot(self, bid: int) -> int:
        if self.free_slots:
            slot = self.free_slots.pop()
        else:
            slot = self.next_slot
            self.next_slot += 1
            if slot >= self.tree.capacity:
                self.tree.grow(slot + 1)
        self.slot_owner[slot] = bid
        return slot

    def _spawn(self, sim, author: int, cascade: Cascade, content: int, hashtagged: bool,
               depth: int, now: float) -> Broadcast:
        bid = self.next_id
        self.next_id += 1
        origin = cascade.origin if cascade is not None else bid
        br = Broadcast(bid, author, origin, content, hashtagged, now, depth)
        if cascade is None:
            cascade = self.cascades[bid] = Cascade(bid, author, content, now)
        net = sim.network
        aud = net.audience[author]
        rb = cascade.rebroadcasters
        alpha = self.alpha[content]
        if aud:
            for key in sorted(aud):
                if alpha[key] <= 0:
                    continue
                members = aud[key]
                if len(rb) < len(members):
                    n = len(members) - sum(1 for x in rb if x in members)
                else:
                    n = sum(1 for x in members if x not in rb)
                br.elig[key] = n
        br.audience_size = net.in_deg[author]
        if depth == 0:
            cascade.audience = br.audience_size
        br.slot = self._alloc_slot(bid)
        if self.edges[0] <= 0.0:
            br.bin = 0
            heapq.heappush(self.heap, (now + self.edges[1], bid))
        else:
            heapq.heappush(self.heap, (now + self.edges[0], bid))
        self.live[bid] = br
        self.by_author.setdefault(author, {})[bid] = None
        cascade.live[author] = bid
        self._refresh(br)
        return br

    def _remove(self, br: Broadcast) -> None:
        del self.live[br.id]
        self.tree.update(br.slot, 0.0)
        del self.slot_owner[br.slot]
        self.free_slots.append(br.slot)
        mine = self.by_author[br.author]
        del mine[br.id]
        if not mine:
            del self.by_author[br.author]
        cascade = self.cascades[br.origin]
        del cascade.live[br.author]
        if not cascade.live and cascade is not self.top:
            del self.cascades[br.origin]

    def make_tweet(self, sim, author: int) -> Broadcast:
        pop = sim.pop
        rng = sim.rng
        t = pop.type_of[author]
        content = pop.content_samplers[t].sample(1.0 - rng.random())
        hashtagged = rng.random() < pop.profiles[t].hashtag_probability
        now = sim.clock.sim_time
        br = self._spawn(sim, author, None, content, hashtagged, 0, now)
        pop.tweets[author] += 1
        self.broadcast_count += 1
        if hashtagged:
            self.trending.push(TrendingEntry(br.id, author, content))
        return br

    def select_rebroadcast(self, sim, target: float) -> tuple[Broadcast, Optional[int]]:
        """Broadcast by tree weight, partition by rate share, viewer uniform among
        the partition's eligible members. The viewer is None when the partition
        turns out to be exhausted."""
        slot, _ = self.tree.find(target)
        br = self.live[self.slot_owner[slot]]
        hz = self.hazard[br.content]
        keys = [k for k in sorted(br.elig) if br.elig[k] > 0 and hz[k][br.bin] > 0]
        rng = sim.rng
        if not keys:
            return br, None
        if len(keys) == 1:
            key = keys[0]
        else:
            weights = [br.elig[k] * hz[k][br.bin] for k in keys]
            x = (1.0 - rng.random()) * math.fsum(weights)
            key = keys[-1]
            acc = 0.0
            for k, w in zip(keys, weights):
                acc += w
                if x <= acc:
                    key = k
                    break
        members = sim.network.audience[br.author].get(key)
        rb = self.cascades[br.origin].rebroadcasters
        if not members:
            return br, None
        for _ in range(32):
            x = members.pick(rng)
            if x not in rb:
                return br, x
        pool = [x for x in members if x not in rb]
        if not pool:
            return br, None
        return br, pool[int(rng.random() * len(pool))]

    def do_rebroadcast(self, sim, br: Broadcast, agent: int) -> Optional[Broadcast]:
        cascade = self.cascades[br.origin]
        rb = cascade.rebroadcasters
        if agent in rb:
            return None
        rb.add(agent)
        now = sim.clock.sim_time
        pop = sim.pop
        pop.retweets[agent] += 1
        self.rebroadcast_count += 1
        cascade.count += 1
        # agent leaves the eligible pool of every live broadcast of this cascade
        # whose author it follows
        following = sim.network.following[agent]
        if following:
            fam = cascade.live
            if len(fam) <= len(following):
                authors = [a for a in fam if a in following]
            else:
                authors = [a for a in following if a in fam]
            alpha = self.alpha[cascade.content]
            for a in sorted(authors):
                other = self.live[fam[a]]
                key = pop.match_key(a, agent)
                if alpha[key] > 0:
                    other.elig[key] -= 1
                    self._refresh(other)
        child = self._spawn(sim, agent, cascade, cascade.content, br.hashtagged,
                            br.depth + 1, now)
        cascade.edges.append((br.author, agent, child.depth, child.audience_size))
        top = self.top
        if top is None or cascade.count > top.count:
            if top is not None and top is not cascade and not top.live:
                del self.cascades[top.origin]
            self.top = cascade
        return child

    # -- graph hooks ----------------------------------------------------------

    def on_follow(self, sim, a: int, b: int) -> None:
        """``a`` joined ``b``'s audience."""
        mine = self.by_author.get(b)
        if not mine:
            return
        key = sim.pop.match_key(b, a)
        for bid in mine:
            br = self.live[bid]
            if self.alpha[br.content][key] > 0 and a not in self.cascades[br.origin].rebroadcasters:
                br.elig[key] = br.elig.get(key, 0) + 1
                self._refresh(br)

    def on_unfollow(self, sim, a: int, b: int) -> None:
        mine = self.by_author.get(b)
        if not mine:
            return
        key = sim.pop.match_key(b, a)
        for bid in mine:
            br = self.live[bid]
            if self.alpha[br.content][key] > 0 and a not in self.cascades[br.origin].rebroadcasters:
                br.elig[key] -= 1
                self._refresh(br)

    # -- scheduled bin crossings and cleanup ----------------------------------

    def next_boundary(self) -> float:
        heap = self.heap
        while heap:
            t, bid = heap[0]
            if bid in self.live:
                return t
            heapq.heappop(heap)
        return math.inf

    def cross(self, t: float) -> None:
        """Advance every broadcast whose next bin edge lies at ``t``."""
        heap = self.heap
        edges = self.edges
        nb = len(edges) - 1
        eps = self.prune_epsilon
        while heap and heap[0][0] <= t:
            _, bid = heapq.heappop(heap)
            br = self.live.get(bid)
            if br is None:
                continue
            br.bin += 1
            if br.bin >= nb:
                self._remove(br)
                continue
            self._refresh(br)
            if br.rate < eps:
                self._remove(br)
                continue
            heapq.heappush(heap, (br.created_at + edges[br.bin + 1], bid))

    def prune_live(self, epsilon_rate: float, t_now: float) -> int:
        """Drop broadcasts past the Omega support, or inside it with a rate
        below ``epsilon_rate``."""
        doomed = []
        for br in self.live.values():
            j = self.bin_at(br, t_now)
            if j >= self.omega.bins or (j >= 0 and br.rate < epsilon_rate):
                doomed.append(br)
        for br in doomed:
            self._remove(br)
        return len(doomed)

    def most_rebroadcasted(self) -> Optional[Cascade]:
        return self.top
