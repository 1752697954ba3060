"""Kinetic Monte Carlo core: rate sum-tree, waiting times and the event loop.

The loop works on any *model* object exposing

* ``rng``            a ``random.Random`` stream,
* ``clock``          a :class:`SimClock`,
* ``rates``          a top-level :class:`RateTree` with one leaf per event category,
* ``pending_time``   absolute time of the already drawn next event (or ``None``),
* ``execute(category, residual)`` carrying out one event of that category,
* ``next_breakpoint()`` / ``cross_breakpoint(t)`` for scheduled rate changes,
* ``limit_reached(limits)`` for model-specific stop conditions.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence


class NoSelectableEvent(RuntimeError):
    """Raised when the total rate is zero and no rate change is scheduled."""


class RateTree:
    """Complete implicit binary sum-tree over nonnegative leaf rates.

    Leaves live at ``[capacity, 2 * capacity)`` of a flat list; node ``i`` holds
    the sum of nodes ``2i`` and ``2i + 1``. Capacity is padded to a power of two
    with zero-rate leaves.
    """

    __slots__ = ("_cap", "_t")

    def __init__(self, capacity: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        cap = 1
        while cap < capacity:
            cap <<= 1
        self._cap = cap
        self._t = [0.0] * (2 * cap)

    @classmethod
    def from_rates(cls, rates: Sequence[float]) -> "RateTree":
        if len(rates) == 0:
            raise ValueError("rate array must be nonempty")
        for i, r in enumerate(rates):
            if not r >= 0.0:
                raise ValueError(f"negative or invalid rate {r!r} at index {i}")
        tree = cls(len(rates))
        t = tree._t
        cap = tree._cap
        t[cap:cap + len(rates)] = [float(r) for r in rates]
        for i in range(cap - 1, 0, -1):
            t[i] = t[2 * i] + t[2 * i + 1]
        return tree

    @property
    def capacity(self) -> int:
        return self._cap

    @property
    def total(self) -> float:
        return self._t[1]

    def __len__(self) -> int:
        return self._cap

    def __getitem__(self, leaf: int) -> float:
        if not 0 <= leaf < self._cap:
            raise IndexError(f"leaf {leaf} out of range [0, {self._cap})")
        return self._t[self._cap + leaf]

    def rates(self) -> list[float]:
        return self._t[self._cap:]

    def update(self, leaf: int, value: float) -> None:
        """Set one leaf and recompute exactly the ancestor path."""
        cap = self._cap
        if not 0 <= leaf < cap:
            raise IndexError(f"leaf {leaf} out of range [0, {cap})")
        if not value >= 0.0:
            raise ValueError(f"rate must be nonnegative, got {value!r}")
        t = self._t
        i = cap + leaf
        t[i] = value
        i >>= 1
        while i:
            t[i] = t[2 * i] + t[2 * i + 1]
            i >>= 1

    def assign(self, values: Sequence[float]) -> None:
        """Set leaves ``0..len(values)-1``, touching only those that changed."""
        t = self._t
        cap = self._cap
        for leaf, v in enumerate(values):
            if t[cap + leaf] != v:
                self.update(leaf, v)

    def grow(self, min_capacity: int) -> None:
        """Enlarge capacity (power of two) keeping all leaf values."""
        if min_capacity <= self._cap:
            return
        old = self.rates()
        cap = self._cap
        while cap < min_capacity:
            cap <<= 1
        t = [0.0] * (2 * cap)
        t[cap:cap + len(old)] = old
        for i in range(cap - 1, 0, -1):
            t[i] = t[2 * i] + t[2 * i + 1]
        self._cap = cap
        self._t = t

    def find(self, target: float) -> tuple[int, float]:
        """Return ``(leaf, residual)`` for the first leaf whose inclusive prefix
        sum reaches ``target``; ``residual`` is the part of ``target`` falling
        inside that leaf. Zero-rate leaves are never returned."""
        t = self._t
        if not t[1] > 0.0:
            raise NoSelectableEvent("total rate is zero")
        if target > t[1]:
            target = t[1]
        cap = self._cap
        i = 1
        while i < cap:
            j = i << 1
            left = t[j]
            if target <= left and left > 0.0:
                i = j
            elif t[j + 1] > 0.0:
                target -= left
                i = j + 1
            else:
                i = j
        return i - cap, target

    def select(self, u: float) -> int:
        """Weighted selection with ``u`` in (0, 1]."""
        return self.find(u * self._t[1])[0]


def build_rate_tree(rates: Sequence[float]) -> RateTree:
    return RateTree.from_rates(rates)


def update_rate(tree: RateTree, leaf: int, value: float) -> None:
    tree.update(leaf, value)


def select_leaf(tree: RateTree, u: float) -> int:
    return tree.select(u)


def time_step(R: float, u2: float) -> float:
    """Exponential waiting time ``-ln(u2) / R``."""
    if not R > 0.0:
        raise ValueError(f"total rate must be positive, got {R!r}")
    if not 0.0 < u2 <= 1.0:
        raise ValueError(f"u2 must lie in (0, 1], got {u2!r}")
    return -math.log(u2) / R if u2 < 1.0 else 0.0


@dataclass
class SimClock:
    sim_time: float = 0.0
    step_count: int = 0


@dataclass
class Limits:
    """Stop conditions; the first one reached ends :func:`run`."""

    max_sim_time: float = math.inf
    max_wall_time: float = math.inf
    max_events: Optional[int] = None
    max_agents: Optional[int] = None
    max_edges: Optional[int] = None


class EventRecord(NamedTuple):
    step: int
    time: float
    kind: str
    ok: bool
    detail: tuple = ()


def kmc_step(model, until: float = math.inf) -> Optional[EventRecord]:
    """Advance the clock to the next event and carry it out.

    Scheduled breakpoints (rate changes) met on the way are crossed first.
    Returns ``None`` when ``until`` comes before the next event; raises
    :class:`NoSelectableEvent` when nothing can ever happen again.
    """
    clock = model.clock
    rates = model.rates
    while True:
        R = rates.total
        if model.pending_time is None:
            if R > 0.0:
                model.pending_time = clock.sim_time + time_step(R, 1.0 - model.rng.random())
            else:
                model.pending_time = math.inf
        t_event = model.pending_time
        t_break = model.next_breakpoint()
        if t_break < t_event and t_break <= until:
            clock.sim_time = t_break
            model.cross_breakpoint(t_break)
            R_new = rates.total
            if t_event == math.inf or R_new <= 0.0:
                model.pending_time = None
            elif R_new != R:
                model.pending_time = t_break + (t_event - t_break) * (R / R_new)
            continue
        if until < t_event:
            if t_event == math.inf and t_break == math.inf:
                raise NoSelectableEvent("total rate is zero and no rate change is scheduled")
            clock.sim_time = max(clock.sim_time, until)
            return None
        clock.sim_time = t_event
        model.pending_time = None
        category, residual = rates.find((1.0 - model.rng.random()) * R)
        record = model.execute(category, residual)
        clock.step_count += 1
        return record


def run(model, limits: Limits):
    """Step ``model`` until a limit triggers or no event remains possible."""
    clock = model.clock
    started = time.monotonic()
    n = 0
    while True:
        if clock.sim_time >= limits.max_sim_time:
            break
        if limits.max_events is not None and clock.step_count >= limits.max_events:
            break
        if model.limit_reached(limits):
            break
        try:
            record = kmc_step(model, limits.max_sim_time)
        except NoSelectableEvent:
            break
        if record is None:
            break
        n += 1
        if not n & 1023 and time.monotonic() - started > limits.max_wall_time:
            break
    return model
