"""Multi-seed experiments: degree-distribution validation, follow-back parity,
viral phase sweeps, the frozen-star rebroadcast oracle and the scale benchmark.

Every replica is a pure function of (parameters, seed); aggregation folds the
replica results in seed order, so concurrency never changes an aggregate.
"""
from __future__ import annotations

import csv
import io
import math
import pickle
import resource
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .analysis import (DegreeHistogram, PowerLawFit, degree_distribution, fit_power_law,
                       ks_distance, mean_pmf, parity_masses, poisson_pmf)
from .config import SimulationConfig, config_from_dict
from .io import write_outputs
from .kmc import Limits
from .simulation import Simulation


def base_config(**overrides) -> dict:
    """Single-type, single-region config dict; keyword args override top-level
    keys and ``agent`` / ``follow`` / ``diffusion`` / ``omega`` merge into the
    matching sections."""
    agent = {"name": "standard"}
    agent.update(overrides.pop("agent", {}))
    follow = {"model": "random"}
    follow.update(overrides.pop("follow", {}))
    omega = {"form": "exponential"}
    omega.update(overrides.pop("omega", {}))
    diffusion = {"omega": omega}
    diffusion.update(overrides.pop("diffusion", {}))
    d = {
        "schema_version": 1,
        "agent_types": [agent],
        "attributes": {"regions": [{"name": "default"}]},
        "follow": follow,
        "diffusion": diffusion,
        "output": {"checkpoint": False},
    }
    d.update(overrides)
    return d


# -- replica harness -----------------------------------------------------------

class ReplicaError(RuntimeError):
    def __init__(self, seed: int, cause: BaseException):
        super().__init__(f"replica with seed {seed} failed: {cause!r}")
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        # crosses process boundaries when replicas run in a pool
        return (type(self), (self.seed, self.cause))


@dataclass
class ReplicaResult:
    seeds: list[int]
    per_replica: dict[int, dict[str, dict[int, float]]]
    aggregate: dict[str, dict[int, float]]


def _map(fn: Callable, args: list[tuple], workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def _guarded(fn: Callable, seed: int, *args):
    try:
        return fn(seed, *args)
    except Exception as exc:
        raise ReplicaError(seed, exc) from exc


def map_seeds(fn: Callable, seeds: Sequence[int], *args, workers: int = 1) -> dict[int, Any]:
    """``{seed: fn(seed, *args)}`` for each distinct seed, sorted by seed."""
    order = sorted(set(seeds))
    results = _map(_guarded, [(fn, s, *args) for s in order], workers)
    return dict(zip(order, results))


def _replica_distributions(seed: int, config: SimulationConfig, limits: Limits,
                           out_dir: Optional[str]) -> dict[str, dict[int, float]]:
    sim = Simulation(config, seed=seed)
    sim.run(limits)
    if out_dir is not None:
        write_outputs(sim, Path(out_dir) / f"seed_{seed}")
    return {d: degree_distribution(sim.network, d).pmf() for d in ("in", "out", "cumulative")}


def run_replicas(config: SimulationConfig, seeds: Sequence[int], limits: Optional[Limits] = None,
                 out_dir: Optional[str] = None, workers: int = 1) -> ReplicaResult:
    """Independent runs of ``config`` per seed; aggregate = mean normalized
    in / out / cumulative degree distributions."""
    if limits is None:
        limits = Limits(max_sim_time=config.max_sim_time, max_wall_time=config.max_wall_time,
                        max_agents=config.max_agents)
    per = map_seeds(_replica_distributions, seeds, config, limits, out_dir, workers=workers)
    agg = {d: mean_pmf([per[s][d] for s in per]) for d in ("in", "out", "cumulative")}
    return ReplicaResult(list(per), per, agg)


# -- random and preferential validation ---------------------------------------

def random_graph_config(n_agents: int) -> SimulationConfig:
    """Fixed population following uniformly at random."""
    return config_from_dict(base_config(initial_agents=n_agents,
                                        agent={"follow_rate": 1.0}))


def _random_replica(seed: int, n_agents: int, mean_degree: float) -> DegreeHistogram:
    sim = Simulation(random_graph_config(n_agents), seed=seed)
    sim.run(Limits(max_edges=int(round(n_agents * mean_degree / 2))))
    return degree_distribution(sim.network, "cumulative")


@dataclass
class RandomValidation:
    mean_degree: float
    ks: dict[int, float]
    histograms: dict[int, DegreeHistogram]


def validate_random(n_agents: int = 10_000, mean_degree: float = 20.0,
                    seeds: Sequence[int] = range(5), workers: int = 1) -> RandomValidation:
    """Grow ``n * <k> / 2`` uniformly random edges among ``n`` agents and
    compare the total-degree distribution against Poisson(<k>)."""
    hists = map_seeds(_random_replica, seeds, n_agents, mean_degree, workers=workers)
    ks = {s: ks_distance(h, lambda k: poisson_pmf(mean_degree, k)) for s, h in hists.items()}
    return RandomValidation(mean_degree, ks, hists)


def growth_config(followback: float = 0.0, follow_rate: float = 0.01, quota: int = 2,
                  model: str = "preferential") -> SimulationConfig:
    """Agents arrive at rate 1; each makes ``quota`` follows at ``follow_rate``."""
    return config_from_dict(base_config(
        add_rate=1.0,
        agent={"follow_rate": follow_rate, "follow_quota": quota,
               "followback_probability": followback},
        follow={"model": model}))


def _growth_replica(seed: int, n_agents: int, followback: float) -> dict[int, float]:
    sim = Simulation(growth_config(followback), seed=seed)
    sim.run(Limits(max_agents=n_agents))
    return degree_distribution(sim.network, "cumulative").pmf()


@dataclass
class PreferentialValidation:
    aggregate: dict[int, float]
    fit: PowerLawFit
    k_min: int


def validate_preferential(n_agents: int = 50_000, seeds: Sequence[int] = range(10),
                          k_min: int = 10, workers: int = 1) -> PreferentialValidation:
    per = map_seeds(_growth_replica, seeds, n_agents, 0.0, workers=workers)
    agg = mean_pmf(list(per.values()))
    return PreferentialValidation(agg, fit_power_law(agg, k_min), k_min)


@dataclass
class FollowbackResult:
    p: float
    aggregate: dict[int, float]
    odd_mass: float
    even_mass: float
    odd_agents: int
    fit: Optional[PowerLawFit]


def _followback_replica(seed: int, n_agents: int, p: float) -> dict[int, int]:
    sim = Simulation(growth_config(p), seed=seed)
    sim.run(Limits(max_agents=n_agents))
    return degree_distribution(sim.network, "cumulative").counts


def experiment_followback(p_values: Sequence[float] = (0.0, 0.5, 1.0), n_agents: int = 10_000,
                          seeds: Sequence[int] = range(10), k_min: int = 10,
                          workers: int = 1) -> dict[float, FollowbackResult]:
    out = {}
    for p in p_values:
        per = map_seeds(_followback_replica, seeds, n_agents, p, workers=workers)
        agg = mean_pmf([{k: c / n_agents for k, c in h.items()} for h in per.values()])
        odd, even = parity_masses(agg)
        odd_agents = sum(c for h in per.values() for k, c in h.items() if k % 2)
        try:
            fit = fit_power_law(agg, k_min)
        except ValueError:
            fit = None
        out[p] = FollowbackResult(p, agg, odd, even, odd_agents, fit)
    return out


# -- frozen star oracle ---------------------------------------------------------

def star_config(n_followers: int, alpha: float, hazard: str = "conditional",
                omega: Optional[dict] = None) -> SimulationConfig:
    return config_from_dict(base_config(
        initial_agents=n_followers + 1,
        agent={"content_weights": {"musical": 1.0}},
        omega=omega or {},
        diffusion={"base_alpha": alpha, "hazard": hazard}))


def _star_replica(seed: int, n_followers: int, alpha: float, hazard: str) -> int:
    sim = Simulation(star_config(n_followers, alpha, hazard), seed=seed)
    for leaf in range(1, n_followers + 1):
        sim.add_edge(leaf, 0)
    br = sim.tweet_broadcast(0)
    sim.run(Limits())
    cascade = sim.diffusion.cascades.get(br.origin)
    if cascade is None:
        return 0
    return sum(1 for e in cascade.edges if e[2] == 1)


@dataclass
class StarResult:
    alpha: float
    n_followers: int
    counts: list[int]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.counts)

    @property
    def expected(self) -> float:
        return self.alpha * self.n_followers

    @property
    def relative_error(self) -> float:
        return abs(self.mean - self.expected) / self.expected


def experiment_star(alphas: Sequence[float] = (0.1, 0.5, 1.0), n_followers: int = 1000,
                    seeds: Sequence[int] = range(100), hazard: str = "conditional",
                    workers: int = 1) -> dict[float, StarResult]:
    """First-generation rebroadcasts of one tweet by a hub whose followers
    have no followers themselves; the expectation is alpha * N."""
    out = {}
    for a in alphas:
        per = map_seeds(_star_replica, seeds, n_followers, a, hazard, workers=workers)
        out[a] = StarResult(a, n_followers, [per[s] for s in sorted(per)])
    return out


# -- viral phase sweep -----------------------------------------------------------

OMEGA_KINDS = {
    "exp": {"form": "exponential", "spacing": "log", "bins": 20},
    "reciprocal": {"form": "reciprocal", "spacing": "log", "bins": 20},
}


def omega_from_kind(kind: str) -> dict:
    """``exp``, ``reciprocal`` or ``table:PATH`` (whitespace-separated densities
    on a linear grid over [1, 600])."""
    if kind in OMEGA_KINDS:
        return dict(OMEGA_KINDS[kind])
    if kind.startswith("table:"):
        values = [float(x) for x in Path(kind[6:]).read_text().split()]
        return {"form": "table", "table": values}
    raise ValueError(f"unknown omega kind {kind!r}; expected exp, reciprocal or table:PATH")


@dataclass
class ViralParams:
    n_agents: int = 1000
    # per-agent follow rate (1/min) while the graph grows
    follow_rate: float = 0.01
    # expected number of original tweets by the time the largest follow total is reached
    tweets: float = 3.0
    # sim-minutes of cascade run-out after growth stops
    drain: float = 600.0


def viral_config(alpha: float, max_follows: int, omega: dict,
                 params: ViralParams) -> SimulationConfig:
    grow_time = max_follows / (params.n_agents * params.follow_rate)
    tweet_rate = params.tweets / (params.n_agents * grow_time)
    return config_from_dict(base_config(
        initial_agents=params.n_agents,
        agent={"follow_rate": params.follow_rate, "tweet_rate": tweet_rate,
               "content_weights": {"musical": 1.0}},
        omega=omega,
        diffusion={"base_alpha": alpha}))


def _drained_count(sim: Simulation, drain: float) -> int:
    # freeze the graph and let live cascades run out
    sim.set_type_rates(0, follow_rate=0.0, tweet_rate=0.0)
    sim.run(Limits(max_sim_time=sim.clock.sim_time + drain))
    return sim.diffusion.rebroadcast_count


def _viral_replica(seed: int, alpha: float, follow_totals: Sequence[int], omega: dict,
                   params: ViralParams) -> list[int]:
    """Rebroadcast count for each follow total, in ascending order of totals.

    Rates do not depend on the target, so a run to a smaller total is an exact
    prefix of a run to a larger one: grow once, and at each intermediate total
    drain a copy of the state."""
    totals = sorted(follow_totals)
    sim = Simulation(viral_config(alpha, totals[-1], omega, params), seed=seed)
    counts = []
    for i, f in enumerate(totals):
        sim.run(Limits(max_edges=f))
        branch = sim if i == len(totals) - 1 else pickle.loads(pickle.dumps(sim, -1))
        counts.append(_drained_count(branch, params.drain))
    return counts


@dataclass
class SweepResult:
    alphas: list[float]
    follows: list[int]
    omega: str
    replicas: int
    values: dict[tuple[float, int], list[int]] = field(default_factory=dict)

    def mean(self, alpha: float, follows: int) -> float:
        return statistics.fmean(self.values[(alpha, follows)])

    def stddev(self, alpha: float, follows: int) -> float:
        v = self.values[(alpha, follows)]
        return statistics.stdev(v) if len(v) > 1 else 0.0

    def grid(self) -> np.ndarray:
        """Mean rebroadcasts, rows = alpha, columns = follows."""
        return np.array([[self.mean(a, f) for f in self.follows] for a in self.alphas])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "follows", "mean_rebroadcasts", "stddev", "replicas"])
        for a in self.alphas:
            for f in self.follows:
                w.writerow([repr(a), f, repr(self.mean(a, f)), repr(self.stddev(a, f)),
                            len(self.values[(a, f)])])
        return buf.getvalue()


def alpha_grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        raise ValueError("need step > 0 and alpha-max >= alpha-min")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(n)]


def experiment_viral(alpha_grid: Sequence[float], follow_totals: Sequence[int],
                     omega_kind: str = "exp", seeds: Sequence[int] = range(10),
                     params: Optional[ViralParams] = None, workers: int = 1) -> SweepResult:
    """Mean rebroadcasts per (alpha, total follows) cell on dynamic random
    graphs; each cell uses the same seeds."""
    params = params or ViralParams()
    omega = omega_from_kind(omega_kind)
    seeds = sorted(set(seeds))
    res = SweepResult(list(alpha_grid), list(follow_totals), omega_kind, len(seeds))
    totals = sorted(res.follows)
    for a in res.alphas:
        per = map_seeds(_viral_replica, seeds, a, totals, omega, params, workers=workers)
        for j, f in enumerate(totals):
            res.values[(a, f)] = [per[s][j] for s in seeds]
    return res


# -- scale benchmark ------------------------------------------------------------

@dataclass
class BenchResult:
    agents: int
    edges: int
    events: int
    wall_seconds: float
    peak_rss_mb: float


def bench(n_agents: int = 1_000_000, follows_per_agent: float = 1.0, seed: int = 0) -> BenchResult:
    """Grow a random-model network to ``n_agents`` (arrivals at rate 1, per-agent
    follow rate chosen so about ``follows_per_agent * n`` follows happen)."""
    f = 2.0 * follows_per_agent / n_agents
    cfg = config_from_dict(base_config(add_rate=1.0, agent={"follow_rate": f},
                                       output={"checkpoint": False}))
    t0 = time.monotonic()
    sim = Simulation(cfg, seed=seed)
    sim.run(Limits(max_agents=n_agents))
    wall = time.monotonic() - t0
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    return BenchResult(len(sim.pop), sim.network.edge_count, sim.clock.step_count, wall, rss)
