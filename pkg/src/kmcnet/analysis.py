"""Degree statistics and reference distributions for validating grown graphs."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


@dataclass
class DegreeHistogram:
    direction: str
    counts: dict[int, int]
    n_agents: int

    def pmf(self) -> dict[int, float]:
        n = self.n_agents
        return {k: c / n for k, c in sorted(self.counts.items())}


def degree_distribution(network, direction: str = "cumulative") -> DegreeHistogram:
    n = len(network.in_deg)
    if n == 0:
        return DegreeHistogram(direction, {0: 0}, 0)
    if direction == "in":
        degs = network.in_deg
    elif direction == "out":
        degs = network.out_deg
    elif direction == "cumulative":
        degs = [a + b for a, b in zip(network.in_deg, network.out_deg)]
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return DegreeHistogram(direction, dict(sorted(Counter(degs).items())), n)


def count_distribution(values) -> DegreeHistogram:
    """Histogram of arbitrary per-agent counts (tweets, retweets)."""
    return DegreeHistogram("count", dict(sorted(Counter(values).items())), len(values))


def poisson_pmf(lam: float, k: int) -> float:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k!r}")
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


def binomial_pmf(n_minus_1: int, p: float, k: int) -> float:
    """P(k) for degree of a node among ``n_minus_1`` possible partners."""
    if n_minus_1 < 0 or not 0.0 <= p <= 1.0:
        raise ValueError(f"invalid parameters n-1={n_minus_1!r}, p={p!r}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k!r}")
    if k > n_minus_1:
        return 0.0
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n_minus_1 else 0.0
    log_c = math.lgamma(n_minus_1 + 1) - math.lgamma(k + 1) - math.lgamma(n_minus_1 - k + 1)
    return math.exp(log_c + k * math.log(p) + (n_minus_1 - k) * math.log1p(-p))


def ks_distance(hist: DegreeHistogram | Mapping[int, float],
                model_pmf: Callable[[int], float]) -> float:
    """Sup-norm distance between the empirical and model CDFs on integers.

    Both CDFs are right-continuous step functions jumping only at integers, so
    the supremum is attained at some ``k`` in ``[0, max observed degree]``.
    """
    pmf = hist.pmf() if isinstance(hist, DegreeHistogram) else dict(hist)
    if not pmf:
        raise ValueError("empty histogram")
    total = math.fsum(pmf.values())
    k_max = max(pmf)
    emp = 0.0
    mod = 0.0
    best = 0.0
    for k in range(k_max + 1):
        emp += pmf.get(k, 0.0) / total
        mod += model_pmf(k)
        best = max(best, abs(emp - mod))
    return min(best, 1.0)


@dataclass
class PowerLawFit:
    gamma: float
    intercept: float
    r_squared: float
    rms_residual: float
    bins: int
    good: bool


def log_binned(pmf: Mapping[int, float], k_min: int, bins_per_decade: int = 5
               ) -> tuple[np.ndarray, np.ndarray]:
    """Average P(k) per integer inside logarithmic bins starting at ``k_min``.

    Returns (ln bin centre, ln mean P) for bins with nonzero mass; the centre is
    the geometric mean of the first and last integer in the bin."""
    k_max = max(pmf)
    ratio = 10.0 ** (1.0 / bins_per_decade)
    xs, ys = [], []
    lo = float(k_min)
    while lo <= k_max:
        hi = lo * ratio
        first = math.ceil(lo)
        last = math.ceil(hi) - 1
        if last >= first:
            mass = math.fsum(pmf.get(k, 0.0) for k in range(first, last + 1))
            if mass > 0:
                xs.append(0.5 * (math.log(first) + math.log(last)))
                ys.append(math.log(mass / (last - first + 1)))
        lo = hi
    return np.array(xs), np.array(ys)


def fit_power_law(hist: DegreeHistogram | Mapping[int, float], k_min: int = 1,
                  bins_per_decade: int = 5, r2_threshold: float = 0.99) -> PowerLawFit:
    """Least-squares slope of ln P(k) against ln k over log bins, ``gamma = -slope``.

    ``good`` is False when the log-log relation is visibly curved
    (R^2 below ``r2_threshold``)."""
    if k_min < 1:
        raise ValueError("k_min must be at least 1")
    pmf = hist.pmf() if isinstance(hist, DegreeHistogram) else dict(hist)
    support = [k for k, p in pmf.items() if k >= k_min and p > 0]
    if len(support) < 5:
        raise ValueError(f"only {len(support)} distinct degrees >= k_min={k_min}; "
                         "grow a larger network or lower k_min")
    x, y = log_binned(pmf, k_min, bins_per_decade)
    if len(x) < 3:
        raise ValueError("fewer than 3 populated log bins; grow a larger network")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(gamma=-float(slope), intercept=float(intercept), r_squared=r2,
                       rms_residual=float(np.sqrt(np.mean(resid ** 2))), bins=len(x),
                       good=r2 >= r2_threshold)


def mean_pmf(pmfs: list[Mapping[int, float]]) -> dict[int, float]:
    """Pointwise mean of normalized distributions (missing k counts as 0)."""
    if not pmfs:
        raise ValueError("no distributions to aggregate")
    keys = sorted(set().union(*pmfs))
    n = len(pmfs)
    return {k: math.fsum(p.get(k, 0.0) for p in pmfs) / n for k in keys}


def parity_masses(pmf: Mapping[int, float]) -> tuple[float, float]:
    """(odd-degree mass, even-degree mass)."""
    odd = math.fsum(p for k, p in pmf.items() if k % 2)
    even = math.fsum(p for k, p in pmf.items() if not k % 2)
    return odd, even
