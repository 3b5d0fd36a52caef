"""Bar-raising coupling between the multinomial occupancy law and i.i.d.
Poisson counts, with its exact mean-deviation cost.

Each of N bins carries a unit-rate Poisson process.  Counting completed
intervals below height mu gives the i.i.d. Poisson(mu) vector Y; sliding
the bar until exactly mu*N completed intervals lie below it gives the
multinomial vector X.  The two vectors differ entrywise in a single
direction, so the coupling cost reduces to |mu*N - sum(Y)| / N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import StreamingStats
from .model import Configuration


@dataclass
class CoupledOccupancy:
    x: np.ndarray  # multinomial side, sums to mu*N
    y: np.ndarray  # i.i.d. Poisson(mu) side
    bar_height: float

    def cost(self) -> float:
        return float(np.abs(self.x - self.y).sum()) / self.x.size


def sample_multinomial(n_agents: int, mu: int, rng: np.random.Generator) -> Configuration:
    """One draw of mu*N balls tossed uniformly into N bins."""
    if n_agents < 1 or mu < 1:
        raise ValueError("need n_agents >= 1 and mu >= 1")
    counts = rng.multinomial(n_agents * mu, np.full(n_agents, 1.0 / n_agents))
    return Configuration(counts, n_agents, mu)


def sample_coupled(n_agents: int, mu: int, rng: np.random.Generator) -> CoupledOccupancy:
    if n_agents < 1 or mu < 1:
        raise ValueError("need n_agents >= 1 and mu >= 1")
    n = n_agents
    target = n * mu
    y = rng.poisson(mu, size=n).astype(np.int64)
    z = int(y.sum())
    if z == target:
        return CoupledOccupancy(y.copy(), y, float(mu))
    if z < target:
        # raise the bar above mu: arrivals of the merged rate-N process,
        # each landing in a uniform bin by memorylessness
        deficit = target - z
        extra_bins = rng.integers(0, n, size=deficit)
        x = y + np.bincount(extra_bins, minlength=n)
        bar = mu + rng.exponential(1.0 / n, size=deficit).sum()
        return CoupledOccupancy(x, y, float(bar))
    # lower the bar below mu: completion heights of the z intervals are
    # i.i.d. Uniform(0, mu) given the counts; drop the highest z - target,
    # ties broken by bin index via the stable sort over bin-ordered heights
    heights = rng.uniform(0.0, mu, size=z)
    owners = np.repeat(np.arange(n), y)
    order = np.argsort(heights, kind="stable")
    keep = order[:target]
    x = np.bincount(owners[keep], minlength=n)
    bar = heights[order[target - 1]] if target > 0 else 0.0
    return CoupledOccupancy(x, y, float(bar))


def log_factorial(m: int) -> float:
    return math.lgamma(m + 1)


def exact_mean_deviation_poisson(m: int) -> float:
    """E|Z - m| for Z ~ Poisson(m) with integer mean m: 2 e^-m m^(m+1) / m!."""
    if m < 1:
        raise ValueError("need m >= 1")
    return math.exp(math.log(2.0) - m + (m + 1) * math.log(m) - log_factorial(m))


def w1_multinomial_poisson_bound(n_agents: int, mu: int) -> float:
    """Upper bound on W1(multinomial occupancy law, Poisson(mu)^N): the
    smaller of the exact coupling cost and the closed form sqrt(2 mu/pi)/sqrt(N)."""
    if n_agents < 2:
        raise ValueError("need n_agents >= 2")
    exact = exact_mean_deviation_poisson(mu * n_agents) / n_agents
    closed = math.sqrt(2.0 * mu / math.pi) / math.sqrt(n_agents)
    return min(exact, closed)


def empirical_coupling_cost(
    n_agents: int, mu: int, reps: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the coupling cost."""
    if reps < 2:
        raise ValueError("need reps >= 2")
    stats = StreamingStats()
    for _ in range(reps):
        stats.observe(sample_coupled(n_agents, mu, rng).cost())
    mean, se, _ = stats.summarize()
    return mean, se
