"""Dollar-wise view of the poor-biased dynamics and the synchronous coupling.

State is the vector of dollar-to-agent labels (0-based, length M = N*mu).
A global exponential clock with rate M * N/(N-1) fires; each event picks a
dollar and a target agent uniformly and relabels that dollar, so the
effective relabel-to-a-different-agent rate per dollar is exactly 1.

Two chains driven by the same event stream coalesce dollar by dollar: once
a dollar has been picked, both chains carry the same label for it forever.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Configuration


@dataclass
class DollarConfig:
    """labels[k] is the agent (0..n_agents-1) holding dollar k."""

    labels: np.ndarray
    n_agents: int
    mu: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def validate(self) -> None:
        if self.n_agents < 1 or self.mu < 1:
            raise ValueError("need n_agents >= 1 and mu >= 1")
        if self.labels.shape != (self.n_agents * self.mu,):
            raise ValueError("labels must have length n_agents * mu")
        if np.any((self.labels < 0) | (self.labels >= self.n_agents)):
            raise ValueError("labels must lie in 0..n_agents-1")

    def copy(self) -> "DollarConfig":
        return DollarConfig(self.labels.copy(), self.n_agents, self.mu)

    @classmethod
    def from_agent_config(cls, config: Configuration) -> "DollarConfig":
        labels = np.repeat(np.arange(config.n_agents), config.wealth)
        return cls(labels, config.n_agents, config.mu)

    @classmethod
    def all_to_agent(cls, n_agents: int, mu: int, agent: int = 0) -> "DollarConfig":
        return cls(np.full(n_agents * mu, agent, dtype=np.int64), n_agents, mu)

    @classmethod
    def equal(cls, n_agents: int, mu: int) -> "DollarConfig":
        return cls(np.repeat(np.arange(n_agents), mu), n_agents, mu)


def event_rate(d: DollarConfig) -> float:
    n = d.n_agents
    if n < 2:
        return 0.0
    return d.labels.size * n / (n - 1)


def to_agent_config(d: DollarConfig) -> Configuration:
    return Configuration(np.bincount(d.labels, minlength=d.n_agents), d.n_agents, d.mu)


def _check_same_shape(a: DollarConfig, b: DollarConfig) -> None:
    if a.n_agents != b.n_agents or a.mu != b.mu:
        raise ValueError("dollar configurations have mismatched (n_agents, mu)")


def rho(a: DollarConfig, b: DollarConfig) -> int:
    """Number of dollars whose labels differ."""
    _check_same_shape(a, b)
    return int((a.labels != b.labels).sum())


def d_agent(s: Configuration, r: Configuration) -> float:
    """Normalized L1 distance (1/N) * sum |S_i - R_i| on agent configurations."""
    if s.n_agents != r.n_agents or s.mu != r.mu:
        raise ValueError("configurations have mismatched (n_agents, mu)")
    return float(np.abs(s.wealth - r.wealth).sum()) / s.n_agents


def simulate_dollarwise(
    d: DollarConfig,
    t_end: float,
    rng: np.random.Generator,
    observer=None,
    sample_times=None,
) -> DollarConfig:
    """Run the dollar relabeling dynamics until t_end.

    Within each inter-sample interval only the last relabeling of a dollar
    matters for the end state, so events are applied with one vectorized
    last-write-wins assignment per interval.  The input is not modified.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    d.validate()
    work = d.copy()
    times = sorted(t for t in (sample_times or []) if t <= t_end)
    n, m = work.n_agents, work.labels.size
    if n < 2 or t_end == 0:
        if observer is not None:
            for t in times:
                observer(t, work)
        return work
    rate = m * n / (n - 1)
    t = 0.0
    for t_next in times + ([t_end] if not times or times[-1] != t_end else []):
        span = t_next - t
        if span > 0:
            k = rng.poisson(rate * span)
            if k:
                dollars = rng.integers(0, m, size=k)
                agents = rng.integers(0, n, size=k)
                work.labels[dollars] = agents
            t = t_next
        if observer is not None and t_next in times:
            observer(t_next, work)
    return work


@dataclass
class CoupledPair:
    """Two dollar-wise chains sharing one event stream.

    touched[k] records that dollar k has been picked at least once, after
    which both chains agree at k forever.
    """

    chain_a: DollarConfig
    chain_b: DollarConfig
    clock: float = 0.0
    touched: np.ndarray = field(default=None)

    def __post_init__(self):
        _check_same_shape(self.chain_a, self.chain_b)
        if self.touched is None:
            self.touched = np.zeros(self.chain_a.labels.size, dtype=bool)

    @classmethod
    def from_chains(cls, a: DollarConfig, b: DollarConfig) -> "CoupledPair":
        a.validate()
        b.validate()
        return cls(a.copy(), b.copy())

    @classmethod
    def worst_case(cls, n_agents: int, mu: int) -> "CoupledPair":
        """All dollars on agent 0 versus an equal split (maximal d_agent)."""
        return cls.from_chains(
            DollarConfig.all_to_agent(n_agents, mu), DollarConfig.equal(n_agents, mu)
        )

    @classmethod
    def fully_mismatched(cls, n_agents: int, mu: int) -> "CoupledPair":
        """All labels differ initially: rho(0) = M (needs n_agents >= 2)."""
        if n_agents < 2:
            raise ValueError("need n_agents >= 2")
        m = n_agents * mu
        a = DollarConfig.all_to_agent(n_agents, mu)
        b = DollarConfig(1 + np.arange(m) % (n_agents - 1), n_agents, mu)
        return cls.from_chains(a, b)


def step_coupled(pair: CoupledPair, dollar: int, agent: int) -> CoupledPair:
    """Apply a single shared event to both chains."""
    pair.chain_a.labels[dollar] = agent
    pair.chain_b.labels[dollar] = agent
    pair.touched[dollar] = True
    return pair


def simulate_coupled(pair: CoupledPair, t_end: float, rng: np.random.Generator) -> CoupledPair:
    """Advance the coupled chains by t_end of shared events (in place)."""
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    n = pair.chain_a.n_agents
    m = pair.chain_a.labels.size
    if n >= 2 and t_end > 0:
        k = rng.poisson(m * n / (n - 1) * t_end)
        if k:
            dollars = rng.integers(0, m, size=k)
            agents = rng.integers(0, n, size=k)
            pair.chain_a.labels[dollars] = agents
            pair.chain_b.labels[dollars] = agents
            pair.touched[dollars] = True
    pair.clock += t_end
    return pair


def coupled_agent_distance(pair: CoupledPair) -> float:
    return d_agent(to_agent_config(pair.chain_a), to_agent_config(pair.chain_b))


def sample_first_pick_times(
    n_agents: int, mu: int, rng: np.random.Generator, batch_size: int = 1 << 16
) -> np.ndarray:
    """First time each dollar is picked, from one run of the event stream."""
    if n_agents < 2 or mu < 1:
        raise ValueError("need n_agents >= 2 and mu >= 1")
    m = n_agents * mu
    rate = m * n_agents / (n_agents - 1)
    tau = np.full(m, np.nan)
    seen = np.zeros(m, dtype=bool)
    t = 0.0
    remaining = m
    while remaining:
        times = t + np.cumsum(rng.exponential(1.0 / rate, size=batch_size))
        dollars = rng.integers(0, m, size=batch_size)
        uniq, first_idx = np.unique(dollars, return_index=True)
        fresh = ~seen[uniq]
        tau[uniq[fresh]] = times[first_idx[fresh]]
        seen[uniq[fresh]] = True
        remaining -= int(fresh.sum())
        t = times[-1]
    return tau
