"""N-agent closed-economy exchange dynamics.

An agent is picked to give away a dollar at a per-agent weight that depends
on the model kind (proportional to wealth, flat, or inversely proportional
to wealth); the receiver is picked uniformly among all N agents, with a
self-pick counting as a no-op.  The per-giver clocks are inflated by
N/(N-1) so that the effective dollar jump rate matches the canonical
dollar-wise construction: the total event rate for the poor-biased kind is
the state-independent lam * N*mu * N/(N-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .metrics import IntDist


class ModelKind(Enum):
    POOR_BIASED = "poor"
    UNBIASED = "unbiased"
    RICH_BIASED = "rich"


@dataclass
class Configuration:
    """Wealth vector on the configuration space: nonnegative integers of
    length n_agents summing to n_agents * mu."""

    wealth: np.ndarray
    n_agents: int
    mu: int

    def __post_init__(self):
        self.wealth = np.asarray(self.wealth, dtype=np.int64)

    def validate(self) -> None:
        if self.n_agents < 1 or self.mu < 1:
            raise ValueError("need n_agents >= 1 and mu >= 1")
        if self.wealth.shape != (self.n_agents,):
            raise ValueError("wealth vector has wrong length")
        if np.any(self.wealth < 0):
            raise ValueError("negative wealth entry")
        if int(self.wealth.sum()) != self.n_agents * self.mu:
            raise ValueError("wealth must sum to n_agents * mu")

    def copy(self) -> "Configuration":
        return Configuration(self.wealth.copy(), self.n_agents, self.mu)


@dataclass
class JumpEvent:
    time: float
    giver: int
    receiver: int
    no_op: bool


def new_configuration(
    n_agents: int,
    mu: int,
    init: str = "equal",
    *,
    vector=None,
    sampler=None,
    rng: np.random.Generator | None = None,
) -> Configuration:
    """Build a validated configuration.

    init is one of "equal", "all_to_one", "from_vector" (with vector=...)
    or "iid" (with sampler(rng, size) -> nonnegative ints and rng=...).
    An iid draw is repaired by adding or removing single dollars at
    uniformly chosen agents until the sum constraint holds.
    """
    if n_agents < 1 or mu < 1:
        raise ValueError("need n_agents >= 1 and mu >= 1")
    target = n_agents * mu
    if init == "equal":
        wealth = np.full(n_agents, mu, dtype=np.int64)
    elif init == "all_to_one":
        wealth = np.zeros(n_agents, dtype=np.int64)
        wealth[0] = target
    elif init == "from_vector":
        if vector is None:
            raise ValueError("from_vector requires vector=")
        wealth = np.asarray(vector, dtype=np.int64)
    elif init == "iid":
        if sampler is None or rng is None:
            raise ValueError("iid requires sampler= and rng=")
        wealth = np.asarray(sampler(rng, n_agents), dtype=np.int64)
        if np.any(wealth < 0):
            raise ValueError("iid sampler produced a negative entry")
        while wealth.sum() > target:
            rich = np.flatnonzero(wealth > 0)
            wealth[rng.choice(rich)] -= 1
        while wealth.sum() < target:
            wealth[rng.integers(n_agents)] += 1
    else:
        raise ValueError(f"unknown init kind: {init!r}")
    config = Configuration(wealth, n_agents, mu)
    config.validate()
    return config


def giver_weights(config: Configuration, kind: ModelKind) -> np.ndarray:
    w = config.wealth
    if kind is ModelKind.POOR_BIASED:
        return w.astype(float)
    if kind is ModelKind.UNBIASED:
        return (w > 0).astype(float)
    # rich-biased: zero-wealth agents are never picked
    out = np.zeros(config.n_agents)
    eligible = w > 0
    out[eligible] = 1.0 / w[eligible]
    return out


def total_event_rate(config: Configuration, kind: ModelKind, lam: float = 1.0) -> float:
    if lam <= 0:
        raise ValueError("lam must be positive")
    n = config.n_agents
    if n < 2:
        return 0.0
    return lam * float(giver_weights(config, kind).sum()) * n / (n - 1)


def step(
    config: Configuration,
    kind: ModelKind,
    rng: np.random.Generator,
    lam: float = 1.0,
    clock: float = 0.0,
) -> tuple[Configuration, JumpEvent]:
    """Advance by one jump event.  Mutates config in place and returns it."""
    weights = giver_weights(config, kind)
    total_w = weights.sum()
    n = config.n_agents
    if n < 2 or total_w <= 0:
        raise RuntimeError("zero total event rate; no step possible")
    rate = lam * total_w * n / (n - 1)
    dt = rng.exponential(1.0 / rate)
    cum = np.cumsum(weights)
    giver = int(np.searchsorted(cum, rng.uniform() * total_w, side="right"))
    receiver = int(rng.integers(n))
    no_op = receiver == giver
    if not no_op:
        config.wealth[giver] -= 1
        config.wealth[receiver] += 1
    return config, JumpEvent(clock + dt, giver, receiver, no_op)


def _simulate_events(config, kind, t_end, rng, lam, observer, sample_times):
    t = 0.0
    pending = list(sample_times)
    while True:
        rate = total_event_rate(config, kind, lam)
        if rate <= 0:
            break
        dt = rng.exponential(1.0 / rate)
        if t + dt > t_end:
            break
        # emit samples falling strictly before the event
        while pending and pending[0] <= t + dt:
            observer(pending.pop(0), config)
        t += dt
        weights = giver_weights(config, kind)
        total_w = weights.sum()
        cum = np.cumsum(weights)
        giver = int(np.searchsorted(cum, rng.uniform() * total_w, side="right"))
        receiver = int(rng.integers(config.n_agents))
        if receiver != giver:
            config.wealth[giver] -= 1
            config.wealth[receiver] += 1
    while pending:
        observer(pending.pop(0), config)
    return config


def _simulate_dollar_labels(config, t_end, rng, lam, observer, sample_times):
    # Poor-biased fast path: sample a uniformly random dollar (= giver
    # proportional to wealth) and a uniform receiver per event.  Between
    # sample times only the last relabeling of each dollar matters, so
    # events are applied in one vectorized last-write-wins assignment.
    n = config.n_agents
    m = n * config.mu
    labels = np.repeat(np.arange(n), config.wealth)
    rate = lam * m * n / (n - 1)
    t = 0.0
    for t_next in list(sample_times) + [t_end]:
        span = t_next - t
        if span > 0:
            k = rng.poisson(rate * span)
            if k:
                dollars = rng.integers(0, m, size=k)
                receivers = rng.integers(0, n, size=k)
                labels[dollars] = receivers
            t = t_next
        if observer is not None and t_next != t_end:
            config.wealth = np.bincount(labels, minlength=n)
            observer(t_next, config)
    config.wealth = np.bincount(labels, minlength=n)
    if observer is not None and sample_times and sample_times[-1] == t_end:
        observer(t_end, config)
    return config


def simulate(
    config: Configuration,
    kind: ModelKind,
    t_end: float,
    rng: np.random.Generator,
    lam: float = 1.0,
    observer=None,
    sample_times=None,
    method: str = "auto",
) -> Configuration:
    """Run the dynamics until t_end and return the final state.

    The input configuration is not modified.  observer(t, config) is
    called at each requested sample time (state as of that time).
    method "event" forces the generic Gillespie loop; "dollar" forces the
    batched dollar-relabeling path (poor-biased only); "auto" picks
    "dollar" for the poor-biased kind.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    config.validate()
    work = config.copy()
    times = sorted(t for t in (sample_times or []) if t <= t_end)
    if method == "auto":
        method = "dollar" if kind is ModelKind.POOR_BIASED else "event"
    if method == "dollar" and kind is not ModelKind.POOR_BIASED:
        raise ValueError("dollar method is exact only for the poor-biased kind")
    if t_end == 0 or work.n_agents < 2:
        if observer is not None:
            for t in times:
                observer(t, work)
        return work
    if method == "dollar":
        return _simulate_dollar_labels(work, t_end, rng, lam, observer, times)
    if method != "event":
        raise ValueError(f"unknown method: {method!r}")
    return _simulate_events(work, kind, t_end, rng, lam, observer or (lambda *a: None), times)


def empirical_marginal(configs, agents=None) -> IntDist:
    """Pooled empirical pmf of the selected agent entries."""
    configs = list(configs)
    if not configs:
        raise ValueError("need at least one configuration")
    values = []
    for c in configs:
        w = c.wealth if isinstance(c, Configuration) else np.asarray(c)
        values.append(w if agents is None else w[np.asarray(agents)])
    pooled = np.concatenate(values)
    return IntDist.from_counts(np.bincount(pooled))
