"""Distances and divergences on integer-supported distributions, plus
streaming statistics for Monte Carlo replication aggregation.

Wasserstein-1 on 1-D integer support is computed exactly via the L1
distance between CDFs.  Multi-dimensional distances are never computed
exactly here; callers report coupling-induced upper bounds instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-8


class MassMismatchError(ValueError):
    """Raised when a pmf is not normalized within tolerance."""


@dataclass
class IntDist:
    """Finite-support probability mass function on {0, 1, ..., n_max}.

    The CDF is cached at construction; pmf entries must be nonnegative.
    """

    pmf: np.ndarray
    cdf: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.ndim != 1 or self.pmf.size == 0:
            raise ValueError("pmf must be a nonempty 1-D array")
        if np.any(self.pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        self.cdf = np.cumsum(self.pmf)

    @property
    def n_max(self) -> int:
        return self.pmf.size - 1

    def mass(self) -> float:
        return float(self.cdf[-1])

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    @classmethod
    def delta(cls, n: int, n_max: int | None = None) -> "IntDist":
        """Point mass at n, optionally embedded in a window 0..n_max."""
        if n < 0:
            raise ValueError("support point must be nonnegative")
        size = (n if n_max is None else n_max) + 1
        if size <= n:
            raise ValueError("n_max too small for the point mass")
        pmf = np.zeros(size)
        pmf[n] = 1.0
        return cls(pmf)

    @classmethod
    def from_counts(cls, counts) -> "IntDist":
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise ValueError("counts must have positive total")
        return cls(counts / total)


def _common_window(p: IntDist, q: IntDist) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad two pmfs to a shared support window."""
    size = max(p.pmf.size, q.pmf.size)
    pp = np.zeros(size)
    qq = np.zeros(size)
    pp[: p.pmf.size] = p.pmf
    qq[: q.pmf.size] = q.pmf
    return pp, qq


def _check_mass(p: IntDist, where: str) -> None:
    if abs(p.mass() - 1.0) > MASS_TOL:
        raise MassMismatchError(f"{where}: pmf mass {p.mass()} not within {MASS_TOL} of 1")


def w1_int(p: IntDist, q: IntDist) -> float:
    """Exact Wasserstein-1 distance between integer-supported laws."""
    _check_mass(p, "w1_int")
    _check_mass(q, "w1_int")
    pp, qq = _common_window(p, q)
    return float(np.abs(np.cumsum(pp - qq)).sum())


def w1_product_upper(per_coordinate_costs) -> float:
    """Upper bound on the coordinate-averaged W1 of product couplings.

    With the 1/d normalization of the multi-coordinate distance, coupling
    each coordinate independently costs the average of the per-coordinate
    costs.
    """
    costs = list(per_coordinate_costs)
    if not costs:
        raise ValueError("need at least one coordinate cost")
    return float(np.mean(costs))


def tv_distance(p: IntDist, q: IntDist) -> float:
    pp, qq = _common_window(p, q)
    return float(0.5 * np.abs(pp - qq).sum())


def binomial_pmf(n: int, prob: float, n_max: int | None = None) -> IntDist:
    if n < 0 or not 0.0 <= prob <= 1.0:
        raise ValueError("invalid binomial parameters")
    if n_max is None:
        n_max = n
    ks = np.arange(min(n, n_max) + 1)
    logc = [math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) for k in ks]
    with np.errstate(divide="ignore"):
        logp = np.array(logc)
        if 0.0 < prob < 1.0:
            logp += ks * math.log(prob) + (n - ks) * math.log1p(-prob)
        else:
            # degenerate cases: all mass at 0 or n
            pmf = np.zeros(n_max + 1)
            pmf[0 if prob == 0.0 else min(n, n_max)] = 1.0
            return IntDist(pmf)
    pmf = np.zeros(n_max + 1)
    pmf[: ks.size] = np.exp(logp)
    return IntDist(pmf)


def poisson_pmf(mu: float, n_max: int) -> IntDist:
    if mu <= 0 or n_max < 0:
        raise ValueError("invalid Poisson parameters")
    ns = np.arange(n_max + 1)
    logp = -mu + ns * math.log(mu) - np.array([math.lgamma(n + 1) for n in ns])
    return IntDist(np.exp(logp))


@dataclass
class StreamingStats:
    """Single-pass (Welford) mean/variance accumulator."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    def observe(self, x: float) -> "StreamingStats":
        x = float(x)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        self.min = min(self.min, x)
        self.max = max(self.max, x)
        return self

    def observe_many(self, xs) -> "StreamingStats":
        for x in np.asarray(xs, dtype=float).ravel():
            self.observe(x)
        return self

    def merge(self, other: "StreamingStats") -> "StreamingStats":
        """Chan-style exact combination of two accumulators."""
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            self.min, self.max = other.min, other.max
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.mean += delta * other.count / n
        self.count = n
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)
        return self

    @property
    def variance(self) -> float:
        if self.count < 2:
            return float("nan")
        return self.m2 / (self.count - 1)

    @property
    def se(self) -> float | None:
        if self.count < 2:
            return None
        return math.sqrt(max(self.variance, 0.0) / self.count)

    def summarize(self) -> tuple[float, float | None, int]:
        return self.mean, self.se, self.count
