import math

import numpy as np
import pytest

from exchange_lab import metrics
from exchange_lab.multinomial import (
    empirical_coupling_cost,
    exact_mean_deviation_poisson,
    sample_coupled,
    sample_multinomial,
    w1_multinomial_poisson_bound,
)
from exchange_lab.seeding import replication_rng


def brute_force_mean_deviation(m: int) -> float:
    """Independent oracle: sum |k - m| P(Z = k) over a wide Poisson window."""
    n_max = m + int(40 * math.sqrt(m)) + 60
    ks = np.arange(n_max + 1)
    logp = -m + ks * math.log(m) - np.array([math.lgamma(k + 1) for k in ks])
    return float(np.sum(np.abs(ks - m) * np.exp(logp)))


class TestSampleMultinomial:
    def test_single_bin(self):
        rng = replication_rng(50)
        c = sample_multinomial(1, 7, rng)
        assert c.wealth.tolist() == [7]

    def test_two_bins_quarters(self):
        # N=2, mu=1: two balls in two bins, counts (2,0),(1,1),(0,2) with
        # probabilities 1/4, 1/2, 1/4
        n_reps = 40_000
        hits = np.zeros(3)
        for rep in range(n_reps):
            rng = replication_rng(51, rep)
            hits[sample_multinomial(2, 1, rng).wealth[0]] += 1
        freq = hits / n_reps
        for got, want in zip(freq, (0.25, 0.5, 0.25)):
            se = math.sqrt(want * (1 - want) / n_reps)
            assert abs(got - want) <= 3 * se

    def test_marginal_is_binomial(self):
        n, mu = 6, 2
        n_reps = 20_000
        counts = np.zeros(n * mu + 1)
        for rep in range(n_reps):
            rng = replication_rng(52, rep)
            counts[sample_multinomial(n, mu, rng).wealth[0]] += 1
        emp = metrics.IntDist(counts / n_reps)
        target = metrics.binomial_pmf(n * mu, 1.0 / n, n * mu)
        assert metrics.tv_distance(emp, target) < 0.015

    def test_sum_invariant(self):
        rng = replication_rng(53)
        for _ in range(50):
            assert int(sample_multinomial(9, 3, rng).wealth.sum()) == 27


class TestSampleCoupled:
    def test_invariants_fuzz(self):
        # the two sides differ in one direction only, and the total cost is
        # exactly the normalized sum mismatch
        rng = replication_rng(54)
        n, mu = 6, 2
        for _ in range(5000):
            c = sample_coupled(n, mu, rng)
            diff = c.x - c.y
            assert int(c.x.sum()) == n * mu
            assert np.all(diff >= 0) or np.all(diff <= 0)
            assert c.cost() == pytest.approx(abs(n * mu - c.y.sum()) / n, abs=1e-12)

    def test_equal_sums_give_identical_vectors(self):
        rng = replication_rng(55)
        found = False
        for _ in range(2000):
            c = sample_coupled(4, 2, rng)
            if int(c.y.sum()) == 8:
                assert np.array_equal(c.x, c.y)
                assert c.bar_height == 2.0
                found = True
        assert found

    def test_bar_height_side(self):
        rng = replication_rng(56)
        for _ in range(2000):
            c = sample_coupled(5, 3, rng)
            z = int(c.y.sum())
            if z < 15:
                assert c.bar_height > 3.0
            elif z > 15:
                assert c.bar_height < 3.0

    def test_poisson_side_law(self):
        n, mu = 8, 2
        n_reps = 20_000
        counts = np.zeros(60)
        for rep in range(n_reps):
            rng = replication_rng(57, rep)
            c = sample_coupled(n, mu, rng)
            counts[c.y[0]] += 1
        emp = metrics.IntDist(counts / n_reps)
        target = metrics.poisson_pmf(float(mu), 59)
        assert metrics.tv_distance(emp, target) < 0.015

    def test_multinomial_side_law(self):
        n, mu = 8, 2
        n_reps = 20_000
        counts = np.zeros(n * mu + 1)
        for rep in range(n_reps):
            rng = replication_rng(58, rep)
            c = sample_coupled(n, mu, rng)
            counts[c.x[0]] += 1
        emp = metrics.IntDist(counts / n_reps)
        target = metrics.binomial_pmf(n * mu, 1.0 / n, n * mu)
        assert metrics.tv_distance(emp, target) < 0.015


class TestExactMeanDeviation:
    def test_known_values(self):
        assert exact_mean_deviation_poisson(1) == pytest.approx(2.0 / math.e, abs=1e-12)
        assert exact_mean_deviation_poisson(4) == pytest.approx(1.56293, abs=1e-5)

    def test_matches_brute_force_series(self):
        for m in range(1, 41):
            assert exact_mean_deviation_poisson(m) == pytest.approx(
                brute_force_mean_deviation(m), abs=1e-10
            )

    def test_large_m_below_gaussian_envelope(self):
        # E|Z - m| ~ sqrt(2 m / pi) for large m and never exceeds it
        for m in (100, 1000, 10_000):
            exact = exact_mean_deviation_poisson(m)
            envelope = math.sqrt(2.0 * m / math.pi)
            assert exact < envelope
            assert exact / envelope > 0.99

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            exact_mean_deviation_poisson(0)


class TestBound:
    def test_exact_term_dominated_by_closed_form_on_grid(self):
        for n in range(2, 21):
            for mu in range(1, 21):
                exact = exact_mean_deviation_poisson(mu * n) / n
                closed = math.sqrt(2.0 * mu / math.pi) / math.sqrt(n)
                assert exact <= closed + 1e-12
                assert w1_multinomial_poisson_bound(n, mu) == pytest.approx(exact)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            w1_multinomial_poisson_bound(1, 3)


class TestEmpiricalCost:
    def test_matches_closed_form(self):
        n, mu = 50, 4
        rng = replication_rng(59)
        mean, se = empirical_coupling_cost(n, mu, 4000, rng)
        closed = exact_mean_deviation_poisson(mu * n) / n
        assert abs(mean - closed) <= 3 * se

    def test_two_reps_have_finite_se(self):
        rng = replication_rng(60)
        mean, se = empirical_coupling_cost(5, 2, 2, rng)
        assert se is not None and np.isfinite(se)

    def test_too_few_reps_rejected(self):
        rng = replication_rng(61)
        with pytest.raises(ValueError):
            empirical_coupling_cost(5, 2, 1, rng)
