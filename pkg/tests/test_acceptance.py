"""Acceptance gate: every headline bound at its stated tolerance.

Each criterion prints a single pass/fail line.  Criterion 4c (the
conjectured chi-square decay band) is informative only: the observed rate
is 4 because admissible initial data carry the equilibrium mean, which
removes the slowest spectral mode.
"""

import json
import math

import numpy as np
import pytest
from test_metrics import lp_transport_cost, random_pmf

from exchange_lab import dollarwise, meanfield, metrics, multinomial
from exchange_lab.cli import parse_and_dispatch
from exchange_lab.metrics import IntDist
from exchange_lab.model import ModelKind, new_configuration, simulate
from exchange_lab.seeding import replication_rng
from test_multinomial import brute_force_mean_deviation


def _line(tag: str, ok: bool, extra: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({extra})" if extra else ""
    print(f"[acceptance] {tag}: {status}{suffix}")


def run_json(tmp_path_factory, name, argv):
    out = tmp_path_factory.mktemp("acc") / name
    code = parse_and_dispatch(argv + ["--format", "json", "--out", str(out)])
    return code, json.loads(out.read_text())


@pytest.fixture(scope="module")
def ode_payload(tmp_path_factory):
    code, payload = run_json(
        tmp_path_factory, "ode.json",
        ["ode", "--mu", "5", "--t-end", "10", "--dt", "0.005"],
    )
    assert code == 0
    return payload


def test_criterion_1_equilibration_to_poisson(tmp_path_factory):
    code, payload = run_json(
        tmp_path_factory, "simulate.json",
        ["simulate", "--agents", "1000", "--mu", "10", "--t-end", "20",
         "--reps", "50", "--seed", "1"],
    )
    w1 = payload["metadata"]["w1_to_poisson"]
    ok = code == 0 and w1 <= 0.15
    _line("1 equilibration W1 <= 0.15", ok, f"W1={w1:.4f}")
    assert ok


def test_criterion_2_coupling_contraction(tmp_path_factory):
    code, payload = run_json(
        tmp_path_factory, "couple.json",
        ["couple-chains", "--agents", "200", "--mu", "5",
         "--t-grid", "0:8:1", "--reps", "10000"],
    )
    rows_ok = all(r["pass"] for r in payload["rows"])
    ok = code == 0 and rows_ok
    worst = min(r["margin"] for r in payload["rows"])
    _line("2 coupling contraction 2*mu*exp(-t)", ok, f"worst margin={worst:.4f}")
    assert ok


def test_criterion_3_multinomial_chaos(tmp_path_factory):
    code, payload = run_json(
        tmp_path_factory, "multi.json",
        ["couple-multinomial", "--agents", "100", "--mu", "10", "--reps", "10000"],
    )
    row = payload["rows"][0]
    grid_ok = True
    for n in range(2, 21):
        for mu in range(1, 21):
            closed = multinomial.exact_mean_deviation_poisson(mu * n) / n
            grid_ok &= closed <= math.sqrt(2.0 * mu / math.pi) / math.sqrt(n) + 1e-12
    # the deterministic closed form sits below the 0.25231 constant; the
    # Monte Carlo mean is tied to it by the 3*SE clause
    ok = code == 0 and row["within_3se"] and row["closed_form"] <= 0.25231 and grid_ok
    _line("3 multinomial-Poisson chaos bound", ok,
          f"mean={row['mean_cost']:.5f} closed={row['closed_form']:.5f}")
    assert ok


def test_criterion_4_meanfield_decay(ode_payload):
    meta = ode_payload["metadata"]
    rows = ode_payload["rows"]
    env_ok = all(r["chi2"] <= r["chi2_envelope"] * 1.001 + 1e-300 for r in rows)
    rate = meta["fitted_rate"]
    rate_ok = rate >= 0.999
    be_ok = meta["bakry_emery_identity_ok"] and meta["bakry_emery_inequality_ok"]
    mass_ok = max(abs(r["mass"] - 1.0) for r in rows) <= 1e-8
    mean_ok = max(abs(r["mean"] - 5.0) for r in rows) <= 1e-6
    conjecture = bool(meta["conjecture_rate_in_[1.8,2.2]"])
    verdict = "confirmed" if conjecture else "not confirmed"
    print(f"[acceptance] 4c conjectured rate in [1.8,2.2]: {verdict} "
          f"(informative only, fitted rate={rate:.3f})")
    ok = env_ok and rate_ok and be_ok and mass_ok and mean_ok
    _line("4 mean-field chi2 decay and Bakry-Emery", ok,
          f"rate={rate:.3f} be_relerr={meta['bakry_emery_max_relerr']:.2e}")
    assert ok


def test_criterion_5_ode_w1_envelope(ode_payload):
    rows = ode_payload["rows"]
    ok = all(r["w1_to_pstar"] <= r["w1_bound"] + 1e-6 for r in rows)
    worst = min(r["w1_bound"] + 1e-6 - r["w1_to_pstar"] for r in rows)
    _line("5 W1(p(t), p*) <= 2*mu*exp(-t)", ok, f"worst margin={worst:.2e}")
    assert ok


def test_criterion_6_uniform_propagation_of_chaos(tmp_path_factory):
    code, payload = run_json(
        tmp_path_factory, "poc.json",
        ["poc", "--mu", "3", "--t-grid", "0:10:0.5", "--reps", "2000", "--seed", "7"],
    )
    rows_ok = all(r["pass"] for r in payload["rows"])
    slope = payload["metadata"]["slope"]
    ok = code == 0 and rows_ok and slope <= -0.45
    _line("6 uniform propagation of chaos", ok, f"slope={slope:.3f}")
    assert ok


def test_criterion_7_oracle_suites():
    # W1 CDF-sum versus LP transport on 200 random small-support instances
    rng = np.random.default_rng(2024)
    lp_ok = True
    for _ in range(200):
        p = random_pmf(rng, int(rng.integers(2, 31)))
        q = random_pmf(rng, int(rng.integers(2, 31)))
        got = metrics.w1_int(IntDist(p), IntDist(q))
        lp_ok &= abs(got - lp_transport_cost(p, q)) <= 1e-9

    # generator annihilates the equilibrium
    stationary_ok = all(
        np.abs(meanfield.apply_L(meanfield.equilibrium(mu), mu)).max() <= 1e-12
        for mu in (1.0, 5.0, 10.0)
    )

    # agent-wise Gillespie and dollar-wise relabeling agree in law
    n_reps = 100_000
    hist_event = np.zeros(4)
    hist_dollar = np.zeros(4)
    for rep in range(n_reps):
        rng_e = replication_rng(71, rep)
        c = new_configuration(3, 1, "equal")
        out = simulate(c, ModelKind.POOR_BIASED, 1.0, rng_e, method="event")
        hist_event[out.wealth[0]] += 1
        rng_d = replication_rng(72, rep)
        d = dollarwise.DollarConfig.equal(3, 1)
        out2 = dollarwise.to_agent_config(dollarwise.simulate_dollarwise(d, 1.0, rng_d))
        hist_dollar[out2.wealth[0]] += 1
    p_e = hist_event / n_reps
    p_d = hist_dollar / n_reps
    tv = 0.5 * np.abs(p_e - p_d).sum()
    pooled = (hist_event + hist_dollar) / (2 * n_reps)
    se_sum = 0.5 * np.sum(np.sqrt(pooled * (1 - pooled) * (2 / n_reps)))
    equivalence_ok = tv <= 3 * se_sum

    # closed-form mean deviation versus the brute-force series
    series_ok = all(
        abs(multinomial.exact_mean_deviation_poisson(m) - brute_force_mean_deviation(m))
        <= 1e-10
        for m in range(1, 41)
    )

    # coupling invariants: sign alignment and exact cost identity
    rng_c = replication_rng(73)
    coupling_ok = True
    for _ in range(100_000):
        c = multinomial.sample_coupled(6, 2, rng_c)
        diff = c.x - c.y
        coupling_ok &= bool(np.all(diff >= 0) or np.all(diff <= 0))
        coupling_ok &= c.cost() == abs(12 - int(c.y.sum())) / 6

    ok = all([lp_ok, stationary_ok, equivalence_ok, series_ok, coupling_ok])
    _line("7 oracle and property suites", ok,
          f"lp={lp_ok} stationary={stationary_ok} equivalence={equivalence_ok} "
          f"series={series_ok} coupling={coupling_ok}")
    assert ok
