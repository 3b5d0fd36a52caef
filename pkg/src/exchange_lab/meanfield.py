"""Truncated mean-field ODE system for the wealth law p(t).

The generator acts on pmfs over 0..n_max as a birth-death flow with birth
rate mu and death rate n; its equilibrium is Poisson(mu).  The truncation
uses a reflecting closure at n_max (the outflow that would feed bin
n_max+1 is returned to bin n_max) so that total mass is conserved exactly;
the induced mean error is tail-sized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .metrics import IntDist

TAIL_TOL = 1e-12
MASS_TOL = 1e-10
NEGATIVITY_TOL = 1e-12
CHI2_UNDERFLOW = 1e-30


class Chi2UnderflowError(RuntimeError):
    """Raised when chi-square values are too small to fit a decay rate."""


def default_n_max(mu: float) -> int:
    return math.ceil(mu + 12.0 * math.sqrt(mu) + 30.0)


def equilibrium(mu: float, n_max: int | None = None) -> IntDist:
    """Normalized truncated Poisson(mu) pmf."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if n_max is None:
        n_max = default_n_max(mu)
    dist = metrics.poisson_pmf(mu, n_max)
    tail = 1.0 - dist.mass()
    if tail >= TAIL_TOL:
        raise ValueError(f"n_max={n_max} too small: Poisson tail mass {tail:.3e}")
    return IntDist(dist.pmf / dist.mass())


def _pmf_of(p) -> np.ndarray:
    return p.pmf if isinstance(p, IntDist) else np.asarray(p, dtype=float)


def apply_L(p, mu: float) -> np.ndarray:
    """Generator applied to a (possibly signed) vector on 0..n_max."""
    v = _pmf_of(p)
    n_max = v.size - 1
    n = np.arange(n_max + 1)
    out = -(n + mu) * v
    out[n_max] += mu * v[n_max]  # reflecting closure at the truncation edge
    out[:-1] += n[1:] * v[1:]
    out[1:] += mu * v[:-1]
    return out


@dataclass
class OdeRun:
    times: np.ndarray
    snapshots: np.ndarray  # shape (len(times), n_max + 1)
    mu: float
    n_max: int
    dt: float
    method: str = "rk4"

    def dist(self, i: int) -> IntDist:
        return IntDist(self.snapshots[i])


def integrate(
    p0: IntDist,
    mu: float,
    t_end: float,
    dt: float | None = None,
    snapshot_stride: int = 1,
) -> OdeRun:
    """Classical RK4 integration of dp/dt = L[p] with uniform snapshots."""
    if abs(p0.mass() - 1.0) > MASS_TOL:
        raise ValueError("initial pmf mass not within tolerance of 1")
    if abs(p0.mean() - mu) > 1e-8:
        raise ValueError("initial pmf mean not within tolerance of mu")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    n_max = max(p0.n_max, default_n_max(mu))
    p = np.zeros(n_max + 1)
    p[: p0.pmf.size] = p0.pmf
    if dt is None:
        dt = min(0.01, 0.5 / (n_max + mu))
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    times = [0.0]
    snaps = [p.copy()]
    for i in range(1, n_steps + 1):
        k1 = apply_L(p, mu)
        k2 = apply_L(p + 0.5 * h * k1, mu)
        k3 = apply_L(p + 0.5 * h * k2, mu)
        k4 = apply_L(p + h * k3, mu)
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        low = p.min()
        if low < -NEGATIVITY_TOL:
            raise RuntimeError(
                f"negative probability {low:.3e} at step {i}: decrease dt or increase n_max"
            )
        if low < 0.0:
            np.clip(p, 0.0, None, out=p)
            p /= p.sum()
        if i % snapshot_stride == 0 or i == n_steps:
            times.append(i * h)
            snaps.append(p.copy())
    return OdeRun(np.array(times), np.array(snaps), mu, n_max, h)


def energy(q, p_star) -> float:
    """Weighted square norm sum q_n^2 / p*_n of a (possibly signed) vector."""
    qv, sv = _pmf_of(q), _pmf_of(p_star)
    if qv.size != sv.size:
        raise ValueError("vectors must share the truncation window")
    return float(np.sum(qv * qv / sv))


def dissipation(p, p_star) -> float:
    pv, sv = _pmf_of(p), _pmf_of(p_star)
    if pv.size != sv.size:
        raise ValueError("vectors must share the truncation window")
    ratio = pv / sv
    return float(np.sum(sv[:-1] * np.diff(ratio) ** 2))


def chi2(p, p_star) -> float:
    return energy(_pmf_of(p) - _pmf_of(p_star), p_star)


@dataclass
class BakryEmeryReport:
    times: np.ndarray
    identity_relerr: np.ndarray
    inequality_slack: np.ndarray
    max_identity_relerr: float
    min_inequality_slack: float

    def identity_ok(self, tol: float = 1e-4) -> bool:
        return self.max_identity_relerr <= tol

    def inequality_ok(self, tol: float = 1e-6) -> bool:
        return self.min_inequality_slack >= -tol


def verify_bakry_emery(run: OdeRun) -> BakryEmeryReport:
    """Check dE/dt = -2 mu D and E'' >= -2 E' along uniformly spaced snapshots.

    The first derivative uses a 4th-order centered stencil so that the
    fast transient modes of a point-mass start stay within tolerance.
    """
    if run.times.size < 5:
        raise ValueError("need at least 5 snapshots")
    gaps = np.diff(run.times)
    if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("snapshots must be uniformly spaced")
    h = float(gaps[0])
    p_star = equilibrium(run.mu, run.n_max).pmf
    e_vals = np.array([chi2(s, p_star) for s in run.snapshots])
    d_vals = np.array([dissipation(s, p_star) for s in run.snapshots])
    de = (-e_vals[4:] + 8.0 * e_vals[3:-1] - 8.0 * e_vals[1:-3] + e_vals[:-4]) / (12.0 * h)
    d2e = (e_vals[3:-1] - 2.0 * e_vals[2:-2] + e_vals[1:-3]) / (h * h)
    interior = slice(2, -2)
    relerr = np.abs(de + 2.0 * run.mu * d_vals[interior]) / np.maximum(np.abs(de), 1e-14)
    slack = d2e + 2.0 * de
    return BakryEmeryReport(
        run.times[interior],
        relerr,
        slack,
        float(relerr.max()),
        float(slack.min()),
    )


def fit_decay_rate(run: OdeRun) -> tuple[float, float]:
    """Least-squares slope of log chi2 versus t over the second half of the run."""
    p_star = equilibrium(run.mu, run.n_max).pmf
    e_vals = np.array([chi2(s, p_star) for s in run.snapshots])
    window = run.times >= run.times[-1] / 2.0
    e_win = e_vals[window]
    t_win = run.times[window]
    if e_win.size < 2 or np.any(e_win <= CHI2_UNDERFLOW):
        raise Chi2UnderflowError("chi2 too small on the fit window; shrink t_end")
    log_e = np.log(e_win)
    slope, intercept = np.polyfit(t_win, log_e, 1)
    fitted = slope * t_win + intercept
    ss_res = float(np.sum((log_e - fitted) ** 2))
    ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r_squared


@dataclass
class W1Chi2BoundReport:
    w1: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.w1 <= self.bound + 1e-12


def w1_chi2_bound_check(p: IntDist, p_star: IntDist, mu: float) -> W1Chi2BoundReport:
    """W1(p, p*) <= sqrt(mu^2 + mu) * sqrt(chi2(p, p*))."""
    w1 = metrics.w1_int(p, p_star)
    bound = math.sqrt(mu * mu + mu) * math.sqrt(max(chi2(p, p_star), 0.0))
    return W1Chi2BoundReport(w1, bound)
