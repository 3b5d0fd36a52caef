"""Numerical laboratory for the poor-biased dollar exchange model, its
couplings, and its mean-field limit."""

from .metrics import IntDist, StreamingStats, tv_distance, w1_int, w1_product_upper
from .model import (
    Configuration,
    JumpEvent,
    ModelKind,
    empirical_marginal,
    new_configuration,
    simulate,
    step,
    total_event_rate,
)
from .dollarwise import (
    CoupledPair,
    DollarConfig,
    coupled_agent_distance,
    d_agent,
    rho,
    simulate_coupled,
    simulate_dollarwise,
    to_agent_config,
)
from .multinomial import (
    CoupledOccupancy,
    empirical_coupling_cost,
    exact_mean_deviation_poisson,
    sample_coupled,
    sample_multinomial,
    w1_multinomial_poisson_bound,
)
from .meanfield import (
    OdeRun,
    apply_L,
    chi2,
    dissipation,
    energy,
    equilibrium,
    fit_decay_rate,
    integrate,
    verify_bakry_emery,
    w1_chi2_bound_check,
)

__version__ = "0.1.0"
