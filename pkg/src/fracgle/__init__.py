"""Solvers and experiments for overdamped generalized Langevin equations with fractional noise.

The equation is solved in its integral form

    x(t) = x0 + 1/Gamma(alpha) int_0^t (t-s)^(alpha-1) b(x(s)) ds + G(t),

where G is the Riemann-Liouville integral of a fractional Brownian motion
with Hurst index H in (1/2, 1).  Modules:

``model``      parameters, drifts, grids, rates and the Mittag-Leffler function
``noise``      exact sampling of G and fractional Gaussian noise
``soe``        sum-of-exponentials approximation of t^(alpha-1)
``solver``     Euler and fast Euler methods
``mlmc``       multilevel Monte Carlo with the fast Euler method
``harness``    strong-order, agreement and cost experiments
``cli``        the ``fracgle`` command
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CertificationFailure, DegenerateFit, DomainError, FracGleError, GridMismatch, NonFinite,
    NotPositiveDefinite, NumericalFailure, PlanInfeasible, QuadratureFailure, SoeMismatch, ValidationError,
)
from .model import Drift, Grid, ModelSpec, RateSpec, mittag_leffler, theoretical_rate, validate  # noqa: E402
from .noise import (  # noqa: E402
    NoiseSeed, Role, build_g_sampler, fbm_covariance, g_covariance, g_variance, sample_fgn, sample_g,
)
from .soe import SoeApproximation, build_soe, certify_soe  # noqa: E402
from .solver import PathSolution, coupled_pair_solve, euler_solve, fast_euler_solve, kernel_weight  # noqa: E402
from .mlmc import Payoff, level_sum, mlmc_estimate, plan_levels, standard_mc_estimate  # noqa: E402
from .harness import fast_agreement_sweep, fit_rate, mc_mlmc_compare, strong_order_study  # noqa: E402
