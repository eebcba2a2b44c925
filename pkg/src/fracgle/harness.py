"""Experiments: strong-order studies, fast/slow agreement, MLMC versus MC.

Every experiment draws G exactly on its finest grid and obtains coarser
noise by restriction, so all grids see the same Brownian path.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateFit, DomainError
from .mlmc import (
    DEFAULT_MAX_STEPS, McResult, MlmcResult, Payoff, _pair_cost, calibrate_constants, matched_mc_cost,
    mlmc_estimate, plan_levels, standard_mc_estimate,
)
from .model import Drift, Grid, ModelSpec, RateSpec, theoretical_rate
from .noise import NoiseSeed, Role, build_g_sampler, g_covariance, restrict, sample_g
from .soe import build_soe
from .solver import euler_solve, fast_euler_solve

EXPERIMENTS = ("soe", "simulate", "strong-order", "fast-agreement", "mlmc", "mc-compare")


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float


def fit_rate(stepsizes, errors) -> RateFit:
    """Least-squares line through (ln h, ln error)."""
    h = np.asarray(stepsizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.shape != e.shape or h.size < 3:
        raise DegenerateFit("need at least three (stepsize, error) pairs")
    if np.any(e <= 0) or np.any(h <= 0) or not np.all(np.isfinite(e)):
        raise DegenerateFit("errors and stepsizes must be positive and finite")
    res = stats.linregress(np.log(h), np.log(e))
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr))


def fit_rate_log_corrected(stepsizes, errors) -> RateFit:
    """Fit error ~ C h^p |ln h|, i.e. a power fit of error / |ln h|."""
    h = np.asarray(stepsizes, dtype=float)
    return fit_rate(h, np.asarray(errors, dtype=float) / np.abs(np.log(h)))


# ---------------------------------------------------------------------------
# strong order
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StrongOrderReport:
    """Errors against a finer coupled Euler solution.

    ``errors`` is sqrt(E max_n |x_n - x_ref(t_n)|^2) with ``stderrs`` from
    the delta method; ``errors_sup_l2`` is sup_n sqrt(E |x_n - x_ref(t_n)|^2),
    the smaller functional, reported alongside with its own slope.
    """

    model: ModelSpec
    stepsizes: tuple[float, ...]
    errors: tuple[float, ...]
    stderrs: tuple[float, ...]
    errors_sup_l2: tuple[float, ...]
    fitted_slope: float
    slope_stderr: float
    log_corrected_slope: float
    sup_l2_slope: float
    theoretical: RateSpec
    samples: int
    reference_stepsize: float
    monotone: bool
    method: str = "euler"

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.as_dict()
        d["theoretical"] = {"exponent": self.theoretical.exponent, "log_factor": self.theoretical.log_factor}
        for k in ("stepsizes", "errors", "stderrs", "errors_sup_l2"):
            d[k] = list(d[k])
        return d


def _solve(method, model, grid, g):
    if method == "euler":
        return euler_solve(model, grid, g).values
    if grid.n_steps == 1:
        return fast_euler_solve(model, grid, None, g).values
    h = grid.stepsize
    soe = build_soe(model.alpha, h**model.alpha, h, grid.horizon)
    return fast_euler_solve(model, grid, soe, g).values


def strong_order_study(model: ModelSpec, k_range=(4, 9), samples: int = 1000, reference_refinement: int = 3,
                       seed: NoiseSeed | None = None, method: str = "euler", batch: int = 500,
                       cache_dir=None) -> StrongOrderReport:
    """Empirical strong order on grids h_k = T 2^-k, k in ``k_range`` (inclusive).

    Each sample draws G on the reference grid T 2^-(k_max + reference_refinement),
    solves there, and compares every coarse solve (driven by the restricted G)
    at the shared times.  Zero errors (zero drift) yield nan slopes.
    """
    model.require_valid()
    k_min, k_max = int(k_range[0]), int(k_range[-1])
    if k_min < 0 or k_max - k_min < 2:
        raise DomainError("k_range needs at least three levels")
    if samples < 2 or reference_refinement < 1:
        raise DomainError("need samples >= 2 and reference_refinement >= 1")
    seed = NoiseSeed(0) if seed is None else seed
    ks = list(range(k_min, k_max + 1))
    ref = Grid(2 ** (k_max + reference_refinement), model.horizon)
    sampler = build_g_sampler(ref, model, cache_dir=cache_dir)
    pointwise = {k: np.zeros(2**k + 1) for k in ks}
    path_max = {k: np.empty(samples) for k in ks}
    for start in range(0, samples, batch):
        n = min(batch, samples - start)
        g = sample_g(sampler, seed.at(sample_index=seed.sample_index + start), n_samples=n)
        x_ref = _solve(method, model, ref, g)
        for k in ks:
            factor = ref.n_steps // 2**k
            x = _solve(method, model, Grid(2**k, model.horizon), restrict(g, factor))
            d2 = (x - x_ref[:, ::factor]) ** 2
            pointwise[k] += d2.sum(axis=0)
            path_max[k][start:start + n] = d2.max(axis=1)
    errors, stderrs, sup_l2 = [], [], []
    for k in ks:
        m2 = float(np.mean(path_max[k]))
        err = math.sqrt(m2)
        errors.append(err)
        se_m2 = float(np.std(path_max[k], ddof=1)) / math.sqrt(samples)
        stderrs.append(se_m2 / (2 * err) if err > 0 else 0.0)
        sup_l2.append(math.sqrt(float(np.max(pointwise[k])) / samples))
    h = [model.horizon * 2.0**-k for k in ks]
    if all(e > 0 for e in errors):
        fit = fit_rate(h, errors)
        slope, slope_se = fit.slope, fit.stderr
        log_slope = fit_rate_log_corrected(h, errors).slope
        l2_slope = fit_rate(h, sup_l2).slope
    else:
        slope = slope_se = log_slope = l2_slope = float("nan")
    monotone = all(errors[i + 1] <= errors[i] + 2 * (stderrs[i] + stderrs[i + 1]) for i in range(len(ks) - 1))
    return StrongOrderReport(model, tuple(h), tuple(errors), tuple(stderrs), tuple(sup_l2), slope, slope_se,
                             log_slope, l2_slope, theoretical_rate(model.hurst, model.alpha), samples,
                             ref.stepsize, monotone, method)


# ---------------------------------------------------------------------------
# fast versus slow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgreementRow:
    tolerance: float
    m_exp: int
    max_path_gap: float

    @property
    def ratio(self) -> float:
        return self.max_path_gap / self.tolerance


@dataclass(frozen=True)
class AgreementReport:
    rows: tuple[AgreementRow, ...]
    nonincreasing: bool
    ratio_spread: float

    def as_dict(self) -> dict:
        return {
            "rows": [dict(tolerance=r.tolerance, m_exp=r.m_exp, max_path_gap=r.max_path_gap, ratio=r.ratio)
                     for r in self.rows],
            "nonincreasing": self.nonincreasing,
            "ratio_spread": self.ratio_spread,
        }


def fast_agreement_sweep(model: ModelSpec, grid: Grid, tolerances, seed: NoiseSeed | None = None,
                         g_path=None) -> AgreementReport:
    """max_n |y_n - x_n| between fast and plain Euler on one G path, per SOE tolerance."""
    tols = [float(t) for t in tolerances]
    if any(b >= a for a, b in zip(tols, tols[1:])):
        raise DomainError("tolerances must be strictly decreasing")
    if g_path is None:
        seed = NoiseSeed(0) if seed is None else seed
        g_path = sample_g(build_g_sampler(grid, model), seed)
    x = euler_solve(model, grid, g_path).values
    rows = []
    for tol in tols:
        if grid.n_steps == 1:
            soe, m = None, 0
        else:
            soe = build_soe(model.alpha, tol, grid.stepsize, grid.horizon)
            m = soe.m_exp
        y = fast_euler_solve(model, grid, soe, g_path).values
        rows.append(AgreementRow(tol, m, float(np.max(np.abs(y - x)))))
    gaps = [r.max_path_gap for r in rows]
    nonincreasing = all(b <= a for a, b in zip(gaps, gaps[1:]))
    ratios = [r.ratio for r in rows if r.max_path_gap > 0]
    spread = max(ratios) / min(ratios) if ratios else 1.0
    return AgreementReport(tuple(rows), nonincreasing, spread)


# ---------------------------------------------------------------------------
# MLMC versus plain MC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompareRow:
    accuracy: float
    levels: int
    mlmc_estimate: float
    mlmc_cost: float
    mlmc_error: float
    mc_estimate: float
    mc_cost: float
    mc_error: float
    mc_samples: int
    mc_stepsize: float


@dataclass(frozen=True)
class CompareReport:
    rows: tuple[CompareRow, ...]
    reference: McResult
    constants: tuple[float, float, float]
    cost_slope: float
    mlmc_results: tuple[MlmcResult, ...] = field(repr=False, default=())

    def as_dict(self) -> dict:
        return {
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "reference": {"estimate": self.reference.estimate, "std_error": self.reference.std_error,
                          "samples": self.reference.samples, "stepsize": self.reference.stepsize},
            "constants": list(self.constants),
            "cost_slope": self.cost_slope,
        }


def mlmc_model_cost(plan, alpha: float) -> float:
    """Model-unit cost of running ``plan``; equals MlmcResult.total_cost."""
    return float(sum(n * _pair_cost(alpha, level, plan.refinement) for level, n in enumerate(plan.samples)))


def reference_estimate(model: ModelSpec, payoff, seed: NoiseSeed, stepsize: float = 2.0**-11,
                       samples: int = 100_000, cache_dir=None) -> McResult:
    return standard_mc_estimate(model, payoff, stepsize, samples, seed, role=Role.REFERENCE, cache_dir=cache_dir)


def mc_mlmc_compare(model: ModelSpec, payoff, accuracies, seed: NoiseSeed | None = None, refinement: int = 2,
                    rho: float | None = None, constants=None, reference: McResult | None = None,
                    reference_stepsize: float = 2.0**-11, reference_samples: int = 100_000,
                    max_steps: int = DEFAULT_MAX_STEPS, cache_dir=None) -> CompareReport:
    """Run MLMC and an equally accurate single-level MC for every target accuracy.

    The MC baseline uses the finest MLMC stepsize and 1.5 Var(P) / eps^2
    samples; both are scored against a brute-force reference.
    """
    payoff = Payoff.parse(payoff)
    seed = NoiseSeed(0) if seed is None else seed
    if constants is None:
        constants = calibrate_constants(model, payoff, refinement, rho, seed)
    constants = tuple(float(c) for c in constants)
    if reference is None:
        reference = reference_estimate(model, payoff, seed, reference_stepsize, reference_samples, cache_dir)
    rows, results = [], []
    for eps in accuracies:
        plan = plan_levels(model.hurst, float(eps), refinement, rho, constants)
        res = mlmc_estimate(plan, model, payoff, seed, max_steps=max_steps, cache_dir=cache_dir)
        n, h, _ = matched_mc_cost(plan, model, constants[1])
        mc = standard_mc_estimate(model, payoff, h, n, seed, cache_dir=cache_dir)
        rows.append(CompareRow(float(eps), plan.levels, res.estimate, res.total_cost,
                               abs(res.estimate - reference.estimate), mc.estimate, mc.total_cost,
                               abs(mc.estimate - reference.estimate), n, h))
        results.append(res)
    if len(rows) >= 2:
        eps = np.log([r.accuracy for r in rows])
        slope = float(np.polyfit(eps, np.log([r.mlmc_cost for r in rows]), 1)[0])
    else:
        slope = float("nan")
    return CompareReport(tuple(rows), reference, constants, slope, tuple(results))


# ---------------------------------------------------------------------------
# Hölder scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HolderScan:
    deltas: tuple[float, ...]
    moduli: tuple[float, ...]
    slope: float
    expected: float

    @property
    def deviation(self) -> float:
        return abs(self.slope - self.expected)


def noise_holder_scan(model: ModelSpec, t: float = 0.5, deltas=None) -> HolderScan:
    """L2 modulus sqrt(E|G(t+d) - G(t)|^2) from the exact covariance; exponent H + alpha - 1."""
    model.require_valid()
    deltas = 2.0 ** -np.arange(6, 15) if deltas is None else np.asarray(deltas, dtype=float)
    mods = []
    for d in deltas:
        v = (g_covariance(t + d, t + d, model) + g_covariance(t, t, model)
             - 2.0 * g_covariance(t + d, t, model))
        mods.append(math.sqrt(max(v, 0.0)))
    fit = fit_rate(deltas, mods)
    return HolderScan(tuple(deltas), tuple(mods), fit.slope, model.hurst + model.alpha - 1.0)


def drift_holder_scan(model: ModelSpec, n_steps: int = 2**12, samples: int = 200, t: float = 0.0,
                      seed: NoiseSeed | None = None, deltas=None) -> HolderScan:
    """L2 modulus of the drift integral term x - x0 - G along Euler paths; exponent alpha.

    The default base point t = 0 is where the bound is attained: there the
    term behaves like b(x0) d^alpha / Gamma(alpha + 1).  Away from 0 it is
    smoother.  Paths with b = 0 have no drift term, so the model needs a
    non-zero drift.
    """
    model.require_valid()
    if model.drift == Drift.zero():
        raise DomainError("drift term is identically zero")
    seed = NoiseSeed(0) if seed is None else seed
    grid = Grid(n_steps, model.horizon)
    g = sample_g(build_g_sampler(grid, model), seed, n_samples=samples)
    x = euler_solve(model, grid, g).values
    drift_term = x[:, 1:] - model.x0 - g
    drift_term = np.concatenate([np.zeros((samples, 1)), drift_term], axis=1)
    h = grid.stepsize
    if deltas is None:
        deltas = h * 2.0 ** np.arange(0, 8)
    deltas = np.asarray(deltas, dtype=float)
    i0 = round(t / h)
    mods = []
    for d in deltas:
        k = round(d / h)
        if k < 1 or i0 + k > n_steps:
            raise DomainError("delta outside the grid")
        mods.append(math.sqrt(float(np.mean((drift_term[:, i0 + k] - drift_term[:, i0]) ** 2))))
    fit = fit_rate(deltas, mods)
    return HolderScan(tuple(deltas), tuple(mods), fit.slope, model.alpha)
