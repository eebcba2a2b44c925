"""Multilevel Monte Carlo for E[f(x(T))] with the fast Euler method.

Level l uses the grid h_l = M^(-l) on [0, 1].  A level-l sample is the
difference f(y_T^fine) - f(y_T^coarse) of two fast Euler solves that share
one exact G sample on the fine grid; level 0 is a one-step solve.  Level
and sample counts follow closed ceiling formulas whose three constants are
calibrated from a small pilot run.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, PlanInfeasible
from .model import Grid, ModelSpec
from .noise import NoiseSeed, Role, build_g_sampler, sample_g
from .solver import coupled_pair_solve, default_soe, solve

PAYOFF_NAMES = ("identity", "clipped", "cosine")
DEFAULT_MAX_STEPS = 2**12
PILOT_SAMPLES = 30
PILOT_LEVELS = 6
CHUNK = 2000


# ---------------------------------------------------------------------------
# payoffs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Payoff:
    """Closed registry of Lipschitz payoffs: identity, clipped:K (clip to [-K, K]), cosine."""

    name: str
    level: float = 1.0

    def __post_init__(self):
        if self.name not in PAYOFF_NAMES:
            raise DomainError(f"unknown payoff {self.name!r}; expected one of {PAYOFF_NAMES}")
        if self.name == "clipped" and not self.level > 0:
            raise DomainError("clipping level must be positive")

    @classmethod
    def parse(cls, text: str | Payoff) -> Payoff:
        if isinstance(text, Payoff):
            return text
        name, _, arg = str(text).strip().lower().partition(":")
        if name == "clipped":
            return cls(name, float(arg) if arg else 1.0)
        if arg:
            raise DomainError(f"payoff {name!r} takes no argument")
        return cls(name)

    def __str__(self) -> str:
        return f"clipped:{self.level!r}" if self.name == "clipped" else self.name

    def __call__(self, x):
        if self.name == "identity":
            return np.asarray(x, dtype=float)
        if self.name == "clipped":
            return np.clip(x, -self.level, self.level)
        return np.cos(x)

    @property
    def lipschitz(self) -> float:
        return 1.0


# ---------------------------------------------------------------------------
# level plan
# ---------------------------------------------------------------------------


def _ceil(x: float) -> int:
    # ceil that ignores floating-point noise around exact integers
    r = round(x)
    if abs(x - r) <= 1e-12 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def default_rho(hurst: float) -> float:
    return min(0.1, (1.0 - hurst) / 2.0)


@dataclass(frozen=True)
class MlmcPlan:
    hurst: float
    refinement: int
    accuracy: float
    rho: float
    constants: tuple[float, float, float]
    levels: int
    samples: tuple[int, ...]

    @property
    def stepsizes(self) -> np.ndarray:
        return float(self.refinement) ** -np.arange(self.levels + 1, dtype=float)

    @property
    def finest_steps(self) -> int:
        return self.refinement**self.levels

    def check_feasible(self, max_steps: int = DEFAULT_MAX_STEPS) -> MlmcPlan:
        if self.finest_steps > max_steps:
            raise PlanInfeasible(
                f"plan needs {self.finest_steps} steps on level {self.levels}; cap is {max_steps}")
        return self

    def as_dict(self) -> dict:
        d = asdict(self)
        d["constants"] = list(self.constants)
        d["samples"] = list(self.samples)
        return d


def plan_levels(hurst: float, accuracy: float, refinement: int = 2, rho: float | None = None,
                constants=(1.0, 1.0, 1.0)) -> MlmcPlan:
    """Number of levels and samples per level for target accuracy ``accuracy``.

    L   = ceil(log_M(3 C1 eps^-2) / (4 - 4H - 2 rho)),
    N_0 = ceil(3 C2 eps^-2),
    N_l = ceil(3 C3 eps^-2 h_l^((5-4H)/2) |ln h_l|^2 sum_{k=1..L} h_k^((3-4H)/2)).
    """
    if not 0.5 < hurst < 1.0:
        raise DomainError("hurst not in (1/2, 1)")
    if not 0.0 < accuracy < 1.0:
        raise DomainError("accuracy must lie in (0, 1)")
    if int(refinement) != refinement or refinement < 2:
        raise DomainError("refinement must be an integer >= 2")
    rho = default_rho(hurst) if rho is None else float(rho)
    if not 0.0 < rho < 1.0 - hurst:
        raise DomainError("rho must lie in (0, 1 - hurst)")
    c1, c2, c3 = (float(c) for c in constants)
    if min(c1, c2, c3) <= 0 or not all(map(math.isfinite, (c1, c2, c3))):
        raise DomainError("constants must be positive and finite")
    M, H = int(refinement), float(hurst)
    inv_eps2 = accuracy**-2.0
    levels = max(0, _ceil(math.log(3.0 * c1 * inv_eps2, M) / (4.0 - 4.0 * H - 2.0 * rho)))
    h = float(M) ** -np.arange(1, levels + 1, dtype=float)
    spread = float(np.sum(h ** ((3.0 - 4.0 * H) / 2.0)))
    samples = [_ceil(3.0 * c2 * inv_eps2)]
    for hl in h:
        n = 3.0 * c3 * inv_eps2 * hl ** ((5.0 - 4.0 * H) / 2.0) * math.log(hl) ** 2 * spread
        samples.append(max(1, _ceil(n)))
    return MlmcPlan(H, M, float(accuracy), rho, (c1, c2, c3), levels, tuple(samples))


# ---------------------------------------------------------------------------
# level sampling
# ---------------------------------------------------------------------------


def cost_units(method: str, n_steps: int, m_exp: int = 0) -> float:
    """Model cost of one path: N^2 for Euler, N * m_exp for fast Euler."""
    if method == "euler":
        return float(n_steps) ** 2
    if method == "fast_euler":
        return float(n_steps) * max(int(m_exp), 1)
    raise DomainError(f"unknown method {method!r}")


def _fast_cost(alpha: float, n_steps: int) -> float:
    soe = default_soe(alpha, Grid(n_steps))
    return cost_units("fast_euler", n_steps, 0 if soe is None else soe.m_exp)


def _level_samples(model, payoff, level, n_samples, seed, refinement, cache_dir=None):
    """Corrections P_l - P_{l-1} (P_0 on level 0) for ``n_samples`` independent draws."""
    fine = Grid(refinement**level, model.horizon)
    sampler = build_g_sampler(fine, model, cache_dir=cache_dir)
    out = np.empty(n_samples)
    for start in range(0, n_samples, CHUNK):
        k = min(CHUNK, n_samples - start)
        g = sample_g(sampler, seed.at(level=level, sample_index=seed.sample_index + start), n_samples=k)
        if level == 0:
            out[start:start + k] = payoff(solve(model, fine, g, "fast_euler").endpoint)
        else:
            coarse = Grid(refinement ** (level - 1), model.horizon)
            f, c = coupled_pair_solve(model, fine, coarse, "fast_euler", g)
            out[start:start + k] = payoff(f.endpoint) - payoff(c.endpoint)
    return out


def _pair_cost(alpha, level, refinement):
    cost = _fast_cost(alpha, refinement**level)
    if level > 0:
        cost += _fast_cost(alpha, refinement ** (level - 1))
    return cost


@dataclass(frozen=True)
class LevelStats:
    level: int
    stepsize: float
    samples_used: int
    mean_correction: float
    variance_correction: float
    cost_units: float


@dataclass(frozen=True)
class MlmcResult:
    estimate: float
    per_level: tuple[LevelStats, ...]
    total_cost: float
    std_error: float
    plan: MlmcPlan
    wall_time: float = field(default=0.0, compare=False)

    def summary(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "accuracy_target": self.plan.accuracy,
            "total_cost": self.total_cost,
            "plan": self.plan.as_dict(),
        }


def _require_regime(model: ModelSpec, allow_any_alpha: bool):
    model.require_valid()
    if model.horizon != 1.0:
        raise DomainError("MLMC mode assumes horizon T = 1")
    if not allow_any_alpha and abs(model.alpha - (2.0 - 2.0 * model.hurst)) > 1e-12:
        raise DomainError("MLMC assumes alpha = 2 - 2H; pass allow_any_alpha=True to override")


def calibrate_constants(model: ModelSpec, payoff, refinement: int = 2, rho: float | None = None,
                        seed: NoiseSeed | None = None, samples: int = PILOT_SAMPLES,
                        levels: int = PILOT_LEVELS) -> tuple[float, float, float]:
    """Pilot estimates of (C1, C2, C3); any estimate that is zero or not finite falls back to 1.

    C2 is the variance of P_0.  On levels 1..``levels``, C3 is the largest
    Var(P_l - P_{l-1}) / (h_l^(4-4H) |ln h_l|^2) and C1 the largest second
    moment E[(P_l - P_{l-1})^2] / h_l^(4-4H-2 rho), a bound on the squared bias.
    """
    payoff = Payoff.parse(payoff)
    seed = NoiseSeed(0) if seed is None else seed
    seed = seed.at(role=Role.PILOT)
    H = model.hurst
    rho = default_rho(H) if rho is None else rho
    p0 = _level_samples(model, payoff, 0, samples, seed, refinement)
    c2 = float(np.var(p0, ddof=1))
    c1 = c3 = 0.0
    for level in range(1, levels + 1):
        d = _level_samples(model, payoff, level, samples, seed, refinement)
        h = float(refinement) ** -level
        c3 = max(c3, float(np.var(d, ddof=1)) / (h ** (4 - 4 * H) * math.log(h) ** 2))
        c1 = max(c1, float(np.mean(d * d)) / h ** (4 - 4 * H - 2 * rho))
    return tuple(c if math.isfinite(c) and c > 0 else 1.0 for c in (c1, c2, c3))


def mlmc_estimate(plan: MlmcPlan, model: ModelSpec, payoff, seed: NoiseSeed,
                  allow_any_alpha: bool = False, max_steps: int = DEFAULT_MAX_STEPS,
                  cache_dir=None) -> MlmcResult:
    """Z = mean(P_0) + sum_l mean(P_l - P_{l-1}), each level with its own noise streams."""
    _require_regime(model, allow_any_alpha)
    if abs(plan.hurst - model.hurst) > 1e-15:
        raise DomainError("plan was made for a different hurst index")
    plan.check_feasible(max_steps)
    payoff = Payoff.parse(payoff)
    start = time.perf_counter()
    stats = []
    for level, n in enumerate(plan.samples):
        d = _level_samples(model, payoff, level, n, seed.at(role=Role.PRIMARY), plan.refinement, cache_dir)
        var = float(np.var(d, ddof=1)) if n > 1 else float("nan")
        cost = n * _pair_cost(model.alpha, level, plan.refinement)
        stats.append(LevelStats(level, float(plan.refinement) ** -level, n, float(np.mean(d)), var, cost))
    estimate = sum(s.mean_correction for s in stats)
    total = sum(s.cost_units for s in stats)
    se2 = sum(s.variance_correction / s.samples_used for s in stats if math.isfinite(s.variance_correction))
    return MlmcResult(estimate, tuple(stats), total, math.sqrt(se2), plan, time.perf_counter() - start)


@dataclass(frozen=True)
class McResult:
    estimate: float
    std_error: float
    total_cost: float
    samples: int
    stepsize: float
    wall_time: float = field(default=0.0, compare=False)


def standard_mc_estimate(model: ModelSpec, payoff, stepsize: float, samples: int, seed: NoiseSeed,
                         role: Role = Role.BASELINE, cache_dir=None) -> McResult:
    """Plain Monte Carlo mean of f(y_N) with fast Euler at ``stepsize``.

    ``std_error`` is nan for a single sample.
    """
    model.require_valid()
    payoff = Payoff.parse(payoff)
    n_steps = round(model.horizon / stepsize)
    if n_steps < 1 or abs(n_steps * stepsize - model.horizon) > 1e-12 * model.horizon:
        raise DomainError("stepsize must divide the horizon")
    if samples < 1:
        raise DomainError("samples must be >= 1")
    start = time.perf_counter()
    grid = Grid(n_steps, model.horizon)
    sampler = build_g_sampler(grid, model, cache_dir=cache_dir)
    seed = seed.at(role=role)
    vals = np.empty(samples)
    for s0 in range(0, samples, CHUNK):
        k = min(CHUNK, samples - s0)
        g = sample_g(sampler, seed.at(sample_index=seed.sample_index + s0), n_samples=k)
        vals[s0:s0 + k] = payoff(solve(model, grid, g, "fast_euler").endpoint)
    se = float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else float("nan")
    cost = samples * _fast_cost(model.alpha, n_steps)
    return McResult(float(np.mean(vals)), se, cost, int(samples), float(grid.stepsize),
                    time.perf_counter() - start)


def matched_mc_cost(plan: MlmcPlan, model: ModelSpec, variance: float) -> tuple[int, float, float]:
    """Samples, stepsize and model cost of single-level MC with the plan's accuracy.

    The baseline runs on the finest MLMC grid, so its bias bound is the same,
    and takes enough samples for its variance to fill the remaining 2/3 of
    the mean-square budget.
    """
    n = max(1, _ceil(1.5 * variance / plan.accuracy**2))
    steps = plan.finest_steps
    return n, 1.0 / steps, n * _fast_cost(model.alpha, steps)


# ---------------------------------------------------------------------------
# level sums
# ---------------------------------------------------------------------------


def level_sum(beta: float, gamma: float, refinement: int, levels: int) -> float:
    """sum_{l=1..L} |ln h_l|^beta h_l^gamma with h_l = M^(-l)."""
    if refinement < 2 or levels < 1 or beta < 0:
        raise DomainError("need refinement >= 2, levels >= 1 and beta >= 0")
    l = np.arange(1, levels + 1, dtype=float)
    ln_h = l * math.log(refinement)
    return float(np.sum(ln_h**beta * np.exp(-gamma * ln_h)))


def level_sum_scale(beta: float, gamma: float, refinement: int, levels: int) -> float:
    """The L-dependent factor of the bound: 1, |ln h_L|^beta L, or |ln h_L|^beta h_L^gamma."""
    ln_hl = levels * math.log(refinement)
    if gamma > 0:
        return 1.0
    if gamma == 0:
        return ln_hl**beta * levels
    return ln_hl**beta * math.exp(-gamma * ln_hl)


def level_sum_constant(beta: float, gamma: float, refinement: int) -> float:
    """A constant C(M, beta, gamma), free of L, with level_sum <= C * level_sum_scale."""
    if gamma > 0:
        # the full series; terms decay geometrically after their peak
        total, l, lnm = 0.0, 1, math.log(refinement)
        while True:
            term = (l * lnm) ** beta * refinement ** (-gamma * l)
            total += term
            if l * gamma * lnm > beta + 1 and term < 1e-17 * total:
                return total
            l += 1
    if gamma == 0:
        return 1.0
    return 1.0 / (1.0 - refinement**gamma)


def level_sum_within_bound(beta: float, gamma: float, refinement: int, levels: int) -> bool:
    return level_sum(beta, gamma, refinement, levels) <= (
        level_sum_constant(beta, gamma, refinement) * level_sum_scale(beta, gamma, refinement, levels)
        * (1 + 1e-12))


# ---------------------------------------------------------------------------
# telemetry
# ---------------------------------------------------------------------------

TELEMETRY_HEADER = ("level", "h", "samples", "mean_correction", "var_correction", "cost_units")


def _g17(x) -> str:
    return "%.17g" % x


def write_telemetry_csv(result: MlmcResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_HEADER)
        for s in result.per_level:
            w.writerow([s.level, _g17(s.stepsize), s.samples_used, _g17(s.mean_correction),
                        _g17(s.variance_correction), _g17(s.cost_units)])


def write_summary_json(result: MlmcResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def variance_decay_exponent(result: MlmcResult) -> float:
    """Least-squares slope of ln Var(P_l - P_{l-1}) against ln h_l over levels >= 1."""
    pts = [(s.stepsize, s.variance_correction) for s in result.per_level[1:]
           if s.samples_used > 1 and s.variance_correction > 0]
    if len(pts) < 2:
        raise DomainError("need at least two levels with a positive variance")
    h, v = np.array(pts).T
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])
