"""Euler and fast (sum-of-exponentials) Euler methods on a uniform grid.

Both solvers take the exactly sampled values G(t_1..t_N) as input and work on
one path, shape ``(N,)``, or a batch of paths, shape ``(S, N)``; the state
array returned has one extra column for x_0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, GridMismatch, NonFinite, SoeMismatch
from .model import Grid, ModelSpec
from .soe import SoeApproximation, build_soe

METHODS = ("euler", "fast_euler")


@dataclass(frozen=True, eq=False)
class PathSolution:
    grid: Grid
    values: np.ndarray
    method: str
    g_path: np.ndarray
    tolerance: float | None = None

    @property
    def endpoint(self):
        return self.values[..., -1]


@dataclass(eq=False)
class FastState:
    """History compressed per exponential mode, one row per path."""

    modes: np.ndarray

    @classmethod
    def start(cls, n_paths: int, m_exp: int) -> FastState:
        return cls(np.zeros((n_paths, m_exp)))


def kernel_weight(n: int, j: int, alpha: float, stepsize: float) -> float:
    """int_{t_{j-1}}^{t_j} (t_n - s)^(alpha-1) ds = h^alpha/alpha [(n-j+1)^alpha - (n-j)^alpha]."""
    if not 1 <= j <= n:
        raise DomainError("need 1 <= j <= n")
    k = n - j
    return stepsize**alpha / alpha * ((k + 1) ** alpha - k**alpha)


def memory_coefficients(n_steps: int, alpha: float, stepsize: float) -> np.ndarray:
    """c_p = kernel_weight(n, n-p) / Gamma(alpha) for p = 0..N-1."""
    p = np.arange(n_steps, dtype=float)
    lead = stepsize**alpha / gamma_fn(alpha + 1.0)
    return lead * ((p + 1.0) ** alpha - p**alpha)


def _as_batch(g_path, n_steps):
    g = np.asarray(g_path, dtype=float)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    if g.shape[-1] != n_steps:
        raise DomainError(f"noise path has {g.shape[-1]} values, grid has {n_steps} steps")
    return g, single


def _check_finite(x, n):
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite state at step {n}")


def euler_solve(model: ModelSpec, grid: Grid, g_path) -> PathSolution:
    """x_n = x0 + 1/Gamma(alpha) sum_{j<=n} b(x_{j-1}) w_{n,j} + G(t_n).  O(N^2) per path."""
    model.require_valid()
    n_steps = grid.n_steps
    g, single = _as_batch(g_path, n_steps)
    coef_rev = memory_coefficients(n_steps, model.alpha, grid.stepsize)[::-1].copy()
    drift, x0 = model.drift, float(model.x0)
    x = np.empty((g.shape[0], n_steps + 1))
    x[:, 0] = x0
    bhist = np.empty((g.shape[0], n_steps))
    for n in range(1, n_steps + 1):
        bhist[:, n - 1] = drift(x[:, n - 1])
        mem = bhist[:, :n] @ coef_rev[n_steps - n:]
        x[:, n] = x0 + mem + g[:, n - 1]
        _check_finite(x[:, n], n)
    values = x[0] if single else x
    return PathSolution(grid, values, "euler", np.asarray(g_path))


def default_soe(alpha: float, grid: Grid) -> SoeApproximation | None:
    """SOE with tolerance h^alpha and truncation h; ``None`` for a single step."""
    if grid.n_steps == 1:
        return None
    h = grid.stepsize
    return _cached_soe(float(alpha), float(h**alpha), float(h), float(grid.horizon))


@lru_cache(maxsize=64)
def _cached_soe(alpha, tolerance, truncation, horizon):
    return build_soe(alpha, tolerance, truncation, horizon)


def fast_euler_solve(model: ModelSpec, grid: Grid, soe: SoeApproximation | None, g_path) -> PathSolution:
    """Euler method with the history kernel replaced by a sum of exponentials.

    The last step keeps the exact weight h^alpha/Gamma(alpha+1); older steps
    are carried in one decaying mode per exponential, so a path costs
    O(N m_exp).  ``soe`` may be ``None`` only for a one-step grid.
    """
    model.require_valid()
    n_steps, h = grid.n_steps, grid.stepsize
    if soe is None:
        if n_steps > 1:
            raise SoeMismatch("an SOE approximation is needed for more than one step")
        tau = omega = np.zeros(0)
        tol = None
    else:
        if soe.truncation > h * (1 + 1e-12):
            raise SoeMismatch(f"SOE truncation {soe.truncation} exceeds stepsize {h}")
        if soe.horizon < grid.horizon * (1 - 1e-12):
            raise SoeMismatch("SOE horizon shorter than the grid")
        if abs(soe.alpha - model.alpha) > 1e-14:
            raise SoeMismatch("SOE built for a different alpha")
        tau, omega, tol = soe.nodes, soe.weights, soe.tolerance
    g, single = _as_batch(g_path, n_steps)
    lead = h**model.alpha / gamma_fn(model.alpha + 1.0)
    decay = np.exp(-tau * h)
    gain = (decay - decay * decay) / (tau * gamma_fn(model.alpha))
    drift, y0 = model.drift, float(model.x0)
    y = np.empty((g.shape[0], n_steps + 1))
    y[:, 0] = y0
    state = FastState.start(g.shape[0], len(tau))
    zeta = state.modes
    for n in range(1, n_steps + 1):
        b_prev = drift(y[:, n - 1])
        mem = zeta @ omega + lead * b_prev
        y[:, n] = y0 + mem + g[:, n - 1]
        _check_finite(y[:, n], n)
        zeta *= decay
        zeta += b_prev[:, None] * gain
    values = y[0] if single else y
    return PathSolution(grid, values, "fast_euler", np.asarray(g_path), tol)


def solve(model: ModelSpec, grid: Grid, g_path, method: str = "euler", soe=None) -> PathSolution:
    if method == "euler":
        return euler_solve(model, grid, g_path)
    if method == "fast_euler":
        if soe is None:
            soe = default_soe(model.alpha, grid)
        return fast_euler_solve(model, grid, soe, g_path)
    raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")


def coupled_pair_solve(model: ModelSpec, fine: Grid, coarse: Grid, method: str, shared_noise,
                       soe_fine=None, soe_coarse=None) -> tuple[PathSolution, PathSolution]:
    """Solve on nested grids driven by the same fine-grid G sample.

    The coarse solve reads G at every M-th fine time, M = N_fine / N_coarse.
    """
    if fine.horizon != coarse.horizon or fine.n_steps % coarse.n_steps:
        raise GridMismatch("coarse grid is not nested in the fine grid")
    ratio = fine.n_steps // coarse.n_steps
    if ratio < 2:
        raise GridMismatch("refinement factor must be at least 2")
    g = np.asarray(shared_noise, dtype=float)
    fine_sol = solve(model, fine, g, method, soe_fine)
    coarse_sol = solve(model, coarse, g[..., ratio - 1::ratio], method, soe_coarse)
    return fine_sol, coarse_sol


def fractional_ode_reference(lam: float, alpha: float, x0: float, t: float) -> float:
    """Exact x(t) = E_alpha(lam t^alpha) x0 of D^alpha x = lam x (sigma = 0)."""
    from .model import mittag_leffler

    return mittag_leffler(alpha, 1.0, lam * t**alpha) * x0


__all__ = [
    "PathSolution", "FastState", "kernel_weight", "memory_coefficients", "euler_solve", "fast_euler_solve",
    "default_soe", "solve", "coupled_pair_solve", "fractional_ode_reference", "METHODS",
]
