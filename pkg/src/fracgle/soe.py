"""Sum-of-exponentials approximation of the power kernel t^(alpha-1).

Starting point is the Laplace-type representation

    t^(alpha-1) = 1/Gamma(1-alpha) int_0^inf exp(-t s) s^(-alpha) ds,

cut off at an upper limit S and discretised with one Gauss-Jacobi panel on
[0, 2^j0] (absorbing s^(-alpha)) followed by dyadic Gauss-Legendre panels
[2^j, 2^(j+1)] up to S.  Every node is a decay rate tau_i and every weighted
integrand value a positive coefficient omega_i.

The cutoff is placed so that the neglected tail is about half the tolerance
at t = kappa.  The node count of each panel is the smallest one whose
quadrature error stays below a share of tolerance * kappa / T: the tail
error is concentrated within a few kappa of the origin, whereas quadrature
error is spread over all of [kappa, T], and a solver integrates the kernel
over the whole history.  The approximation error is then
dominated by the smooth, one-signed tail term and scales with the
tolerance instead of jumping with the integer node counts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammainccinv

from .errors import CertificationFailure, DomainError
from .quadrature import gauss_jacobi, gauss_legendre

TAIL_SHARE = 0.5
QUAD_SHARE = 0.05
CERT_POINTS = 10_000


@dataclass(frozen=True, eq=False)
class SoeApproximation:
    alpha: float
    tolerance: float
    truncation: float
    horizon: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def m_exp(self) -> int:
        return len(self.nodes)

    def __call__(self, t):
        return eval_soe(self, t)

    def to_json(self) -> str:
        return json.dumps({
            "alpha": self.alpha,
            "tolerance": self.tolerance,
            "truncation": self.truncation,
            "horizon": self.horizon,
            "nodes": [float(x) for x in self.nodes],
            "weights": [float(x) for x in self.weights],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> SoeApproximation:
        d = json.loads(text)
        return cls(float(d["alpha"]), float(d["tolerance"]), float(d["truncation"]),
                   float(d["horizon"]), np.array(d["nodes"], dtype=float),
                   np.array(d["weights"], dtype=float))


@dataclass(frozen=True)
class CertificationReport:
    max_error: float
    argmax: float


def eval_soe(soe: SoeApproximation, t):
    """sum_i omega_i exp(-tau_i t)."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-np.multiply.outer(t, soe.nodes)) @ soe.weights
    return out if out.ndim else float(out)


def certify_soe(soe: SoeApproximation, grid_points: int = CERT_POINTS) -> CertificationReport:
    """Max |t^(alpha-1) - SOE(t)| over a geometric grid of [kappa, T]."""
    if grid_points < 1000:
        raise DomainError("grid_points must be >= 1000")
    t = np.geomspace(soe.truncation, soe.horizon, int(grid_points))
    err = np.abs(t ** (soe.alpha - 1.0) - eval_soe(soe, t))
    k = int(np.argmax(err))
    return CertificationReport(float(err[k]), float(t[k]))


def _tail_cutoff(alpha, target, kappa, horizon):
    # tail(S) = kappa^(alpha-1) Q(1-alpha, kappa S) is the neglected part at t = kappa
    q = target * kappa ** (1.0 - alpha)
    if q >= 1.0:
        return 2.0 / horizon
    return max(gammainccinv(1.0 - alpha, q) / kappa, 2.0 / horizon)


def _panel_rule(lo, hi, n, alpha, first):
    if first:
        x, w = gauss_jacobi(n, lo, hi, left_exp=-alpha)
        return x, w
    x, w = gauss_legendre(n, lo, hi)
    return x, w * x ** (-alpha)


def _choose_nodes(lo, hi, alpha, first, budget, probe):
    """Smallest node count whose panel contribution is stable to ``budget``."""
    ref = None
    for n in range(2, 97):
        x, w = _panel_rule(lo, hi, n + 6, alpha, first)
        ref = np.exp(-np.multiply.outer(probe, x)) @ w
        x, w = _panel_rule(lo, hi, n, alpha, first)
        val = np.exp(-np.multiply.outer(probe, x)) @ w
        # Never ask for more than the panel sum can resolve in double precision.
        floor = 64 * np.finfo(float).eps * np.max(np.abs(ref))
        if np.max(np.abs(val - ref)) <= max(budget * gamma_fn(1.0 - alpha), floor):
            return x, w
    raise CertificationFailure(f"panel [{lo:g}, {hi:g}] needs more than 96 nodes")


def _construct(alpha, tolerance, kappa, horizon, tail_share, quad_share):
    upper = _tail_cutoff(alpha, tail_share * tolerance, kappa, horizon)
    j0 = math.floor(math.log2(1.0 / horizon))
    edges = [0.0, 2.0**j0]
    while edges[-1] * 2.0 < upper:
        edges.append(edges[-1] * 2.0)
    if edges[-1] < upper:
        edges.append(upper)
    panels = list(zip(edges[:-1], edges[1:]))
    probe = np.geomspace(kappa, horizon, 400)
    budget = quad_share * tolerance * min(1.0, kappa / horizon) / len(panels)
    xs, ws = [], []
    for k, (lo, hi) in enumerate(panels):
        x, w = _choose_nodes(lo, hi, alpha, k == 0, budget, probe)
        xs.append(x)
        ws.append(w)
    nodes = np.concatenate(xs)
    weights = np.concatenate(ws) / gamma_fn(1.0 - alpha)
    return SoeApproximation(alpha, tolerance, kappa, horizon, nodes, weights)


def build_soe(alpha: float, tolerance: float, truncation: float, horizon: float) -> SoeApproximation:
    """Certified SOE with |t^(alpha-1) - SOE(t)| <= tolerance on [truncation, horizon].

    Raises
    ------
    DomainError
        Unless 0 < alpha < 1, 0 < tolerance < 1 and 0 < truncation < horizon.
    CertificationFailure
        If the dense-grid check fails even after one escalation.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if not 0.0 < tolerance < 1.0:
        raise DomainError("tolerance must lie in (0, 1)")
    if not 0.0 < truncation < horizon:
        raise DomainError("need 0 < truncation < horizon")
    for tail_share, quad_share in ((TAIL_SHARE, QUAD_SHARE), (TAIL_SHARE / 2, QUAD_SHARE / 10)):
        soe = _construct(alpha, tolerance, truncation, horizon, tail_share, quad_share)
        if certify_soe(soe).max_error <= tolerance:
            return soe
    raise CertificationFailure(
        f"SOE for alpha={alpha}, eps={tolerance}, kappa={truncation}, T={horizon} failed certification")


def soe_complexity_bound(tolerance: float, truncation: float, horizon: float) -> float:
    """log(1/eps)(loglog(1/eps) + log(T/kappa)) + log(1/kappa)(loglog(1/eps) + log(1/kappa))."""
    le = math.log(1.0 / tolerance)
    lle = math.log(max(le, math.e))
    lk = math.log(1.0 / truncation)
    return le * (lle + math.log(horizon / truncation)) + abs(lk) * (lle + abs(lk))
