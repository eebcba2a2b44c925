"""Problem parameters, the drift registry, grids and a few special functions.

The equation solved throughout the package is the integral form of the
overdamped generalized Langevin equation

    x(t) = x0 + 1/Gamma(alpha) int_0^t (t-s)^(alpha-1) b(x(s)) ds + G(t),
    G(t) = sigma/Gamma(alpha) int_0^t (t-s)^(alpha-1) dW_H(s),

with W_H a fractional Brownian motion of Hurst index H in (1/2, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import DomainError

# Tolerance used when deciding whether alpha sits exactly on 2 - 2H.
_BOUNDARY_TOL = 1e-12

DRIFT_NAMES = ("zero", "linear", "cosine", "bounded_well")


@dataclass(frozen=True)
class Drift:
    """Closed registry of Lipschitz drifts with analytic derivative.

    ``zero``: b = 0; ``linear``: b(x) = lam * x; ``cosine``: b(x) = cos x;
    ``bounded_well``: b(x) = -x / (1 + x^2).
    """

    name: str
    lam: float = 0.0

    def __post_init__(self):
        if self.name not in DRIFT_NAMES:
            raise DomainError(f"unknown drift {self.name!r}; expected one of {DRIFT_NAMES}")

    @classmethod
    def zero(cls) -> Drift:
        return cls("zero")

    @classmethod
    def linear(cls, lam: float) -> Drift:
        return cls("linear", float(lam))

    @classmethod
    def cosine(cls) -> Drift:
        return cls("cosine")

    @classmethod
    def bounded_well(cls) -> Drift:
        return cls("bounded_well")

    @classmethod
    def parse(cls, text: str | Drift) -> Drift:
        """Parse ``"zero"``, ``"cosine"``, ``"bounded_well"`` or ``"linear:<lam>"``."""
        if isinstance(text, Drift):
            return text
        name, _, arg = str(text).strip().lower().partition(":")
        name = name.replace("-", "_")
        if name == "linear":
            if not arg:
                raise DomainError("linear drift needs a coefficient, e.g. 'linear:-1'")
            return cls.linear(float(arg))
        if arg:
            raise DomainError(f"drift {name!r} takes no argument")
        return cls(name)

    def __str__(self) -> str:
        return f"linear:{self.lam!r}" if self.name == "linear" else self.name

    def __call__(self, x):
        if self.name == "zero":
            return np.zeros_like(x, dtype=float) if np.ndim(x) else 0.0
        if self.name == "linear":
            return self.lam * x
        if self.name == "cosine":
            return np.cos(x)
        return -x / (1.0 + x * x)

    def deriv(self, x):
        if self.name == "zero":
            return np.zeros_like(x, dtype=float) if np.ndim(x) else 0.0
        if self.name == "linear":
            return self.lam * np.ones_like(x, dtype=float) if np.ndim(x) else self.lam
        if self.name == "cosine":
            return -np.sin(x)
        x2 = x * x
        return (x2 - 1.0) / (1.0 + x2) ** 2

    @property
    def lipschitz(self) -> float:
        """sup |b'| over the real line."""
        return {"zero": 0.0, "linear": abs(self.lam), "cosine": 1.0, "bounded_well": 1.0}[self.name]


def drift_eval(drift: Drift, x):
    return drift(x)


def drift_deriv(drift: Drift, x):
    return drift.deriv(x)


@dataclass(frozen=True)
class ModelSpec:
    """Parameters (H, alpha, sigma, T, x0) and the drift of one problem instance.

    Construction does not validate; call :func:`validate` or
    :meth:`require_valid`.
    """

    hurst: float
    alpha: float
    sigma: float = 1.0
    horizon: float = 1.0
    x0: float = 0.0
    drift: Drift = field(default_factory=Drift.cosine)

    def require_valid(self) -> ModelSpec:
        result = validate(self)
        if not result:
            raise DomainError("; ".join(result.violations))
        return self

    def replace(self, **changes) -> ModelSpec:
        from dataclasses import replace

        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "hurst": self.hurst,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "horizon": self.horizon,
            "x0": self.x0,
            "drift": str(self.drift),
        }


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid


def validate(spec: ModelSpec) -> ValidationResult:
    """Check the ModelSpec invariants and collect every violation."""
    problems = []
    H, a = spec.hurst, spec.alpha
    finite = all(map(math.isfinite, (H, a, spec.sigma, spec.horizon, spec.x0)))
    if not finite:
        return ValidationResult(("parameters must be finite",))
    if not 0.5 < H < 1.0:
        problems.append("hurst not in (1/2, 1)")
    if a <= 1.0 - H:
        problems.append("alpha <= 1 - hurst")
    if a > 1.0:
        problems.append("alpha > 1")
    if spec.horizon <= 0:
        problems.append("horizon must be positive")
    if spec.sigma < 0:
        problems.append("sigma must be nonnegative")
    if not isinstance(spec.drift, Drift):
        problems.append("drift must be a registered Drift")
    return ValidationResult(tuple(problems))


@dataclass(frozen=True)
class Grid:
    """Uniform partition t_j = j*h of [0, T]."""

    n_steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError("n_steps must be a positive integer")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def stepsize(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.stepsize

    def coarsen(self, factor: int) -> Grid:
        if self.n_steps % factor:
            raise DomainError(f"{self.n_steps} steps cannot be coarsened by {factor}")
        return Grid(self.n_steps // factor, self.horizon)

    def refine(self, factor: int) -> Grid:
        return Grid(self.n_steps * factor, self.horizon)


@dataclass(frozen=True)
class RateSpec:
    exponent: float
    log_factor: bool


def theoretical_rate(hurst: float, alpha: float) -> RateSpec:
    """Strong convergence rate of the Euler method.

    ``2(H + alpha - 1)`` below ``alpha = 2 - 2H``, ``alpha`` above it, and
    ``2 - 2H`` with an extra ``|ln h|`` factor on the boundary.
    """
    if not 0.5 < hurst < 1.0:
        raise DomainError("hurst not in (1/2, 1)")
    if not 1.0 - hurst < alpha < 1.0:
        raise DomainError("alpha not in (1 - hurst, 1)")
    edge = 2.0 - 2.0 * hurst
    if abs(alpha - edge) <= _BOUNDARY_TOL:
        return RateSpec(edge, True)
    if alpha < edge:
        return RateSpec(2.0 * (hurst + alpha - 1.0), False)
    return RateSpec(alpha, False)


ML_MAX_ABS_Z = 50.0
# Cap on |z|^(1/alpha), the log of the largest series term.
ML_MAX_GROWTH = 2500.0


def mittag_leffler(alpha: float, beta: float, z: float) -> float:
    """Two-parameter Mittag-Leffler function E_{alpha,beta}(z) for real z.

    Sums the power series sum_n z^n / Gamma(alpha n + beta) and stops once a
    term drops below 1e-16 of the partial sum.  The terms are accumulated in
    multiprecision with enough guard digits to absorb the cancellation of
    alternating series, which keeps the result accurate to about 1e-12
    relative on the supported range

        0 < alpha <= 1,  beta > 0,  |z| <= 50,  |z|^(1/alpha) <= 2500.

    The last bound keeps the working precision (and run time) finite for
    small alpha, where the intermediate terms reach exp(|z|^(1/alpha)).

    Raises
    ------
    DomainError
        Outside that range.
    """
    if not (0.0 < alpha <= 1.0) or not beta > 0.0:
        raise DomainError("mittag_leffler needs 0 < alpha <= 1 and beta > 0")
    if not math.isfinite(z) or abs(z) > ML_MAX_ABS_Z:
        raise DomainError(f"mittag_leffler supports |z| <= {ML_MAX_ABS_Z}")
    if abs(z) ** (1.0 / alpha) > ML_MAX_GROWTH:
        raise DomainError(f"|z|^(1/alpha) exceeds {ML_MAX_GROWTH}; series too ill-conditioned")
    if z == 0.0:
        return 1.0 / math.gamma(beta)
    # Largest term is about exp(|z|^(1/alpha)); carry that many extra digits.
    guard = abs(z) ** (1.0 / alpha) / math.log(10.0)
    with mpmath.workdps(int(guard) + 30):
        a, b, zz = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        n = 0
        while True:
            term = power * mpmath.rgamma(a * n + b)
            total += term
            # Skip the stopping test while terms can still be growing.
            if n * alpha > abs(z) ** (1.0 / alpha) + 2 and abs(term) < 1e-16 * abs(total):
                break
            n += 1
            power *= zz
        return float(total)
