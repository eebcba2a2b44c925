"""Fractional noise: fGn paths, exact samples of G on a grid, and an oracle.

G(t) = sigma/Gamma(alpha) int_0^t (t-u)^(alpha-1) dW_H(u) is Gaussian and
centred, so it is simulated exactly from its covariance

    Cov(G(t), G(s)) = sigma^2 H(2H-1)/Gamma(alpha)^2
                      * int_0^t int_0^s (t-u)^(alpha-1) (s-v)^(alpha-1) |u-v|^(2H-2) dv du.

The u-integral has a closed form in terms of the Gauss hypergeometric
function, which leaves a one-dimensional integral with algebraic endpoint
singularities (see :func:`_unit_cov`).  The double integral is homogeneous of
degree 2(alpha+H-1), so on a uniform grid every entry is a scaled value of
the one-variable profile F(r) = I(1, r); :class:`CovarianceProfile`
tabulates F with piecewise Chebyshev interpolation on panels graded toward
r = 0 and r = 1, which makes assembling a 4096 x 4096 covariance cheap.
"""
from __future__ import annotations

import enum
import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev as cheb
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn
from scipy.special import hyp2f1

from .errors import DomainError, NotPositiveDefinite, QuadratureFailure
from .model import Grid, ModelSpec
from .quadrature import gauss_jacobi, gauss_legendre, graded_panels

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-14, 1e-12, 1e-10)


class Role(enum.IntEnum):
    """Purpose tag that keeps the streams of different experiments apart."""

    PRIMARY = 0
    ORACLE = 1
    PILOT = 2
    REFERENCE = 3
    BASELINE = 4


@dataclass(frozen=True)
class NoiseSeed:
    """Label of one reproducible random stream.

    The stream is a Philox (counter-based) generator keyed by a
    ``SeedSequence`` built from all four fields, so distinct labels give
    independent streams and equal labels give identical ones.
    """

    master_seed: int
    level: int = 0
    sample_index: int = 0
    role: Role = Role.PRIMARY

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.master_seed) & (2**64 - 1),
            spawn_key=(int(self.level), int(self.sample_index), int(self.role)),
        )
        return np.random.Generator(np.random.Philox(ss))

    def at(self, sample_index: int | None = None, level: int | None = None, role: Role | None = None):
        return NoiseSeed(
            self.master_seed,
            self.level if level is None else level,
            self.sample_index if sample_index is None else sample_index,
            self.role if role is None else role,
        )


def _normals(seed: NoiseSeed, n_samples: int, shape) -> np.ndarray:
    """Stack standard normals, one stream per sample index starting at seed."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    out = np.empty((n_samples,) + shape)
    for i in range(n_samples):
        out[i] = seed.at(sample_index=seed.sample_index + i).generator().standard_normal(shape)
    return out


# ---------------------------------------------------------------------------
# fractional Brownian motion
# ---------------------------------------------------------------------------


def fbm_covariance(t, s, hurst: float):
    """Covariance of fBm: (t^2H + s^2H - |t-s|^2H) / 2."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    h2 = 2.0 * hurst
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return out if out.ndim else float(out)


def fgn_autocovariance(lags, hurst: float, stepsize: float = 1.0):
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * stepsize**h2 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2.0 * k**h2)


def sample_fgn(n: int, stepsize: float, hurst: float, seed: NoiseSeed, n_samples: int | None = None,
               method: str = "circulant") -> np.ndarray:
    """Fractional Gaussian noise increments W_H(t_j) - W_H(t_{j-1}).

    Davies-Harte circulant embedding; if the embedding has a negative
    eigenvalue (or ``method="cholesky"``) the Toeplitz covariance is
    Cholesky-factored instead.

    Returns shape ``(n,)``, or ``(n_samples, n)`` when ``n_samples`` is given.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    batch = 1 if n_samples is None else int(n_samples)
    gamma0 = fgn_autocovariance(np.arange(n + 1), hurst)
    out = None
    if method == "circulant":
        row = np.concatenate([gamma0, gamma0[-2:0:-1]])
        lam = np.fft.fft(row).real
        if lam.min() >= -1e-10 * lam.max():
            root = np.sqrt(np.clip(lam, 0.0, None) / (2 * n))
            z = _normals(seed, batch, (2, 2 * n))
            w = np.fft.fft(root * (z[:, 0] + 1j * z[:, 1]), axis=-1)
            out = w.real[:, :n]
        else:
            log.info("circulant embedding not nonnegative; using Cholesky")
    elif method != "cholesky":
        raise DomainError(f"unknown fGn method {method!r}")
    if out is None:
        cov = scipy.linalg.toeplitz(gamma0[:n])
        chol = np.linalg.cholesky(cov)
        out = _normals(seed, batch, n) @ chol.T
    out = out * stepsize**hurst
    return out[0] if n_samples is None else out


# ---------------------------------------------------------------------------
# covariance of G
# ---------------------------------------------------------------------------


def _inner_kernel(t: float, v, alpha: float, hurst: float):
    """int_0^t (t-u)^(alpha-1) |u-v|^(2H-2) du for 0 <= v < t."""
    g = 2.0 * hurst - 1.0
    above = beta_fn(alpha, g) * (t - v) ** (alpha + g - 1.0)
    below = t ** (alpha - 1.0) * v**g / g * hyp2f1(1.0 - alpha, 1.0, 2.0 * hurst, v / t)
    return above + below


def diagonal_constant(alpha: float, hurst: float) -> float:
    """I(1, 1) = B(alpha, 2H-1) / (alpha + H - 1); I(t, t) = I(1, 1) t^(2(alpha+H-1))."""
    return beta_fn(alpha, 2.0 * hurst - 1.0) / (alpha + hurst - 1.0)


def _unit_cov_rule(t: float, s: float, alpha: float, hurst: float, n: int, ratio: float) -> float:
    # int_0^s (s-v)^(alpha-1) phi_t(v) dv.  phi_t ~ v^(2H-1) at 0 and is singular
    # at v = t, a distance t - s beyond the upper limit.
    gap = t - s
    mid = 0.5 * s
    total = 0.0
    for a, b in graded_panels(0.0, mid, "lo", ratio, stop=s * 1e-15):
        x, w = gauss_legendre(n, a, b)
        total += np.dot(w, (s - x) ** (alpha - 1.0) * _inner_kernel(t, x, alpha, hurst))
    right = graded_panels(mid, s, "hi", ratio, stop=gap)
    for a, b in right[:-1]:
        x, w = gauss_legendre(n, a, b)
        total += np.dot(w, (s - x) ** (alpha - 1.0) * _inner_kernel(t, x, alpha, hurst))
    a, b = right[-1]
    x, w = gauss_jacobi(n, a, b, right_exp=alpha - 1.0)
    total += np.dot(w, _inner_kernel(t, x, alpha, hurst))
    return float(total)


def _unit_cov(t: float, s: float, alpha: float, hurst: float, rtol: float = 1e-10) -> float:
    """The double integral I(t, s) without the constant prefactor.

    Gauss rules of 16 and 32 nodes per panel are compared; on disagreement
    the panels are regraded once more finely.
    """
    if s > t:
        t, s = s, t
    if s <= 0.0:
        return 0.0
    if s == t:
        return diagonal_constant(alpha, hurst) * t ** (2.0 * (alpha + hurst - 1.0))
    lo = _unit_cov_rule(t, s, alpha, hurst, 16, 0.25)
    hi = _unit_cov_rule(t, s, alpha, hurst, 32, 0.25)
    if abs(hi - lo) <= rtol * abs(hi):
        return hi
    lo, hi = hi, _unit_cov_rule(t, s, alpha, hurst, 32, 0.5)
    if abs(hi - lo) <= 100 * rtol * abs(hi):
        return hi
    raise QuadratureFailure(f"covariance quadrature did not converge at t={t}, s={s}")


def _prefactor(model: ModelSpec) -> float:
    H = model.hurst
    return model.sigma**2 * H * (2.0 * H - 1.0) / gamma_fn(model.alpha) ** 2


def g_covariance(t: float, s: float, model: ModelSpec) -> float:
    """Cov(G(t), G(s)), accurate to about 1e-10 relative."""
    t, s = float(t), float(s)
    if t < 0 or s < 0:
        raise DomainError("times must be nonnegative")
    if model.sigma == 0.0:
        return 0.0
    hi, lo = max(t, s), min(t, s)
    return _prefactor(model) * _unit_cov(hi, lo, model.alpha, model.hurst)


def g_variance(t, model: ModelSpec):
    """Var(G(t)) = sigma^2 H(2H-1) B(alpha,2H-1) t^(2(alpha+H-1)) / (Gamma(alpha)^2 (alpha+H-1))."""
    t = np.asarray(t, dtype=float)
    out = _prefactor(model) * diagonal_constant(model.alpha, model.hurst) * t ** (
        2.0 * (model.alpha + model.hurst - 1.0))
    return out if out.ndim else float(out)


class CovarianceProfile:
    """Piecewise Chebyshev interpolant of F(r) = I(1, r) on [r_min, 1].

    Panels are dyadic toward both ends, [2^-k-1, 2^-k] and
    [1 - 2^-k, 1 - 2^-k-1], so the algebraic singularities of F at 0 and 1
    stay one panel width away from every panel.  ``r = 1`` uses the exact
    diagonal value.
    """

    def __init__(self, alpha: float, hurst: float, r_min: float, degree: int = 16):
        if not 0.0 < r_min < 0.5:
            raise DomainError("r_min must lie in (0, 1/2)")
        self.alpha, self.hurst, self.r_min, self.degree = alpha, hurst, r_min, degree
        k_max = int(math.ceil(math.log2(1.0 / r_min)))
        left = [2.0**-k for k in range(k_max, 0, -1)]
        right = [1.0 - 2.0**-k for k in range(2, k_max + 2)]
        self.breaks = np.array(left + right)
        f = np.vectorize(lambda r: _unit_cov(1.0, r, alpha, hurst))
        coefs = []
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            c = cheb.chebinterpolate(lambda x: f(a + 0.5 * (b - a) * (x + 1.0)), degree)
            coefs.append(c)
        self.coefs = np.array(coefs)
        self._self_check(f)

    def _self_check(self, f):
        a, b = self.breaks[:-1], self.breaks[1:]
        probe = a + 0.37 * (b - a)
        exact = f(probe)
        err = np.max(np.abs(self(probe) - exact) / np.abs(exact))
        if err > 1e-9:
            raise QuadratureFailure(f"covariance profile interpolation error {err:.2e}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        one = r >= 1.0
        zero = r <= 0.0
        if np.any((r < self.r_min) & ~zero) or np.any(r > 1.0):
            raise DomainError("ratio outside the tabulated range")
        inner = ~(one | zero)
        x = r[inner]
        idx = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.coefs) - 1)
        a = self.breaks[idx]
        b = self.breaks[idx + 1]
        u = 2.0 * (x - a) / (b - a) - 1.0
        # Clenshaw with per-point coefficient rows
        c = self.coefs[idx]
        b1 = np.zeros_like(u)
        b2 = np.zeros_like(u)
        for k in range(self.degree, 0, -1):
            b1, b2 = 2.0 * u * b1 - b2 + c[:, k], b1
        out[inner] = u * b1 - b2 + c[:, 0]
        out[one] = diagonal_constant(self.alpha, self.hurst)
        out[zero] = 0.0
        return out


@lru_cache(maxsize=8)
def _profile(alpha: float, hurst: float, k_min: int) -> CovarianceProfile:
    return CovarianceProfile(alpha, hurst, 2.0**-k_min)


def unit_covariance_matrix(n_steps: int, alpha: float, hurst: float, block: int = 256) -> np.ndarray:
    """K[i-1, j-1] = I(i, j) for integer times i, j = 1..n (unit stepsize, no prefactor)."""
    n = int(n_steps)
    out = np.empty((n, n))
    if n == 1:
        out[0, 0] = diagonal_constant(alpha, hurst)
        return out
    prof = _profile(alpha, hurst, max(14, int(math.ceil(math.log2(n))) + 1))
    expo = 2.0 * (alpha + hurst - 1.0)
    idx = np.arange(1, n + 1, dtype=float)
    for start in range(0, n, block):
        rows = idx[start:start + block]
        ratio = np.minimum(idx[None, :] / rows[:, None], 1.0)
        vals = prof(ratio) * rows[:, None] ** expo
        out[start:start + block] = vals
    for i in range(n - 1):
        out[i, i + 1:] = out[i + 1:, i]
    return out


# ---------------------------------------------------------------------------
# exact sampler
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GProcessSampler:
    """Exact Gaussian sampler for (G(t_1), ..., G(t_N)).

    The stored arrays are at unit scale (sigma = 1, h = 1); ``covariance``
    and ``factor`` apply ``scale = sigma * h^(alpha+H-1)``.
    """

    grid: Grid
    model: ModelSpec
    unit_factor: np.ndarray = field(repr=False)
    jitter_used: float = 0.0

    @property
    def scale(self) -> float:
        m = self.model
        return m.sigma * self.grid.stepsize ** (m.alpha + m.hurst - 1.0) * math.sqrt(
            m.hurst * (2 * m.hurst - 1)) / gamma_fn(m.alpha)

    @property
    def factor(self) -> np.ndarray:
        return self.scale * self.unit_factor

    @property
    def covariance(self) -> np.ndarray:
        n = self.grid.n_steps
        if self.model.sigma == 0.0:
            return np.zeros((n, n))
        return self.scale**2 * unit_covariance_matrix(n, self.model.alpha, self.model.hurst)


_FACTOR_MAGIC = b"FGLECHOL"
_FACTOR_VERSION = 1
_HEADER = struct.Struct("<8sIQddd")


def factor_cache_key(n_steps: int, alpha: float, hurst: float) -> str:
    blob = struct.pack("<Qdd", n_steps, alpha, hurst)
    return hashlib.sha256(blob).hexdigest()[:24]


def save_factor(path, n_steps: int, alpha: float, hurst: float, jitter: float, factor: np.ndarray):
    """Write a unit-scale Cholesky factor.

    Layout (little-endian): magic ``FGLECHOL``, uint32 version, uint64 N,
    float64 alpha, float64 hurst, float64 jitter, then the N(N+1)/2 entries
    of the lower triangle in row-major order as float64.
    """
    rows, cols = np.tril_indices(n_steps)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_FACTOR_MAGIC, _FACTOR_VERSION, n_steps, alpha, hurst, jitter))
        fh.write(np.ascontiguousarray(factor[rows, cols], dtype="<f8").tobytes())


def load_factor(path):
    """Inverse of :func:`save_factor`; returns (n_steps, alpha, hurst, jitter, factor)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, n, alpha, hurst, jitter = _HEADER.unpack(head)
        if magic != _FACTOR_MAGIC or version != _FACTOR_VERSION:
            raise DomainError(f"{path}: not a factor cache file")
        packed = np.frombuffer(fh.read(), dtype="<f8")
    if packed.size != n * (n + 1) // 2:
        raise DomainError(f"{path}: truncated factor cache")
    factor = np.zeros((n, n))
    factor[np.tril_indices(n)] = packed
    return n, alpha, hurst, jitter, factor


def _factorize(cov: np.ndarray):
    diag_max = float(np.max(np.diag(cov)))
    for rel in JITTER_LADDER:
        jitter = rel * diag_max
        try:
            mat = cov + jitter * np.eye(len(cov)) if jitter else cov
            return scipy.linalg.cholesky(mat, lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("covariance not positive definite even with maximal jitter")


@lru_cache(maxsize=4)
def _unit_factor(n_steps: int, alpha: float, hurst: float):
    cov = unit_covariance_matrix(n_steps, alpha, hurst)
    factor, jitter = _factorize(cov)
    del cov
    factor.setflags(write=False)
    return factor, jitter


def build_g_sampler(grid: Grid, model: ModelSpec, cache_dir=None) -> GProcessSampler:
    """Assemble and factor the covariance of G on ``grid``.

    With ``cache_dir`` the unit-scale factor is read from / written to a
    binary file keyed by (N, alpha, H); sigma and T only rescale it.
    """
    model.require_valid()
    if grid.horizon != model.horizon:
        raise DomainError("grid horizon differs from model horizon")
    n = grid.n_steps
    if model.sigma == 0.0:
        return GProcessSampler(grid, model, np.zeros((n, n)), 0.0)
    a, H = float(model.alpha), float(model.hurst)
    if cache_dir is not None:
        path = Path(cache_dir) / f"gfactor-{factor_cache_key(n, a, H)}.bin"
        if path.exists():
            _, _, _, jitter, factor = load_factor(path)
            return GProcessSampler(grid, model, factor, jitter)
    factor, jitter = _unit_factor(n, a, H)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_factor(path, n, a, H, jitter, factor)
    return GProcessSampler(grid, model, factor, jitter)


def sample_g(sampler: GProcessSampler, seed: NoiseSeed, n_samples: int | None = None) -> np.ndarray:
    """G(t_1..t_N) as ``factor @ z``; ``z`` comes from the stream of ``seed``.

    With ``n_samples`` the rows use sample indices ``seed.sample_index + i``.
    """
    n = sampler.grid.n_steps
    batch = 1 if n_samples is None else int(n_samples)
    if sampler.model.sigma == 0.0:
        out = np.zeros((batch, n))
    else:
        z = _normals(seed, batch, n)
        out = z @ sampler.unit_factor.T
        out *= sampler.scale
    return out[0] if n_samples is None else out


def sample_g_convolution_oracle(grid: Grid, model: ModelSpec, refinement: int, seed: NoiseSeed,
                                n_samples: int | None = None) -> np.ndarray:
    """Riemann-Stieltjes approximation of G on a refined grid (validation only).

    Each grid step is cut into ``refinement`` substeps of width d; the kernel
    is evaluated half a substep after the left end of each substep,
    G(t_n) ~ sigma/Gamma(alpha) sum_k ((nR - k + 1/2) d)^(alpha-1) dW_k.
    """
    if refinement < 1:
        raise DomainError("refinement must be >= 1")
    n, R = grid.n_steps, int(refinement)
    batch = 1 if n_samples is None else int(n_samples)
    if model.sigma == 0.0:
        out = np.zeros((batch, n))
        return out[0] if n_samples is None else out
    m = n * R
    d = grid.stepsize / R
    dw = sample_fgn(m, d, model.hurst, seed.at(role=Role.ORACLE), n_samples=batch)
    if model.alpha == 1.0:
        path = np.cumsum(dw, axis=-1)
    else:
        kern = ((np.arange(m) + 0.5) * d) ** (model.alpha - 1.0)
        size = 2 * m
        path = np.fft.irfft(np.fft.rfft(dw, size, axis=-1) * np.fft.rfft(kern, size), size, axis=-1)[:, :m]
    out = model.sigma / gamma_fn(model.alpha) * path[:, R - 1::R]
    return out[0] if n_samples is None else out


def restrict(g_fine: np.ndarray, factor: int) -> np.ndarray:
    """Values at every ``factor``-th grid time (the coarse-grid G sample)."""
    return np.asarray(g_fine)[..., factor - 1::factor]
