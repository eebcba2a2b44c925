"""Composite Gauss rules for integrands with algebraic endpoint singularities."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def _legendre(n: int):
    return roots_legendre(n)


@lru_cache(maxsize=None)
def _jacobi(n: int, a: float, b: float):
    return roots_jacobi(n, a, b)


def gauss_legendre(n: int, lo: float, hi: float):
    x, w = _legendre(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def gauss_jacobi(n: int, lo: float, hi: float, right_exp: float = 0.0, left_exp: float = 0.0):
    """Nodes/weights for int_lo^hi f(x) (hi - x)^right_exp (x - lo)^left_exp dx.

    The returned weights already include the singular factor, so the rule is
    applied as ``sum(w * f(x))``.
    """
    x, w = _jacobi(n, float(right_exp), float(left_exp))
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), w * half ** (1.0 + right_exp + left_exp)


def graded_panels(lo: float, hi: float, toward: str, ratio: float, stop: float):
    """Geometric panel breakpoints on [lo, hi] refining toward one end.

    Panel widths shrink by ``ratio`` until the innermost panel is no wider
    than ``stop``; the innermost panel is returned last.
    """
    width = hi - lo
    edges = []
    if toward == "lo":
        b = hi
        while (b - lo) > stop:
            a = lo + (b - lo) * ratio
            edges.append((a, b))
            b = a
        edges.append((lo, b))
    else:
        a = lo
        while (hi - a) > stop:
            b = hi - (hi - a) * ratio
            edges.append((a, b))
            a = b
        edges.append((a, hi))
    if width <= 0:
        return []
    return edges
