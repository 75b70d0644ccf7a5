"""Shared quadrature and smoothing helpers.

Composite Gauss rules are assembled on caller-supplied breakpoints so that
piecewise-smooth integrands (dense integrator output) are integrated segment
by segment.  Endpoint-weighted rules handle integrands with a rho**(lam-1)
factor exactly in the singular part.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=64)
def _gl_rule(n: int):
    x, w = roots_legendre(n)
    return x, w


def gauss_nodes(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _gl_rule(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def composite_gauss(breaks, a: float, b: float, n: int):
    """Composite Gauss-Legendre rule on [a, b] split at interior breakpoints.

    ``breaks`` is an increasing array; pieces of [a, b] between consecutive
    breakpoints each receive an n-point rule.  Returns (nodes, weights).
    """
    breaks = np.asarray(breaks, dtype=float)
    if b <= a:
        return np.empty(0), np.empty(0)
    cuts = [a]
    for t in breaks:
        if a < t < b:
            cuts.append(float(t))
    cuts.append(b)
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0.0:
            continue
        x, w = gauss_nodes(lo, hi, n)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


@lru_cache(maxsize=256)
def _gj_rule(n: int, beta: float):
    # weight (1+x)**beta on [-1, 1], alpha = 0
    x, w = roots_jacobi(n, 0.0, beta)
    return x, w


def gauss_jacobi_left(length: float, lam: float, n: int = 24):
    """Rule for integrals of u**(lam-1) * F(u) over [0, length], F smooth.

    Returns (nodes u_i, weights w_i) such that the integral is
    sum_i w_i F(u_i); the singular factor is absorbed exactly.
    """
    x, w = _gj_rule(n, lam - 1.0)
    half = 0.5 * length
    u = half * (1.0 + x)
    return u, w * half**lam


def smoothstep(t: float) -> float:
    """Quintic C2 step: 0 for t <= 0, 1 for t >= 1."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def poly_bump(t: float) -> float:
    """C2 bump on [0, 1], vanishing to third order at both ends, peak 1."""
    if t <= 0.0 or t >= 1.0:
        return 0.0
    return (4.0 * t * (1.0 - t)) ** 3


def poly_bump_dt(t: float) -> float:
    if t <= 0.0 or t >= 1.0:
        return 0.0
    return 3.0 * (4.0 * t * (1.0 - t)) ** 2 * 4.0 * (1.0 - 2.0 * t)
