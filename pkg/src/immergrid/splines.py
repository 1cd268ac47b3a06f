"""One-dimensional building blocks: Bernstein and Lagrange polynomials, open
uniform B-splines, Bezier extraction and dyadic subdivision.

Parametric coordinates are measured in element units, so a grid of ``n``
elements spans ``[0, n]``.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np
from scipy.interpolate import BSpline

_CLEAN = 1e-14


def _clean(a):
    a = np.asarray(a, dtype=float)
    a[np.abs(a) < _CLEAN] = 0.0
    return a


def bernstein(x, p: int, deriv: bool = False):
    """Bernstein polynomials of degree ``p`` on [0, 1] at points ``x``.

    Returns an array of shape ``(len(x), p + 1)``; with ``deriv`` also the
    first derivatives.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(p + 1)
    binom = np.array([comb(p, i) for i in k], dtype=float)
    val = binom * x[:, None] ** k * (1.0 - x[:, None]) ** (p - k)
    if not deriv:
        return val
    if p == 0:
        return val, np.zeros_like(val)
    low = bernstein(x, p - 1)
    d = np.zeros_like(val)
    d[:, 1:] += p * low
    d[:, :-1] -= p * low
    return val, d


def lagrange_nodes(p: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, p + 1)


def lagrange(x, p: int) -> np.ndarray:
    """Equispaced Lagrange polynomials of degree ``p`` on [0, 1] at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = lagrange_nodes(p)
    out = np.ones((len(x), p + 1))
    for a in range(p + 1):
        for b in range(p + 1):
            if a != b:
                out[:, a] *= (x - nodes[b]) / (nodes[a] - nodes[b])
    return out


@lru_cache(maxsize=None)
def lagrange_extraction(p: int) -> np.ndarray:
    """Matrix ``E`` with ``L_a = sum_b E[a, b] B_b`` (Bernstein to Lagrange)."""
    B = bernstein(lagrange_nodes(p), p)
    E = np.linalg.solve(B, np.eye(p + 1)).T
    E = _clean(E)
    E.setflags(write=False)
    return E


def open_knots(n: int, p: int) -> np.ndarray:
    """Open uniform knot vector on ``[0, n]`` with ``n + p`` functions."""
    return np.concatenate([np.zeros(p), np.arange(n + 1, dtype=float), np.full(p, float(n))])


@lru_cache(maxsize=None)
def bezier_extraction(n: int, p: int) -> np.ndarray:
    """Per-element extraction operators, shape ``(n, p + 1, p + 1)``.

    On element ``e`` the B-spline ``e + a`` equals
    ``sum_b E[e, a, b] * bernstein_b(x - e)``.
    """
    t = open_knots(n, p)
    xi = 0.5 - 0.5 * np.cos(np.pi * (np.arange(p + 1) + 0.5) / (p + 1))
    Bm = bernstein(xi, p)
    out = np.empty((n, p + 1, p + 1))
    for e in range(n):
        D = BSpline.design_matrix(e + xi, t, p).toarray()[:, e:e + p + 1]
        out[e] = np.linalg.solve(Bm, D).T
    out = _clean(out)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def bspline_subdivision(n: int, p: int) -> np.ndarray:
    """Two-scale matrix ``S`` of shape ``(2n + p, n + p)`` by Boehm knot insertion.

    Coarse function ``i`` equals ``sum_j S[j, i]`` times fine function ``j``,
    where the fine space has knots at all half-integers.
    """
    knots = list(open_knots(n, p))
    C = np.eye(n + p)
    for t in np.arange(n) + 0.5:
        k = int(np.searchsorted(knots, t, side="right")) - 1
        new = np.empty((C.shape[0] + 1, C.shape[1]))
        new[: k - p + 1] = C[: k - p + 1]
        new[k + 1:] = C[k:]
        for i in range(k - p + 1, k + 1):
            alpha = (t - knots[i]) / (knots[i + p] - knots[i])
            new[i] = alpha * C[i] + (1.0 - alpha) * C[i - 1]
        C = new
        knots.insert(k + 1, t)
    C = _clean(C)
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def lagrange_subdivision(n: int, p: int) -> np.ndarray:
    """Coarse-to-fine interpolation matrix ``(2np + 1, np + 1)`` for nodal bases.

    Entry ``[j, i]`` is coarse nodal function ``i`` at fine node ``j``.
    """
    xf = np.arange(2 * n * p + 1) / (2.0 * p)
    e = np.minimum(np.floor(xf).astype(int), n - 1)
    vals = lagrange(xf - e, p)
    S = np.zeros((2 * n * p + 1, n * p + 1))
    for a in range(p + 1):
        S[np.arange(len(xf)), p * e + a] += vals[:, a]
    S = _clean(S)
    S.setflags(write=False)
    return S


def bspline_values(n: int, p: int, x) -> np.ndarray:
    """Dense matrix of all open-knot B-splines at ``x`` in ``[0, n]``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, n * (1 - 1e-15))
    return BSpline.design_matrix(x, open_knots(n, p), p).toarray()
