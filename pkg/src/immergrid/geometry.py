"""Implicit geometry: composable level sets and cell/segment classification.

The physical domain is ``{x : psi(x) >= 0}``. Values of exactly zero count as
inside, so a grazing interface never drops an element.

Level sets evaluate on arrays of shape ``(..., 2)`` and return ``(...)``.
They compose with ``&`` (intersection, pointwise min), ``|`` (union, pointwise
max) and ``~`` (complement, negation).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SignError

__all__ = [
    "LevelSet", "HalfPlane", "Disc", "PolarStar", "Rectangle", "Constant",
    "Affine", "Union", "Intersection", "Complement", "FunctionLevelSet",
    "CellState", "evaluate", "classify_cell", "intersect_edge",
    "star_levelset",
]


class LevelSet:
    """Base class; subclasses implement :meth:`__call__` on point arrays."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __and__(self, other):
        return Intersection((self, other))

    def __or__(self, other):
        return Union((self, other))

    def __invert__(self):
        return Complement(self)


def _xy(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


@dataclass(frozen=True)
class HalfPlane(LevelSet):
    """``psi = normal . x - offset``; inside is the side the normal points to."""
    normal: tuple
    offset: float = 0.0

    def __call__(self, x):
        px, py = _xy(x)
        return self.normal[0] * px + self.normal[1] * py - self.offset


@dataclass(frozen=True)
class Disc(LevelSet):
    """``psi = radius - |x - center|``."""
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def __call__(self, x):
        px, py = _xy(x)
        return self.radius - np.hypot(px - self.center[0], py - self.center[1])


@dataclass(frozen=True)
class PolarStar(LevelSet):
    """``psi = c0 + c1 sin(k theta) - r`` in polar coordinates about ``center``.

    ``theta`` comes from ``arctan2``, which returns 0 at the center itself.
    """
    c0: float = 0.5
    c1: float = 0.1
    k: float = 5.0
    center: tuple = (0.0, 0.0)

    def __call__(self, x):
        px, py = _xy(x)
        dx = px - self.center[0]
        dy = py - self.center[1]
        theta = np.arctan2(dy, dx)
        return self.c0 + self.c1 * np.sin(self.k * theta) - np.hypot(dx, dy)


@dataclass(frozen=True)
class Rectangle(LevelSet):
    """Axis-aligned box ``lower <= x <= upper`` as a min of four half-planes."""
    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)

    def __call__(self, x):
        px, py = _xy(x)
        return np.minimum(
            np.minimum(px - self.lower[0], self.upper[0] - px),
            np.minimum(py - self.lower[1], self.upper[1] - py),
        )


@dataclass(frozen=True)
class Constant(LevelSet):
    value: float = 1.0

    def __call__(self, x):
        px, _ = _xy(x)
        return np.full(px.shape, float(self.value))


@dataclass(frozen=True)
class Affine(LevelSet):
    """Pull back ``child`` through ``x -> matrix @ x + shift``."""
    child: LevelSet
    matrix: tuple = ((1.0, 0.0), (0.0, 1.0))
    shift: tuple = (0.0, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        m = np.asarray(self.matrix, dtype=float)
        return self.child(x @ m.T + np.asarray(self.shift, dtype=float))


@dataclass(frozen=True)
class Union(LevelSet):
    children: tuple

    def __call__(self, x):
        out = self.children[0](x)
        for c in self.children[1:]:
            out = np.maximum(out, c(x))
        return out


@dataclass(frozen=True)
class Intersection(LevelSet):
    children: tuple

    def __call__(self, x):
        out = self.children[0](x)
        for c in self.children[1:]:
            out = np.minimum(out, c(x))
        return out


@dataclass(frozen=True)
class Complement(LevelSet):
    child: LevelSet

    def __call__(self, x):
        return -self.child(x)


@dataclass(frozen=True)
class FunctionLevelSet(LevelSet):
    """Wrap a vectorised callable ``f(x, y) -> psi``."""
    func: Callable

    def __call__(self, x):
        px, py = _xy(x)
        return np.asarray(self.func(px, py), dtype=float) + 0.0 * px


def star_levelset() -> PolarStar:
    """The five-pointed star ``0.5 + 0.1 sin(5 theta) - r`` on (-1, 1)^2."""
    return PolarStar(c0=0.5, c1=0.1, k=5.0)


def evaluate(ls: LevelSet, point) -> float:
    """Evaluate ``ls`` at a single point."""
    return float(ls(np.asarray(point, dtype=float)))


class CellState(enum.IntEnum):
    OUTSIDE = 0
    CUT = 1
    INSIDE = 2


def _lattice(box, depth):
    (x0, y0), (x1, y1) = box
    k = 2 ** depth + 1
    xs = np.linspace(x0, x1, k)
    ys = np.linspace(y0, y1, k)
    return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)


def classify_cell(ls: LevelSet, box, sample_depth: int = 2) -> CellState:
    """Classify an axis-aligned box by sampling ``psi`` on a tensor lattice.

    ``box`` is ``((x0, y0), (x1, y1))``. The lattice has ``2**sample_depth + 1``
    points per axis, so deeper lattices contain the shallower ones.
    """
    vals = ls(_lattice(box, sample_depth))
    if np.all(vals >= 0.0):
        return CellState.INSIDE
    if np.all(vals < 0.0):
        return CellState.OUTSIDE
    return CellState.CUT


def classify_cells(ls: LevelSet, lower: np.ndarray, upper: np.ndarray,
                   sample_depth: int = 2) -> np.ndarray:
    """Vectorised :func:`classify_cell` for ``n`` boxes given by corner arrays."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    k = 2 ** sample_depth + 1
    t = np.linspace(0.0, 1.0, k)
    tx, ty = np.meshgrid(t, t, indexing="ij")
    size = upper - lower
    pts = np.empty((lower.shape[0], k, k, 2))
    pts[..., 0] = lower[:, 0, None, None] + size[:, 0, None, None] * tx
    pts[..., 1] = lower[:, 1, None, None] + size[:, 1, None, None] * ty
    vals = ls(pts).reshape(lower.shape[0], -1)
    state = np.full(lower.shape[0], int(CellState.CUT), dtype=np.int8)
    state[np.all(vals >= 0.0, axis=1)] = int(CellState.INSIDE)
    state[np.all(vals < 0.0, axis=1)] = int(CellState.OUTSIDE)
    return state


def bisect_segments(ls: LevelSet, p0, p1, tol: float = 1e-12) -> np.ndarray:
    """Locate ``psi = 0`` on many segments at once.

    Each segment must have exactly one endpoint inside (``psi >= 0``).
    Bisection shrinks the bracket to at most ``tol`` times the segment
    length; the returned point is the linear-interpolation root inside that
    final bracket, so linear fields are resolved exactly even when the root
    sits much closer to an endpoint than ``tol``.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    f0 = ls(p0)
    f1 = ls(p1)
    # parametrize from the inside end so roots close to it stay representable
    swap = f0 < 0.0
    pin = np.where(swap[:, None], p1, p0)
    pout = np.where(swap[:, None], p0, p1)
    fin = np.where(swap, f1, f0)
    fout = np.where(swap, f0, f1)
    d = pout - pin
    a = np.zeros(len(pin))
    b = np.where(fin == 0.0, 0.0, 1.0)
    b = np.where((fout == 0.0) & (fin != 0.0), 1.0, b)
    a = np.where((fout == 0.0) & (fin != 0.0), 1.0, a)
    niter = max(1, int(math.ceil(-math.log2(tol))))
    for _ in range(niter):
        m = 0.5 * (a + b)
        fm = ls(pin + m[:, None] * d)
        inside = fm >= 0.0
        exact = fm == 0.0
        a = np.where(inside, m, a)
        b = np.where(inside, b, m)
        b = np.where(exact, m, b)
    fa = ls(pin + a[:, None] * d)
    fb = ls(pin + b[:, None] * d)
    denom = fa - fb
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(denom > 0.0, fa / denom, 0.5)
    t = a + np.clip(frac, 0.0, 1.0) * (b - a)
    out = pin + t[:, None] * d
    # hit endpoints exactly, so roots on grid nodes do not create round-off slivers
    out[t == 0.0] = pin[t == 0.0]
    out[t == 1.0] = pout[t == 1.0]
    return out


def intersect_edge(ls: LevelSet, p0, p1, tol: float = 1e-12) -> np.ndarray:
    """Return the interface point on the segment ``[p0, p1]`` by bisection.

    Raises
    ------
    SignError
        If ``psi(p0) * psi(p1) > 0``.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    f0 = evaluate(ls, p0)
    f1 = evaluate(ls, p1)
    if f0 * f1 > 0.0:
        raise SignError(f"psi has equal signs at both ends ({f0:g}, {f1:g})")
    if f0 == 0.0:
        return p0.copy()
    if f1 == 0.0:
        return p1.copy()
    return bisect_segments(ls, p0[None], p1[None], tol)[0]
