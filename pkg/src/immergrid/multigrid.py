"""Level hierarchy with Galerkin coarse operators and the symmetric V-cycle.

Level numbers follow the V-cycle convention: level ``L`` is the finest
grid and level 1 the coarsest, where a direct solve is done.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .basis import FunctionSpace, build_space, restriction_matrix
from .errors import OddResolution, ResolutionError
from .smoothers import Direction, Smoother, SmootherConfig, build_smoother

__all__ = ["Level", "MgHierarchy", "build_hierarchy", "vcycle", "as_operator",
           "CoarseSolver", "PIVOT_RATIO"]

PIVOT_RATIO = 1e-14


class CoarseSolver:
    """Dense solve on the regular subspace of a symmetric matrix.

    Eigenpairs with eigenvalue below ``ratio`` times the largest diagonal
    entry are dropped, so near-singular coarse systems stay bounded. Badly
    conditioned systems get two steps of iterative refinement with the
    residual formed in extended precision.
    """

    def __init__(self, A, ratio: float = PIVOT_RATIO):
        As = sp.csr_matrix(A)
        Ad = As.toarray()
        Ad = 0.5 * (Ad + Ad.T)
        self.n = Ad.shape[0]
        if self.n == 0:
            self.w, self.V, self.dropped = np.zeros(0), np.zeros((0, 0)), 0
            self.refine = False
            return
        w, V = np.linalg.eigh(Ad)
        keep = w > ratio * np.max(np.diag(Ad))
        self.dropped = int(np.sum(~keep))
        self.w, self.V = w[keep], V[:, keep]
        self.refine = len(self.w) > 0 and self.w[0] < 1e-6 * self.w[-1]
        self.Along = As.astype(np.longdouble) if self.refine else None

    def _base(self, r):
        c = self.V.T @ r
        c = c / (self.w if r.ndim == 1 else self.w[:, None])
        return self.V @ c

    def solve(self, r):
        r = np.asarray(r, dtype=float)
        x = self._base(r)
        if self.refine:
            target = np.asarray(r, dtype=np.longdouble)
            for _ in range(2):
                res = target - self.Along @ np.asarray(x, dtype=np.longdouble)
                x = x + self._base(np.asarray(res, dtype=float))
        return x

    def matrix(self) -> np.ndarray:
        return (self.V / self.w) @ self.V.T


@dataclass
class Level:
    space: FunctionSpace
    A: sp.csr_matrix
    smoother: Smoother | None = None
    R: sp.csr_matrix | None = None  # restriction to the next coarser level


@dataclass
class MgHierarchy:
    """Operators per level; ``levels[l - 1]`` is level ``l``."""
    levels: list
    coarse: CoarseSolver
    config: SmootherConfig = field(default_factory=SmootherConfig)

    @property
    def L(self) -> int:
        return len(self.levels)

    @property
    def n(self) -> int:
        return self.levels[-1].A.shape[0]

    def level(self, ell: int) -> Level:
        return self.levels[ell - 1]

    def sizes(self) -> list:
        return [lv.A.shape[0] for lv in self.levels]


def build_hierarchy(space: FunctionSpace, A, L: int = 2,
                    config: SmootherConfig | None = None) -> MgHierarchy:
    """Coarsen ``L - 1`` times and set up smoothers and Galerkin operators.

    Each coarse mesh is the derefinement of the next finer one, the coarse
    space is rebuilt on it with the same family and degree, and
    ``A_{l-1} = R_l A_l R_l^T``.

    Raises
    ------
    ResolutionError
        If the base resolution is not divisible by ``2**(L - 1)``.
    """
    if L < 1:
        raise ValueError("need at least one level")
    config = config or SmootherConfig()
    res = np.asarray(space.mesh.grid.resolution)
    if np.any(res % (2 ** (L - 1))):
        raise ResolutionError(f"resolution {tuple(res)} cannot be coarsened {L - 1} times")
    A = sp.csr_matrix(A)
    chain = [Level(space, A)]
    trimmed = space.trimmed
    for _ in range(L - 1):
        try:
            trimmed = trimmed.coarsened()
        except OddResolution as exc:
            raise ResolutionError(str(exc)) from exc
        fine = chain[-1]
        cspace = build_space(trimmed, space.family, space.degree, space.components)
        R = restriction_matrix(fine.space, cspace)
        Ac = sp.csr_matrix(R @ fine.A @ R.T)
        Ac = sp.csr_matrix(0.5 * (Ac + Ac.T))
        fine.R = R
        chain.append(Level(cspace, Ac))
    levels = chain[::-1]
    for lv in levels[1:]:
        lv.smoother = build_smoother(lv.space, lv.A, config)
    return MgHierarchy(levels, CoarseSolver(levels[0].A), config)


def vcycle(h: MgHierarchy, ell: int, r):
    """One V-cycle for ``A_l x = r``, starting from zero.

    ``r`` may be a vector or a matrix of columns. The post-smoothing step
    uses the reverse sweep, so the cycle is a symmetric operator.
    """
    r = np.asarray(r, dtype=float)
    if ell == 1:
        return h.coarse.solve(r)
    lv = h.level(ell)
    A = lv.A
    x = lv.smoother.apply(r, Direction.FORWARD)
    r = r - A @ x
    xc = lv.R.T @ vcycle(h, ell - 1, lv.R @ r)
    x = x + xc
    r = r - A @ xc
    return x + lv.smoother.apply(r, Direction.REVERSE)


def as_operator(h: MgHierarchy) -> LinearOperator:
    """The finest-level V-cycle as a symmetric linear operator."""
    n = h.n
    return LinearOperator((n, n), matvec=lambda r: vcycle(h, h.L, r),
                          matmat=lambda R: vcycle(h, h.L, R), dtype=float)
