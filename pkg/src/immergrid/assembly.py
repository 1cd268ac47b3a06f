"""Sparse assembly of Poisson and linear elasticity systems with penalty
Dirichlet conditions on immersed boundaries.

Element matrices are first integrated against the tensor Bernstein basis of
each element and then mapped to the supported DOFs with the element
extraction operator, so all three basis families share one code path.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .basis import FunctionSpace, reference_basis
from .errors import SingularSetup
from .geometry import LevelSet
from .quadrature import BOTTOM, INTERFACE, LEFT, RIGHT, TOP, MeshQuadrature

__all__ = ["BoundaryPiece", "ProblemDef", "SparseOperator", "assemble", "default_penalty",
           "SIDE_NAMES"]

SIDE_NAMES = {"interface": INTERFACE, "left": LEFT, "right": RIGHT, "bottom": BOTTOM, "top": TOP}
KINDS = ("dirichlet", "neumann", "normal_dirichlet")
_CHUNK = 2048


@dataclass(frozen=True)
class BoundaryPiece:
    """A part of the boundary with one kind of condition.

    A boundary quadrature point belongs to the piece if its source is listed
    in ``sides`` (``"interface"`` or a box side name, all by default) and it
    lies in ``region`` (``region(x) >= 0``, anywhere if None). Points are
    given to the first matching piece; unclaimed points are traction free.

    ``value`` is the Dirichlet data ``g^D``, the traction ``g^N``, or the
    prescribed normal displacement for ``normal_dirichlet``. ``traction`` is
    an optional flux added to the load on Dirichlet pieces (a Robin-type
    term; with the exact flux of a field the penalty form becomes consistent
    for it) and the tangential traction on ``normal_dirichlet`` pieces.
    """
    kind: str
    value: object = 0.0
    region: LevelSet | None = None
    sides: tuple | None = None
    traction: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.sides is not None:
            bad = [s for s in self.sides if s not in SIDE_NAMES]
            if bad:
                raise ValueError(f"unknown boundary sides {bad}")

    def select(self, points, side) -> np.ndarray:
        mask = np.ones(len(points), dtype=bool)
        if self.sides is not None:
            mask &= np.isin(side, [SIDE_NAMES[s] for s in self.sides])
        if self.region is not None and len(points):
            mask &= self.region(points) >= -1e-12
        return mask


@dataclass
class ProblemDef:
    """PDE, material data, loads and boundary pieces.

    ``penalty`` sets both penalty factors; ``penalty_lambda`` and
    ``penalty_mu`` override them for elasticity. None selects
    :func:`default_penalty`.
    """
    pde: str = "poisson"
    lam: float = 1.0
    mu: float = 1.0
    body_force: object = 0.0
    pieces: Sequence[BoundaryPiece] = field(default_factory=list)
    penalty: float | None = None
    penalty_lambda: float | None = None
    penalty_mu: float | None = None

    def __post_init__(self):
        if self.pde not in ("poisson", "elasticity"):
            raise ValueError(f"unknown pde {self.pde!r}")
        if self.pde == "elasticity" and not (self.lam > 0 and self.mu > 0):
            raise ValueError("Lame parameters must be positive")

    @property
    def components(self) -> int:
        return 2 if self.pde == "elasticity" else 1


@dataclass
class SparseOperator:
    """Assembled system ``A x = b`` with the penalty factors that were used."""
    A: sp.csr_matrix
    b: np.ndarray
    penalty_lambda: float
    penalty_mu: float


def default_penalty(space: FunctionSpace) -> float:
    """``2 / h`` with ``h`` the element size of the finest level."""
    g = space.mesh.grid
    h = float(np.min(g.cell_size(space.mesh.max_level)))
    return 2.0 / h


def _takes_normals(func) -> bool:
    try:
        params = inspect.signature(func).parameters.values()
    except (TypeError, ValueError):
        return False
    positional = [p for p in params if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
    return len(positional) >= 2


def _field(value, points, ncomp, normals=None):
    """Evaluate a constant or callable data field at points as (P, ncomp).

    Callables get ``(points)``, or ``(points, normals)`` on the boundary when
    they accept two arguments.
    """
    if callable(value):
        if normals is not None and _takes_normals(value):
            out = np.asarray(value(points, normals), dtype=float)
        else:
            out = np.asarray(value(points), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
    else:
        out = np.asarray(value, dtype=float).reshape(1, -1)
    return np.broadcast_to(out, (len(points), ncomp)).astype(float)


def _local_basis(space, elem, points):
    xi = (points - space.lower[elem]) / space.size[elem]
    val, grad = reference_basis(xi, space.degree)
    grad = grad / space.size[elem][:, None, :]
    return val, grad


def _segments(elem):
    """Start offsets of runs in a sorted element index array."""
    if len(elem) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(np.r_[True, elem[1:] != elem[:-1]])
    return starts, elem[starts]


def _reduce(per_point, elem, n_elem):
    """Sum per-point arrays into per-element arrays (points sorted by element)."""
    out = np.zeros((n_elem,) + per_point.shape[1:])
    starts, owners = _segments(elem)
    if len(starts):
        out[owners] = np.add.reduceat(per_point, starts, axis=0)
    return out


def _chunks(elem):
    """Split point ranges into element-aligned chunks."""
    starts, _ = _segments(elem)
    bounds = list(starts[::_CHUNK]) + [len(elem)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        yield a, b


class _Scatter:
    def __init__(self, space):
        self.space = space
        self.c = space.components
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(space.n)

    def matrix(self, elems, Ke):
        """Add element matrices ``Ke`` of shape (m, maxn, c, maxn, c)."""
        sp_ = self.space
        dofs = sp_.elem_dofs[elems]
        valid = dofs >= 0
        g = np.where(valid, dofs, 0)[:, :, None] * self.c + np.arange(self.c)[None, None, :]
        m, n = dofs.shape
        g = g.reshape(m, n * self.c)
        K = Ke.reshape(m, n * self.c, n * self.c)
        self.rows.append(np.repeat(g, n * self.c, axis=1).ravel())
        self.cols.append(np.tile(g, (1, n * self.c)).ravel())
        self.vals.append(K.ravel())

    def vector(self, elems, Fe):
        """Add element vectors ``Fe`` of shape (m, maxn, c)."""
        dofs = self.space.elem_dofs[elems]
        valid = dofs >= 0
        g = np.where(valid, dofs, 0)[:, :, None] * self.c + np.arange(self.c)[None, None, :]
        np.add.at(self.rhs, g.ravel(), (Fe * valid[:, :, None]).ravel())

    def finish(self):
        n = self.space.n
        if self.rows:
            A = sp.coo_matrix((np.concatenate(self.vals),
                               (np.concatenate(self.rows), np.concatenate(self.cols))),
                              shape=(n, n)).tocsr()
        else:
            A = sp.csr_matrix((n, n))
        A.sum_duplicates()
        A = ((A + A.T) * 0.5).tocsr()
        A.eliminate_zeros()
        A.sort_indices()
        return A, self.rhs


def _volume_terms(space, quad, problem, sc):
    p = quad.vol_points
    w = quad.vol_weights
    el = quad.vol_elem
    c = space.components
    for a, b in _chunks(el):
        pts, wts, elem = p[a:b], w[a:b], el[a:b]
        owners = np.unique(elem)
        local = np.searchsorted(owners, elem)
        m = len(owners)
        val, grad = _local_basis(space, elem, pts)
        E = space.extraction[owners]
        if problem.pde == "poisson":
            G = _reduce(np.einsum("q,qia,qja->qij", wts, grad, grad), local, m)
            K = np.einsum("eik,ekl,ejl->eij", E, G, E)[:, :, None, :, None]
        else:
            G = _reduce(np.einsum("q,qia,qjb->qabij", wts, grad, grad), local, m)
            Gp = np.einsum("eik,eabkl,ejl->eabij", E, G, E)
            lam, mu = problem.lam, problem.mu
            n = E.shape[1]
            K = np.zeros((m, n, 2, n, 2))
            trace = Gp[:, 0, 0] + Gp[:, 1, 1]
            for ca in range(2):
                for cb in range(2):
                    blk = lam * Gp[:, ca, cb] + mu * Gp[:, cb, ca]
                    if ca == cb:
                        blk = blk + mu * trace
                    K[:, :, ca, :, cb] = blk
        sc.matrix(owners, K)
        f = _field(problem.body_force, pts, c)
        if np.any(f != 0.0):
            F = _reduce(np.einsum("q,qi,qc->qic", wts, val, f), local, m)
            sc.vector(owners, np.einsum("eik,ekc->eic", E, F))


def _boundary_terms(space, quad, problem, sc, beta_l, beta_m):
    pts_all = quad.bnd_points
    side = quad.bnd_side
    claimed = np.zeros(len(pts_all), dtype=bool)
    c = space.components
    lam, mu = problem.lam, problem.mu
    for piece in problem.pieces:
        mask = piece.select(pts_all, side) & ~claimed
        claimed |= mask
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            continue
        el_all = quad.bnd_elem[idx]
        for a, b in _chunks(el_all):
            sel = idx[a:b]
            pts, wts, nrm, elem = pts_all[sel], quad.bnd_weights[sel], quad.bnd_normals[sel], el_all[a:b]
            owners = np.unique(elem)
            local = np.searchsorted(owners, elem)
            m = len(owners)
            val, _ = _local_basis(space, elem, pts)
            E = space.extraction[owners]
            n = E.shape[1]

            def mass(weight):
                Mr = _reduce(np.einsum("q,qi,qj->qij", weight, val, val), local, m)
                return np.einsum("eik,ekl,ejl->eij", E, Mr, E)

            def load(vec):
                Fr = _reduce(np.einsum("q,qi,qc->qic", wts, val, vec), local, m)
                return np.einsum("eik,ekc->eic", E, Fr)

            if piece.kind == "neumann":
                sc.vector(owners, load(_field(piece.value, pts, c, nrm)))
                continue
            if problem.pde == "poisson":
                if piece.kind != "dirichlet":
                    raise ValueError("normal_dirichlet pieces need an elasticity problem")
                beta = beta_l
                sc.matrix(owners, beta * mass(wts)[:, :, None, :, None])
                g = _field(piece.value, pts, 1, nrm)
                rhs = beta * g
                if piece.traction is not None:
                    rhs = rhs + _field(piece.traction, pts, 1, nrm)
                sc.vector(owners, load(rhs))
                continue
            K = np.zeros((m, n, 2, n, 2))
            if piece.kind == "dirichlet":
                coef_n = lam * beta_l
                g = _field(piece.value, pts, 2, nrm)
                gn = np.sum(g * nrm, axis=1)
                rhs = coef_n * gn[:, None] * nrm + 2.0 * mu * beta_m * g
                if piece.traction is not None:
                    rhs = rhs + _field(piece.traction, pts, 2, nrm)
                iso = mass(wts)
                for ca in range(2):
                    K[:, :, ca, :, ca] += 2.0 * mu * beta_m * iso
            else:
                coef_n = lam * beta_l + 2.0 * mu * beta_m
                gn = _field(piece.value, pts, 1, nrm)[:, 0]
                rhs = coef_n * gn[:, None] * nrm
                if piece.traction is not None:
                    t = _field(piece.traction, pts, 2, nrm)
                    t = t - np.sum(t * nrm, axis=1)[:, None] * nrm
                    rhs = rhs + t
            for ca in range(2):
                for cb in range(ca, 2):
                    blk = coef_n * mass(wts * nrm[:, ca] * nrm[:, cb])
                    K[:, :, ca, :, cb] += blk
                    if cb != ca:
                        K[:, :, cb, :, ca] += blk
            sc.matrix(owners, K)
            sc.vector(owners, load(rhs))


def assemble(space: FunctionSpace, quad: MeshQuadrature, problem: ProblemDef) -> SparseOperator:
    """Assemble the symmetric system of ``problem`` on ``space``.

    Raises
    ------
    SingularSetup
        If no Dirichlet-type boundary piece is given.
    """
    if not any(p.kind in ("dirichlet", "normal_dirichlet") for p in problem.pieces):
        raise SingularSetup("at least one Dirichlet boundary piece is required")
    if space.components != problem.components:
        raise ValueError(f"{problem.pde} needs {problem.components} components, "
                         f"space has {space.components}")
    if list(space.elements) != list(quad.elements):
        raise ValueError("space and quadrature cover different elements")
    base = default_penalty(space)
    beta_l = problem.penalty_lambda or problem.penalty or base
    beta_m = problem.penalty_mu or problem.penalty or base
    sc = _Scatter(space)
    _volume_terms(space, quad, problem, sc)
    _boundary_terms(space, quad, problem, sc, beta_l, beta_m)
    A, b = sc.finish()
    return SparseOperator(A, b, float(beta_l), float(beta_m))
