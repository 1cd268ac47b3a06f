"""Function spaces on trimmed meshes: Lagrange, B-spline and truncated
hierarchical B-spline (THB) bases.

Every space is stored through element extraction: on each physical element
``K`` the supported scalar basis functions are ``E_K @ B``, where ``B`` is the
tensor Bernstein basis of degree ``p`` on the element's reference square.
Vector-valued spaces repeat each scalar function per component, with DOF
number ``scalar * components + component``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MeshMismatch, UnsupportedFamilyOnHierarchy
from .mesh import TrimmedMesh, coarsen
from .splines import (bernstein, bezier_extraction, bspline_subdivision,
                      lagrange_extraction, lagrange_subdivision)

__all__ = ["FunctionSpace", "build_space", "evaluate_basis", "restriction_matrix",
           "physical_support", "FAMILIES"]

FAMILIES = ("lagrange", "bspline", "thb")


def _family(name: str) -> str:
    key = str(name).lower().replace("-", "").replace("_", "")
    aliases = {"lagrange": "lagrange", "bspline": "bspline", "bsplines": "bspline",
               "thb": "thb", "thbspline": "thb", "thbsplines": "thb"}
    if key not in aliases:
        raise ValueError(f"unknown basis family {name!r}")
    return aliases[key]


def reference_basis(xi, p: int):
    """Tensor Bernstein values and reference gradients at points ``xi`` (n, 2).

    Returns ``(values (n, (p+1)^2), grads (n, (p+1)^2, 2))`` with local index
    ``a * (p + 1) + b`` for x-index ``a`` and y-index ``b``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    bx, dbx = bernstein(xi[:, 0], p, deriv=True)
    by, dby = bernstein(xi[:, 1], p, deriv=True)
    val = (bx[:, :, None] * by[:, None, :]).reshape(len(xi), -1)
    gx = (dbx[:, :, None] * by[:, None, :]).reshape(len(xi), -1)
    gy = (bx[:, :, None] * dby[:, None, :]).reshape(len(xi), -1)
    return val, np.stack([gx, gy], axis=-1)


@dataclass(eq=False)
class FunctionSpace:
    """A discrete space on the physical elements of a trimmed mesh.

    Attributes
    ----------
    family, degree, components
        Basis family name, polynomial degree ``p`` and number of vector
        components ``c``.
    trimmed : TrimmedMesh
    elements : list
        Physical element ids, in canonical order.
    elem_dofs : ndarray (n_elem, max_local)
        Scalar DOF numbers supported on each element, padded with -1.
    extraction : ndarray (n_elem, max_local, (p+1)^2)
        Bernstein coefficients of each supported function on the element.
    anchors : ndarray (n_scalar, 3)
        ``(level, ix, iy)`` of each scalar DOF (node index for Lagrange,
        tensor function index for splines).
    """
    family: str
    degree: int
    components: int
    trimmed: TrimmedMesh
    elements: list
    elem_dofs: np.ndarray
    extraction: np.ndarray
    anchors: np.ndarray
    lower: np.ndarray
    size: np.ndarray
    _fine_repr: object = field(default=None, repr=False)
    _tensor_index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.elem_index = {e: k for k, e in enumerate(self.elements)}
        ed = self.elem_dofs
        rows, cols = np.nonzero(ed >= 0)
        dofs = ed[rows, cols]
        order = np.lexsort((rows, dofs))
        self._support_elems = rows[order]
        self._support_ptr = np.searchsorted(dofs[order], np.arange(self.n_scalar + 1))

    @property
    def mesh(self):
        return self.trimmed.mesh

    @property
    def n_scalar(self) -> int:
        return len(self.anchors)

    @property
    def n(self) -> int:
        return self.n_scalar * self.components

    @property
    def max_level(self) -> int:
        return self.mesh.max_level

    def support_indices(self, scalar_dof: int) -> np.ndarray:
        """Indices (into ``elements``) of the physical support of a scalar DOF."""
        s, e = self._support_ptr[scalar_dof], self._support_ptr[scalar_dof + 1]
        return self._support_elems[s:e]

    def support_sets(self) -> list:
        """Physical supports of all scalar DOFs as frozensets of element indices."""
        return [frozenset(self.support_indices(i).tolist()) for i in range(self.n_scalar)]

    def local_dofs(self, k: int) -> np.ndarray:
        row = self.elem_dofs[k]
        return row[row >= 0]

    def evaluate_element(self, k: int, xi):
        """Scalar DOFs, values and physical gradients on element index ``k``."""
        dofs = self.local_dofs(k)
        E = self.extraction[k, : len(dofs)]
        val, grad = reference_basis(xi, self.degree)
        v = val @ E.T
        g = np.einsum("nlc,al->nac", grad, E) / self.size[k]
        return dofs, v, g

    def locate(self, points):
        """Element index and reference coordinates for each physical point.

        Points not in a physical element get index -1.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.full(len(pts), -1)
        for n, x in enumerate(pts):
            e = self.mesh.locate(x)
            if e is not None:
                idx[n] = self.elem_index.get(e, -1)
        xi = np.zeros_like(pts)
        ok = idx >= 0
        xi[ok] = (pts[ok] - self.lower[idx[ok]]) / self.size[idx[ok]]
        return idx, np.clip(xi, 0.0, 1.0)

    def basis_matrix(self, points, gradient: bool = False):
        """Sparse matrix of all scalar basis values (and gradients) at points.

        Returns ``V`` with ``V[i, j] = phi_j(x_i)``; with ``gradient`` also
        ``(Gx, Gy)``. Points outside the physical elements give zero rows.
        """
        idx, xi = self.locate(points)
        rows, cols, vals, gxs, gys = [], [], [], [], []
        for k in np.unique(idx[idx >= 0]):
            sel = np.nonzero(idx == k)[0]
            dofs, v, g = self.evaluate_element(k, xi[sel])
            rows.append(np.repeat(sel, len(dofs)))
            cols.append(np.tile(dofs, len(sel)))
            vals.append(v.ravel())
            gxs.append(g[..., 0].ravel())
            gys.append(g[..., 1].ravel())
        shape = (len(idx), self.n_scalar)
        if rows:
            rows, cols = np.concatenate(rows), np.concatenate(cols)
            mk = lambda d: sp.csr_matrix((np.concatenate(d), (rows, cols)), shape=shape)
        else:
            mk = lambda d: sp.csr_matrix(shape)
        V = mk(vals)
        if gradient:
            return V, mk(gxs), mk(gys)
        return V


def _uniform_space(trimmed, fam, p, c):
    mesh = trimmed.mesh
    if mesh.max_level > 0:
        raise UnsupportedFamilyOnHierarchy(f"{fam} spaces need a mesh without local refinement")
    nx, ny = mesh.grid.resolution
    elems = trimmed.physical
    ij = np.array([e[1:] for e in elems], dtype=np.int64).reshape(-1, 2)
    a = np.arange(p + 1)
    if fam == "bspline":
        Ny = ny + p
        gx = ij[:, 0:1] + a[None]
        gy = ij[:, 1:2] + a[None]
        Ex = bezier_extraction(nx, p)[ij[:, 0]]
        Ey = bezier_extraction(ny, p)[ij[:, 1]]
    else:
        Ny = p * ny + 1
        gx = p * ij[:, 0:1] + a[None]
        gy = p * ij[:, 1:2] + a[None]
        L = lagrange_extraction(p)
        Ex = np.broadcast_to(L, (len(elems), p + 1, p + 1))
        Ey = Ex
    glob = (gx[:, :, None] * Ny + gy[:, None, :]).reshape(len(elems), -1)
    ext = np.einsum("eac,ebd->eabcd", Ex, Ey).reshape(len(elems), (p + 1) ** 2, (p + 1) ** 2)
    used, local = np.unique(glob, return_inverse=True)
    local = local.reshape(glob.shape)
    anchors = np.stack([np.zeros_like(used), used // Ny, used % Ny], axis=1)
    lo, hi = mesh.boxes(elems)
    return FunctionSpace(fam, p, c, trimmed, elems, local, np.ascontiguousarray(ext),
                         anchors, lo, hi - lo, _tensor_index=used)


def _window_all(mask, p):
    """``out[b] = all(mask[b-p .. b])`` per axis, for functions ``b = 0..n+p-1``."""
    nx, ny = mask.shape
    pad = np.ones((nx + 2 * p, ny + 2 * p), dtype=bool)
    pad[p:p + nx, p:p + ny] = mask
    out = np.ones((nx + p, ny + p), dtype=bool)
    for a in range(p + 1):
        for b in range(p + 1):
            out &= pad[a:a + nx + p, b:b + ny + p]
    return out


@dataclass
class _THBData:
    """Level-wise coefficient matrices of all THB functions (before trimming).

    ``T[l]`` maps every THB function to level-``l`` tensor B-splines; it is
    valid on active level-``l`` elements and, for ``l = M``, everywhere.
    """
    T: list
    shapes: list
    levels: np.ndarray
    keep: np.ndarray


def _thb_levels(mesh, p):
    res = mesh.grid.resolution
    M = mesh.max_level
    T = []
    shapes = []
    levels = []
    anchors = []
    prev = None
    for lev in range(M + 1):
        nx, ny = res[0] << lev, res[1] << lev
        shapes.append((nx + p, ny + p))
        act = np.zeros((nx, ny), dtype=bool)
        ref = np.zeros((nx, ny), dtype=bool)
        for e in mesh.level_elements(lev):
            act[e[1], e[2]] = True
        for e in mesh.refined_cells(lev):
            ref[e[1], e[2]] = True
        in_region = _window_all(act | ref, p)
        in_finer = _window_all(ref, p)
        active = in_region & ~in_finer
        ids = np.flatnonzero(active.ravel())
        N = (nx + p) * (ny + p)
        new = sp.csr_matrix((np.ones(len(ids)), (np.arange(len(ids)), ids)), shape=(len(ids), N))
        if prev is None:
            cur = new
        else:
            pnx, pny = res[0] << (lev - 1), res[1] << (lev - 1)
            S = sp.kron(sp.csr_matrix(bspline_subdivision(pnx, p)),
                        sp.csr_matrix(bspline_subdivision(pny, p)), format="csr")
            lifted = (prev @ S.T).tocsr()
            mask = sp.diags((~in_region.ravel()).astype(float))
            lifted = (lifted @ mask).tocsr()
            lifted.eliminate_zeros()
            cur = sp.vstack([lifted, new], format="csr")
        T.append(cur)
        prev = cur
        levels.append(np.full(len(ids), lev))
        anchors.append(np.stack([np.full(len(ids), lev), ids // (ny + p), ids % (ny + p)], 1))
    return T, shapes, np.concatenate(levels), np.concatenate(anchors)


def _thb_space(trimmed, p, c):
    mesh = trimmed.mesh
    T, shapes, levels, anchors = _thb_levels(mesh, p)
    res = mesh.grid.resolution
    elems = trimmed.physical
    Tt = [t.T.tocsr() for t in T]
    rows = []
    a = np.arange(p + 1)
    for e in elems:
        lev, i, j = e
        nx, ny = res[0] << lev, res[1] << lev
        Ny = ny + p
        cols = ((i + a)[:, None] * Ny + (j + a)[None, :]).ravel()
        sub = Tt[lev][cols].tocoo()
        dofs = np.unique(sub.col)
        C = np.zeros((len(dofs), len(cols)))
        C[np.searchsorted(dofs, sub.col), sub.row] = sub.data
        Ex = bezier_extraction(nx, p)[i]
        Ey = bezier_extraction(ny, p)[j]
        Ek = np.kron(Ex, Ey)
        rows.append((dofs, C @ Ek))
    maxn = max(len(d) for d, _ in rows)
    nloc = (p + 1) ** 2
    ed = np.full((len(elems), maxn), -1, dtype=np.int64)
    ext = np.zeros((len(elems), maxn, nloc))
    for k, (d, E) in enumerate(rows):
        ed[k, : len(d)] = d
        ext[k, : len(d)] = E
    keep = np.zeros(len(anchors), dtype=bool)
    keep[ed[ed >= 0]] = True
    renum = np.cumsum(keep) - 1
    ed = np.where(ed >= 0, renum[np.maximum(ed, 0)], -1)
    lo, hi = mesh.boxes(elems)
    data = _THBData(T, shapes, levels, keep)
    return FunctionSpace("thb", p, c, trimmed, elems, ed, ext, anchors[keep], lo, hi - lo,
                         _fine_repr=data)


def build_space(trimmed: TrimmedMesh, family: str = "lagrange", degree: int = 2,
                components: int = 1) -> FunctionSpace:
    """Basis functions with nonempty physical support on ``trimmed``.

    Raises
    ------
    UnsupportedFamilyOnHierarchy
        For Lagrange or B-spline families on a locally refined mesh.
    """
    fam = _family(family)
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if components < 1:
        raise ValueError("components must be at least 1")
    if fam == "thb":
        return _thb_space(trimmed, int(degree), int(components))
    return _uniform_space(trimmed, fam, int(degree), int(components))


def evaluate_basis(space: FunctionSpace, elem, ref_point):
    """Values and physical gradients of the scalar DOFs supported on ``elem``.

    ``elem`` is an element id ``(level, i, j)`` or an index into
    ``space.elements``; ``ref_point`` lies in the unit square (one point or
    an array of points). Returns ``(dofs, values, gradients)``.
    """
    k = space.elem_index[tuple(elem)] if isinstance(elem, tuple) else int(elem)
    xi = np.atleast_2d(np.asarray(ref_point, dtype=float))
    dofs, v, g = space.evaluate_element(k, xi)
    if np.ndim(ref_point) == 1:
        return dofs, v[0], g[0]
    return dofs, v, g


def physical_support(space: FunctionSpace, dof: int) -> set:
    """Physical elements on which the (vector) DOF's function is nonzero."""
    s = dof // space.components
    return {space.elements[k] for k in space.support_indices(s)}


def _finest_tensor_repr(space, target_level, target_res):
    """Coefficients of every (untrimmed) THB function of ``space`` on the
    tensor B-splines of grid resolution ``target_res * 2**target_level``.
    """
    data = space._fine_repr
    p = space.degree
    res = space.mesh.grid.resolution
    C = data.T[-1]
    lev_res = (res[0] << (len(data.T) - 1), res[1] << (len(data.T) - 1))
    goal = (target_res[0] << target_level, target_res[1] << target_level)
    while lev_res != goal:
        if lev_res[0] > goal[0]:
            raise MeshMismatch("coarse space is finer than the fine space")
        S = sp.kron(sp.csr_matrix(bspline_subdivision(lev_res[0], p)),
                    sp.csr_matrix(bspline_subdivision(lev_res[1], p)), format="csr")
        C = (C @ S.T).tocsr()
        lev_res = (2 * lev_res[0], 2 * lev_res[1])
    return C


def _thb_restriction(fine, coarse):
    Mf = fine.max_level
    res = fine.mesh.grid.resolution
    Cf = _finest_tensor_repr(fine, Mf, res).tocsr()
    Cc = _finest_tensor_repr(coarse, Mf, res).tocsr()
    Cc.eliminate_zeros()
    Cf.eliminate_zeros()
    CfT = Cf.T.tocsr()
    keep_c = np.flatnonzero(coarse._fine_repr.keep)
    fine_num = np.full(Cf.shape[0], -1)
    fine_num[fine._fine_repr.keep] = np.arange(fine.n_scalar)
    rows, cols, vals = [], [], []
    for r, a in enumerate(keep_c):
        target = Cc[a]
        colset = target.indices
        for _ in range(8):
            funcs = np.unique(CfT[colset].indices)
            block = Cf[funcs]
            allcols = np.unique(np.concatenate([block.indices, target.indices]))
            dense = block[:, allcols].toarray()
            rhs = np.zeros(len(allcols))
            rhs[np.searchsorted(allcols, target.indices)] = target.data
            coef, *_ = np.linalg.lstsq(dense.T, rhs, rcond=None)
            resid = np.abs(dense.T @ coef - rhs).max()
            if resid <= 1e-13 * max(1.0, np.abs(rhs).max()):
                break
            colset = allcols
        else:
            raise MeshMismatch("coarse function is not in the span of the fine space")
        coef[np.abs(coef) < 1e-14] = 0.0
        num = fine_num[funcs]
        ok = (num >= 0) & (coef != 0.0)
        rows.append(np.full(ok.sum(), r))
        cols.append(num[ok])
        vals.append(coef[ok])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(coarse.n_scalar, fine.n_scalar))


def restriction_matrix(fine: FunctionSpace, coarse: FunctionSpace) -> sp.csr_matrix:
    """Two-scale matrix ``R`` (n_coarse x n_fine) with ``phi_coarse = R phi_fine``.

    Raises
    ------
    MeshMismatch
        If ``coarse`` is not built on the coarsening of ``fine``'s mesh, or
        the two spaces differ in family, degree or components.
    """
    if (fine.family, fine.degree, fine.components) != (coarse.family, coarse.degree, coarse.components):
        raise MeshMismatch("fine and coarse spaces differ in family, degree or components")
    if coarse.mesh != coarsen(fine.mesh):
        raise MeshMismatch("coarse mesh is not the coarsening of the fine mesh")
    p = fine.degree
    if fine.family == "thb":
        R = _thb_restriction(fine, coarse)
    else:
        nxc, nyc = coarse.mesh.grid.resolution
        if fine.family == "bspline":
            Sx, Sy = bspline_subdivision(nxc, p), bspline_subdivision(nyc, p)
        else:
            Sx, Sy = lagrange_subdivision(nxc, p), lagrange_subdivision(nyc, p)
        R = sp.kron(sp.csr_matrix(Sx.T), sp.csr_matrix(Sy.T), format="csr")
        R = R[coarse._tensor_index][:, fine._tensor_index]
    R = sp.csr_matrix(R)
    R.eliminate_zeros()
    if fine.components > 1:
        R = sp.kron(R, sp.identity(fine.components), format="csr")
    return R
