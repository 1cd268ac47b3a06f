"""Cut-cell quadrature by recursive bisection and marching-squares triangulation.

Cut elements are split into four sub-cells recursively. Sub-cells found fully
inside get a tensor Gauss rule, fully outside ones are dropped, and sub-cells
still cut at the maximum depth are triangulated from their corner signs and
the interface crossings on their edges. The interface is thereby replaced by
a straight-segment polyline, on which the boundary rule lives.

Boundary rules also cover the parts of the embedding-box edges that bound the
physical domain, so Dirichlet data can be put on the box itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .geometry import CellState, LevelSet, bisect_segments, classify_cells

__all__ = ["QuadRule", "MeshQuadrature", "gauss_legendre", "triangle_rule",
           "volume_rule", "boundary_rule", "integrate", "min_volume_fraction"]

# box sides, also the ``side`` label of boundary points; -1 marks the interface
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
INTERFACE = -1
_SIDE_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
# cell edge k runs from corner k to corner k+1 (counter-clockwise)
_EDGE_SIDE = (BOTTOM, RIGHT, TOP, LEFT)
# cut elements with a smaller physical fraction are treated as outside
MIN_AREA_FRACTION = 1e-24


@dataclass
class QuadRule:
    """Points and weights in physical coordinates.

    ``normals`` and ``side`` are set for boundary rules only; ``side`` is
    -1 on the interface and 0..3 (left, right, bottom, top) on box edges.
    """
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray | None = None
    side: np.ndarray | None = None

    def __len__(self):
        return len(self.weights)

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))


@lru_cache(maxsize=None)
def gauss_legendre(q: int):
    """``q``-point Gauss rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(q: int):
    """Collapsed-square Gauss rule on the unit triangle, exact to degree ``2q - 1``.

    Uses ``q`` Gauss-Jacobi points along the collapsed direction and ``q``
    Gauss-Legendre points along the other. All weights are positive; the
    rule is not symmetric under vertex permutation. Weights sum to 1/2.
    """
    xj, wj = roots_jacobi(q, 1.0, 0.0)
    s = 0.5 * (xj + 1.0)
    ws = 0.25 * wj
    t, wt = gauss_legendre(q)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.stack([S.ravel(), (T * (1.0 - S)).ravel()], axis=1)
    return pts, W.ravel()


def _tensor_points(lo, hi, q):
    """Tensor Gauss rules on a batch of boxes: arrays (n, q*q, 2), (n, q*q)."""
    x, w = gauss_legendre(q)
    X, Y = np.meshgrid(x, x, indexing="ij")
    ref = np.stack([X.ravel(), Y.ravel()], axis=1)
    wref = np.outer(w, w).ravel()
    size = hi - lo
    pts = lo[:, None, :] + size[:, None, :] * ref[None]
    wts = (size[:, 0] * size[:, 1])[:, None] * wref[None]
    return pts, wts


def _segment_points(a, b, q):
    """Gauss points on a batch of segments ``a -> b``."""
    x, w = gauss_legendre(q)
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    pts = a[:, None, :] + x[None, :, None] * d[:, None, :]
    wts = length[:, None] * w[None]
    return pts, wts


class _Collector:
    """Accumulates rule fragments tagged by owner index."""

    def __init__(self):
        self.vp, self.vw, self.vo = [], [], []
        self.bp, self.bw, self.bn, self.bo, self.bs = [], [], [], [], []

    def volume(self, pts, wts, owner):
        if len(wts):
            self.vp.append(pts.reshape(-1, 2))
            self.vw.append(wts.ravel())
            self.vo.append(np.repeat(owner, wts.shape[1]) if wts.ndim == 2 else owner)

    def boundary(self, pts, wts, normals, owner, side):
        if len(wts):
            k = wts.shape[1]
            self.bp.append(pts.reshape(-1, 2))
            self.bw.append(wts.ravel())
            self.bn.append(np.repeat(normals, k, axis=0))
            self.bo.append(np.repeat(owner, k))
            self.bs.append(np.repeat(side, k))

    @staticmethod
    def _cat(parts, shape, dtype=float):
        if not parts:
            return np.zeros(shape, dtype=dtype)
        return np.concatenate(parts).astype(dtype, copy=False)

    def finish(self):
        vol = (self._cat(self.vp, (0, 2)), self._cat(self.vw, (0,)),
               self._cat(self.vo, (0,), np.int64))
        bnd = (self._cat(self.bp, (0, 2)), self._cat(self.bw, (0,)),
               self._cat(self.bn, (0, 2)), self._cat(self.bo, (0,), np.int64),
               self._cat(self.bs, (0,), np.int64))
        return vol, bnd


def _box_edges(col, lo, hi, owner, q, domain, tol):
    """Gauss rules on the cell edges lying on the embedding-box boundary."""
    if domain is None or len(owner) == 0:
        return
    dlo, dhi = domain
    specs = [
        (LEFT, np.abs(lo[:, 0] - dlo[0]) <= tol, lambda l, h: (l, np.stack([l[:, 0], h[:, 1]], 1))),
        (RIGHT, np.abs(hi[:, 0] - dhi[0]) <= tol, lambda l, h: (np.stack([h[:, 0], l[:, 1]], 1), h)),
        (BOTTOM, np.abs(lo[:, 1] - dlo[1]) <= tol, lambda l, h: (l, np.stack([h[:, 0], l[:, 1]], 1))),
        (TOP, np.abs(hi[:, 1] - dhi[1]) <= tol, lambda l, h: (np.stack([l[:, 0], h[:, 1]], 1), h)),
    ]
    for side, mask, ends in specs:
        if np.any(mask):
            a, b = ends(lo[mask], hi[mask])
            pts, wts = _segment_points(a, b, q)
            nrm = np.repeat(_SIDE_NORMALS[side][None], mask.sum(), axis=0)
            col.boundary(pts, wts, nrm, owner[mask], np.full(mask.sum(), side))


def _split(lo, hi, owner):
    mid = 0.5 * (lo + hi)
    los, his = [], []
    for a in (0, 1):
        for b in (0, 1):
            l = np.stack([np.where(a, mid[:, 0], lo[:, 0]), np.where(b, mid[:, 1], lo[:, 1])], 1)
            h = np.stack([np.where(a, hi[:, 0], mid[:, 0]), np.where(b, hi[:, 1], mid[:, 1])], 1)
            los.append(l)
            his.append(h)
    return np.concatenate(los), np.concatenate(his), np.tile(owner, 4)


def _triangle_polygon(inside):
    """Inside part of one quarter triangle ``(center, corner k, corner k+1)``.

    ``inside`` holds the signs of those three vertices. Returns local vertex
    labels 0..2 for triangle vertices and 3..5 for the crossing on triangle
    edge 0..2, in counter-clockwise order.
    """
    poly = []
    for i in range(3):
        if inside[i]:
            poly.append(i)
        if inside[i] != inside[(i + 1) % 3]:
            poly.append(3 + i)
    return poly


# triangle edge -> vertices (as local labels) lying on the outer cell edge
_ON_CELL_EDGE = {1, 2, 4}


def _triangulate_cut(col, lo, hi, owner, ls, q, domain, tol):
    """Marching-triangles over sub-cells cut at maximum depth.

    Each sub-cell is split into four triangles through its center; crossings
    are located on the four cell edges and the four center-to-corner
    diagonals, and the inside part of every triangle is fan-triangulated.
    """
    n = len(owner)
    if n == 0:
        return
    corners = np.stack([lo, np.stack([hi[:, 0], lo[:, 1]], 1), hi,
                        np.stack([lo[:, 0], hi[:, 1]], 1)], axis=1)
    center = 0.5 * (lo + hi)
    inside = ls(corners) >= 0.0
    cin = ls(center) >= 0.0
    full = inside.all(axis=1) & cin
    if np.any(full):
        pts, wts = _tensor_points(lo[full], hi[full], q)
        col.volume(pts, wts, owner[full])
        _box_edges(col, lo[full], hi[full], owner[full], q, domain, tol)
    nxt = np.roll(np.arange(4), -1)
    # crossings on cell edges (corner k -> corner k+1) and diagonals (center -> corner k)
    xe = np.zeros((n, 4, 2))
    ci, ck = np.nonzero(inside != inside[:, nxt])
    if len(ci):
        xe[ci, ck] = bisect_segments(ls, corners[ci, ck], corners[ci, nxt[ck]])
    xd = np.zeros((n, 4, 2))
    di, dk = np.nonzero(inside != cin[:, None])
    if len(di):
        xd[di, dk] = bisect_segments(ls, center[di], corners[di, dk])

    tris, tri_owner = [], []
    seg_a, seg_b, seg_owner, seg_side = [], [], [], []
    mixed = ~full & (inside.any(axis=1) | cin)
    for c in np.nonzero(mixed)[0]:
        for k in range(4):
            k1 = (k + 1) % 4
            sgn = (cin[c], inside[c, k], inside[c, k1])
            if not any(sgn):
                continue
            verts = (center[c], corners[c, k], corners[c, k1], xd[c, k], xe[c, k], xd[c, k1])
            poly = _triangle_polygon(sgn)
            xy = np.array([verts[v] for v in poly])
            m = len(poly)
            cen = xy.mean(axis=0)
            for i in range(m):
                j = (i + 1) % m
                tris.append((cen, xy[i], xy[j]))
                tri_owner.append(owner[c])
                va, vb = poly[i], poly[j]
                if va >= 3 and vb >= 3:
                    seg_a.append(xy[i]); seg_b.append(xy[j])
                    seg_owner.append(owner[c]); seg_side.append(INTERFACE)
                elif domain is not None and va in _ON_CELL_EDGE and vb in _ON_CELL_EDGE:
                    side = _EDGE_SIDE[k]
                    axis = 0 if side in (LEFT, RIGHT) else 1
                    bound = domain[0 if side in (LEFT, BOTTOM) else 1][axis]
                    if abs(xy[i][axis] - bound) <= tol:
                        seg_a.append(xy[i]); seg_b.append(xy[j])
                        seg_owner.append(owner[c]); seg_side.append(side)
    if tris:
        T = np.array(tris)
        tri_owner = np.array(tri_owner)
        e1 = T[:, 1] - T[:, 0]
        e2 = T[:, 2] - T[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        keep = det > 0.0
        T, det, tri_owner = T[keep], det[keep], tri_owner[keep]
        e1, e2 = e1[keep], e2[keep]
        ref, wref = triangle_rule(q)
        pts = (T[:, 0][:, None, :] + ref[None, :, 0, None] * e1[:, None, :]
               + ref[None, :, 1, None] * e2[:, None, :])
        wts = det[:, None] * wref[None]
        col.volume(pts, wts, tri_owner)
    if seg_a:
        a = np.array(seg_a)
        b = np.array(seg_b)
        side = np.array(seg_side)
        sown = np.array(seg_owner)
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        keep = length > 0.0
        a, b, d, length, side, sown = a[keep], b[keep], d[keep], length[keep], side[keep], sown[keep]
        # polygons are counter-clockwise, so (dy, -dx) points out of the domain
        nrm = np.stack([d[:, 1], -d[:, 0]], 1) / length[:, None]
        on_box = side >= 0
        nrm[on_box] = _SIDE_NORMALS[side[on_box]]
        pts, wts = _segment_points(a, b, q)
        col.boundary(pts, wts, nrm, sown, side)


def _integrate_boxes(ls, lo, hi, states, depth, q, sample_depth, domain):
    """Volume and boundary rules for a batch of classified cells."""
    col = _Collector()
    idx = np.arange(len(states))
    tol = 0.0
    if domain is not None:
        tol = 1e-12 * float(np.max(np.asarray(domain[1]) - np.asarray(domain[0])))
    ins = states == CellState.INSIDE
    pts, wts = _tensor_points(lo[ins], hi[ins], q)
    col.volume(pts, wts, idx[ins])
    _box_edges(col, lo[ins], hi[ins], idx[ins], q, domain, tol)

    cut = states == CellState.CUT
    clo, chi, cown = lo[cut], hi[cut], idx[cut]
    for level in range(depth + 1):
        if len(cown) == 0:
            break
        st = classify_cells(ls, clo, chi, sample_depth) if level > 0 else np.full(len(cown), CellState.CUT)
        ins = st == CellState.INSIDE
        if np.any(ins):
            pts, wts = _tensor_points(clo[ins], chi[ins], q)
            col.volume(pts, wts, cown[ins])
            _box_edges(col, clo[ins], chi[ins], cown[ins], q, domain, tol)
        cut = st == CellState.CUT
        clo, chi, cown = clo[cut], chi[cut], cown[cut]
        if level < depth:
            clo, chi, cown = _split(clo, chi, cown)
    _triangulate_cut(col, clo, chi, cown, ls, q, domain, tol)
    return col.finish()


def _as_box(box):
    (x0, y0), (x1, y1) = box
    return np.array([[x0, y0]], dtype=float), np.array([[x1, y1]], dtype=float)


def volume_rule(box, ls: LevelSet, depth: int = 2, gauss_order: int = 3,
                sample_depth: int = 2) -> QuadRule:
    """Volume rule for one element ``((x0, y0), (x1, y1))`` intersected with ``ls >= 0``."""
    lo, hi = _as_box(box)
    st = classify_cells(ls, lo, hi, sample_depth)
    (p, w, _), _ = _integrate_boxes(ls, lo, hi, st, depth, gauss_order, sample_depth, None)
    return QuadRule(p, w)


def boundary_rule(box, ls: LevelSet, depth: int = 2, gauss_order: int = 3,
                  sample_depth: int = 2, domain=None) -> QuadRule:
    """Interface rule for one cut element, normals pointing toward ``ls < 0``.

    If ``domain = (lower, upper)`` is given, parts of the element edges on
    that box which bound the physical domain are included too.

    Raises
    ------
    ValueError
        If the element is not cut by the interface.
    """
    lo, hi = _as_box(box)
    st = classify_cells(ls, lo, hi, sample_depth)
    if st[0] != CellState.CUT:
        raise ValueError("boundary_rule requires a cut element")
    dom = None if domain is None else (np.asarray(domain[0], float), np.asarray(domain[1], float))
    _, (p, w, n, _, s) = _integrate_boxes(ls, lo, hi, st, depth, gauss_order, sample_depth, dom)
    return QuadRule(p, w, n, s)


@dataclass
class MeshQuadrature:
    """Quadrature for every physical element of a trimmed mesh.

    Arrays are concatenated over elements; ``*_elem`` holds the index of the
    owning element in ``elements``.
    """
    trimmed: object
    elements: list
    depth: int
    gauss_order: int
    vol_points: np.ndarray
    vol_weights: np.ndarray
    vol_elem: np.ndarray
    bnd_points: np.ndarray
    bnd_weights: np.ndarray
    bnd_normals: np.ndarray
    bnd_elem: np.ndarray
    bnd_side: np.ndarray
    areas: np.ndarray
    full_areas: np.ndarray
    states: np.ndarray

    @property
    def total_area(self) -> float:
        return float(self.vol_weights.sum())

    @property
    def interface_length(self) -> float:
        return float(self.bnd_weights[self.bnd_side == INTERFACE].sum())

    def volume_rule(self, k: int) -> QuadRule:
        m = self.vol_elem == k
        return QuadRule(self.vol_points[m], self.vol_weights[m])

    def boundary_rule(self, k: int) -> QuadRule:
        m = self.bnd_elem == k
        return QuadRule(self.bnd_points[m], self.bnd_weights[m], self.bnd_normals[m], self.bnd_side[m])


def integrate(trimmed, depth: int = 2, gauss_order: int = 3,
              sample_depth: int = 2) -> MeshQuadrature:
    """Build rules for all Inside/Cut elements of ``trimmed``.

    Cut elements whose physical fraction is at most ``MIN_AREA_FRACTION``
    (round-off areas of elements that merely touch the domain) are re-tagged
    Outside, so the returned ``trimmed`` may differ from the input.
    """
    mesh = trimmed.mesh
    elems = trimmed.physical
    lo, hi = mesh.boxes(elems)
    states = np.array([int(trimmed.states[e]) for e in elems], dtype=np.int8)
    g = mesh.grid
    domain = (np.array(g.origin), np.array(g.origin) + np.array(g.extent))
    ls = trimmed.levelset
    if ls is None:
        states[:] = CellState.INSIDE
    (vp, vw, vo), (bp, bw, bn, bo, bs) = _integrate_boxes(
        ls, lo, hi, states, depth, gauss_order, sample_depth, domain)
    areas = np.bincount(vo, weights=vw, minlength=len(elems))
    full = (hi[:, 0] - lo[:, 0]) * (hi[:, 1] - lo[:, 1])
    # elements that only touch the domain in a point or along an edge come
    # out with round-off areas around 1e-30 of the element; drop them
    empty = np.nonzero(areas <= MIN_AREA_FRACTION * full)[0]
    if len(empty):
        trimmed = trimmed.with_outside([elems[k] for k in empty])
        keep = areas > MIN_AREA_FRACTION * full
        remap = np.cumsum(keep) - 1
        elems = [e for e, k in zip(elems, keep) if k]
        vmask = keep[vo]
        bmask = keep[bo]
        vp, vw, vo = vp[vmask], vw[vmask], remap[vo[vmask]]
        bp, bw, bn, bo, bs = bp[bmask], bw[bmask], bn[bmask], remap[bo[bmask]], bs[bmask]
        lo, hi, areas, states, full = lo[keep], hi[keep], areas[keep], states[keep], full[keep]
    order = np.argsort(vo, kind="stable")
    vp, vw, vo = vp[order], vw[order], vo[order]
    order = np.argsort(bo, kind="stable")
    bp, bw, bn, bo, bs = bp[order], bw[order], bn[order], bo[order], bs[order]
    return MeshQuadrature(trimmed, elems, depth, gauss_order, vp, vw, vo,
                          bp, bw, bn, bo, bs, areas, full, states)


def min_volume_fraction(quad: MeshQuadrature) -> float:
    """Smallest ratio of physical to full element area; Inside elements count as 1."""
    frac = quad.areas / quad.full_areas
    frac[quad.states == CellState.INSIDE] = 1.0
    return float(np.min(frac))
