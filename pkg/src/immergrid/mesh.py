"""Structured embedding grids with hierarchical (quadtree) refinement.

Elements are identified by ``(level, i, j)``: level ``m`` cells have size
``extent / (base_resolution * 2**m)`` and integer indices along x and y.
Sorting element ids lexicographically gives the canonical sweep order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDomain, InactiveTarget, OddResolution
from .geometry import CellState, LevelSet, classify_cells

__all__ = ["EmbeddingGrid", "HierarchicalMesh", "TrimmedMesh",
           "build_uniform", "refine", "refine_boxes", "refine_interface",
           "coarsen", "trim"]


@dataclass(frozen=True)
class EmbeddingGrid:
    origin: tuple = (0.0, 0.0)
    extent: tuple = (1.0, 1.0)
    resolution: tuple = (1, 1)

    def __post_init__(self):
        if min(self.extent) <= 0:
            raise ValueError("extents must be positive")
        if min(self.resolution) < 1:
            raise ValueError("base resolution must be at least 1 per axis")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))

    def level_shape(self, m: int) -> tuple[int, int]:
        return self.resolution[0] << m, self.resolution[1] << m

    def cell_size(self, m: int) -> np.ndarray:
        nx, ny = self.level_shape(m)
        return np.array([self.extent[0] / nx, self.extent[1] / ny])

    def cell_box(self, elem) -> tuple[np.ndarray, np.ndarray]:
        m, i, j = elem
        h = self.cell_size(m)
        lo = np.array(self.origin) + h * np.array([i, j])
        return lo, lo + h

    def coarse(self) -> "EmbeddingGrid":
        nx, ny = self.resolution
        if nx % 2 or ny % 2:
            raise OddResolution(f"cannot coarsen base resolution {self.resolution}")
        return EmbeddingGrid(self.origin, self.extent, (nx // 2, ny // 2))


def _children(elem):
    m, i, j = elem
    return [(m + 1, 2 * i + a, 2 * j + b) for a in (0, 1) for b in (0, 1)]


def _ancestor(elem, level):
    m, i, j = elem
    s = m - level
    return (level, i >> s, j >> s)


@dataclass(frozen=True, eq=False)
class HierarchicalMesh:
    """Active element set of a quadtree-refined embedding grid."""
    grid: EmbeddingGrid
    active: frozenset
    elements: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(sorted(self.active)))

    def __eq__(self, other):
        return (isinstance(other, HierarchicalMesh) and self.grid == other.grid
                and self.active == other.active)

    def __hash__(self):
        return hash((self.grid, self.active))

    def __len__(self):
        return len(self.active)

    @property
    def max_level(self) -> int:
        """Number of local refinement levels ``M``."""
        return max(e[0] for e in self.active)

    def level_elements(self, m: int) -> list:
        return [e for e in self.elements if e[0] == m]

    def refined_cells(self, m: int) -> set:
        """Level-``m`` cells that have active elements of a finer level below."""
        return {(m,) + _ancestor(e, m)[1:] for e in self.active if e[0] > m}

    def region_at_least(self, m: int) -> set:
        """Level-``m`` cells covered by active elements of level ``>= m``."""
        return {e for e in self.active if e[0] == m} | self.refined_cells(m)

    def cell_status(self, m: int) -> dict:
        """Map every level-``m`` cell of interest to 'active' or 'refined'.

        Cells absent from the map are covered by a coarser active element.
        """
        out = {(m,) + e[1:]: "refined" for e in self.refined_cells(m)}
        for e in self.active:
            if e[0] == m:
                out[e] = "active"
        return out

    def box(self, elem):
        return self.grid.cell_box(elem)

    def boxes(self, elems=None):
        elems = self.elements if elems is None else elems
        lo = np.empty((len(elems), 2))
        hi = np.empty((len(elems), 2))
        for k, e in enumerate(elems):
            lo[k], hi[k] = self.grid.cell_box(e)
        return lo, hi

    def locate(self, point):
        """Return the active element containing ``point`` (closed boxes)."""
        p = np.asarray(point, dtype=float)
        rel = (p - np.array(self.grid.origin)) / np.array(self.grid.extent)
        for m in range(self.max_level + 1):
            nx, ny = self.grid.level_shape(m)
            i = min(max(int(np.floor(rel[0] * nx)), 0), nx - 1)
            j = min(max(int(np.floor(rel[1] * ny)), 0), ny - 1)
            if (m, i, j) in self.active:
                return (m, i, j)
        return None

    def intersects(self, elem, lower, upper) -> bool:
        lo, hi = self.box(elem)
        return bool(np.all(lo < np.asarray(upper)) and np.all(hi > np.asarray(lower)))


def build_uniform(grid: EmbeddingGrid) -> HierarchicalMesh:
    nx, ny = grid.resolution
    return HierarchicalMesh(grid, frozenset((0, i, j) for i in range(nx) for j in range(ny)))


def refine(mesh: HierarchicalMesh, targets) -> HierarchicalMesh:
    """Replace each target element by its four children one level finer."""
    targets = set(targets)
    missing = targets - mesh.active
    if missing:
        raise InactiveTarget(f"elements not active: {sorted(missing)[:5]}")
    active = set(mesh.active) - targets
    for t in targets:
        active.update(_children(t))
    return HierarchicalMesh(mesh.grid, frozenset(active))


def refine_boxes(mesh: HierarchicalMesh, boxes) -> HierarchicalMesh:
    """Apply refinement boxes in order.

    ``boxes`` is a sequence of ``(lower, upper, depth)``: each entry refines,
    ``depth`` times, the active elements that intersect the box.
    """
    for lower, upper, depth in boxes:
        for _ in range(int(depth)):
            targets = [e for e in mesh.elements if mesh.intersects(e, lower, upper)]
            mesh = refine(mesh, targets)
    return mesh


def refine_interface(mesh: HierarchicalMesh, ls: LevelSet, levels: int,
                     sample_depth: int = 2, buffer: int = 0) -> HierarchicalMesh:
    """Refine elements cut by ``ls`` (plus ``buffer`` neighbour rings), ``levels`` times."""
    for _ in range(levels):
        lo, hi = mesh.boxes()
        state = classify_cells(ls, lo, hi, sample_depth)
        cut = [e for e, s in zip(mesh.elements, state) if s == CellState.CUT]
        if buffer:
            h = [mesh.grid.cell_size(e[0]) for e in cut]
            grown = set(cut)
            for e, hh in zip(cut, h):
                lo_e, hi_e = mesh.box(e)
                lo_e = lo_e - buffer * hh
                hi_e = hi_e + buffer * hh
                grown.update(x for x in mesh.elements
                             if x[0] == e[0] and mesh.intersects(x, lo_e, hi_e))
            cut = sorted(grown)
        mesh = refine(mesh, cut)
    return mesh


def coarsen(mesh: HierarchicalMesh) -> HierarchicalMesh:
    """Hierarchical derefinement: the coarsest mesh one refinement pass away.

    Starts from the uniform grid with doubled element size and, for each
    local level ``m < M``, refines every coarse level-``m`` element that
    overlaps a fine active element of level ``> m``.
    """
    cgrid = mesh.grid.coarse()
    M = mesh.max_level
    active = set(build_uniform(cgrid).active)
    for m in range(M):
        # coarse level m cells live on fine level m-1's lattice, i.e. the
        # resolution of coarse level m is n_c * 2**m
        deep = set()
        for e in mesh.active:
            if e[0] > m:
                lev, i, j = e
                s = lev - m + 1
                deep.add((m, i >> s, j >> s))
        targets = [k for k in active if k[0] == m and k in deep]
        active.difference_update(targets)
        for t in targets:
            active.update(_children(t))
    return HierarchicalMesh(cgrid, frozenset(active))


@dataclass(frozen=True, eq=False)
class TrimmedMesh:
    """A hierarchical mesh with each active element tagged against a level set."""
    mesh: HierarchicalMesh
    levelset: LevelSet | None
    states: dict

    @property
    def physical(self) -> list:
        """Inside and cut elements in canonical order."""
        return [e for e in self.mesh.elements if self.states[e] != CellState.OUTSIDE]

    def state(self, elem) -> CellState:
        return CellState(self.states[elem])

    def with_outside(self, elems) -> "TrimmedMesh":
        states = dict(self.states)
        for e in elems:
            states[e] = CellState.OUTSIDE
        if not any(s != CellState.OUTSIDE for s in states.values()):
            raise EmptyDomain("no element intersects the physical domain")
        return TrimmedMesh(self.mesh, self.levelset, states)

    def coarsened(self) -> "TrimmedMesh":
        """Tags for :func:`coarsen` of the mesh, inherited from this one.

        A coarse element is physical iff it contains a physical fine element,
        and inside iff every fine element it contains is inside.
        """
        cmesh = coarsen(self.mesh)
        hit = {}
        for e in self.mesh.elements:
            lev, i, j = e
            st = CellState(self.states[e])
            # every fine element lies inside exactly one coarse active element
            for m in range(lev + 1, -1, -1):
                s = lev - m + 1
                key = (m, i >> s, j >> s) if s >= 0 else None
                if key is not None and key in cmesh.active:
                    hit.setdefault(key, []).append(st)
                    break
        states = {}
        for k in cmesh.elements:
            sts = hit.get(k, [])
            if not sts or all(s == CellState.OUTSIDE for s in sts):
                states[k] = CellState.OUTSIDE
            elif all(s == CellState.INSIDE for s in sts):
                states[k] = CellState.INSIDE
            else:
                states[k] = CellState.CUT
        return TrimmedMesh(cmesh, self.levelset, states)


def trim(mesh: HierarchicalMesh, ls: LevelSet, sample_depth: int = 2) -> TrimmedMesh:
    """Tag each active element Inside / Cut / Outside by lattice sampling."""
    lo, hi = mesh.boxes()
    state = classify_cells(ls, lo, hi, sample_depth)
    states = {e: CellState(int(s)) for e, s in zip(mesh.elements, state)}
    if all(s == CellState.OUTSIDE for s in states.values()):
        raise EmptyDomain("no element intersects the physical domain")
    return TrimmedMesh(mesh, ls, states)
