"""From a configuration to an assembled system, preconditioners and spectra.

:func:`discretize` runs the pipeline geometry -> mesh -> trimming ->
quadrature -> space -> assembly. The remaining helpers build the
preconditioned operators that the command line tools analyse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import BoundaryPiece, ProblemDef, SparseOperator, assemble
from .basis import FunctionSpace, build_space
from .config import CaseConfig, bundled_config, parse_config
from .errors import ConfigError
from .expr import parse_field, parse_levelset
from .geometry import LevelSet
from .mesh import EmbeddingGrid, build_uniform, refine_boxes, refine_interface, trim
from .multigrid import MgHierarchy, as_operator, build_hierarchy, vcycle
from .quadrature import MeshQuadrature, integrate, min_volume_fraction
from .smoothers import Direction, Kind, SmootherConfig, build_smoother, double_iteration

__all__ = ["Case", "discretize", "variables", "smoother_config", "hierarchy",
           "preconditioner", "spectrum_operator", "depth_for_resolution",
           "star_config", "slice_config", "mbb_config"]


@dataclass
class Case:
    config: CaseConfig
    levelset: LevelSet
    quad: MeshQuadrature
    space: FunctionSpace
    problem: ProblemDef
    system: SparseOperator
    eta: float

    @property
    def A(self) -> sp.csr_matrix:
        return self.system.A

    @property
    def b(self) -> np.ndarray:
        return self.system.b

    @property
    def n(self) -> int:
        return self.space.n


def variables(cfg: CaseConfig) -> dict:
    """Names available in expressions: ``eta`` and the base element size ``h``."""
    ext = cfg.get("mesh.extent")
    res = cfg.get("mesh.resolution")
    return {"eta": float(cfg.get("geometry.eta")),
            "h": min(ext[0] / res[0], ext[1] / res[1])}


def _pieces(cfg, names, ncomp):
    out = []
    for b in cfg.get("problem.boundary"):
        sides = None if "all" in b["sides"] else tuple(b["sides"])
        region = parse_levelset(b["region"], names) if b["region"] else None
        kind = b["kind"]
        vcomp = 1 if kind == "normal_dirichlet" else ncomp
        value = parse_field(b["value"], vcomp, names, boundary=True)
        traction = None if b["traction"] == "" else parse_field(b["traction"], ncomp, names,
                                                                  boundary=True)
        out.append(BoundaryPiece(kind, value, region, sides, traction))
    return out


def discretize(cfg: CaseConfig) -> Case:
    """Build and assemble the system described by ``cfg``."""
    names = variables(cfg)
    ls = parse_levelset(cfg.get("geometry.levelset"), names)
    grid = EmbeddingGrid(tuple(cfg.get("mesh.origin")), tuple(cfg.get("mesh.extent")),
                         tuple(cfg.get("mesh.resolution")))
    sample = cfg.get("geometry.sample_depth")
    mesh = build_uniform(grid)
    boxes = [(b["lower"], b["upper"], b["depth"]) for b in cfg.get("mesh.refine_boxes")]
    if boxes:
        mesh = refine_boxes(mesh, boxes)
    if cfg.get("mesh.refine_interface"):
        mesh = refine_interface(mesh, ls, cfg.get("mesh.refine_interface"), sample,
                                cfg.get("mesh.refine_buffer"))
    trimmed = trim(mesh, ls, sample)
    quad = integrate(trimmed, cfg.get("quadrature.depth"), cfg.get("quadrature.gauss_order"),
                     sample)
    ncomp = cfg.get("basis.components")
    space = build_space(quad.trimmed, cfg.get("basis.family"), cfg.get("basis.degree"), ncomp)
    pen = cfg.get("problem.penalty")
    problem = ProblemDef(
        pde=cfg.get("problem.pde"), lam=float(cfg.get("problem.lam")),
        mu=float(cfg.get("problem.mu")),
        body_force=parse_field(cfg.get("problem.body_force"), ncomp, names),
        pieces=_pieces(cfg, names, ncomp),
        penalty=None if pen == "auto" else float(pen))
    system = assemble(space, quad, problem)
    return Case(cfg, ls, quad, space, problem, system, min_volume_fraction(quad))


def smoother_config(cfg: CaseConfig, kind=None) -> SmootherConfig:
    g = cfg.get("smoother.gamma")
    return SmootherConfig(Kind.parse(kind or cfg.get("smoother.kind")),
                          None if g == "auto" else float(g), cfg.get("smoother.filter_ratio"))


def hierarchy(case: Case, levels: int | None = None, kind=None) -> MgHierarchy:
    L = levels or case.config.get("mg.levels")
    return build_hierarchy(case.space, case.A, L, smoother_config(case.config, kind))


def preconditioner(case: Case, name: str | None = None):
    """``None``, a Jacobi callable, or the V-cycle operator."""
    name = name or case.config.get("solver.preconditioner")
    if name == "none":
        return None
    if name == "jacobi":
        d = 1.0 / case.A.diagonal()
        return lambda r: d * r if np.ndim(r) == 1 else d[:, None] * r
    if name == "vcycle":
        h = hierarchy(case)
        if h.L == 1:
            return h.coarse.solve
        return as_operator(h)
    raise ConfigError(f"unknown preconditioner {name!r}")


def spectrum_operator(case: Case, name: str | None = None):
    """A callable ``X -> P A X`` on column matrices, for the named ``P``.

    ``jacobi`` is one Jacobi step (``D^{-1} A`` unless a damping is
    configured); ``gs2``, ``as2`` and ``ms2`` are
    symmetric double iterations of the corresponding smoother; ``vcycle``
    is the configured V-cycle.
    """
    name = name or case.config.get("spectrum.operator")
    A = case.A
    if name == "vcycle":
        h = hierarchy(case)
        return lambda X: vcycle(h, h.L, A @ X)
    kinds = {"jacobi": Kind.JACOBI, "gs2": Kind.GAUSS_SEIDEL,
             "as2": Kind.ADDITIVE_SCHWARZ, "ms2": Kind.MULTIPLICATIVE_SCHWARZ}
    if name not in kinds:
        raise ConfigError(f"unknown spectrum operator {name!r}")
    cfg = smoother_config(case.config, kinds[name])
    if name == "jacobi" and cfg.gamma is None:
        cfg = SmootherConfig(Kind.JACOBI, 1.0, cfg.filter_ratio)
    sm = build_smoother(case.space, A, cfg)
    if name == "jacobi":
        return lambda X: sm.apply(A @ X, Direction.FORWARD)
    return lambda X: double_iteration(sm, A @ X)


def depth_for_resolution(base_depth: int, base_resolution: int, resolution: int) -> int:
    """Quadrature depth that keeps the finest integration cells fixed.

    Doubling the resolution lowers the depth by one, so all grids integrate
    the same piecewise-linear geometry while the depth stays nonnegative.
    """
    shift = math.log2(resolution / base_resolution)
    if shift != int(shift):
        raise ConfigError("grid sweep resolutions must differ by powers of two")
    return max(0, int(base_depth - shift))


def star_config(n: int = 16, depth: int | None = None, **changes) -> CaseConfig:
    """The bundled star case on an ``n x n`` grid (depth 2 at 16, 1 at 32 ...)."""
    d = depth_for_resolution(2, 16, n) if depth is None else depth
    return bundled_config("star2d").replace(mesh__resolution=[n, n], quadrature__depth=d,
                                            **changes)


def slice_config(n: int = 16, eta: float = 1e-3, shape: str = "slice", **changes) -> CaseConfig:
    """Square of side 1 cut near its right side so the smallest volume fraction is ``eta``.

    The box is ``[h - 1, h] x [0, 1]`` (``[h - 1, h]^2`` for ``corner``), so
    the cut passes within ``eta h`` of the grid line ``x = 0`` and stays
    representable down to ``eta = 1e-18``. ``slice`` keeps ``x <= eta h``,
    leaving a column of elements with fraction ``eta``; ``corner`` keeps
    ``x + y <= h sqrt(2 eta)``, leaving one corner element with a triangle
    of fraction ``eta``. Dirichlet data is imposed on the left side only.
    """
    h = 1.0 / n
    if shape == "slice":
        ls, origin = "halfplane(-1, 0, -eta * h)", [h - 1.0, 0.0]
    elif shape == "corner":
        ls, origin = "halfplane(-1, -1, -h * sqrt(2 * eta))", [h - 1.0, h - 1.0]
    else:
        raise ConfigError(f"unknown slice shape {shape!r}")
    tree = bundled_config("star2d").to_dict()
    tree["geometry"].update(levelset=ls, eta=float(eta))
    tree["mesh"].update(origin=origin, extent=[1.0, 1.0], resolution=[n, n])
    tree["quadrature"]["depth"] = 0
    tree["problem"]["boundary"] = [{"kind": "dirichlet", "value": 0.0, "sides": ["left"]}]
    return parse_config(tree).replace(**changes) if changes else parse_config(tree)


def mbb_config(**changes) -> CaseConfig:
    cfg = bundled_config("mbb2d")
    return cfg.replace(**changes) if changes else cfg
