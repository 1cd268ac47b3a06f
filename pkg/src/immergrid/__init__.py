"""Geometric multigrid with Schwarz-type smoothers for immersed finite elements.

The package discretizes Poisson and linear elasticity problems on domains
given implicitly by a level set inside a structured (optionally locally
refined) embedding grid, using Lagrange, B-spline or truncated hierarchical
B-spline bases, and solves them with V-cycles whose smoothers are built
from encapsulating-support blocks.
"""
from . import (assembly, basis, cases, config, expr, geometry, mesh, multigrid,
               quadrature, smoothers, solvers, spectral)
from .assembly import BoundaryPiece, ProblemDef, assemble
from .basis import build_space, restriction_matrix
from .cases import discretize
from .config import CaseConfig, load_config
from .errors import ConfigError, ImmergridError
from .geometry import star_levelset
from .mesh import EmbeddingGrid, build_uniform, trim
from .multigrid import build_hierarchy, vcycle
from .quadrature import integrate
from .smoothers import Kind, SmootherConfig, build_smoother
from .solvers import pcg, richardson

__version__ = "0.1.0"

__all__ = [
    "assembly", "basis", "cases", "config", "expr", "geometry", "mesh", "multigrid",
    "quadrature", "smoothers", "solvers", "spectral",
    "BoundaryPiece", "ProblemDef", "assemble", "build_space", "restriction_matrix",
    "discretize", "CaseConfig", "load_config", "ConfigError", "ImmergridError",
    "star_levelset", "EmbeddingGrid", "build_uniform", "trim", "build_hierarchy",
    "vcycle", "integrate", "Kind", "SmootherConfig", "build_smoother", "pcg", "richardson",
]
