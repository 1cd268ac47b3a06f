"""Run configuration: a TOML key tree with explicit defaults and strict validation.

Every key has a default except the required ones (``geometry.levelset``,
``mesh.resolution``, ``basis.family``, ``basis.degree``). Unknown keys are
rejected, and values are type-checked before any computation starts.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import tomli
import tomli_w

from .errors import ConfigError

__all__ = ["CaseConfig", "load_config", "parse_config", "bundled_config", "DEFAULTS",
           "REQUIRED", "SMOOTHER_KINDS", "SPECTRUM_OPERATORS"]

REQUIRED = object()

SMOOTHER_KINDS = ("jacobi", "gauss_seidel", "additive_schwarz", "multiplicative_schwarz",
                  "gs", "as", "ms")
SPECTRUM_OPERATORS = ("jacobi", "gs2", "as2", "ms2", "vcycle")
PRECONDITIONERS = ("none", "jacobi", "vcycle")


# validators -----------------------------------------------------------------

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _choice(*opts):
    def check(v):
        return isinstance(v, str) and v.lower() in opts
    check.doc = "one of " + ", ".join(opts)
    return check


def _pair(pred):
    def check(v):
        return isinstance(v, list) and len(v) == 2 and all(pred(x) for x in v)
    return check


def _num_or_auto(v):
    return _num(v) or v == "auto"


def _field(v):
    items = v if isinstance(v, list) else [v]
    return len(items) in (1, 2) and all(_num(x) or isinstance(x, str) for x in items)


def _str_list(v):
    return isinstance(v, list) and all(isinstance(x, str) for x in v)


Check = Callable[[Any], bool]

# section -> key -> (default, validator, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "levelset": (REQUIRED, lambda v: isinstance(v, str), "level-set expression, inside where >= 0"),
        "eta": (0.0, _num, "value of the variable `eta` in expressions"),
        "sample_depth": (2, lambda v: _int(v) and v >= 0, "lattice depth for cell classification"),
    },
    "mesh": {
        "origin": ([0.0, 0.0], _pair(_num), "lower-left corner of the embedding box"),
        "extent": ([1.0, 1.0], _pair(lambda x: _num(x) and x > 0), "box side lengths"),
        "resolution": (REQUIRED, _pair(lambda x: _int(x) and x >= 1), "base elements per axis"),
        "refine_interface": (0, lambda v: _int(v) and v >= 0, "refinement passes on cut elements"),
        "refine_buffer": (0, lambda v: _int(v) and v >= 0, "neighbour rings refined with cut elements"),
        "refine_boxes": ([], lambda v: isinstance(v, list), "list of {lower, upper, depth} tables"),
    },
    "quadrature": {
        "depth": (2, lambda v: _int(v) and v >= 0, "bisection depth on cut elements"),
        "gauss_order": (3, lambda v: _int(v) and v >= 1, "Gauss points per direction"),
    },
    "basis": {
        "family": (REQUIRED, _choice("lagrange", "bspline", "thb"), "basis family"),
        "degree": (REQUIRED, lambda v: _int(v) and v >= 1, "polynomial degree"),
        "components": (1, lambda v: v in (1, 2) and _int(v), "1 scalar, 2 elasticity"),
    },
    "problem": {
        "pde": ("poisson", _choice("poisson", "elasticity"), "operator"),
        "lam": (1.0, lambda v: _num(v) and v > 0, "first Lame parameter"),
        "mu": (1.0, lambda v: _num(v) and v > 0, "shear modulus"),
        "body_force": (1.0, _field, "number, formula in x, y, or list per component"),
        "penalty": ("auto", _num_or_auto, "penalty factor; auto is 2 / h_finest"),
        "boundary": ([{"kind": "dirichlet", "value": 0.0}], lambda v: isinstance(v, list),
                     "list of boundary pieces"),
    },
    "smoother": {
        "kind": ("multiplicative_schwarz", _choice(*SMOOTHER_KINDS), "smoother type"),
        "gamma": ("auto", _num_or_auto, "damping; auto picks the kind's default"),
        "filter_ratio": (1e-16, lambda v: _num(v) and v >= 0, "near-singular block threshold"),
    },
    "mg": {
        "levels": (2, lambda v: _int(v) and v >= 1, "number of grid levels"),
    },
    "solver": {
        "method": ("pcg", _choice("pcg", "richardson"), "iteration"),
        "preconditioner": ("vcycle", _choice(*PRECONDITIONERS), "preconditioner"),
        "tol": (1e-10, lambda v: _num(v) and v > 0, "relative residual tolerance"),
        "maxit": (500, lambda v: _int(v) and v >= 1, "iteration limit"),
    },
    "spectrum": {
        "operator": ("vcycle", _choice(*SPECTRUM_OPERATORS), "preconditioned operator"),
        "method": ("dense", _choice("dense", "power"), "all eigenvalues or extreme pair"),
        "dense_limit": (6000, lambda v: _int(v) and v >= 1, "largest dense problem"),
        "power_iters": (200, lambda v: _int(v) and v >= 1, "power iteration steps"),
    },
    "output": {
        "directory": ("out", lambda v: isinstance(v, str), "artifact directory"),
        "prefix": ("run", lambda v: isinstance(v, str), "artifact file prefix"),
    },
}
TOP_LEVEL = {"seed": (0, _int, "seed for randomized utilities")}

BOUNDARY_SCHEMA = {
    "kind": (REQUIRED, _choice("dirichlet", "neumann", "normal_dirichlet"), "condition"),
    "value": (0.0, _field, "Dirichlet data, traction or normal displacement"),
    "sides": (["all"], lambda v: _str_list(v) and set(v) <= {"all", "interface", "left", "right",
                                                              "bottom", "top"}, "sources"),
    "region": ("", lambda v: isinstance(v, str), "level-set expression limiting the piece"),
    "traction": ("", _field, "optional flux; empty for none"),
}
BOX_SCHEMA = {
    "lower": (REQUIRED, _pair(_num), "box corner"),
    "upper": (REQUIRED, _pair(_num), "box corner"),
    "depth": (1, lambda v: _int(v) and v >= 0, "refinement passes"),
}


def _defaults():
    out = {k: v[0] for k, v in TOP_LEVEL.items()}
    for sec, keys in SCHEMA.items():
        out[sec] = {k: copy.deepcopy(v[0]) for k, v in keys.items() if v[0] is not REQUIRED}
    return out


DEFAULTS = _defaults()


def _check_table(table, schema, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    unknown = sorted(set(table) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    out = {}
    for key, (default, check, _doc) in schema.items():
        if key not in table:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {where}.{key}")
            out[key] = copy.deepcopy(default)
            continue
        v = table[key]
        if not check(v):
            hint = getattr(check, "doc", "")
            raise ConfigError(f"invalid value for {where}.{key}: {v!r}" + (f" ({hint})" if hint else ""))
        out[key] = v.lower() if isinstance(v, str) and hasattr(check, "doc") else v
    return out


def _validate(tree: dict) -> dict:
    known = set(SCHEMA) | set(TOP_LEVEL)
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    out = _check_table({k: tree[k] for k in TOP_LEVEL if k in tree}, TOP_LEVEL, "top level")
    for sec, schema in SCHEMA.items():
        out[sec] = _check_table(tree.get(sec, {}), schema, sec)
    prob = out["problem"]
    prob["boundary"] = [_check_table(b, BOUNDARY_SCHEMA, f"problem.boundary[{i}]")
                        for i, b in enumerate(prob["boundary"])]
    if not prob["boundary"]:
        raise ConfigError("problem.boundary needs at least one piece")
    out["mesh"]["refine_boxes"] = [_check_table(b, BOX_SCHEMA, f"mesh.refine_boxes[{i}]")
                                   for i, b in enumerate(out["mesh"]["refine_boxes"])]
    ncomp = 2 if prob["pde"] == "elasticity" else 1
    if out["basis"]["components"] != ncomp:
        raise ConfigError(f"basis.components must be {ncomp} for pde {prob['pde']!r}")
    if isinstance(prob["body_force"], list) and len(prob["body_force"]) != ncomp:
        raise ConfigError(f"problem.body_force needs {ncomp} entries")
    if (out["mesh"]["refine_boxes"] or out["mesh"]["refine_interface"]) \
            and out["basis"]["family"] != "thb":
        raise ConfigError("local refinement needs basis.family = 'thb'")
    return out


@dataclass(frozen=True)
class CaseConfig:
    """A validated configuration tree.

    Values are read with :meth:`get` using dotted keys; :meth:`replace`
    returns a revalidated copy with some keys changed.
    """
    data: dict

    def get(self, dotted: str):
        node = self.data
        for part in dotted.split("."):
            node = node[part]
        return copy.deepcopy(node)

    def replace(self, **changes) -> "CaseConfig":
        """Keys use ``__`` for dots: ``replace(mesh__resolution=[32, 32])``."""
        tree = copy.deepcopy(self.data)
        for key, v in changes.items():
            parts = key.split("__")
            node = tree
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = v
        return parse_config(tree)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)


def parse_config(tree: dict) -> CaseConfig:
    """Validate a raw key tree and fill in defaults.

    Raises
    ------
    ConfigError
        On unknown keys, missing required keys or ill-typed values.
    """
    return CaseConfig(_validate(copy.deepcopy(tree)))


def load_config(path) -> CaseConfig:
    """Read and validate a TOML file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        tree = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from None
    return parse_config(tree)


def bundled_config(name: str = "star2d") -> CaseConfig:
    """One of the configurations shipped in ``immergrid/configs``."""
    ref = resources.files("immergrid") / "configs" / f"{name}.toml"
    if not ref.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return parse_config(tomli.loads(ref.read_text()))
