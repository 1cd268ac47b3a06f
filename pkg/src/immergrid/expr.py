"""A small, safe expression language for level sets and data fields.

Expressions are parsed with :mod:`ast` and evaluated by walking a
whitelisted subset of the tree; nothing is passed to ``eval``.

Level sets are either built from primitives::

    star(0.5, 0.1, 5)                 # c0 + c1 sin(k theta) - r
    disc(cx, cy, r)
    halfplane(nx, ny, offset)
    rectangle(x0, y0, x1, y1)
    constant(v)
    union(a, b, ...), intersect(a, b, ...), complement(a)
    affine(a, m00, m01, m10, m11, sx, sy)

combined with ``&``, ``|`` and ``~``, or given as a scalar formula in ``x``
and ``y`` such as ``"0.3 - hypot(x - 0.5, y - 0.5)"``. Fields use the same
arithmetic with ``x``, ``y`` and, on boundaries, the outward normal
``nx``, ``ny``. Named scalars (``eta``, ``h`` ...) may be supplied by the
caller.
"""
from __future__ import annotations

import ast
import math
import operator
from typing import Mapping

import numpy as np

from . import geometry as geo
from .errors import ConfigError

__all__ = ["parse_levelset", "parse_field", "evaluate_scalar", "FUNCTIONS"]

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "atan2": np.arctan2, "hypot": np.hypot,
    "min": np.minimum, "max": np.maximum, "tanh": np.tanh,
    "step": lambda v: np.where(np.asarray(v) >= 0, 1.0, 0.0),
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow, ast.Mod: operator.mod}
_SET_BINOPS = {ast.BitAnd: operator.and_, ast.BitOr: operator.or_}


def _parse(text: str) -> ast.AST:
    if not isinstance(text, str):
        raise ConfigError(f"expected an expression string, got {type(text).__name__}")
    try:
        return ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None


def _names(node) -> set:
    return {n.id for n in ast.walk(node) if isinstance(n, ast.Name)}


class _Evaluator:
    """Tree walker; ``env`` maps names to numbers or arrays."""

    def __init__(self, env: Mapping, text: str, primitives: Mapping | None = None):
        self.env = dict(CONSTANTS, **env)
        self.text = text
        self.primitives = primitives or {}

    def fail(self, what):
        raise ConfigError(f"{what} in expression {self.text!r}")

    def __call__(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self.fail(f"unsupported literal {node.value!r}")
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in self.env:
                self.fail(f"unknown name {node.id!r}")
            return self.env[node.id]
        if isinstance(node, ast.UnaryOp):
            v = self(node.operand)
            if isinstance(node.op, ast.USub):
                return -v if not isinstance(v, geo.LevelSet) else geo.Complement(v)
            if isinstance(node.op, ast.UAdd):
                return v
            if isinstance(node.op, ast.Invert) and isinstance(v, geo.LevelSet):
                return ~v
            self.fail("unsupported unary operator")
        if isinstance(node, ast.BinOp):
            a, b = self(node.left), self(node.right)
            sets = isinstance(a, geo.LevelSet) or isinstance(b, geo.LevelSet)
            if sets:
                op = _SET_BINOPS.get(type(node.op))
                if op is None or not (isinstance(a, geo.LevelSet) and isinstance(b, geo.LevelSet)):
                    self.fail("level sets only combine with '&', '|' and '~'")
                return op(a, b)
            op = _BINOPS.get(type(node.op))
            if op is None:
                self.fail("unsupported operator")
            return op(a, b)
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                self.fail("only plain positional calls are allowed")
            name = node.func.id
            args = [self(a) for a in node.args]
            if name in self.primitives:
                return self.primitives[name](self, *args)
            if name in FUNCTIONS:
                if any(isinstance(a, geo.LevelSet) for a in args):
                    self.fail(f"{name}() does not take level sets")
                return FUNCTIONS[name](*args)
            self.fail(f"unknown function {name!r}")
        self.fail(f"unsupported syntax {type(node).__name__}")


def _num(ev, v):
    if isinstance(v, geo.LevelSet) or np.ndim(v) != 0:
        ev.fail("primitive arguments must be scalars")
    return float(v)


def _sets(ev, args, name):
    if not args or not all(isinstance(a, geo.LevelSet) for a in args):
        ev.fail(f"{name}() takes one or more level sets")
    return tuple(args)


def _arity(ev, name, args, counts):
    if len(args) not in counts:
        ev.fail(f"{name}() takes {' or '.join(map(str, counts))} arguments, got {len(args)}")


def _star(ev, *a):
    _arity(ev, "star", a, (3, 5))
    v = [_num(ev, x) for x in a]
    return geo.PolarStar(v[0], v[1], v[2], tuple(v[3:5]) if len(v) == 5 else (0.0, 0.0))


def _disc(ev, *a):
    _arity(ev, "disc", a, (3,))
    cx, cy, r = (_num(ev, x) for x in a)
    return geo.Disc((cx, cy), r)


def _halfplane(ev, *a):
    _arity(ev, "halfplane", a, (3,))
    nx, ny, off = (_num(ev, x) for x in a)
    return geo.HalfPlane((nx, ny), off)


def _rectangle(ev, *a):
    _arity(ev, "rectangle", a, (4,))
    x0, y0, x1, y1 = (_num(ev, x) for x in a)
    return geo.Rectangle((x0, y0), (x1, y1))


def _constant(ev, *a):
    _arity(ev, "constant", a, (1,))
    return geo.Constant(_num(ev, a[0]))


def _affine(ev, *a):
    _arity(ev, "affine", a, (7,))
    child = _sets(ev, a[:1], "affine")[0]
    v = [_num(ev, x) for x in a[1:]]
    return geo.Affine(child, ((v[0], v[1]), (v[2], v[3])), (v[4], v[5]))


_PRIMITIVES = {
    "star": _star, "disc": _disc, "halfplane": _halfplane, "rectangle": _rectangle,
    "constant": _constant, "affine": _affine,
    "union": lambda ev, *a: geo.Union(_sets(ev, a, "union")),
    "intersect": lambda ev, *a: geo.Intersection(_sets(ev, a, "intersect")),
    "complement": lambda ev, *a: geo.Complement(_sets(ev, a, "complement")[0]),
}


def evaluate_scalar(text, variables: Mapping | None = None) -> float:
    """Evaluate a constant expression such as ``"1 - h + eta * h"``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    node = _parse(text)
    v = _Evaluator(variables or {}, text)(node)
    if np.ndim(v) != 0:
        raise ConfigError(f"expression {text!r} is not a scalar")
    return float(v)


def parse_levelset(text: str, variables: Mapping | None = None) -> geo.LevelSet:
    """Build a level set from a primitive expression or a formula in x, y.

    Raises
    ------
    ConfigError
        On syntax errors, unknown names or functions, or mixed forms.
    """
    node = _parse(text)
    variables = dict(variables or {})
    if _names(node) & {"x", "y"}:
        tree_calls = {n.func.id for n in ast.walk(node)
                      if isinstance(n, ast.Call) and isinstance(n.func, ast.Name)}
        if tree_calls & set(_PRIMITIVES):
            raise ConfigError(f"expression {text!r} mixes primitives with a formula in x, y")
        # validate once on a probe point so errors surface at parse time
        _Evaluator(dict(variables, x=0.0, y=0.0), text)(node)

        def f(px, py):
            return _Evaluator(dict(variables, x=px, y=py), text)(node)

        return geo.FunctionLevelSet(f)
    out = _Evaluator(variables, text, _PRIMITIVES)(node)
    if not isinstance(out, geo.LevelSet):
        raise ConfigError(f"expression {text!r} does not describe a level set")
    return out


def parse_field(value, ncomp: int = 1, variables: Mapping | None = None,
                boundary: bool = False):
    """Turn a config value into a constant array or a vectorised callable.

    ``value`` is a number, a string, or a list of ``ncomp`` numbers/strings.
    String entries are formulas in ``x``, ``y`` (and ``nx``, ``ny`` when
    ``boundary``). The callable takes ``points`` of shape ``(P, 2)``, plus
    ``normals`` when ``boundary`` is set, and returns ``(P, ncomp)``.
    """
    items = value if isinstance(value, (list, tuple)) else [value]
    if len(items) == 1 and ncomp > 1 and not isinstance(value, (list, tuple)):
        items = items * ncomp
    if len(items) != ncomp:
        raise ConfigError(f"field {value!r} needs {ncomp} components")
    for it in items:
        if isinstance(it, bool) or not isinstance(it, (int, float, str)):
            raise ConfigError(f"field entry {it!r} must be a number or a string")
    variables = dict(variables or {})
    if not any(isinstance(it, str) for it in items):
        return np.asarray(items, dtype=float)
    names = {"x", "y"} | ({"nx", "ny"} if boundary else set())
    nodes = [_parse(it) if isinstance(it, str) else None for it in items]
    probe = dict(variables, **{k: 0.5 for k in names})
    for it, nd in zip(items, nodes):
        if nd is not None:
            _Evaluator(probe, it)(nd)

    def evaluate(points, normals=None):
        pts = np.asarray(points, dtype=float)
        env = dict(variables, x=pts[:, 0], y=pts[:, 1])
        if boundary:
            nrm = np.zeros_like(pts) if normals is None else np.asarray(normals, dtype=float)
            env.update(nx=nrm[:, 0], ny=nrm[:, 1])
        cols = []
        for it, nd in zip(items, nodes):
            v = float(it) if nd is None else _Evaluator(env, it)(nd)
            cols.append(np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)))
        return np.stack(cols, axis=1)

    if boundary:
        return evaluate
    return lambda points: evaluate(points)
