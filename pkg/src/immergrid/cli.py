"""Command line harness: quadrature checks, solves, spectra and sweeps.

Every command reads a TOML case file, writes CSV tables (first line
``#schema=1 columns=...``) and a JSON metadata record into the output
directory, and exits with 0 on success, 1 on a solver failure and 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli
from threadpoolctl import threadpool_limits

from . import __version__
from .cases import depth_for_resolution, discretize, preconditioner, spectrum_operator
from .config import CaseConfig, bundled_config, load_config, parse_config
from .errors import (ConfigError, EmptyDomain, ImmergridError, ResolutionError, SingularSetup,
                     UnsupportedFamilyOnHierarchy)
from .geometry import CellState
from .solvers import pcg, richardson
from .spectral import Which, dense_spectrum, extreme_eigenpair

__all__ = ["main", "run_case", "sweep", "write_csv", "read_csv", "sample_field", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2
_CONFIG_ERRORS = (ConfigError, SingularSetup, EmptyDomain, ResolutionError,
                  UnsupportedFamilyOnHierarchy)
SWEEP_COLUMNS = ("value", "dofs", "eta", "iterations", "lambda_min", "lambda_max",
                 "condition", "status")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, columns, rows) -> Path:
    """CSV with a ``#schema=1`` header comment; floats are written round-trip exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        f.write(f"#schema={SCHEMA_VERSION} columns={','.join(columns)}\n")
        f.write(",".join(columns) + "\n")
        for r in rows:
            f.write(",".join(_fmt(r.get(c)) for c in columns) + "\n")
    return path


def read_csv(path) -> list:
    """Rows of a CSV written by :func:`write_csv`, as dicts of strings."""
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


def _out(cfg: CaseConfig, name: str) -> Path:
    return Path(cfg.get("output.directory")) / f"{cfg.get('output.prefix')}_{name}"


def _write_meta(cfg, command, record) -> Path:
    meta = {"command": command, "version": __version__, "config": cfg.to_dict(), **record}
    path = _out(cfg, f"{command}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n")
    return path


# commands -------------------------------------------------------------------

def quadrature_check(cfg: CaseConfig) -> dict:
    t0 = time.perf_counter()
    case = discretize(cfg)
    q = case.quad
    row = {
        "area": q.total_area,
        "interface_length": q.interface_length,
        "boundary_length": float(q.bnd_weights.sum()),
        "elements": len(q.elements),
        "cut_elements": int(np.sum(q.states == CellState.CUT)),
        "eta": case.eta,
        "depth": q.depth,
        "gauss_order": q.gauss_order,
        "dofs": case.n,
    }
    cols = tuple(row)
    write_csv(_out(cfg, "quadrature.csv"), cols, [row])
    return {"dofs": case.n, "eta": case.eta, "area": row["area"],
            "interface_length": row["interface_length"],
            "timings": {"total": time.perf_counter() - t0}}


def _write_coefficients(case, x, path):
    anchors = case.space.anchors
    c = case.space.components
    rows = [{"dof": i, "level": anchors[i // c, 0], "ix": anchors[i // c, 1],
             "iy": anchors[i // c, 2], "component": i % c, "value": x[i]}
            for i in range(case.n)]
    write_csv(path, ("dof", "level", "ix", "iy", "component", "value"), rows)


def sample_field(case, x, per_element: int = 4):
    """Values of the discrete field with coefficients ``x`` on a uniform lattice.

    The lattice has ``per_element`` intervals per base element along each
    axis; only points inside the domain (``psi >= 0``) are returned.
    Returns ``(points, values)`` with one value column per component.
    """
    g = case.space.mesh.grid
    axes = [np.linspace(o, o + e, per_element * r + 1)
            for o, e, r in zip(g.origin, g.extent, g.resolution)]
    X, Y = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    pts = pts[case.levelset(pts) >= 0]
    B = case.space.basis_matrix(pts)
    c = case.space.components
    vals = np.stack([B @ x[k::c] for k in range(c)], axis=1)
    return pts, vals


def _write_field(case, x, path):
    pts, vals = sample_field(case, x)
    cols = ("x", "y", "value") + tuple(f"value{k + 1}" for k in range(1, vals.shape[1]))
    rows = [dict(zip(cols, (p[0], p[1], *v))) for p, v in zip(pts, vals)]
    write_csv(path, cols, rows)


def _solve(case, cfg):
    t1 = time.perf_counter()
    P = preconditioner(case)
    t2 = time.perf_counter()
    method = pcg if cfg.get("solver.method") == "pcg" else richardson
    if method is richardson and P is None:
        raise ConfigError("richardson iteration needs a preconditioner")
    x, report = method(case.A, case.b, P, cfg.get("solver.tol"), cfg.get("solver.maxit"))
    return x, report, {"preconditioner": t2 - t1, "solve": time.perf_counter() - t2}


def solve(cfg: CaseConfig) -> dict:
    t0 = time.perf_counter()
    case = discretize(cfg)
    t_asm = time.perf_counter() - t0
    x, report, times = _solve(case, cfg)
    write_csv(_out(cfg, "residuals.csv"), ("iteration", "relative_residual"),
              [{"iteration": k + 1, "relative_residual": r} for k, r in enumerate(report.residuals)])
    _write_coefficients(case, x, _out(cfg, "solution.csv"))
    _write_field(case, x, _out(cfg, "field.csv"))
    return {"dofs": case.n, "eta": case.eta, "iterations": report.iterations,
            "converged": report.converged, "final_residual": report.residuals[-1],
            "asymptotic_rate": report.asymptotic_rate(),
            "timings": {"assembly": t_asm, **times, "total": time.perf_counter() - t0}}


def _spectrum(case, cfg, want_vectors=False):
    op = spectrum_operator(case)
    n = case.n
    if cfg.get("spectrum.method") == "dense" and n <= cfg.get("spectrum.dense_limit"):
        res = dense_spectrum(op, n, cfg.get("spectrum.dense_limit"), vectors=want_vectors)
        return res.eigenvalues, res.eigenvectors
    it = cfg.get("spectrum.power_iters")
    seed = cfg.get("seed")
    lmax, vmax = extreme_eigenpair(op, n, Which.LARGEST, it, seed, inner=case.A)
    lmin, vmin = extreme_eigenpair(op, n, Which.SMALLEST, it, seed, inner=case.A)
    return np.array([lmin, lmax]), np.stack([vmin, vmax], axis=1)


def spectrum(cfg: CaseConfig, mode: int | None = None) -> dict:
    t0 = time.perf_counter()
    case = discretize(cfg)
    ev, vecs = _spectrum(case, cfg, want_vectors=mode is not None)
    write_csv(_out(cfg, "spectrum.csv"), ("index", "eigenvalue"),
              [{"index": k, "eigenvalue": v} for k, v in enumerate(ev)])
    out = {"dofs": case.n, "eta": case.eta, "operator": cfg.get("spectrum.operator"),
           "lambda_min": ev[0], "lambda_max": ev[-1], "condition": ev[-1] / ev[0]}
    if mode is not None:
        v = vecs[:, mode]
        v = v / np.max(np.abs(v))
        v = v * np.sign(v[np.argmax(np.abs(v))])
        _write_field(case, v, _out(cfg, f"mode{mode}.csv"))
        out["mode"] = {"index": mode, "eigenvalue": float(ev[mode])}
    out["timings"] = {"total": time.perf_counter() - t0}
    return out


def run_case(cfg: CaseConfig, command: str, mode: int | None = None) -> dict:
    """Run one subcommand and write its artifacts; returns the metadata record."""
    if command == "quadrature-check":
        rec = quadrature_check(cfg)
    elif command == "solve":
        rec = solve(cfg)
    elif command == "spectrum":
        rec = spectrum(cfg, mode)
    else:
        raise ConfigError(f"unknown command {command!r}")
    _write_meta(cfg, command, rec)
    return rec


# sweeps ---------------------------------------------------------------------

def _point_config(cfg: CaseConfig, axis: str, value) -> CaseConfig:
    if axis == "grid":
        rx, ry = cfg.get("mesh.resolution")
        n = int(value)
        depth = depth_for_resolution(cfg.get("quadrature.depth"), rx, n)
        return cfg.replace(mesh__resolution=[n, n * ry // rx], quadrature__depth=depth)
    if axis == "levels":
        return cfg.replace(mg__levels=int(value))
    if axis == "depth":
        return cfg.replace(quadrature__depth=int(value))
    if axis == "eta":
        return cfg.replace(geometry__eta=float(value))
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _sweep_point(args):
    data, axis, value, spectra = args
    row = {"value": value}
    try:
        cfg = _point_config(parse_config(data), axis, value)
        case = discretize(cfg)
        row.update(dofs=case.n, eta=case.eta)
        if spectra:
            ev, _ = _spectrum(case, cfg)
            row.update(lambda_min=ev[0], lambda_max=ev[-1], condition=ev[-1] / ev[0])
        else:
            _, report, _ = _solve(case, cfg)
            row.update(iterations=report.iterations)
        row["status"] = "ok"
    except ImmergridError as exc:
        row["status"] = f"error:{type(exc).__name__}"
    return row


def sweep(cfg: CaseConfig, axis: str, values, spectra: bool = False, jobs: int = 1) -> list:
    """One row per value; failing points record an error status and the sweep continues."""
    for v in values:
        _point_config(cfg, axis, v)  # validate every point before running any
    tasks = [(cfg.to_dict(), axis, v, spectra) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    write_csv(_out(cfg, f"sweep_{axis}.csv"), SWEEP_COLUMNS, rows)
    _write_meta(cfg, "sweep", {"axis": axis, "values": list(values), "spectra": spectra,
                               "rows": rows})
    return rows


# argument handling ----------------------------------------------------------

def _parse_set(items) -> dict:
    """``--set section.key=value`` with the value in TOML syntax."""
    tree: dict = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = tomli.loads(f"v = {raw}")["v"]
        except tomli.TOMLDecodeError:
            value = raw
        node = tree
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return tree


def _merge(base: dict, over: dict) -> dict:
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def _load(args) -> CaseConfig:
    if args.config is None:
        cfg = bundled_config("star2d")
    elif Path(args.config).is_file() or args.config.endswith(".toml"):
        cfg = load_config(args.config)
    else:
        cfg = bundled_config(args.config)
    tree = _merge(cfg.to_dict(), _parse_set(getattr(args, "set", None)))
    flags = {("quadrature", "depth"): getattr(args, "depth", None),
             ("quadrature", "gauss_order"): getattr(args, "gauss_order", None),
             ("solver", "tol"): getattr(args, "tol", None),
             ("solver", "maxit"): getattr(args, "maxit", None),
             ("solver", "method"): getattr(args, "solver", None),
             ("solver", "preconditioner"): getattr(args, "preconditioner", None),
             ("spectrum", "operator"): getattr(args, "operator", None),
             ("spectrum", "method"): getattr(args, "method", None),
             ("output", "directory"): getattr(args, "out", None)}
    for (sec, key), v in flags.items():
        if v is not None:
            tree[sec][key] = v
    return parse_config(tree)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="immergrid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", nargs="?", help="TOML file or bundled name (default star2d)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a key, value in TOML syntax")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--depth", type=int, help="quadrature depth")
        sp.add_argument("--gauss-order", type=int, help="Gauss points per direction")
        return sp

    common(sub.add_parser("quadrature-check", help="integrate area and boundary length"))
    s = common(sub.add_parser("solve", help="assemble and solve"))
    s.add_argument("--solver", choices=("pcg", "richardson"))
    s.add_argument("--preconditioner", choices=("none", "jacobi", "vcycle"))
    s.add_argument("--tol", type=float)
    s.add_argument("--maxit", type=int)
    s = common(sub.add_parser("spectrum", help="eigenvalues of a preconditioned operator"))
    s.add_argument("--operator", choices=("jacobi", "gs2", "as2", "ms2", "vcycle"),
                   help="single Jacobi step, symmetric double iterations, or the V-cycle")
    s.add_argument("--method", choices=("dense", "power"))
    s.add_argument("--mode", type=int,
                   help="also write eigenvector k (ascending order) sampled on a lattice")
    s = common(sub.add_parser("sweep", help="repeat a solve or spectrum over one axis"))
    s.add_argument("--axis", required=True, choices=("grid", "levels", "depth", "eta"))
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--spectra", action="store_true", help="record spectra instead of solves")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--solver", choices=("pcg", "richardson"))
    s.add_argument("--tol", type=float)
    s.add_argument("--maxit", type=int)
    pc = sub.add_parser("print-config", help="print the configuration with all defaults")
    pc.add_argument("config", nargs="?")
    pc.add_argument("--set", action="append", metavar="KEY=VALUE")
    return p


def _values(text: str, axis: str) -> list:
    conv = float if axis == "eta" else int
    try:
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --values {text!r} for axis {axis}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("IMMERGRID_THREADS")
    limit = int(threads) if threads and threads.isdigit() and int(threads) > 0 else None
    try:
        with threadpool_limits(limits=limit):
            cfg = _load(args)
            if args.command == "print-config":
                sys.stdout.write(cfg.to_toml())
                return EXIT_OK
            if args.command == "sweep":
                rows = sweep(cfg, args.axis, _values(args.values, args.axis), args.spectra,
                             args.jobs)
                for r in rows:
                    print(",".join(_fmt(r.get(c)) for c in SWEEP_COLUMNS))
                return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_SOLVER
            rec = run_case(cfg, args.command, getattr(args, "mode", None))
            if args.command == "quadrature-check":
                sys.stdout.write(_out(cfg, "quadrature.csv").read_text())
                return EXIT_OK
            print(json.dumps({k: v for k, v in rec.items() if k != "timings"},
                             default=float, sort_keys=True))
            return EXIT_OK
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ImmergridError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
