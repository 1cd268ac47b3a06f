"""Preconditioned conjugate gradients and Richardson iteration.

Both drivers start from a zero initial guess and measure convergence by the
unpreconditioned relative residual ``||b - A x||_2 / ||b||_2``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Breakdown, Diverged, NotConverged

__all__ = ["ConvergenceReport", "pcg", "richardson", "DEFAULT_TOL", "RESIDUAL_NORM"]

DEFAULT_TOL = 1e-10
DIVERGE_STEPS = 10
RESIDUAL_NORM = "l2 norm of b - A x relative to l2 norm of b"


@dataclass
class ConvergenceReport:
    """Relative residual history of an iterative solve.

    ``residuals[k - 1]`` is the relative residual after iteration ``k``; the
    initial relative residual is 1 (zero initial guess).
    """
    residuals: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    method: str = ""

    @property
    def contraction(self) -> np.ndarray:
        """Per-step residual reduction factors."""
        r = np.concatenate([[1.0], self.residuals])
        with np.errstate(divide="ignore", invalid="ignore"):
            return r[1:] / r[:-1]

    def asymptotic_rate(self, tail: int = 5) -> float:
        """Geometric mean of the last ``tail`` contraction factors."""
        c = self.contraction
        c = c[np.isfinite(c) & (c > 0)][-tail:]
        return float(np.exp(np.mean(np.log(c)))) if len(c) else float("nan")


def _as_apply(op):
    if op is None:
        return lambda r: r
    if callable(op) and not hasattr(op, "matvec"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda r: op @ r


def pcg(A, b, precond=None, tol: float = DEFAULT_TOL, maxit: int = 500):
    """Preconditioned conjugate gradients from a zero initial guess.

    Parameters
    ----------
    A : matrix or LinearOperator
        Symmetric positive definite.
    b : ndarray
    precond : callable, matrix or LinearOperator, optional
        Applied as ``z = precond(r)``; identity when omitted.
    tol : float
        Stop when the recurred relative residual is at most ``tol``.
    maxit : int

    Returns
    -------
    x : ndarray
    report : ConvergenceReport

    Raises
    ------
    Breakdown
        If a search direction has non-positive curvature or the
        preconditioner is not positive on the residual.
    NotConverged
        After ``maxit`` iterations; the exception carries ``x`` and ``report``.
    """
    t0 = time.perf_counter()
    Aop = _as_apply(A)
    M = _as_apply(precond)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    report = ConvergenceReport(method="pcg")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.residuals = [0.0]
        report.converged = True
        return x, report
    r = b.copy()
    z = M(r)
    rz = float(r @ z)
    if not rz > 0:
        raise Breakdown("preconditioner is not positive on the residual")
    p = z.copy()
    for k in range(1, maxit + 1):
        Ap = Aop(p)
        curv = float(p @ Ap)
        if not curv > 0:
            raise Breakdown(f"non-positive curvature p^T A p = {curv:.3e} at iteration {k}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        report.residuals.append(float(rel))
        report.iterations = k
        if rel <= tol:
            report.converged = True
            break
        z = M(r)
        rz_new = float(r @ z)
        if not rz_new > 0:
            raise Breakdown(f"preconditioner not positive at iteration {k}")
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        raise NotConverged(f"pcg reached {maxit} iterations at residual {report.residuals[-1]:.3e}",
                           x=x, report=report)
    return x, report


def richardson(A, b, precond=None, tol: float = DEFAULT_TOL, maxit: int = 500):
    """Stationary iteration ``x <- x + precond(b - A x)`` from zero.

    Raises
    ------
    Diverged
        If the residual grows for 10 consecutive steps.
    NotConverged
        After ``maxit`` iterations.
    """
    t0 = time.perf_counter()
    Aop = _as_apply(A)
    M = _as_apply(precond)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    report = ConvergenceReport(method="richardson")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.residuals = [0.0]
        report.converged = True
        return x, report
    r = b.copy()
    growth, last = 0, 1.0
    for k in range(1, maxit + 1):
        x += M(r)
        r = b - Aop(x)
        rel = np.linalg.norm(r) / bnorm
        growth = growth + 1 if rel > last else 0
        last = rel
        report.residuals.append(float(rel))
        report.iterations = k
        if rel <= tol:
            report.converged = True
            break
        if growth >= DIVERGE_STEPS or not np.isfinite(rel):
            report.wall_time = time.perf_counter() - t0
            raise Diverged(f"residual grew for {growth} consecutive steps", x=x, report=report)
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        raise NotConverged(f"richardson reached {maxit} iterations at residual "
                           f"{report.residuals[-1]:.3e}", x=x, report=report)
    return x, report
