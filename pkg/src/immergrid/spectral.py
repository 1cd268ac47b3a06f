"""Eigenvalue analysis of preconditioned operators.

Preconditioned operators ``P A`` with symmetric positive ``P`` are similar
to symmetric matrices, so their spectra are real. Dense spectra are taken
from the non-symmetric product and checked for realness.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, TooLarge

__all__ = ["SpectrumResult", "Which", "dense_spectrum", "extreme_eigenpair",
           "sparse_condition_number", "compose", "DENSE_LIMIT"]

DENSE_LIMIT = 6000
IMAG_TOL = 1e-8


@dataclass
class SpectrumResult:
    """Sorted real eigenvalues and optional eigenvectors (as columns)."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def condition(self) -> float:
        """``lambda_max / lambda_min`` over the positive part of the spectrum."""
        ev = self.eigenvalues
        pos = ev[ev > 0]
        return float(pos[-1] / pos[0]) if len(pos) else float("inf")


class Which(enum.Enum):
    SMALLEST = "smallest"
    LARGEST = "largest"


def _apply(op):
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda X: op @ X
    if hasattr(op, "matmat"):
        return op.matmat
    return op


def compose(*ops):
    """Product operator ``ops[0] @ ops[1] @ ...`` acting on matrices of columns."""
    fs = [_apply(o) for o in ops]

    def apply(X):
        for f in reversed(fs):
            X = f(X)
        return X

    return apply


def dense_spectrum(op, n: int, limit: int = DENSE_LIMIT, vectors: bool = False,
                   chunk: int = 512, imag_tol: float = IMAG_TOL) -> SpectrumResult:
    """All eigenvalues of an ``n x n`` operator, materialized column by column.

    ``op`` maps a matrix of columns to a matrix of columns (or is a matrix).

    Raises
    ------
    TooLarge
        If ``n`` exceeds ``limit``.
    ValueError
        If the imaginary parts exceed ``imag_tol`` (default ``1e-8``) times
        the largest modulus.
    """
    if n > limit:
        raise TooLarge(f"dense spectrum of size {n} exceeds the limit {limit}")
    f = _apply(op)
    M = np.empty((n, n))
    for s in range(0, n, chunk):
        cols = np.zeros((n, min(chunk, n - s)))
        cols[np.arange(s, s + cols.shape[1]), np.arange(cols.shape[1])] = 1.0
        M[:, s:s + cols.shape[1]] = f(cols)
    if vectors:
        w, V = sla.eig(M)
    else:
        w, V = sla.eigvals(M), None
    scale = np.max(np.abs(w)) if len(w) else 0.0
    if len(w) and np.max(np.abs(w.imag)) > imag_tol * scale:
        raise ValueError(f"spectrum not real: max imaginary part {np.max(np.abs(w.imag)):.3e}")
    order = np.argsort(w.real, kind="stable")
    vec = None if V is None else np.real(V[:, order])
    return SpectrumResult(w.real[order], vec)


def extreme_eigenpair(op, n: int, which=Which.LARGEST, iters: int = 100,
                      seed: int = 0, shift_iters: int = 30, drift_tol: float = 1e-6,
                      inner=None):
    """Power iteration for the largest or smallest eigenpair.

    The smallest pair comes from power iteration on ``sigma I - op`` with
    ``sigma`` 1.1 times a ``shift_iters``-step estimate of the largest
    eigenvalue. Returns the Rayleigh quotient and the normalized vector.

    ``inner`` is an optional SPD matrix ``B`` in whose inner product ``op``
    is self-adjoint (``B = A`` for ``op = P A``); the Rayleigh quotient
    ``<x, op x>_B / <x, x>_B`` then converges at twice the rate.

    Raises
    ------
    NoConvergence
        If the Rayleigh quotient still moves by more than ``drift_tol``
        (relative) over the last 10 iterations.
    """
    which = Which(which) if not isinstance(which, Which) else which
    f = _apply(op)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(n)
    x0 /= np.linalg.norm(x0)

    B = (lambda v: v) if inner is None else _apply(inner)

    def rayleigh(v, w):
        Bv = B(v)
        return float(w @ Bv) / float(v @ Bv)

    def power(g, x, k):
        hist = []
        for _ in range(k):
            y = g(x)
            hist.append(rayleigh(x, y))
            nrm = np.linalg.norm(y)
            if nrm == 0.0:
                break
            x = y / nrm
        return x, hist

    if which is Which.LARGEST:
        x, hist = power(f, x0, iters)
    else:
        _, hs = power(f, x0, shift_iters)
        sigma = 1.1 * hs[-1]
        x, hist = power(lambda v: sigma * v - f(v), x0, iters)
        hist = [sigma - h for h in hist]
    lam = rayleigh(x, f(x))
    tail = np.asarray(hist[-10:])
    if len(tail) > 1 and np.ptp(tail) > drift_tol * max(abs(lam), np.finfo(float).tiny):
        raise NoConvergence(f"Rayleigh quotient drifted by {np.ptp(tail):.3e} over the last "
                            f"{len(tail)} iterations")
    return lam, x


def sparse_condition_number(A, tol: float = 1e-10) -> float:
    """``lambda_max / lambda_min`` of a sparse SPD matrix via ARPACK.

    The smallest eigenvalue uses shift-invert around zero.
    """
    A = sp.csc_matrix(A)
    lmax = spla.eigsh(A, k=1, which="LA", tol=tol, return_eigenvectors=False)[0]
    lmin = spla.eigsh(A, k=1, sigma=0.0, which="LM", tol=tol, return_eigenvectors=False)[0]
    return float(lmax / lmin)
