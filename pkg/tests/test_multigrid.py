from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from immergrid.assembly import assemble
from immergrid.basis import build_space
from immergrid.cases import discretize, hierarchy, star_config
from immergrid.errors import ResolutionError
from immergrid.mesh import EmbeddingGrid, build_uniform, trim
from immergrid.multigrid import CoarseSolver, as_operator, build_hierarchy, vcycle
from immergrid.quadrature import integrate
from immergrid.smoothers import (Direction, SmootherConfig, build_smoother,
                                 double_iteration)
from immergrid.spectral import dense_spectrum


def test_single_level_is_direct_solve(star12, rng):
    h = build_hierarchy(star12.space, star12.A, 1)
    assert h.L == 1
    b = rng.standard_normal(star12.space.n)
    x = vcycle(h, 1, b)
    ref = np.linalg.solve(star12.A.toarray(), b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_zero_residual(star12, L):
    h = build_hierarchy(star12.space, star12.A, L)
    np.testing.assert_array_equal(vcycle(h, L, np.zeros(star12.space.n)), 0.0)


def test_level_meshes():
    case = discretize(star_config(16))
    h = build_hierarchy(case.space, case.A, 3)
    res = [lv.space.mesh.grid.resolution for lv in h.levels]
    assert [tuple(r) for r in res] == [(4, 4), (8, 8), (16, 16)]
    assert h.sizes() == sorted(h.sizes())


def test_resolution_error(star12):
    with pytest.raises(ResolutionError):
        build_hierarchy(star12.space, star12.A, 4)


def test_galerkin_products(star12):
    h = build_hierarchy(star12.space, star12.A, 3)
    for ell in range(2, h.L + 1):
        fine, coarse = h.level(ell), h.level(ell - 1)
        ref = fine.R @ fine.A @ fine.R.T
        assert abs(coarse.A - ref).max() <= 1e-13 * abs(ref).max()
        assert abs(coarse.A - coarse.A.T).max() == 0.0


def test_galerkin_matches_reassembly(square8):
    # uncut square: the coarse basis is R times the fine basis, so the
    # triple product equals direct assembly with the fine penalty
    h = build_hierarchy(square8.space, square8.A, 2)
    grid = EmbeddingGrid((0.0, 0.0), (1.0, 1.0), (4, 4))
    quad = integrate(trim(build_uniform(grid), square8.levelset), 0, 3)
    space = build_space(quad.trimmed, "lagrange", 2)
    problem = replace(square8.problem, penalty=square8.system.penalty_lambda)
    direct = assemble(space, quad, problem).A
    assert abs(h.level(1).A - direct).max() <= 1e-11 * abs(direct).max()


@pytest.mark.parametrize("L", [2, 3])
@pytest.mark.parametrize("kind", ["ms", "as"])
def test_vcycle_symmetric_positive(star12, L, kind, rng):
    h = build_hierarchy(star12.space, star12.A, L, SmootherConfig(kind))
    V = as_operator(h)
    for _ in range(5):
        r, s = rng.standard_normal((2, star12.space.n))
        a, b = (V @ r) @ s, r @ (V @ s)
        assert abs(a - b) <= 1e-10 * abs(a)
    R = rng.standard_normal((star12.space.n, 20))
    assert np.all(np.einsum("ij,ij->j", R, V @ R) > 0)


def _matrix(apply, n):
    return apply(np.eye(n))


def test_two_level_error_propagation(star12):
    """Spectrum of V A equals one minus the spectrum of the error propagator."""
    A = star12.A.toarray()
    n = len(A)
    assert n <= 600
    h = build_hierarchy(star12.space, star12.A, 2, SmootherConfig("ms"))
    sm, R = h.level(2).smoother, h.level(2).R.toarray()
    Minv = _matrix(lambda X: sm.apply(X, Direction.FORWARD), n)
    MinvT = _matrix(lambda X: sm.apply(X, Direction.REVERSE), n)
    Ac = R @ A @ R.T
    I = np.eye(n)
    E = (I - MinvT @ A) @ (I - R.T @ np.linalg.solve(Ac, R @ A)) @ (I - Minv @ A)
    ev_e = np.sort(1.0 - np.linalg.eigvals(E).real)
    ev_v = dense_spectrum(lambda X: vcycle(h, 2, star12.A @ X), n).eigenvalues
    np.testing.assert_allclose(ev_v, ev_e, atol=1e-8)


def test_coarse_solver_drops_null_space():
    A = np.diag([1.0, 2.0, 0.0])
    cs = CoarseSolver(sp.csr_matrix(A))
    assert cs.dropped == 1
    np.testing.assert_allclose(cs.solve(np.array([1.0, 2.0, 5.0])), [1.0, 1.0, 0.0])


def test_coarse_solver_refines_ill_conditioned(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    A = Q @ np.diag([1e-9, 1e-3, 1, 2, 3, 4]) @ Q.T
    cs = CoarseSolver(sp.csr_matrix(A))
    assert cs.refine
    b = rng.standard_normal(6)
    Al = A.astype(np.longdouble)

    def residual(x):
        r = b.astype(np.longdouble) - Al @ x.astype(np.longdouble)
        return float(np.linalg.norm(r.astype(float)))

    x = cs.solve(b)
    # down to the rounding of x itself, well below the plain eigen-solve
    assert residual(x) <= 2 * np.finfo(float).eps * np.linalg.norm(A, 2) * np.linalg.norm(x)
    assert residual(x) < 0.5 * residual(cs._base(b))


def test_ms_vcycle_mesh_independent_smoother_alone_not():
    lam_v, lam_s = [], []
    for n in (16, 32, 64):
        case = discretize(star_config(n))
        h = hierarchy(case, 2, "ms")
        lam_v.append(dense_spectrum(lambda X: vcycle(h, 2, case.A @ X), case.space.n).lambda_min)
        sm = build_smoother(case.space, case.A, SmootherConfig("ms"))
        lam_s.append(dense_spectrum(lambda X: double_iteration(sm, case.A @ X),
                                    case.space.n).lambda_min)
    assert (max(lam_v) - min(lam_v)) / max(lam_v) < 0.25
    # halving h divides the smoother-only minimum by about four
    for coarse, fine in zip(lam_s, lam_s[1:]):
        assert 4 / 1.5 <= coarse / fine <= 4 * 1.5
