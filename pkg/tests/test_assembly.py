import numpy as np
import pytest
import scipy.sparse.linalg as spl

from conftest import random_points
from immergrid.assembly import BoundaryPiece, ProblemDef, assemble, default_penalty
from immergrid.basis import build_space
from immergrid.errors import SingularSetup
from immergrid.geometry import Constant, Disc, HalfPlane, star_levelset
from immergrid.mesh import EmbeddingGrid, build_uniform, refine_interface, trim
from immergrid.quadrature import integrate

GRID = EmbeddingGrid((-1.0, -1.0), (2.0, 2.0), (8, 8))
GEOMETRIES = {"square": Constant(1.0), "halfplane": HalfPlane((1.0, 0.3), 0.2),
              "disc": Disc((0.0, 0.0), 0.7), "star": star_levelset()}


def setup(ls, family="lagrange", degree=2, ncomp=1, depth=2):
    mesh = build_uniform(GRID)
    if family == "thb":
        mesh = refine_interface(mesh, ls, 1)
    quad = integrate(trim(mesh, ls), depth, 3)
    return build_space(quad.trimmed, family, degree, ncomp), quad


def fit(space, func, rng):
    """Coefficients of a field that lies in ``space`` (least squares on samples)."""
    scalar = build_space(space.trimmed, space.family, space.degree)
    pts = random_points(scalar, 3 * scalar.n, rng)
    B = scalar.basis_matrix(pts).toarray()
    vals = func(pts).reshape(len(pts), -1)
    coef = np.linalg.lstsq(B, vals, rcond=None)[0]
    return coef.ravel()  # interleaved dof * ncomp + comp


def quadratic(p):
    return p[:, 0] ** 2 + p[:, 1] ** 2


def quadratic_flux(p, n):
    return 2 * p[:, 0] * n[:, 0] + 2 * p[:, 1] * n[:, 1]


def poisson(pieces=None, **kw):
    pieces = pieces if pieces is not None else [BoundaryPiece("dirichlet", 0.0)]
    return ProblemDef("poisson", body_force=kw.pop("f", 1.0), pieces=pieces, **kw)


@pytest.mark.parametrize("name", list(GEOMETRIES))
@pytest.mark.parametrize("family", ["lagrange", "bspline"])
def test_symmetric_positive_definite(name, family, rng):
    space, quad = setup(GEOMETRIES[name], family)
    A = assemble(space, quad, poisson()).A
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()
    assert np.all(A.diagonal() > 0)
    X = rng.standard_normal((space.n, 20))
    assert np.all(np.einsum("ij,ij->j", X, A @ X) > 0)


def test_uncut_interior_stencil():
    # bilinear Lagrange on a uniform grid: the 9-point stencil 8/3, -1/3
    g = EmbeddingGrid((0.0, 0.0), (1.0, 1.0), (6, 6))
    quad = integrate(trim(build_uniform(g), Constant(1.0)), 0, 3)
    space = build_space(quad.trimmed, "lagrange", 1)
    A = assemble(space, quad, poisson()).A.toarray()
    ix, iy = space.anchors[:, 1], space.anchors[:, 2]
    for d in np.nonzero((ix > 1) & (ix < 5) & (iy > 1) & (iy < 5))[0]:
        row = A[d]
        assert row.sum() == pytest.approx(0.0, abs=1e-13)
        assert row[d] == pytest.approx(8 / 3, abs=1e-13)
        off = np.delete(row, d)
        np.testing.assert_allclose(np.sort(off[off != 0]), np.full(8, -1 / 3), atol=1e-13)


@pytest.mark.parametrize("family", ["lagrange", "bspline"])
def test_interior_row_sums_vanish(family):
    # constants are in the kernel of the stiffness part; only boundary rows see the penalty
    space, quad = setup(Constant(1.0), family, depth=0)
    A = assemble(space, quad, poisson()).A
    boundary = np.unique(np.concatenate([space.local_dofs(k) for k in range(len(space.elements))
                                         if _touches_box(space, k)]))
    interior = np.setdiff1d(np.arange(space.n), boundary)
    assert len(interior)
    np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel()[interior], 0.0, atol=1e-12)


def _touches_box(space, k):
    lo, sz = space.lower[k], space.size[k]
    g = space.mesh.grid
    o, e = np.array(g.origin), np.array(g.origin) + np.array(g.extent)
    return bool(np.any(np.isclose(lo, o)) or np.any(np.isclose(lo + sz, e)))


@pytest.mark.parametrize("name", list(GEOMETRIES))
@pytest.mark.parametrize("family", ["lagrange", "bspline", "thb"])
def test_quadratic_consistency(name, family, rng):
    """A field in the space with its exact flux satisfies the discrete equations."""
    if family == "thb" and name == "square":
        pytest.skip("no interface to refine")
    space, quad = setup(GEOMETRIES[name], family)
    pieces = [BoundaryPiece("dirichlet", quadratic, traction=quadratic_flux)]
    op = assemble(space, quad, poisson(pieces, f=-4.0))
    c = fit(space, quadratic, rng)
    assert np.abs(op.A @ c - op.b).max() <= 1e-11 * max(1.0, np.abs(op.b).max())


def _linear_u(p):
    return np.stack([0.1 + 0.2 * p[:, 0] + 0.3 * p[:, 1], -0.2 + 0.1 * p[:, 0] + 0.4 * p[:, 1]], 1)


def _linear_traction(p, n):
    # lambda = mu = 1: sigma = [[1.0, 0.4], [0.4, 1.4]]
    return np.stack([1.0 * n[:, 0] + 0.4 * n[:, 1], 0.4 * n[:, 0] + 1.4 * n[:, 1]], 1)


@pytest.mark.parametrize("family", ["lagrange", "bspline", "thb"])
def test_elasticity_patch(family, rng):
    space, quad = setup(star_levelset(), family, ncomp=2)
    pieces = [BoundaryPiece("dirichlet", _linear_u, traction=_linear_traction)]
    op = assemble(space, quad, ProblemDef("elasticity", 1.0, 1.0, 0.0, pieces))
    c = fit(space, _linear_u, rng)
    assert np.abs(op.A @ c - op.b).max() <= 1e-11 * max(1.0, np.abs(op.b).max())
    # the solved field reproduces u up to the conditioning of the cut system
    x = spl.spsolve(op.A.tocsc(), op.b)
    scalar = build_space(space.trimmed, family, 2)
    pts = random_points(scalar, 200, rng)
    B = scalar.basis_matrix(pts)
    U = np.stack([B @ x[0::2], B @ x[1::2]], 1)
    np.testing.assert_allclose(U, _linear_u(pts), atol=1e-3)


def test_neumann_box_side_consistency(rng):
    # flux prescribed on the right side, Dirichlet elsewhere
    space, quad = setup(Constant(1.0), "bspline", depth=0)
    pieces = [BoundaryPiece("neumann", quadratic_flux, sides=("right",)),
              BoundaryPiece("dirichlet", quadratic, traction=quadratic_flux)]
    op = assemble(space, quad, poisson(pieces, f=-4.0))
    c = fit(space, quadratic, rng)
    assert np.abs(op.A @ c - op.b).max() <= 1e-11 * np.abs(op.b).max()


def test_singular_setup():
    space, quad = setup(star_levelset())
    with pytest.raises(SingularSetup):
        assemble(space, quad, poisson([BoundaryPiece("neumann", 1.0)]))
    with pytest.raises(SingularSetup):
        assemble(space, quad, poisson([]))


def test_component_mismatch():
    space, quad = setup(star_levelset())
    with pytest.raises(ValueError):
        assemble(space, quad, ProblemDef("elasticity", pieces=[BoundaryPiece("dirichlet")]))


def test_default_penalty():
    space, quad = setup(star_levelset())
    assert default_penalty(space) == pytest.approx(2 / 0.25)
    op = assemble(space, quad, poisson())
    assert op.penalty_lambda == op.penalty_mu == pytest.approx(8.0)
    thb, _ = setup(star_levelset(), "thb")
    assert default_penalty(thb) == pytest.approx(2 / 0.125)


def test_penalty_overrides():
    space, quad = setup(star_levelset(), ncomp=2)
    pieces = [BoundaryPiece("dirichlet")]
    op = assemble(space, quad, ProblemDef("elasticity", pieces=pieces, penalty=5.0,
                                          penalty_mu=7.0))
    assert (op.penalty_lambda, op.penalty_mu) == (5.0, 7.0)


@pytest.mark.parametrize("kwargs", [dict(pde="heat"), dict(pde="elasticity", lam=0.0)])
def test_problem_validation(kwargs):
    with pytest.raises(ValueError):
        ProblemDef(**kwargs)


def test_boundary_piece_validation():
    with pytest.raises(ValueError):
        BoundaryPiece("robin")
    with pytest.raises(ValueError):
        BoundaryPiece("dirichlet", sides=("north",))
