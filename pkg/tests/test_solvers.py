import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from immergrid.cases import discretize, preconditioner, star_config
from immergrid.errors import Breakdown, Diverged, NotConverged
from immergrid.multigrid import as_operator, build_hierarchy
from immergrid.smoothers import SmootherConfig, build_smoother
from immergrid.solvers import ConvergenceReport, pcg, richardson
from immergrid.spectral import dense_spectrum


def true_residual(A, x, b):
    return np.linalg.norm(b - A @ x) / np.linalg.norm(b)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30)
       .filter(lambda v: np.max(np.abs(v)) > 1e-100))
def test_identity_one_iteration(values):
    b = np.array(values)
    x, rep = pcg(sp.identity(len(b), format="csr"), b)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_array_equal(x, b)


def test_zero_rhs():
    for solver in (pcg, richardson):
        x, rep = solver(sp.identity(4, format="csr"), np.zeros(4))
        assert rep.converged and np.all(x == 0)


def test_not_converged_keeps_history(star16):
    with pytest.raises(NotConverged) as info:
        pcg(star16.A, star16.b, None, 1e-10, 5)
    rep = info.value.report
    assert len(rep.residuals) == 5 and rep.iterations == 5 and not rep.converged
    assert info.value.x.shape == (star16.n,)


@pytest.mark.parametrize("case, name", [("star12", "vcycle"), ("square8", "vcycle"),
                                        ("square8", "jacobi")])
def test_true_residual_and_dense_agreement(case, name, request):
    case = request.getfixturevalue(case)
    x, rep = pcg(case.A, case.b, preconditioner(case, name), 1e-10, 2000)
    assert rep.converged and rep.residuals[-1] <= 1e-10
    assert true_residual(case.A, x, case.b) <= 2e-10
    ref = np.linalg.solve(case.A.toarray(), case.b)
    assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)


def test_true_residual_jacobi_cut(star12):
    x, rep = pcg(star12.A, star12.b, preconditioner(star12, "jacobi"), 1e-10, 2000)
    assert true_residual(star12.A, x, star12.b) <= 2e-10


def test_breakdown_on_indefinite_preconditioner(star12):
    with pytest.raises(Breakdown):
        pcg(star12.A, star12.b, lambda r: -r)


def test_pcg_iterations_mesh_independent():
    its = []
    for n in (32, 64):
        case = discretize(star_config(n))
        its.append(pcg(case.A, case.b, preconditioner(case, "vcycle"))[1].iterations)
    assert abs(its[1] - its[0]) <= 0.2 * its[0]


def test_richardson_exact_inverse(star12):
    Ainv = np.linalg.inv(star12.A.toarray())
    x, rep = richardson(star12.A, star12.b, lambda r: Ainv @ r, 1e-8)
    assert rep.iterations == 1


def test_richardson_additive_contraction(star16):
    h = build_hierarchy(star16.space, star16.A, 2, SmootherConfig("as", gamma=0.25))
    x, rep = richardson(star16.A, star16.b, as_operator(h), 1e-10, 500)
    assert 0.5 <= rep.asymptotic_rate() <= 0.6
    assert true_residual(star16.A, x, star16.b) <= 2e-10


def test_richardson_diverges_without_relaxation(star16):
    sm = build_smoother(star16.space, star16.A, SmootherConfig("as", gamma=1.0))
    lam = dense_spectrum(lambda X: sm.apply(star16.A @ X), star16.n).lambda_max
    assert lam > 2
    with pytest.raises(Diverged):
        richardson(star16.A, star16.b, sm.apply, 1e-10, 500)


def test_report_contraction():
    rep = ConvergenceReport(residuals=[0.5, 0.25, 0.125])
    np.testing.assert_allclose(rep.contraction, 0.5)
    assert rep.asymptotic_rate() == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2 ** 32 - 1))
def test_pcg_random_spd(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.standard_normal(n)
    d = 1.0 / np.diag(A)
    x, rep = pcg(A, b, lambda r: d * r, 1e-12, 10 * n)
    assert true_residual(A, x, b) <= 2e-12
    assert rep.iterations <= n + 5
