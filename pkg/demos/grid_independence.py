"""PCG iteration counts on the star domain as the grid is refined.

Jacobi preconditioning degrades with every refinement and with every bad
cut; the multigrid V-cycle with a multiplicative Schwarz smoother does not.
The quadrature depth shrinks as the grid grows so that every run integrates
the same geometry.

    python3 demos/grid_independence.py
"""
from immergrid.cases import depth_for_resolution, discretize, preconditioner, star_config
from immergrid.errors import NotConverged
from immergrid.solvers import pcg


def iterations(case, name, maxit=3000):
    try:
        return pcg(case.A, case.b, preconditioner(case, name), 1e-10, maxit)[1].iterations
    except NotConverged:
        return f">{maxit}"


print(f"{'n':>4} {'dofs':>6} {'eta':>9} {'jacobi':>7} {'vcycle':>7}")
for n in (16, 32, 64):
    case = discretize(star_config(n, depth_for_resolution(2, 16, n)))
    print(f"{n:>4} {case.n:>6} {case.eta:9.2e} {iterations(case, 'jacobi'):>7} "
          f"{iterations(case, 'vcycle'):>7}")
