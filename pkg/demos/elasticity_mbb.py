"""Linear elasticity on the bundled perforated beam, quadratic THB splines.

Solves once with the V-cycle preconditioner and reports the convergence
history and the tip deflection sampled from the discrete field.

    python3 demos/elasticity_mbb.py
"""
import numpy as np

from immergrid.cases import discretize, preconditioner
from immergrid.cli import sample_field
from immergrid.config import bundled_config
from immergrid.solvers import pcg

case = discretize(bundled_config("mbb2d"))
x, rep = pcg(case.A, case.b, preconditioner(case), 1e-10, 500)
print(f"dofs={case.n} eta={case.eta:.2e} iterations={rep.iterations} "
      f"rate={rep.asymptotic_rate():.3f}")
for k in range(0, rep.iterations, max(1, rep.iterations // 6)):
    print(f"  it {k + 1:3d}  residual {rep.residuals[k]:.3e}")

pts, u = sample_field(case, x)
k = np.argmin(u[:, 1])
print(f"largest downward displacement {u[k, 1]:.4e} at ({pts[k, 0]:.3f}, {pts[k, 1]:.3f})")
