"""Three-dimensional shell kinematics and elasticity in scaled coordinates.

Run: python demos/02_shell_mechanics.py
"""
import numpy as np

from confined_shell.geometry import SurfaceDisplacementSample, builtin_chart, eval_frame
from confined_shell.shell3d import (elasticity_tensor, eval_shell_frame, expansion_residuals, kl_lift,
                                    limit_elasticity_tensor, reduced_membrane_tensor, transverse_average)

chart = builtin_chart("cylinder", swap=True)
fr = eval_frame(chart, np.array([0.7, 1.2]))

# The elasticity tensor of the thin shell approaches its eps = 0 limit linearly in eps.
for rec in expansion_residuals(chart, (1.0, 1.0), [1e-1, 1e-2, 1e-3]):
    if rec["quantity"] in ("A", "g", "Gamma_sa3") and rec["eps"] == 1e-3:
        print(f"{rec['quantity']:>10s}: fitted slope {rec['fitted_slope']:.3f}")

# Coercivity: the pair matrix stays uniformly positive as eps shrinks.
for eps in (0.2, 0.05, 0.01):
    A = elasticity_tensor(eval_shell_frame(fr, eps, 0.5), (1.0, 1.0))
    print(f"eps={eps:<5}  min eigenvalue of A(eps) = {np.linalg.eigvalsh(A.pair).min():.4f}")

# Plane-stress condensation of A(0), integrated over the thickness [-1, 1], gives the membrane tensor.
A0 = limit_elasticity_tensor(fr, (1.0, 1.0)).components
cond = A0[:2, :2, :2, :2] - np.einsum("ab,st->abst", A0[:2, :2, 2, 2], A0[2, 2, :2, :2]) / A0[2, 2, 2, 2]
print("max |a - 2 cond|       ", np.abs(reduced_membrane_tensor(fr, (1.0, 1.0)) - 2 * cond).max())

# A Kirchhoff-Love lift keeps fibres normal; its transverse mean has a closed form.
zeta = SurfaceDisplacementSample(np.array([0.02, -0.01, 0.05]), 0.03 * np.ones((3, 2)), 0.1 * np.eye(2))
kl = kl_lift(fr, zeta, 0.1)
print("quadrature mean        ", transverse_average(kl))
print("closed-form mean       ", kl.closed_form_average())
