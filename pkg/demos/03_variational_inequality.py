"""The obstacle solver on a small random problem, checked against enumeration.

Run: python demos/03_variational_inequality.py
"""
import numpy as np
import scipy.sparse as sps

from confined_shell.vi import ConstraintSet, QuadraticProgram, brute_force_vi, solve_linear, solve_vi

rng = np.random.default_rng(0)
n, rows = 12, 4
M = rng.normal(size=(n, n))
H = sps.csr_matrix(M @ M.T + n * np.eye(n))
f = rng.normal(size=n)
free = solve_linear(H, f)

# Each row constrains a disjoint block of three dofs, like one mesh node against the plane.
blocks = np.arange(rows * 3).reshape(rows, 3)
coef = rng.normal(size=(rows, 3))
bound = np.einsum("mk,mk->m", coef, free[blocks]) + rng.normal(size=rows)
qp = QuadraticProgram(H, f, ConstraintSet(np.arange(rows), blocks, coef, bound))

sol = solve_vi(qp)
print("active rows            ", sol.active)
print("multipliers            ", np.round(sol.multipliers, 6))
print("KKT residual           ", sol.kkt_residual, "certified:", sol.certified)
print("distance to enumeration", np.abs(sol.x - brute_force_vi(qp)).max())
print("energy vs unconstrained", sol.energy, ">=", qp.energy(free))
