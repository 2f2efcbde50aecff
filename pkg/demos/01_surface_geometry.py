"""Surface geometry: frames, strain measures and the confinement hypotheses.

Run: python demos/01_surface_geometry.py
"""
import math

import numpy as np

from confined_shell.geometry import (HalfSpace, SurfaceDisplacementSample, builtin_chart, confinement_margin,
                                     eval_frame, gamma, normal_alignment, rho)

q = HalfSpace(np.array([0.0, 0.0, 1.0]))

# The cylinder (cos y1, y2, sin y1) over [0.1, pi - 0.1] x [0, 2] is an arch above the plane z = 0.
native = builtin_chart("cylinder")
fr = eval_frame(native, np.array([math.pi / 2, 0.0]))
print("theta at the crown     ", fr.theta)
print("a_1, a_2               ", fr.a_cov[0], fr.a_cov[1])
print("a_3 = a_1 x a_2        ", fr.a_cov[2], "(points toward the axis)")
print("b_ab                   ", fr.curv_cov.ravel())

# With this orientation a_3 . q < 0, so the alignment hypothesis fails.
print("native alignment       ", normal_alignment(native, q))
# Exchanging the parameters reverses a_3; the margin is unchanged.
arch = builtin_chart("cylinder", swap=True)
print("swapped alignment      ", normal_alignment(arch, q), " margin", confinement_margin(arch, q))
print("sin(0.1)               ", math.sin(0.1))

# Linearised strains of a pure normal displacement eta = (0, 0, 1):
# the metric changes by -b_ab and the curvature by -b^s_a b_sb.
z = SurfaceDisplacementSample(np.array([0.0, 0.0, 1.0]), np.zeros((3, 2)), np.zeros((2, 2)))
print("gamma(eta)             ", gamma(fr, z).ravel())
print("rho(eta)               ", rho(fr, z).ravel())
