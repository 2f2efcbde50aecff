"""Linearly elastic shells confined to a half-space: geometry, finite elements,
obstacle solvers and convergence experiments."""
from .errors import (ConfigError, DegenerateDeformedFrame, DegenerateFrame, EigenSolverStall, EmptyGamma0,
                     ExtensionTooSmall, HypothesisFailed, InfeasibleProblem, InfeasibleReference, InvalidBounds,
                     InvalidLame, MaxIterations, OddLayers, ShellError, SingularMatrix, TooManyRows)
from .geometry import (BUILTIN_CHARTS, Chart, HalfSpace, SurfaceDisplacementSample, SurfaceFrame, builtin_chart,
                       confinement_margin, eval_frame, gamma, normal_alignment, rho)
from .shell3d import (elasticity_tensor, eval_shell_frame, expansion_residuals, kl_lift,
                      limit_elasticity_tensor, reduced_membrane_tensor, scaled_strains, transverse_average)
from .vi import (ConstraintSet, QuadraticProgram, VIConfig, VISolution, brute_force_vi,
                 complementarity_residual, solve_linear, solve_vi)

__version__ = "0.1.0"
