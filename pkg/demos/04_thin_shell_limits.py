"""3D obstacle problems and Koiter's model approach the membrane limit as eps -> 0.

Run: python demos/04_thin_shell_limits.py   (about 20 s)
The same data come from: confined-shell koiter --config demos/configs/cylinder_sweep.cfg
"""
from pathlib import Path

from confined_shell.config import ExperimentConfig, read_config
from confined_shell.experiments import run_koiter_compare

cfg = ExperimentConfig.from_mapping(read_config(str(Path(__file__).parent / "configs" / "cylinder_sweep.cfg")))
rep = run_koiter_compare(cfg)
print(f"limit problem: {rep.limit['active']} of {rep.limit['constraints']} nodal constraints active")
print(f"{'eps':>7} {'|u_bar - zeta|':>15} {'|zeta_K - zeta|':>16} {'|zeta_K - u_bar|':>17}")
for r in rep.rows:
    print(f"{r.eps:7.3f} {r.gap:15.4f} {r.koiter_gap:16.4f} {r.koiter_vs_3d:17.4f}")
g, k = rep.column("gap"), rep.column("koiter_gap")
print(f"ratios finest/coarsest: 3D {g[-1] / g[0]:.3f}, Koiter {k[-1] / k[0]:.3f}; certified: {rep.certified}")
