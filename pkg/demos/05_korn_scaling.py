"""The Korn constant of a thin shell degrades like 1/eps.

Run: python demos/05_korn_scaling.py
"""
from pathlib import Path

from confined_shell.config import ExperimentConfig, read_config
from confined_shell.experiments import run_korn_probe

for name in ("korn_plate.cfg", "korn_cylinder.cfg"):
    cfg = ExperimentConfig.from_mapping(read_config(str(Path(__file__).parent / "configs" / name)),
                                        ("chart", "nx", "ny", "nz"))
    rep = run_korn_probe(cfg)
    pairs = ", ".join(f"{e}: {v:.3e}" for e, v in zip(rep.eps, rep.eigenvalues))
    print(f"{name:<18} smallest eigenvalues {pairs}")
    print(f"{'':<18} log-log slope {rep.slope:.3f} (eps^2 scaling gives 2)")
