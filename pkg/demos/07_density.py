"""Smooth feasible fields vanishing near the clamp approximate any feasible field.

Run: python demos/07_density.py
The table also comes from: confined-shell density --config demos/configs/plate_density.cfg
"""
from pathlib import Path

from confined_shell.config import ExperimentConfig, read_config
from confined_shell.experiments import run_density

cfg = ExperimentConfig.from_mapping(read_config(str(Path(__file__).parent / "configs" / "plate_density.cfg")),
                                    ("chart", "nx", "ny", "q", "k_list"))
print(f"{'k':>4} {'H1 distance':>12} {'min margin':>11} {'|eta| <= k':>11}")
for k, dist, margin, sup_ok in run_density(cfg):
    print(f"{k:4d} {dist:12.4f} {margin:11.4f} {str(sup_ok):>11}")
