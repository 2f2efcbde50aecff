"""Command-line entry point.

Usage: ``confined-shell <subcommand> --config FILE [--out PATH] [--json PATH]``.

Exit status: 0 on success, 2 when the geometric hypotheses fail, 1 on
configuration errors, solver failures or uncertified results.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ExperimentConfig, read_config
from .errors import ConfigError, HypothesisFailed, ShellError
from .experiments import (SweepReport, check_hypotheses, csv_text, run_density, run_expansion_check,
                          run_koiter_compare, run_korn_probe, run_signorini_check, run_sweep, solve_limit)
from .fem.assembly import assemble_3d_system
from .fem.io import atomic_write_text, write_system
from .fem.mesh import build_mesh2d, build_mesh3d
from .geometry import check_chart, confinement_margin, eval_frame, normal_alignment
from .vi import VIConfig, solve_vi

SUBCOMMANDS = ("geometry", "expansion-check", "solve2d", "solve3d", "sweep", "koiter", "korn",
               "signorini", "density")

GEOMETRY_COLUMNS = ["y1", "y2", "a11", "a12", "a22", "b11", "b12", "b22", "sqrt_a", "a3_dot_q"]

# keys each subcommand cannot run without
REQUIRED = {
    "geometry": ("chart", "nx", "ny", "q"),
    "expansion-check": ("chart", "lambda", "mu", "eps"),
    "solve2d": ("chart", "lambda", "mu", "nx", "ny", "q"),
    "solve3d": ("chart", "lambda", "mu", "eps", "nx", "ny", "nz", "q"),
    "sweep": ("chart", "lambda", "mu", "eps", "nx", "ny", "nz", "q"),
    "koiter": ("chart", "lambda", "mu", "eps", "nx", "ny", "nz", "q"),
    "korn": ("chart", "lambda", "mu", "eps", "nx", "ny", "nz"),
    "signorini": ("chart", "eps", "nx", "ny", "q"),
    "density": ("chart", "nx", "ny", "q", "k_list"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1; status 2 is reserved for hypothesis failures
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="confined-shell", description="Confined linearly elastic shell experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="flat key = value file")
        s.add_argument("--out", help="CSV (or JSON) report path; overrides out_csv")
        s.add_argument("--json", help="JSON certificate path; overrides out_json")
    return p


def _emit(path: str | None, text: str) -> None:
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


def _cmd_geometry(cfg, args):
    chart = cfg.make_chart()
    check_chart(chart)
    hs = cfg.halfspace()
    m2 = build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges)
    fr = eval_frame(chart, m2.nodes)
    A, B = fr.metric_cov, fr.curv_cov
    a3q = fr.a_cov[:, 2, :] @ hs.q
    rows = [[y[0], y[1], A[n, 0, 0], A[n, 0, 1], A[n, 1, 1], B[n, 0, 0], B[n, 0, 1], B[n, 1, 1],
             fr.sqrt_a[n], a3q[n]] for n, y in enumerate(m2.nodes)]
    _emit(args.out or cfg.out_csv, csv_text(GEOMETRY_COLUMNS, rows))
    summary = {"chart": chart.name, "bounds": list(chart.bounds), "clamped_edges": list(chart.clamped_edges),
               "margin": confinement_margin(chart, hs, cfg.grid),
               "alignment": normal_alignment(chart, hs, cfg.grid)}
    if args.json or cfg.out_json:
        atomic_write_text(args.json or cfg.out_json, _dump(summary))
    check_hypotheses(chart, hs, cfg.grid)
    return 0


def _cmd_expansion(cfg, args):
    rows = run_expansion_check(cfg)
    _emit(args.out or cfg.out_csv, csv_text(["quantity", "eps", "residual", "fitted_slope"], rows))
    return 0


def _cmd_solve2d(cfg, args):
    chart = cfg.make_chart()
    hs = cfg.halfspace()
    check_hypotheses(chart, hs, cfg.grid)
    m2 = build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges)
    sysm, sol = solve_limit(cfg, chart, hs, m2)
    if cfg.out_system:
        write_system(cfg.out_system, sysm.to_qp())
    _emit(args.json or args.out or cfg.out_json, _dump({"model": "membrane", **sol.certificate()}))
    return 0 if sol.certified else 1


def _cmd_solve3d(cfg, args):
    chart = cfg.make_chart()
    hs = cfg.halfspace()
    check_hypotheses(chart, hs, cfg.grid)
    m3 = build_mesh3d(build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges), cfg.nz)
    certs, ok = [], True
    for eps in cfg.eps:
        s3 = assemble_3d_system(m3, chart, cfg.lame, eps, cfg.force(), hs, cfg.interpolation)
        qp = s3.to_qp()
        if cfg.out_system and eps == cfg.eps[0]:
            write_system(cfg.out_system, qp)
        sol = solve_vi(qp, VIConfig(tol=cfg.tol, max_sweeps=cfg.max_sweeps))
        certs.append({"eps": eps, **sol.certificate()})
        ok = ok and sol.certified
    _emit(args.json or args.out or cfg.out_json, _dump({"model": "3d", "solves": certs}))
    return 0 if ok else 1


def _write_sweep(rep: SweepReport, cfg, args) -> int:
    _emit(args.out or cfg.out_csv, rep.to_csv())
    if args.json or cfg.out_json:
        atomic_write_text(args.json or cfg.out_json, rep.to_json() + "\n")
    return 0 if rep.certified else 1


def _cmd_sweep(cfg, args):
    return _write_sweep(run_sweep(cfg), cfg, args)


def _cmd_koiter(cfg, args):
    return _write_sweep(run_koiter_compare(cfg), cfg, args)


def _cmd_korn(cfg, args):
    _emit(args.out or cfg.out_csv, run_korn_probe(cfg).to_csv())
    return 0


def _cmd_signorini(cfg, args):
    rep = run_signorini_check(cfg)
    _emit(args.json or args.out or cfg.out_json, rep.to_json() + "\n")
    return 0 if rep.passed else 1


def _cmd_density(cfg, args):
    rows = run_density(cfg)
    _emit(args.out or cfg.out_csv, csv_text(["k", "h1_distance", "min_margin", "sup_bound_check"], rows))
    return 0


_DISPATCH = {"geometry": _cmd_geometry, "expansion-check": _cmd_expansion, "solve2d": _cmd_solve2d,
             "solve3d": _cmd_solve3d, "sweep": _cmd_sweep, "koiter": _cmd_koiter, "korn": _cmd_korn,
             "signorini": _cmd_signorini, "density": _cmd_density}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_mapping(read_config(args.config), REQUIRED[args.command])
        return _DISPATCH[args.command](cfg, args)
    except HypothesisFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ShellError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
