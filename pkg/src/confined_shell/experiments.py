"""Verification experiments: eps-sweeps, Koiter comparison, Korn probe, KL checks.

Each ``run_*`` function takes an :class:`~confined_shell.config.ExperimentConfig`
and returns a report object with deterministic CSV/JSON renderings.  Wall
times are kept out of the CSV so that identical configs give identical
files.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import sympy as sp

from .config import ExperimentConfig
from .density import DiscreteSurfaceField, density_pipeline, h1_gram
from .errors import EigenSolverStall, HypothesisFailed, MaxIterations
from .fem.assembly import (assemble_3d_system, assemble_h1_gram_3d, assemble_koiter_system,
                           assemble_membrane_system, assemble_strain_gram_3d, averaging_matrix,
                           koiter_parts, make_space, seminorm_distance)
from .fem.mesh import build_mesh2d, build_mesh3d
from .geometry import (Chart, HalfSpace, SurfaceDisplacementSample, confinement_margin, edge_distance,
                       eval_frame, normal_alignment)
from .shell3d import expansion_residuals, kl_lift, simpson_weights, transverse_average
from .vi import QuadraticProgram, VIConfig, VISolution, solve_vi

GAP_ORDER = 4  # quadrature for every reported seminorm gap, so the triangle inequality is exact


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.12g}"
    return str(v)


def csv_text(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- hypotheses

def check_hypotheses(chart: Chart, hs: HalfSpace, grid: int = 200) -> dict:
    """Grid checks of ``min theta . q > 0`` and ``min a_3 . q > 0``.

    Raises
    ------
    HypothesisFailed
        If either minimum is not positive.
    """
    d = confinement_margin(chart, hs, grid)
    al = normal_alignment(chart, hs, grid)
    if d <= 0.0 or al <= 0.0:
        raise HypothesisFailed(f"hypothesis (dpcmp) failed: margin d = {d:.6g}, "
                               f"alignment min a_3.q = {al:.6g} (both must be > 0)")
    return {"margin": d, "alignment": al}


def _vi_config(cfg: ExperimentConfig) -> VIConfig:
    return VIConfig(tol=cfg.tol, max_sweeps=cfg.max_sweeps)


def _solve(qp: QuadraticProgram, vcfg: VIConfig) -> VISolution:
    """Solve, returning the flagged best iterate instead of raising on stalls."""
    try:
        return solve_vi(qp, vcfg)
    except MaxIterations as exc:
        return exc.result


# ----------------------------------------------------------------- sweeps

@dataclass
class SweepRow:
    eps: float
    gap: float
    energy_3d: float
    active_3d: int
    iterations_3d: int
    kkt_3d: float
    certified_3d: bool
    koiter_gap: float = math.nan
    koiter_vs_3d: float = math.nan
    active_koiter: int = -1
    iterations_koiter: int = -1
    kkt_koiter: float = math.nan
    certified_koiter: bool = True
    wall_time: float = 0.0


@dataclass
class SweepReport:
    """Per-eps gaps ordered by decreasing eps, plus the discrete limit solution."""

    rows: list
    limit: dict
    zeta: np.ndarray = field(repr=False, default=None)
    averages: dict = field(repr=False, default_factory=dict)
    koiter: bool = False

    CSV_3D = ["eps", "gap", "energy_3d", "active_3d", "iterations_3d", "kkt_3d", "certified_3d"]
    CSV_K = ["koiter_gap", "koiter_vs_3d", "active_koiter", "iterations_koiter", "kkt_koiter",
             "certified_koiter"]

    @property
    def certified(self) -> bool:
        ok = self.limit.get("certified", True) and all(r.certified_3d for r in self.rows)
        if self.koiter:
            ok = ok and self.limit.get("koiter_certified", True) and all(r.certified_koiter for r in self.rows)
        return bool(ok)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        head = self.CSV_3D + (self.CSV_K if self.koiter else [])
        return csv_text(head, [[getattr(r, h) for h in head] for r in self.rows])

    def to_json(self) -> str:
        return json.dumps({"limit": self.limit, "rows": [asdict(r) for r in self.rows]}, indent=2,
                          sort_keys=True, default=float)


def _setup(cfg: ExperimentConfig):
    chart = cfg.make_chart()
    hs = cfg.halfspace()
    hyp = check_hypotheses(chart, hs, cfg.grid)
    m2 = build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges)
    return chart, hs, hyp, m2


def solve_limit(cfg: ExperimentConfig, chart: Chart, hs: HalfSpace, m2):
    """Discrete membrane limit: the 2D VI with the phi load and nodal constraints."""
    sysm = assemble_membrane_system(m2, chart, cfg.lame, cfg.force(), hs)
    sol = _solve(sysm.to_qp(), _vi_config(cfg))
    return sysm, sol


def run_sweep(cfg: ExperimentConfig, *, obstacle: bool = True) -> SweepReport:
    """3D VI per eps, transverse average, and gap to the discrete membrane limit.

    Raises
    ------
    HypothesisFailed
        If the geometry hypotheses fail.
    """
    chart, hs, hyp, m2 = _setup(cfg)
    hs_use = hs if obstacle else None
    m3 = build_mesh3d(m2, cfg.nz)
    F = cfg.force()
    sysm = assemble_membrane_system(m2, chart, cfg.lame, F, hs_use)
    lim = _solve(sysm.to_qp(), _vi_config(cfg))
    zeta = sysm.expand(lim.x)
    P = averaging_matrix(m3)
    msp = sysm.space
    rows, avgs = [], {}
    for eps in cfg.eps:
        t0 = time.perf_counter()
        s3 = assemble_3d_system(m3, chart, cfg.lame, eps, F, hs_use, cfg.interpolation)
        qp = s3.to_qp()
        sol = _solve(qp, _vi_config(cfg))
        ubar = P @ s3.expand(sol.x)
        avgs[eps] = ubar
        gap = seminorm_distance(chart, (msp, ubar), (msp, zeta), GAP_ORDER)
        rows.append(SweepRow(eps, gap, sol.energy, int(sol.active.size), sol.iterations, sol.kkt_residual,
                             bool(sol.certified), wall_time=time.perf_counter() - t0))
    limit = {"active": int(lim.active.size), "constraints": int(len(sysm.constraints)),
             "nodes": int(m2.n_nodes), "kkt": lim.kkt_residual, "certified": bool(lim.certified),
             "energy": lim.energy, **hyp}
    return SweepReport(rows, limit, zeta, avgs)


def run_koiter_compare(cfg: ExperimentConfig, sweep: SweepReport | None = None) -> SweepReport:
    """Add Koiter gaps ``|zeta_K - zeta_h|`` and ``|zeta_K - u_bar_h|`` to a sweep.

    The Koiter program is divided by eps before solving, which leaves the
    minimiser unchanged and keeps the residual scale comparable across eps.
    """
    if sweep is None:
        sweep = run_sweep(cfg)
    chart, hs, _, m2 = _setup(cfg)
    F = cfg.force()
    parts = koiter_parts(m2, chart, cfg.lame, F)
    msp = make_space(m2, "membrane2d")
    certified = True
    for r in sweep.rows:
        t0 = time.perf_counter()
        sk = assemble_koiter_system(m2, chart, cfg.lame, r.eps, F, hs, parts=parts)
        qp = sk.to_qp()
        qp = QuadraticProgram(qp.H / r.eps, qp.f / r.eps, qp.constraints)
        sol = _solve(qp, _vi_config(cfg))
        zk = sk.expand(sol.x)
        r.koiter_gap = seminorm_distance(chart, (sk.space, zk), (msp, sweep.zeta), GAP_ORDER)
        r.koiter_vs_3d = seminorm_distance(chart, (sk.space, zk), (msp, sweep.averages[r.eps]), GAP_ORDER)
        r.active_koiter, r.iterations_koiter = int(sol.active.size), sol.iterations
        r.kkt_koiter, r.certified_koiter = sol.kkt_residual, bool(sol.certified)
        r.wall_time += time.perf_counter() - t0
        certified = certified and r.certified_koiter
    sweep.koiter = True
    sweep.limit["koiter_certified"] = certified
    return sweep


# ------------------------------------------------------------------- Korn

@dataclass
class KornReport:
    eps: list
    eigenvalues: list
    iterations: list
    slope: float

    def to_csv(self) -> str:
        rows = [[e, v, i] for e, v, i in zip(self.eps, self.eigenvalues, self.iterations)]
        rows.append(["slope", self.slope, ""])
        return csv_text(["eps", "min_eigenvalue", "iterations"], rows)


def smallest_generalized_eigenvalue(K, M, block: int = 4, tol: float = 1e-10, max_iter: int = 1000,
                                    seed: int = 0) -> tuple[float, np.ndarray, int]:
    """Smallest ``lambda`` of ``K x = lambda M x`` by block inverse iteration.

    Each step applies ``K^{-1} M`` to a block of vectors and performs a
    Rayleigh-Ritz projection; the lowest Ritz value converges at the rate
    ``lambda_1 / lambda_{block+1}``.

    Raises
    ------
    EigenSolverStall
        If the Ritz value has not settled within ``max_iter`` steps or is not
        positive.
    """
    K = sps.csc_matrix(K)
    M = sps.csr_matrix(M)
    n = K.shape[0]
    b = min(block, n)
    lu = spla.splu(K)
    X = np.random.default_rng(seed).standard_normal((n, b))
    prev = math.inf
    for it in range(1, max_iter + 1):
        Y = lu.solve(M @ X)
        Kr = Y.T @ (K @ Y)
        Mr = Y.T @ (M @ Y)
        theta, C = sla.eigh((Kr + Kr.T) / 2, (Mr + Mr.T) / 2)
        X = Y @ C
        X /= np.sqrt(np.einsum("ij,ij->j", X, M @ X))
        lam = float(theta[0])
        if abs(lam - prev) <= tol * abs(lam):
            if lam <= 0:
                raise EigenSolverStall(f"non-positive eigenvalue {lam:.3g}")
            return lam, X[:, 0], it
        prev = lam
    raise EigenSolverStall(f"inverse iteration did not settle in {max_iter} steps")


def fit_slope(eps, values) -> float:
    return float(np.polyfit(np.log(np.asarray(eps, float)), np.log(np.asarray(values, float)), 1)[0])


def run_korn_probe(cfg: ExperimentConfig) -> KornReport:
    """Smallest eigenvalue of the scaled strain form against the H1 Gram matrix, per eps."""
    chart = cfg.make_chart()
    m2 = build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges)
    m3 = build_mesh3d(m2, cfg.nz)
    free = make_space(m3, "volume3d").free_dofs
    M = assemble_h1_gram_3d(m3)[free][:, free]
    ev, its = [], []
    for eps in cfg.eps:
        K = assemble_strain_gram_3d(m3, chart, eps, cfg.interpolation)[free][:, free]
        lam, _, it = smallest_generalized_eigenvalue(K, M, seed=cfg.seed)
        ev.append(lam)
        its.append(it)
    slope = fit_slope(cfg.eps, ev) if len(ev) > 1 else math.nan
    return KornReport(list(cfg.eps), ev, its, slope)


# -------------------------------------------------------------- Signorini

def random_surface_field(y: np.ndarray, rng: np.random.Generator, amplitude: float) -> SurfaceDisplacementSample:
    """Smooth field ``eta_i = A_i sin(w1 y1 + p1) cos(w2 y2 + p2)`` with exact derivatives."""
    A = amplitude * rng.uniform(-1, 1, 3)
    w = rng.uniform(0.5, 2.0, (3, 2))
    p = rng.uniform(0, 2 * np.pi, (3, 2))
    y1, y2 = y[..., 0], y[..., 1]
    eta = np.zeros(y.shape[:-1] + (3,))
    grad = np.zeros(y.shape[:-1] + (3, 2))
    hess = np.zeros(y.shape[:-1] + (2, 2))
    for i in range(3):
        s1, c1 = np.sin(w[i, 0] * y1 + p[i, 0]), np.cos(w[i, 0] * y1 + p[i, 0])
        s2, c2 = np.sin(w[i, 1] * y2 + p[i, 1]), np.cos(w[i, 1] * y2 + p[i, 1])
        eta[..., i] = A[i] * s1 * c2
        grad[..., i, 0] = A[i] * w[i, 0] * c1 * c2
        grad[..., i, 1] = -A[i] * w[i, 1] * s1 * s2
        if i == 2:
            hess[..., 0, 0] = -A[i] * w[i, 0] ** 2 * s1 * c2
            hess[..., 1, 1] = -A[i] * w[i, 1] ** 2 * s1 * c2
            hess[..., 0, 1] = hess[..., 1, 0] = -A[i] * w[i, 0] * w[i, 1] * c1 * s2
    return SurfaceDisplacementSample(eta, grad, hess)


@dataclass
class SignoriniReport:
    n_fields: int
    n_checks: int
    n_feasible: int
    counterexamples: int
    max_avg_error_tangential: float
    max_avg_error_normal: float
    max_simpson_error: float
    min_average_margin: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def run_signorini_check(cfg: ExperimentConfig, amplitude: float = 0.2, levels: int = 41,
                        avg_tol: float = 1e-8) -> SignoriniReport:
    """Compare full-thickness and face-only confinement of random KL lifts.

    For every random field and eps the lifted positions are tested on
    ``levels`` equally spaced heights and on the two faces; the two verdicts
    must agree.  The closed-form averages are compared against Gauss and
    Simpson quadrature, and the averaged midsurface position must satisfy
    the 2D nodal constraint whenever the 3D field is feasible.
    """
    chart = cfg.make_chart()
    hs = cfg.halfspace()
    m2 = build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges)
    fr = eval_frame(chart, m2.nodes)
    rng = np.random.default_rng(cfg.seed)
    x3s = np.linspace(-1.0, 1.0, levels)
    nz = cfg.nz
    zs = np.linspace(-1.0, 1.0, nz + 1)
    counter = feas = checks = 0
    e_t = e_n = e_s = 0.0
    min_avg = math.inf
    for _ in range(cfg.n_fields):
        zeta = random_surface_field(fr.y, rng, amplitude)
        for eps in cfg.eps:
            kl = kl_lift(fr, zeta, eps)
            full = all(np.all(kl.position(x) @ hs.q >= 0.0) for x in x3s)
            faces = all(np.all(kl.position(x) @ hs.q >= 0.0) for x in (-1.0, 1.0))
            checks += 1
            counter += int(full != faces)
            cf = kl.closed_form_average()
            quad = transverse_average(kl)
            e_t = max(e_t, float(np.max(np.abs(cf[..., :2] - quad[..., :2]))))
            e_n = max(e_n, float(np.max(np.abs(cf[..., 2] - quad[..., 2]))))
            simp = np.stack([kl(x) for x in zs], -1) @ simpson_weights(nz)
            e_s = max(e_s, float(np.max(np.abs(simp - cf))))
            if full:
                feas += 1
                mid = np.mean([kl.position(x) for x in (-1.0, 1.0)], axis=0)
                min_avg = min(min_avg, float(np.min(mid @ hs.q)))
    passed = counter == 0 and max(e_t, e_n, e_s) <= avg_tol and (feas == 0 or min_avg >= -1e-12)
    return SignoriniReport(cfg.n_fields, checks, feas, counter, e_t, e_n, e_s,
                           min_avg if feas else math.nan, passed)


# ---------------------------------------------------------------- density

DEFAULT_DENSITY_FIELD = ("0", "0", "-0.5*dist*(1 + 0.5*cos(3*y2))")


def run_density(cfg: ExperimentConfig) -> list:
    """Pipeline diagnostics per k: ``(k, h1_distance, min_margin, sup_bound_check)``.

    The input field comes from ``eta1..eta3`` in the config; ``dist`` may be
    used for the parameter distance to gamma_0.
    """
    chart = cfg.make_chart()
    hs = cfg.halfspace()
    m2 = build_mesh2d(chart.bounds, cfg.nx, cfg.ny, chart.clamped_edges)
    exprs = cfg.eta or DEFAULT_DENSITY_FIELD
    dist = edge_distance(m2.bounds, m2.clamped_edges, m2.nodes)
    y1, y2, d = sp.symbols("y1 y2 dist")
    fns = [sp.lambdify((y1, y2, d), sp.sympify(e, locals={"y1": y1, "y2": y2, "dist": d}), "numpy")
           for e in exprs]
    vals = np.stack([np.broadcast_to(np.asarray(f(m2.nodes[:, 0], m2.nodes[:, 1], dist), float),
                                     (m2.n_nodes,)) for f in fns], -1)
    vals = vals.copy()
    vals[m2.clamped_nodes] = 0.0
    fld = DiscreteSurfaceField(m2, chart, vals)
    G = h1_gram(m2)
    rows = []
    for k in cfg.k_list:
        r = density_pipeline(fld, hs, k, G)
        rows.append([k, r.h1_distance, r.min_margin, r.sup_bound_check])
    return rows


def run_expansion_check(cfg: ExperimentConfig) -> list:
    chart = cfg.make_chart()
    res = expansion_residuals(chart, cfg.lame, cfg.eps)
    return [[r["quantity"], r["eps"], r["residual"], r["fitted_slope"]] for r in res]
