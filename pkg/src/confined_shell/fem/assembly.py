"""Discrete spaces and assembly of the shell bilinear forms, loads and constraints.

All cells of a structured mesh share one reference element, so shape
function tables are computed once and geometry enters only through the
frames evaluated at the physical quadrature points.  Element matrices are
formed with a single ``einsum`` over cells and scattered through a COO
matrix, which sums duplicates deterministically.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sps
import sympy as sp

from ..geometry import Chart, HalfSpace, SurfaceDisplacementSample, SurfaceFrame, eval_frame, gamma, rho
from ..errors import InfeasibleReference
from ..shell3d import (VOIGT, VOIGT_WEIGHT, check_lame, elasticity_tensor, eval_shell_frame,
                       pair_matrix, reduced_membrane_tensor, scaled_strains, simpson_weights)
from ..vi import ConstraintSet, QuadraticProgram
from .elements import bfs_2d, gauss_1d, gauss_2d, q1_2d
from .mesh import Mesh2D, Mesh3D

SPACE_KINDS = ("membrane2d", "koiter2d", "volume3d")
PAIRS2 = ((0, 0), (1, 1), (0, 1))
WEIGHT2 = np.array([1.0, 1.0, 2.0])

#: Quadrature order per space: 2x2 for bilinear fields, 4x4 once bicubics enter.
QUAD_ORDER = {"membrane2d": 2, "koiter2d": 4, "volume3d": 2}
QUAD_X3 = 3

STRAIN_INTERPOLATIONS = ("full", "ans", "ans-membrane")
DEFAULT_INTERPOLATION = "ans-membrane"


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Finite element space on a mesh.

    Attributes
    ----------
    kind : {"membrane2d", "koiter2d", "volume3d"}
    ndof : int
    cell_dofs : (n_cells, n_local) int
        Global dof of every local dof.
    node_dofs : (n_nodes, 3) int
        Dofs carrying the nodal values of the three displacement components.
    constrained_dofs, free_dofs : int arrays
        Essential (clamped) dofs and their complement, both sorted.
    """

    kind: str
    mesh: object
    ndof: int
    cell_dofs: np.ndarray
    node_dofs: np.ndarray
    constrained_dofs: np.ndarray
    free_dofs: np.ndarray

    def reduce_map(self) -> np.ndarray:
        """Full dof -> free dof index (``-1`` on constrained dofs)."""
        m = -np.ones(self.ndof, dtype=np.int64)
        m[self.free_dofs] = np.arange(self.free_dofs.size)
        return m

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(self.ndof)
        x[self.free_dofs] = x_free
        return x


def make_space(mesh, kind: str) -> DiscreteSpace:
    """Build the dof layout of ``kind`` on ``mesh``.

    Layouts: ``membrane2d`` puts (eta1, eta2, eta3) of node n at 3n..3n+2;
    ``koiter2d`` puts (eta1, eta2) at 2n, 2n+1 and the four Hermite dofs
    (w, d1 w, d2 w, d12 w) of eta3 at 2N + 4n + r; ``volume3d`` puts
    (v1, v2, v3) of 3D node m at 3m..3m+2.  Clamped nodes lose every dof,
    which for ``koiter2d`` also enforces d_nu eta3 = 0 on gamma_0.
    """
    if kind == "membrane2d":
        N = mesh.n_nodes
        node_dofs = 3 * np.arange(N)[:, None] + np.arange(3)
        cell_dofs = node_dofs[mesh.cells].reshape(len(mesh.cells), 12)
        cons = node_dofs[mesh.clamped_nodes].ravel()
        ndof = 3 * N
    elif kind == "koiter2d":
        N = mesh.n_nodes
        tang = 2 * np.arange(N)[:, None] + np.arange(2)
        herm = 2 * N + 4 * np.arange(N)[:, None] + np.arange(4)
        node_dofs = np.column_stack([tang, herm[:, 0]])
        cell_dofs = np.hstack([tang[mesh.cells].reshape(-1, 8), herm[mesh.cells].reshape(-1, 16)])
        cons = np.concatenate([tang[mesh.clamped_nodes].ravel(), herm[mesh.clamped_nodes].ravel()])
        ndof = 6 * N
    elif kind == "volume3d":
        if not isinstance(mesh, Mesh3D):
            raise TypeError("volume3d needs a Mesh3D")
        N = mesh.n_nodes
        node_dofs = 3 * np.arange(N)[:, None] + np.arange(3)
        cell_dofs = node_dofs[mesh.hexes].reshape(len(mesh.hexes), 24)
        cons = node_dofs[mesh.clamped_nodes].ravel()
        ndof = 3 * N
    else:
        raise ValueError(f"unknown space kind {kind!r}")
    cons = np.unique(cons)
    free = np.setdiff1d(np.arange(ndof), cons)
    return DiscreteSpace(kind, mesh, ndof, cell_dofs, node_dofs, cons, free)


# ------------------------------------------------------------ reference data

def _surface_basis(space: DiscreteSpace, xi: np.ndarray):
    """Basis values at reference points: eta (nq, nl, 3), grad (nq, nl, 3, 2), hess3 (nq, nl, 2, 2)."""
    m2 = space.mesh
    hx, hy = m2.hx, m2.hy
    N, dN = q1_2d(xi)
    dN = dN * np.array([2.0 / hx, 2.0 / hy])
    nq = xi.shape[0]
    if space.kind == "membrane2d":
        eta = np.zeros((nq, 12, 3))
        grad = np.zeros((nq, 12, 3, 2))
        for a in range(4):
            for i in range(3):
                eta[:, 3 * a + i, i] = N[:, a]
                grad[:, 3 * a + i, i, :] = dN[:, a, :]
        return eta, grad, np.zeros((nq, 12, 2, 2))
    if space.kind == "koiter2d":
        Nb, Gb, Hb = bfs_2d(xi, hx, hy)
        eta = np.zeros((nq, 24, 3))
        grad = np.zeros((nq, 24, 3, 2))
        hess = np.zeros((nq, 24, 2, 2))
        for a in range(4):
            for i in range(2):
                eta[:, 2 * a + i, i] = N[:, a]
                grad[:, 2 * a + i, i, :] = dN[:, a, :]
        eta[:, 8:, 2] = Nb
        grad[:, 8:, 2, :] = Gb
        hess[:, 8:] = Hb
        return eta, grad, hess
    raise ValueError(f"{space.kind} is not a surface space")


def _quad_points_2d(m2: Mesh2D, order: int):
    xi, w = gauss_2d(order)
    origin = m2.cell_origin()
    h = np.array([m2.hx, m2.hy])
    y = origin[:, None, :] + (xi[None, :, :] + 1.0) / 2.0 * h
    return xi, y, w * (m2.hx * m2.hy / 4.0)


def _expand_frame(fr):
    """Insert a broadcast axis after the two batch axes (cell, point)."""
    rep = {}
    for f in dataclasses.fields(fr):
        v = getattr(fr, f.name)
        if isinstance(v, np.ndarray) and v.ndim >= 2:
            rep[f.name] = v[:, :, None]
    return dataclasses.replace(fr, **rep)


def _pairs2(t: np.ndarray) -> np.ndarray:
    return np.stack([t[..., i, j] for i, j in PAIRS2], axis=-1)


def _pairs3(t: np.ndarray) -> np.ndarray:
    return np.stack([t[..., i, j] for i, j in VOIGT], axis=-1)


@dataclass
class SurfaceStrainTable:
    """Strain-displacement data of a surface space at all quadrature points.

    ``gam[c, q, d, I]`` / ``rho[c, q, d, I]`` are the pair components
    (11, 22, 12) of gamma and rho produced by local dof ``d`` of cell ``c``.
    """

    frame: SurfaceFrame
    weights: np.ndarray
    gam: np.ndarray
    rho: np.ndarray | None


def surface_strain_table(space: DiscreteSpace, chart: Chart, order: int | None = None,
                         with_rho: bool = False) -> SurfaceStrainTable:
    order = order or QUAD_ORDER[space.kind]
    xi, y, w = _quad_points_2d(space.mesh, order)
    fr = eval_frame(chart, y)
    eta, grad, hess = _surface_basis(space, xi)
    s = SurfaceDisplacementSample(eta, grad, hess)
    fx = _expand_frame(fr)
    gam = _pairs2(gamma(fx, s))
    rh = _pairs2(rho(fx, s)) if with_rho else None
    return SurfaceStrainTable(fr, w, gam, rh)


def _scatter(space: DiscreteSpace, Ke: np.ndarray) -> sps.csr_matrix:
    cd = space.cell_dofs
    nl = cd.shape[1]
    rows = np.broadcast_to(cd[:, :, None], (len(cd), nl, nl)).ravel()
    cols = np.broadcast_to(cd[:, None, :], (len(cd), nl, nl)).ravel()
    K = sps.coo_matrix((Ke.ravel(), (rows, cols)), shape=(space.ndof, space.ndof)).tocsr()
    K.sum_duplicates()
    K = (K + K.T) * 0.5
    K.sort_indices()
    return K.tocsr()


def _scatter_vec(space: DiscreteSpace, fe: np.ndarray) -> np.ndarray:
    return np.bincount(space.cell_dofs.ravel(), weights=fe.ravel(), minlength=space.ndof)


def _pair_D2(C: np.ndarray) -> np.ndarray:
    I = np.array([p[0] for p in PAIRS2])
    J = np.array([p[1] for p in PAIRS2])
    M = C[..., I[:, None], J[:, None], I[None, :], J[None, :]]
    return WEIGHT2[:, None] * M * WEIGHT2[None, :]


def _identity_pairing2(shape) -> np.ndarray:
    d = np.eye(2)
    C = 0.5 * (np.einsum("as,bt->abst", d, d) + np.einsum("at,bs->abst", d, d))
    return np.broadcast_to(C, tuple(shape) + (2, 2, 2, 2))


def _form_from_table(space, B: np.ndarray, D: np.ndarray, wq: np.ndarray) -> sps.csr_matrix:
    Ke = np.einsum("cqdI,cqIJ,cqeJ,cq->cde", B, D, B, wq, optimize=True)
    return _scatter(space, Ke)


def assemble_membrane_form(m2: Mesh2D, chart: Chart, lame, space_kind: str = "membrane2d",
                           order: int | None = None) -> sps.csr_matrix:
    """Matrix of B_M(eta, xi) = int a^{abst} gamma_st(eta) gamma_ab(xi) sqrt(a) dy."""
    space = make_space(m2, space_kind)
    tab = surface_strain_table(space, chart, order)
    D = _pair_D2(reduced_membrane_tensor(tab.frame, lame))
    return _form_from_table(space, tab.gam, D, tab.weights * tab.frame.sqrt_a)


def assemble_flexural_form(m2: Mesh2D, chart: Chart, lame, order: int | None = None) -> sps.csr_matrix:
    """Matrix of int a^{abst} rho_st(eta) rho_ab(xi) sqrt(a) dy on the koiter2d space."""
    space = make_space(m2, "koiter2d")
    tab = surface_strain_table(space, chart, order, with_rho=True)
    D = _pair_D2(reduced_membrane_tensor(tab.frame, lame))
    return _form_from_table(space, tab.rho, D, tab.weights * tab.frame.sqrt_a)


def seminorm_gram(m2: Mesh2D, chart: Chart, space_kind: str = "membrane2d",
                  order: int | None = None) -> sps.csr_matrix:
    """Gram matrix of |eta|_M^2 = sum_ab ||gamma_ab(eta)||^2_{L2(omega)}."""
    space = make_space(m2, space_kind)
    tab = surface_strain_table(space, chart, order)
    D = _pair_D2(_identity_pairing2(tab.gam.shape[:2]))
    return _form_from_table(space, tab.gam, D, np.broadcast_to(tab.weights, tab.gam.shape[:2]))


def surface_strains(space: DiscreteSpace, chart: Chart, x: np.ndarray, order: int = 4):
    """gamma_ab of the discrete field ``x`` at quadrature points.

    Returns ``(gam, w)`` with ``gam`` of shape (n_cells, nq, 3) in pair order
    (11, 22, 12) and ``w`` the matching quadrature weights of dy.
    """
    tab = surface_strain_table(space, chart, order)
    g = np.einsum("cqdI,cd->cqI", tab.gam, x[space.cell_dofs])
    return g, np.broadcast_to(tab.weights, g.shape[:2])


def seminorm_distance(chart: Chart, a: tuple, b: tuple, order: int = 4) -> float:
    """|eta_a - eta_b|_M for fields ``(space, x)`` living on possibly different spaces of one mesh."""
    ga, w = surface_strains(a[0], chart, a[1], order)
    gb, _ = surface_strains(b[0], chart, b[1], order)
    d = ga - gb
    return float(np.sqrt(np.sum(w * (d[..., 0] ** 2 + d[..., 1] ** 2 + 2.0 * d[..., 2] ** 2))))


# ------------------------------------------------------------------- loads

_XYZ = sp.symbols("y1 y2 x3", real=True)
FORCE_KEYS = ("11", "22", "33", "23", "13", "12")


class ForceField:
    """Symmetric admissible force field F^{ij}(y, x3).

    Components are given as constants, callables ``(y1, y2, x3) -> array``
    or expression strings in ``y1, y2, x3``; missing components are zero.
    """

    def __init__(self, components: Mapping[str, object] | None = None):
        comps = {}
        for k, v in (components or {}).items():
            key = "".join(sorted(str(k)))
            if key not in FORCE_KEYS:
                raise ValueError(f"unknown force component {k!r}")
            comps[key] = v
        self._raw = comps
        self._funcs = {k: self._compile(v) for k, v in comps.items()}

    @staticmethod
    def _compile(v) -> Callable:
        if callable(v):
            return v
        expr = sp.sympify(v, locals=dict(zip(("y1", "y2", "x3"), _XYZ)))
        if expr.free_symbols - set(_XYZ):
            raise ValueError(f"force expression {v!r} uses unknown symbols")
        return sp.lambdify(_XYZ, expr, modules="numpy")

    @classmethod
    def constant(cls, **kw) -> "ForceField":
        """``ForceField.constant(F33=1.0)`` style constructor."""
        return cls({k.lstrip("F"): float(v) for k, v in kw.items()})

    @property
    def is_zero(self) -> bool:
        def zero(v):
            if isinstance(v, (int, float)):
                return v == 0
            return isinstance(v, str) and sp.sympify(v) == 0
        return all(zero(v) for v in self._raw.values())

    def evaluate(self, y: np.ndarray, x3) -> np.ndarray:
        """F^{ij} at points ``y`` (..., 2) and heights ``x3``; shape (..., 3, 3)."""
        y = np.asarray(y, dtype=float)
        x3 = np.broadcast_to(np.asarray(x3, dtype=float), y.shape[:-1])
        out = np.zeros(y.shape[:-1] + (3, 3))
        for key, fn in self._funcs.items():
            i, j = int(key[0]) - 1, int(key[1]) - 1
            v = np.broadcast_to(np.asarray(fn(y[..., 0], y[..., 1], x3), dtype=float), y.shape[:-1])
            out[..., i, j] = v
            out[..., j, i] = v
        return out


def phi_from_F(F: ForceField, frame: SurfaceFrame, lame, n_gauss: int = 5) -> np.ndarray:
    """phi^{ab} = int_{-1}^{1} (F^{ab} - lam/(lam + 2 mu) a^{ab} F^{33}) dx3 at the frame points."""
    lam, mu = check_lame(lame)
    xg, wg = gauss_1d(n_gauss)
    phi = np.zeros(frame.shape + (2, 2))
    for x, w in zip(xg, wg):
        Fv = F.evaluate(frame.y, x)
        phi += w * (Fv[..., :2, :2] - lam / (lam + 2 * mu) * frame.metric_con * Fv[..., 2, 2, None, None])
    return phi


def membrane_load(m2: Mesh2D, chart: Chart, lame, F: ForceField, space_kind: str = "membrane2d",
                  order: int | None = None) -> np.ndarray:
    """Vector of L_M(eta) = int phi^{ab} gamma_ab(eta) sqrt(a) dy."""
    space = make_space(m2, space_kind)
    tab = surface_strain_table(space, chart, order)
    phi = _pairs2(phi_from_F(F, tab.frame, lame)) * WEIGHT2
    fe = np.einsum("cqdI,cqI,cq->cd", tab.gam, phi, tab.weights * tab.frame.sqrt_a)
    return _scatter_vec(space, fe)


# ------------------------------------------------------------- constraints

def assemble_constraints_2d(m2: Mesh2D, chart: Chart, hs: HalfSpace,
                            space_kind: str = "membrane2d") -> ConstraintSet:
    """Rows (a^i(y_n) . q) eta_{i,n} >= -theta(y_n) . q for every non-clamped node.

    Raises
    ------
    InfeasibleReference
        If theta(y_n) . q < 0 at some node.
    """
    space = make_space(m2, space_kind)
    fr = eval_frame(chart, m2.nodes)
    tq = fr.theta @ hs.q
    if np.any(tq < 0.0):
        raise InfeasibleReference(f"reference configuration violates the half-space (min theta.q = {tq.min():.3g})")
    coef = fr.a_con @ hs.q
    free = np.setdiff1d(np.arange(m2.n_nodes), m2.clamped_nodes)
    return ConstraintSet(free, space.node_dofs[free], coef[free], -tq[free])


def assemble_constraints_3d(m3: Mesh3D, chart: Chart, hs: HalfSpace, eps: float) -> ConstraintSet:
    """Rows (g^i(eps)(x_n) . q) v_{i,n} >= -(theta + eps x3 a_3) . q for every non-clamped 3D node."""
    space = make_space(m3, "volume3d")
    m2 = m3.base
    fr = eval_frame(chart, m2.nodes)
    coefs, bounds = [], []
    for x3 in m3.x3_levels:
        sf = eval_shell_frame(fr, eps, x3)
        pos = fr.theta + (eps * x3) * fr.a_cov[..., 2, :]
        coefs.append(sf.g_con @ hs.q)
        bounds.append(pos @ hs.q)
    coef = np.concatenate(coefs)
    pq = np.concatenate(bounds)
    if np.any(pq < 0.0):
        raise InfeasibleReference(f"reference shell violates the half-space (min = {pq.min():.3g})")
    free = np.setdiff1d(np.arange(m3.n_nodes), m3.clamped_nodes)
    return ConstraintSet(free, space.node_dofs[free], coef[free], -pq[free])


# ------------------------------------------------------------ 3D assembly

def _volume_basis(m3: Mesh3D, xi2: np.ndarray, xi3: float):
    """Trilinear basis at in-plane points ``xi2`` and reference height ``xi3``."""
    m2 = m3.base
    N, dN = q1_2d(xi2)
    dN = dN * np.array([2.0 / m2.hx, 2.0 / m2.hy])
    L = np.array([(1 - xi3) / 2, (1 + xi3) / 2])
    dL = np.array([-0.5, 0.5]) * m3.nz  # d/dx3 with layer thickness 2/nz
    nq = xi2.shape[0]
    val = np.zeros((nq, 24, 3))
    grad = np.zeros((nq, 24, 3, 3))
    for b in range(2):
        for a in range(4):
            A = a + 4 * b
            for i in range(3):
                d = 3 * A + i
                val[:, d, i] = N[:, a] * L[b]
                grad[:, d, i, 0] = dN[:, a, 0] * L[b]
                grad[:, d, i, 1] = dN[:, a, 1] * L[b]
                grad[:, d, i, 2] = N[:, a] * dL[b]
    return val, grad


# Assumed-strain tying points.  "ans" samples e_13 on xi1 = 0 (interpolated
# in xi2) and e_23 on xi2 = 0 (interpolated in xi1) against shear locking;
# "ans-membrane" treats e_11 and e_22 the same way against membrane locking.
_TY13 = np.array([[0.0, -1.0], [0.0, 1.0]])
_TY23 = np.array([[-1.0, 0.0], [1.0, 0.0]])


def _strain_rows(m3: Mesh3D, fr2: SurfaceFrame, xi2, xi3, x3, eps):
    val, grad = _volume_basis(m3, xi2, xi3)
    sf = eval_shell_frame(fr2, eps, x3)
    e = scaled_strains(_expand_frame(sf), eps, val[None], grad[None])
    return sf, _pairs3(e)


def _hex_strain_tables(m3: Mesh3D, chart: Chart, eps: float, interpolation: str = DEFAULT_INTERPOLATION):
    """Yield per (layer, x3-point) the shell frame, the strain rows E[c, q, d, I] and weights."""
    if interpolation not in STRAIN_INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {STRAIN_INTERPOLATIONS}")
    m2 = m3.base
    xi2, y, w2 = _quad_points_2d(m2, QUAD_ORDER["volume3d"])
    fr = eval_frame(chart, y)
    if interpolation != "full":
        origin = m2.cell_origin()
        h = np.array([m2.hx, m2.hy])
        ty13 = eval_frame(chart, origin[:, None, :] + (_TY13[None] + 1.0) / 2.0 * h)
        ty23 = eval_frame(chart, origin[:, None, :] + (_TY23[None] + 1.0) / 2.0 * h)
    x3g, w3 = gauss_1d(QUAD_X3)
    for k in range(m3.nz):
        for xi3, wz in zip(x3g, w3):
            x3 = -1.0 + (2 * k + 1) / m3.nz + xi3 / m3.nz
            sf, E = _strain_rows(m3, fr, xi2, xi3, x3, eps)
            if interpolation != "full":
                _, E13 = _strain_rows(m3, ty13, _TY13, xi3, x3, eps)
                _, E23 = _strain_rows(m3, ty23, _TY23, xi3, x3, eps)
                s = xi2[:, 1]
                r = xi2[:, 0]
                E = E.copy()
                E[:, :, :, 4] = ((1 - s)[None, :, None] * E13[:, 0:1, :, 4]
                                 + (1 + s)[None, :, None] * E13[:, 1:2, :, 4]) / 2.0
                E[:, :, :, 3] = ((1 - r)[None, :, None] * E23[:, 0:1, :, 3]
                                 + (1 + r)[None, :, None] * E23[:, 1:2, :, 3]) / 2.0
                if interpolation == "ans-membrane":
                    E[:, :, :, 0] = ((1 - s)[None, :, None] * E13[:, 0:1, :, 0]
                                     + (1 + s)[None, :, None] * E13[:, 1:2, :, 0]) / 2.0
                    E[:, :, :, 1] = ((1 - r)[None, :, None] * E23[:, 0:1, :, 1]
                                     + (1 + r)[None, :, None] * E23[:, 1:2, :, 1]) / 2.0
            yield k, sf, E, w2 * (wz / m3.nz)


def _hex_form(m3: Mesh3D, chart: Chart, eps: float, pairing, weight_fn, interpolation: str) -> sps.csr_matrix:
    space = make_space(m3, "volume3d")
    nc2 = len(m3.base.cells)
    Ke = np.zeros((len(m3.hexes), 24, 24))
    W = VOIGT_WEIGHT
    for k, sf, E, wq in _hex_strain_tables(m3, chart, eps, interpolation):
        D = W[:, None] * pairing(sf) * W[None, :]
        Ke[k * nc2:(k + 1) * nc2] += np.einsum("cqdI,cqIJ,cqeJ,cq->cde", E, D, E, wq * weight_fn(sf),
                                               optimize=True)
    return _scatter(space, Ke)


def assemble_3d_form(m3: Mesh3D, chart: Chart, lame, eps: float, interpolation: str = DEFAULT_INTERPOLATION) -> sps.csr_matrix:
    """Matrix of v -> int A^{ijkl}(eps) e_kl(eps; v) e_ij(eps; v) sqrt(g(eps)) dx."""
    check_lame(lame)
    return _hex_form(m3, chart, eps, lambda sf: elasticity_tensor(sf, lame).pair,
                     lambda sf: sf.sqrt_g, interpolation)


def _identity_pairing3(sf):
    d = np.eye(3)
    C = 0.5 * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
    return np.broadcast_to(pair_matrix(C), sf.vol.shape + (6, 6))


def assemble_strain_gram_3d(m3: Mesh3D, chart: Chart, eps: float, interpolation: str = DEFAULT_INTERPOLATION) -> sps.csr_matrix:
    """Matrix of v -> sum_ij ||e_ij(eps; v)||^2_{L2(Omega)}."""
    return _hex_form(m3, chart, eps, _identity_pairing3, lambda sf: np.ones_like(sf.vol), interpolation)


def assemble_3d_load(m3: Mesh3D, chart: Chart, eps: float, F: ForceField, interpolation: str = DEFAULT_INTERPOLATION) -> np.ndarray:
    """Vector of v -> int F^{ij} e_ij(eps; v) sqrt(g(eps)) dx."""
    space = make_space(m3, "volume3d")
    if F.is_zero:
        return np.zeros(space.ndof)
    nc2 = len(m3.base.cells)
    fe = np.zeros((len(m3.hexes), 24))
    for k, sf, E, wq in _hex_strain_tables(m3, chart, eps, interpolation):
        x3 = np.broadcast_to(sf.x3, sf.vol.shape)
        Fv = _pairs3(F.evaluate(_frame_points(m3.base), x3)) * VOIGT_WEIGHT
        fe[k * nc2:(k + 1) * nc2] += np.einsum("cqdI,cqI,cq->cd", E, Fv, wq * sf.sqrt_g)
    return _scatter_vec(space, fe)


def _frame_points(m2: Mesh2D) -> np.ndarray:
    return _quad_points_2d(m2, QUAD_ORDER["volume3d"])[1]


def assemble_h1_gram_3d(m3: Mesh3D) -> sps.csr_matrix:
    """Matrix of v -> sum_i ||v_i||^2_{H1(Omega)} in the scaled coordinates."""
    space = make_space(m3, "volume3d")
    xi2, _, w2 = _quad_points_2d(m3.base, QUAD_ORDER["volume3d"])
    x3g, w3 = gauss_1d(QUAD_X3)
    Ke = np.zeros((24, 24))
    for xi3, wz in zip(x3g, w3):
        val, grad = _volume_basis(m3, xi2, xi3)
        wq = w2 * (wz / m3.nz)
        Ke += np.einsum("qdi,qei,q->de", val, val, wq) + np.einsum("qdij,qeij,q->de", grad, grad, wq)
    return _scatter(space, np.broadcast_to(Ke, (len(m3.hexes), 24, 24)))


def assemble_d3_gram(m3: Mesh3D) -> sps.csr_matrix:
    """Matrix of v -> ||d_3 v||^2_{L2(Omega)}."""
    space = make_space(m3, "volume3d")
    xi2, _, w2 = _quad_points_2d(m3.base, QUAD_ORDER["volume3d"])
    x3g, w3 = gauss_1d(QUAD_X3)
    Ke = np.zeros((24, 24))
    for xi3, wz in zip(x3g, w3):
        _, grad = _volume_basis(m3, xi2, xi3)
        Ke += np.einsum("qdi,qei,q->de", grad[..., 2], grad[..., 2], w2 * (wz / m3.nz))
    return _scatter(space, np.broadcast_to(Ke, (len(m3.hexes), 24, 24)))


def averaging_matrix(m3: Mesh3D) -> sps.csr_matrix:
    """Sparse map from volume3d dofs to membrane2d dofs: composite Simpson along each column."""
    N2 = m3.base.n_nodes
    w = simpson_weights(m3.nz)
    rows, cols, vals = [], [], []
    base = np.arange(3 * N2)
    for k, wk in enumerate(w):
        rows.append(base)
        cols.append(base + 3 * N2 * k)
        vals.append(np.full(3 * N2, wk))
    P = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(3 * N2, 3 * m3.n_nodes)).tocsr()
    P.sort_indices()
    return P


def seminorm_gram_3d(m3: Mesh3D, chart: Chart) -> sps.csr_matrix:
    """Gram matrix of |v|_{M,Omega}^2 = ||d_3 v||^2 + |v_bar|_M^2."""
    P = averaging_matrix(m3)
    G2 = seminorm_gram(m3.base, chart, "membrane2d")
    G = assemble_d3_gram(m3) + (P.T @ G2 @ P)
    G = ((G + G.T) * 0.5).tocsr()
    G.sort_indices()
    return G


# -------------------------------------------------------- assembled systems

@dataclass
class AssembledSystem:
    """Stiffness, load, constraints and seminorm Gram matrix on one space."""

    space: DiscreteSpace
    stiffness: sps.csr_matrix
    load: np.ndarray
    constraints: ConstraintSet
    gram_M: sps.csr_matrix | None = None

    def to_qp(self) -> QuadraticProgram:
        """Eliminate the clamped dofs symmetrically."""
        free = self.space.free_dofs
        K = self.stiffness[free][:, free].tocsr()
        K.sort_indices()
        return QuadraticProgram(K, self.load[free], self.constraints.remap(self.space.reduce_map()))

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        return self.space.expand(x_free)


def assemble_membrane_system(m2: Mesh2D, chart: Chart, lame, F: ForceField,
                             hs: HalfSpace | None = None) -> AssembledSystem:
    """Discrete membrane limit problem: B_M, L_M and the 2D nodal constraints."""
    space = make_space(m2, "membrane2d")
    K = assemble_membrane_form(m2, chart, lame)
    f = membrane_load(m2, chart, lame, F)
    cons = assemble_constraints_2d(m2, chart, hs) if hs is not None else ConstraintSet.empty()
    return AssembledSystem(space, K, f, cons, seminorm_gram(m2, chart, "membrane2d"))


def assemble_koiter_system(m2: Mesh2D, chart: Chart, lame, eps: float, F: ForceField | None = None,
                           hs: HalfSpace | None = None, *, parts: tuple | None = None) -> AssembledSystem:
    """Koiter system: stiffness eps B_M + eps^3/3 B_F, load eps L_M.

    ``parts`` may pass precomputed ``(B_M, B_F, L_M)`` on the koiter2d space
    so that eps sweeps assemble the forms once.
    """
    space = make_space(m2, "koiter2d")
    if parts is None:
        parts = koiter_parts(m2, chart, lame, F)
    KM, KF, LM = parts
    K = (eps * KM + (eps**3 / 3.0) * KF).tocsr()
    K.sort_indices()
    cons = assemble_constraints_2d(m2, chart, hs, "koiter2d") if hs is not None else ConstraintSet.empty()
    return AssembledSystem(space, K, eps * LM, cons, None)


def koiter_parts(m2: Mesh2D, chart: Chart, lame, F: ForceField | None):
    KM = assemble_membrane_form(m2, chart, lame, "koiter2d")
    KF = assemble_flexural_form(m2, chart, lame)
    LM = membrane_load(m2, chart, lame, F, "koiter2d") if F is not None else np.zeros(6 * m2.n_nodes)
    return KM, KF, LM


def assemble_3d_system(m3: Mesh3D, chart: Chart, lame, eps: float, F: ForceField,
                       hs: HalfSpace | None = None, interpolation: str = DEFAULT_INTERPOLATION) -> AssembledSystem:
    """Scaled 3D problem: energy matrix, load and nodal confinement rows at ``eps``."""
    space = make_space(m3, "volume3d")
    K = assemble_3d_form(m3, chart, lame, eps, interpolation)
    f = assemble_3d_load(m3, chart, eps, F, interpolation)
    cons = assemble_constraints_3d(m3, chart, hs, eps) if hs is not None else ConstraintSet.empty()
    return AssembledSystem(space, K, f, cons, None)
