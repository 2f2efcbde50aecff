"""Constructive density operators on discrete surface fields.

A feasible displacement field (one keeping the deformed midsurface in the
half-space ``x . q >= 0``) is approximated by smooth feasible fields that
vanish near the clamped boundary in three steps: a pointwise truncation, a
boundary cutoff, and a mollification over a reflected extension of the
parameter rectangle.  Every step acts on nodal values of a
:class:`~confined_shell.fem.mesh.Mesh2D` and feasibility is tracked at the
nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sps

from .errors import ExtensionTooSmall
from .fem.elements import bfs_2d, gauss_2d, q1_2d
from .fem.mesh import Mesh2D
from .geometry import Chart, HalfSpace, SurfaceFrame, edge_distance, eval_frame


# ------------------------------------------------------------------ fields

@dataclass(eq=False)
class DiscreteSurfaceField:
    """Nodal covariant components ``(eta_1, eta_2, eta_3)`` on a 2D mesh.

    Parameters
    ----------
    mesh : Mesh2D
    chart : Chart
    values : (n_nodes, 3) array
        Must be finite and zero at clamped nodes.
    """

    mesh: Mesh2D
    chart: Chart
    values: np.ndarray
    frame: SurfaceFrame | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.mesh.n_nodes, 3)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if np.any(self.values[self.mesh.clamped_nodes] != 0.0):
            raise ValueError("field must vanish at clamped nodes")
        if self.frame is None:
            self.frame = eval_frame(self.chart, self.mesh.nodes)

    @classmethod
    def from_function(cls, mesh: Mesh2D, chart: Chart, fn) -> "DiscreteSurfaceField":
        """Sample ``fn(y) -> (..., 3)`` at the nodes; clamped nodes are set to zero."""
        v = np.array(fn(mesh.nodes), dtype=float).reshape(mesh.n_nodes, 3)
        v[mesh.clamped_nodes] = 0.0
        return cls(mesh, chart, v)

    def with_values(self, values: np.ndarray) -> "DiscreteSurfaceField":
        return DiscreteSurfaceField(self.mesh, self.chart, values, self.frame)

    def vector(self) -> np.ndarray:
        """Cartesian displacement ``eta_i a^i`` at every node."""
        return np.einsum("ni,nij->nj", self.values, self.frame.a_con)

    def margin(self, hs: HalfSpace) -> np.ndarray:
        """Nodal confinement values ``(theta + eta_i a^i) . q``."""
        return (self.frame.theta + self.vector()) @ hs.q


# -------------------------------------------------------------- truncation

def truncate(fld: DiscreteSurfaceField, k: float) -> DiscreteSurfaceField:
    """Scale each node so that ``|eta_j a^j| <= k``.

    Nodes already within the bound are unchanged; the others are multiplied
    by ``k / |eta_j a^j|``.  Since the scaling factor lies in (0, 1] and
    ``theta . q >= 0``, nodal feasibility is preserved.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    u = np.linalg.norm(fld.vector(), axis=1)
    s = np.ones_like(u)
    big = u > k
    s[big] = k / u[big]
    return fld.with_values(fld.values * s[:, None])


# ------------------------------------------------------------------ cutoff

def cutoff_profile(dist: np.ndarray, k: float) -> np.ndarray:
    """Piecewise linear ``f_k``: 0 for ``dist <= 1/k``, ``k dist - 1`` up to ``2/k``, then 1."""
    return np.clip(k * np.asarray(dist) - 1.0, 0.0, 1.0)


def cutoff(fld: DiscreteSurfaceField, k: float) -> DiscreteSurfaceField:
    """Multiply by ``(1 - 1/k) f_k(dist(y, gamma_0))``.

    At a feasible input node the output margin is at least
    ``theta(y) . q / k``, hence at least ``d / k`` with ``d`` the confinement
    margin of the chart.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = fld.mesh
    dist = edge_distance(m.bounds, m.clamped_edges, m.nodes)
    f = (1.0 - 1.0 / k) * cutoff_profile(dist, k)
    return fld.with_values(fld.values * f[:, None])


# -------------------------------------------------------------- extension

_SIDES = {"left": (1, 0), "right": (1, 1), "bottom": (0, 0), "top": (0, 1)}


@dataclass(eq=False)
class ReflectionExtension:
    """Nodal data on the rectangle widened by ``width`` cells on every side.

    Arrays are indexed ``[j, i]`` with ``i`` running over the extended y1
    nodes.  Values are reflected evenly across free edges; across clamped
    edges the displacement is extended by zero while the frame products
    ``theta . q`` and ``a^i . q`` are still reflected, so that antipodal
    points share ``a^i . q``.
    """

    mesh: Mesh2D
    width: int
    y: np.ndarray          # (Ny, Nx, 2) extended node coordinates
    eta: np.ndarray        # (Ny, Nx, 3)
    theta_q: np.ndarray    # (Ny, Nx)
    a_q: np.ndarray        # (Ny, Nx, 3) products a^i . q

    @classmethod
    def build(cls, fld: DiscreteSurfaceField, hs: HalfSpace, width: int) -> "ReflectionExtension":
        m = fld.mesh
        w = int(width)
        if w < 1 or w > min(m.nx, m.ny):
            raise ExtensionTooSmall(f"extension width {w} must lie in [1, {min(m.nx, m.ny)}]")
        ix = np.arange(-w, m.nx + w + 1)
        jy = np.arange(-w, m.ny + w + 1)
        ri, zi = _reflect(ix, m.nx, "left" in m.clamped_edges, "right" in m.clamped_edges)
        rj, zj = _reflect(jy, m.ny, "bottom" in m.clamped_edges, "top" in m.clamped_edges)
        src = m.node_index(ri[None, :], rj[:, None])
        zero = zi[None, :] | zj[:, None]
        eta = fld.values[src]
        eta[zero] = 0.0
        tq = fld.frame.theta @ hs.q
        aq = fld.frame.a_con @ hs.q
        y1 = m.bounds[0] + ix * m.hx
        y2 = m.bounds[2] + jy * m.hy
        Y = np.stack(np.meshgrid(y1, y2, indexing="xy"), -1)
        return cls(m, w, Y, eta, tq[src], aq[src])

    def interior(self, arr: np.ndarray) -> np.ndarray:
        """Restrict an extended array to the original nodes (node-major order)."""
        w = self.width
        sub = arr[w:w + self.mesh.ny + 1, w:w + self.mesh.nx + 1]
        return sub.reshape((self.mesh.n_nodes,) + arr.shape[2:])

    def margin(self) -> np.ndarray:
        return self.theta_q + np.einsum("...i,...i->...", self.eta, self.a_q)


def _reflect(idx: np.ndarray, n: int, zero_lo: bool, zero_hi: bool):
    out = idx.copy()
    lo = idx < 0
    hi = idx > n
    out[lo] = -idx[lo]
    out[hi] = 2 * n - idx[hi]
    zero = (lo & zero_lo) | (hi & zero_hi)
    return out, zero


# --------------------------------------------------------------- mollifier

def bump_stencil(mesh: Mesh2D, k: float) -> tuple[np.ndarray, float]:
    """Normalized weights of ``exp(-1 / (1 - r^2))`` on the node lattice.

    The radius ``1/k`` is snapped to a whole number of the larger cell size
    (at least one).  Returns the weight array indexed ``[b + sy, a + sx]``
    and the snapped radius.
    """
    h = max(mesh.hx, mesh.hy)
    rs = max(1, int(round(1.0 / (k * h)))) * h
    sx = int(np.floor(rs / mesh.hx + 1e-12))
    sy = int(np.floor(rs / mesh.hy + 1e-12))
    a = np.arange(-sx, sx + 1) * mesh.hx
    b = np.arange(-sy, sy + 1) * mesh.hy
    r = np.hypot(a[None, :], b[:, None]) / rs
    W = np.zeros_like(r)
    inside = r < 1.0 - 1e-12
    W[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return W / W.sum(), rs


def _check_width(ext: ReflectionExtension, W: np.ndarray) -> None:
    sy, sx = (W.shape[0] - 1) // 2, (W.shape[1] - 1) // 2
    if max(sx, sy) > ext.width:
        raise ExtensionTooSmall(f"mollifier reaches {max(sx, sy)} cells but the extension has {ext.width}")


def required_width(mesh: Mesh2D, k: float) -> int:
    W, _ = bump_stencil(mesh, k)
    return max((W.shape[0] - 1) // 2, (W.shape[1] - 1) // 2, 1)


def mollify(fld: DiscreteSurfaceField, ext: ReflectionExtension, k: float) -> DiscreteSurfaceField:
    """Discrete convolution of each ``eta_i`` with the radius-``1/k`` bump.

    Raises
    ------
    ExtensionTooSmall
        If the stencil does not fit inside the extension strip.
    """
    W, _ = bump_stencil(fld.mesh, k)
    _check_width(ext, W)
    out = np.stack([ndi.correlate(ext.eta[..., i], W, mode="constant") for i in range(3)], -1)
    vals = ext.interior(out)
    vals[fld.mesh.clamped_nodes] = 0.0
    return fld.with_values(vals)


def _stencil_osc(arr: np.ndarray, W: np.ndarray) -> np.ndarray:
    """max over stencil offsets of |arr(y + o) - arr(y)|."""
    fp = np.zeros_like(W, dtype=bool)
    fp[W > 0] = True
    hi = ndi.maximum_filter(arr, footprint=fp, mode="nearest")
    lo = ndi.minimum_filter(arr, footprint=fp, mode="nearest")
    return np.maximum(hi - arr, arr - lo)


def mollify_margin_bound(ext: ReflectionExtension, k: float) -> np.ndarray:
    """Nodal lower bound for the confinement margin of :func:`mollify`.

    With weights ``w_z`` summing to one,

        margin_out(y) >= min_z margin_ext(z) - osc(theta . q)(y)
                         - sup|eta_hat| * sum_i osc(a^i . q)(y),

    the oscillations taken over the stencil around ``y``.  The sup norm of
    the extended field bounds the displacement factor.
    """
    W, _ = bump_stencil(ext.mesh, k)
    _check_width(ext, W)
    fp = W > 0
    mmin = ndi.minimum_filter(ext.margin(), footprint=fp, mode="nearest")
    sup = float(np.max(np.abs(ext.eta))) if ext.eta.size else 0.0
    osc_a = sum(_stencil_osc(ext.a_q[..., i], W) for i in range(3))
    bound = mmin - _stencil_osc(ext.theta_q, W) - sup * osc_a
    return ext.interior(bound)


# ------------------------------------------------------------- H1 metrics

def h1_gram(mesh: Mesh2D) -> sps.csr_matrix:
    """Scalar Q1 matrix of ``||u||^2_{L2} + ||grad u||^2_{L2}`` over the parameter rectangle."""
    xi, w = gauss_2d(2)
    N, dN = q1_2d(xi)
    dN = dN * np.array([2.0 / mesh.hx, 2.0 / mesh.hy])
    wq = w * mesh.hx * mesh.hy / 4.0
    Ke = np.einsum("qa,qb,q->ab", N, N, wq) + np.einsum("qak,qbk,q->ab", dN, dN, wq)
    c = mesh.cells
    rows = np.repeat(c, 4, axis=1).ravel()
    cols = np.tile(c, (1, 4)).ravel()
    vals = np.broadcast_to(Ke.ravel(), (len(c), 16)).ravel()
    G = sps.coo_matrix((vals, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    G.sort_indices()
    return G


def h1_distance(a: DiscreteSurfaceField, b: DiscreteSurfaceField, gram: sps.csr_matrix | None = None) -> float:
    """Discrete ``(sum_i ||a_i - b_i||^2_{H1})^{1/2}`` of the Q1 interpolants."""
    G = h1_gram(a.mesh) if gram is None else gram
    d = a.values - b.values
    return float(np.sqrt(max(np.einsum("ni,ni->", d, G @ d), 0.0)))


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    """Intermediate fields and nodal diagnostics of one pipeline run."""

    k: int
    truncated: DiscreteSurfaceField
    cut: DiscreteSurfaceField
    mollified: DiscreteSurfaceField
    h1_distance: float
    min_margin: float
    sup_bound_check: bool
    stage_margins: dict
    est_bound_min: float
    cutoff_margin_floor: float


def density_pipeline(fld: DiscreteSurfaceField, hs: HalfSpace, k: int,
                     gram: sps.csr_matrix | None = None) -> PipelineResult:
    """Apply truncate(k), cutoff(k) and mollify(2k) in turn.

    The mollification radius ``1/(2k)`` stays inside the zero band
    ``dist <= 1/k`` left by the cutoff, so the result still vanishes near
    gamma_0.
    """
    t = truncate(fld, k)
    c = cutoff(t, k)
    ext = ReflectionExtension.build(c, hs, required_width(fld.mesh, 2 * k))
    mo = mollify(c, ext, 2 * k)
    sup_ok = bool(np.all(np.linalg.norm(t.vector(), axis=1) <= k * (1 + 1e-12)))
    margins = {"input": float(fld.margin(hs).min()), "truncate": float(t.margin(hs).min()),
               "cutoff": float(c.margin(hs).min()), "mollify": float(mo.margin(hs).min())}
    d = float(np.min(fld.frame.theta @ hs.q))
    return PipelineResult(k, t, c, mo, h1_distance(mo, fld, gram), margins["mollify"], sup_ok, margins,
                          float(mollify_margin_bound(ext, 2 * k).min()), d / k)


# ---------------------------------------------------------- strip Poincare

@dataclass(eq=False)
class BicubicField:
    """Scalar Bogner-Fox-Schmit field with nodal dofs ``(w, d1 w, d2 w, d12 w)``."""

    mesh: Mesh2D
    dofs: np.ndarray  # (n_nodes, 4)

    @classmethod
    def random_clamped(cls, mesh: Mesh2D, rng: np.random.Generator) -> "BicubicField":
        """Random dofs with every dof of the clamped nodes set to zero.

        Derivative dofs are scaled by the cell size so that no single dof
        type dominates.
        """
        d = rng.standard_normal((mesh.n_nodes, 4))
        d[:, 1] /= mesh.hx
        d[:, 2] /= mesh.hy
        d[:, 3] /= mesh.hx * mesh.hy
        d[mesh.clamped_nodes] = 0.0
        return cls(mesh, d)

    def __call__(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(...)`` and gradients ``(..., 2)`` at arbitrary points of the rectangle."""
        m = self.mesh
        y = np.asarray(y, dtype=float)
        shp = y.shape[:-1]
        p = y.reshape(-1, 2)
        ix = np.clip(np.floor((p[:, 0] - m.bounds[0]) / m.hx).astype(int), 0, m.nx - 1)
        jy = np.clip(np.floor((p[:, 1] - m.bounds[2]) / m.hy).astype(int), 0, m.ny - 1)
        cell = ix + m.nx * jy
        origin = m.cell_origin()[cell]
        xi = 2.0 * (p - origin) / np.array([m.hx, m.hy]) - 1.0
        N, G, _ = bfs_2d(xi, m.hx, m.hy)
        loc = self.dofs[m.cells[cell]].reshape(-1, 16)
        val = np.einsum("pd,pd->p", N, loc)
        grad = np.einsum("pdk,pd->pk", G, loc)
        return val.reshape(shp), grad.reshape(shp + (2,))


def strip_poincare_ratio(mesh: Mesh2D, k: float, trial, order: int = 4) -> float:
    """``k ||xi||_{L2(S)} / ||xi||_{H1(S)}`` on the strip ``S = {dist(y, gamma_0) < 2/k}``.

    ``trial(y)`` returns values and gradients.  The strip is resolved by an
    indicator at the Gauss points, which is exact when ``2/k`` falls on cell
    edges.  A field vanishing on the strip gives ``0``.
    """
    xi, w = gauss_2d(order)
    origin = mesh.cell_origin()
    # only cells meeting the strip contribute; their nearest point is within a half-diagonal of the centre
    centre = origin + 0.5 * np.array([mesh.hx, mesh.hy])
    near = edge_distance(mesh.bounds, mesh.clamped_edges, centre) < 2.0 / k + 0.5 * np.hypot(mesh.hx, mesh.hy)
    y = origin[near][:, None, :] + (xi[None] + 1.0) / 2.0 * np.array([mesh.hx, mesh.hy])
    wq = np.broadcast_to(w * mesh.hx * mesh.hy / 4.0, y.shape[:2])
    ind = edge_distance(mesh.bounds, mesh.clamped_edges, y) < 2.0 / k
    if not ind.any():
        return 0.0
    val, grad = trial(y)
    l2 = np.sum(wq * ind * val**2)
    h1 = l2 + np.sum(wq * ind * np.sum(grad**2, axis=-1))
    if h1 <= 0.0:
        return 0.0
    return float(k * np.sqrt(l2 / h1))


def strip_poincare_check(mesh: Mesh2D, k: float, trials, order: int = 4) -> float:
    """Worst :func:`strip_poincare_ratio` over ``trials`` (zero fields excluded).

    The one-dimensional bound ``||xi||^2 <= (delta^2/2) ||d xi||^2`` on a strip
    of width ``delta = 2/k`` gives ratio ``<= sqrt(2)``.
    """
    return max((strip_poincare_ratio(mesh, k, t, order) for t in trials), default=0.0)
