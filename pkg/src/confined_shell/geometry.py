"""Differential geometry of the midsurface.

A chart is an analytic map ``theta : [y1min, y1max] x [y2min, y2max] -> R^3``
whose derivatives up to third order are generated symbolically once and
then evaluated in vectorised form.  :func:`eval_frame` returns a
:class:`SurfaceFrame` holding every pointwise quantity needed by the shell
models.

Index conventions (leading axes are batch axes)

* ``a_cov[..., i, :]``       covariant basis vector a_i (i = 0, 1, 2)
* ``a_con[..., j, :]``       contravariant basis vector a^j
* ``metric_cov[..., a, b]``  a_{ab};  ``metric_con`` is its inverse a^{ab}
* ``curv_cov[..., a, b]``    b_{ab} = d_a a_b . a_3
* ``curv_mixed[..., s, a]``  b^s_a = a^{st} b_{ta} (upper index first)
* ``christoffel[..., s, a, b]``      Gamma^s_{ab} = d_a a_b . a^s
* ``curv_mixed_deriv[..., c, s, a]`` d_c b^s_a
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy.spatial import cKDTree

from .errors import DegenerateFrame, InvalidBounds

EDGES = ("left", "right", "bottom", "top")
_SWAP_EDGE = {"left": "bottom", "bottom": "left", "right": "top", "top": "right"}
DEGENERACY_TOL = 1e-12

_Y1, _Y2 = sp.symbols("y1 y2", real=True)


def _compile(exprs: Sequence[sp.Expr]) -> Callable[[np.ndarray, np.ndarray], list]:
    return sp.lambdify((_Y1, _Y2), list(exprs), modules="numpy")


@dataclass(frozen=True, eq=False)
class Chart:
    """Analytic midsurface chart over an axis-aligned rectangle.

    Parameters
    ----------
    name : str
        Identifier used in reports.
    exprs : tuple of sympy expressions
        Components of theta in the symbols ``y1, y2``.
    bounds : tuple of float
        ``(y1min, y1max, y2min, y2max)``.
    clamped_edges : tuple of str
        Non-empty subset of ``("left", "right", "bottom", "top")`` forming gamma_0.
    """

    name: str
    exprs: tuple
    bounds: tuple
    clamped_edges: tuple

    def __post_init__(self):
        if len(self.exprs) != 3:
            raise ValueError("a chart needs three component expressions")
        y1a, y1b, y2a, y2b = self.bounds
        if not (y1a < y1b and y2a < y2b):
            raise InvalidBounds(f"degenerate rectangle {self.bounds}")
        for e in self.clamped_edges:
            if e not in EDGES:
                raise ValueError(f"unknown edge {e!r}")

    @cached_property
    def _derivs(self):
        th = [sp.sympify(e) for e in self.exprs]
        ys = (_Y1, _Y2)
        d1 = [[sp.diff(t, ys[a]) for t in th] for a in range(2)]
        d2 = [[[sp.diff(t, ys[b]) for t in d1[a]] for b in range(2)] for a in range(2)]
        d3 = [[[[sp.diff(t, ys[c]) for t in d2[a][b]] for c in range(2)]
               for b in range(2)] for a in range(2)]
        flat = list(th)
        flat += [t for row in d1 for t in row]
        flat += [t for a in d2 for b in a for t in b]
        flat += [t for a in d3 for b in a for c in b for t in c]
        return _compile(flat)

    def derivatives(self, y: np.ndarray):
        """Return ``(theta, d1, d2, d3)`` at points ``y`` of shape ``(..., 2)``.

        ``d1[..., a, :] = d_a theta``, ``d2[..., a, b, :] = d_a d_b theta`` and
        ``d3[..., a, b, c, :] = d_a d_b d_c theta``.
        """
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        vals = self._derivs(y[..., 0], y[..., 1])
        flat = np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals], axis=-1)
        theta = flat[..., 0:3]
        d1 = flat[..., 3:9].reshape(shape + (2, 3))
        d2 = flat[..., 9:21].reshape(shape + (2, 2, 3))
        d3 = flat[..., 21:45].reshape(shape + (2, 2, 2, 3))
        return theta, d1, d2, d3

    def theta(self, y: np.ndarray) -> np.ndarray:
        return self.derivatives(y)[0]

    def contains(self, y: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        y1a, y1b, y2a, y2b = self.bounds
        return ((y[..., 0] >= y1a - tol) & (y[..., 0] <= y1b + tol)
                & (y[..., 1] >= y2a - tol) & (y[..., 1] <= y2b + tol))

    def grid(self, n: int) -> np.ndarray:
        """Tensor grid of ``n x n`` points including the boundary, shape ``(n, n, 2)``."""
        y1a, y1b, y2a, y2b = self.bounds
        g1, g2 = np.meshgrid(np.linspace(y1a, y1b, n), np.linspace(y2a, y2b, n), indexing="ij")
        return np.stack([g1, g2], axis=-1)


@dataclass(frozen=True)
class HalfSpace:
    """Half-space ``{x : x . q >= 0}`` with unit normal ``q``."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(3)
        if abs(np.linalg.norm(q) - 1.0) > 1e-12:
            raise ValueError(f"q must be a unit vector, got |q| = {np.linalg.norm(q)!r}")
        object.__setattr__(self, "q", q)

    @classmethod
    def from_vector(cls, v) -> "HalfSpace":
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))


@dataclass
class SurfaceDisplacementSample:
    """Covariant surface displacement and its derivatives at sample points.

    ``eta[..., i]`` is eta_i, ``grad[..., i, b]`` is d_b eta_i and
    ``hess3[..., a, b]`` is d_a d_b eta_3.
    """

    eta: np.ndarray
    grad: np.ndarray
    hess3: np.ndarray | None = None

    @classmethod
    def zeros(cls, shape=()) -> "SurfaceDisplacementSample":
        shape = tuple(shape)
        return cls(np.zeros(shape + (3,)), np.zeros(shape + (3, 2)), np.zeros(shape + (2, 2)))

    def __add__(self, other: "SurfaceDisplacementSample") -> "SurfaceDisplacementSample":
        h = None
        if self.hess3 is not None and other.hess3 is not None:
            h = self.hess3 + other.hess3
        return SurfaceDisplacementSample(self.eta + other.eta, self.grad + other.grad, h)


@dataclass
class SurfaceFrame:
    """Pointwise geometric quantities of a chart (see module docstring for indices)."""

    y: np.ndarray
    theta: np.ndarray
    d2theta: np.ndarray
    a_cov: np.ndarray
    a_con: np.ndarray
    metric_cov: np.ndarray
    metric_con: np.ndarray
    area: np.ndarray
    curv_cov: np.ndarray
    curv_mixed: np.ndarray
    christoffel: np.ndarray
    curv_mixed_deriv: np.ndarray

    @property
    def sqrt_a(self) -> np.ndarray:
        return np.sqrt(self.area)

    @property
    def shape(self) -> tuple:
        return self.area.shape

    def take(self, idx) -> "SurfaceFrame":
        """Sub-frame at batch index ``idx``."""
        return SurfaceFrame(**{k: getattr(self, k)[idx] for k in self.__dataclass_fields__})


def _inv2(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1] / det
    inv[..., 1, 1] = m[..., 0, 0] / det
    inv[..., 0, 1] = -m[..., 0, 1] / det
    inv[..., 1, 0] = -m[..., 1, 0] / det
    return inv, det


def eval_frame(chart: Chart, y) -> SurfaceFrame:
    """Evaluate the surface frame of ``chart`` at points ``y`` (shape ``(..., 2)``).

    Raises
    ------
    DegenerateFrame
        If ``|a_1 x a_2| < 1e-12`` at some point.
    """
    y = np.asarray(y, dtype=float)
    theta, d1, d2, d3 = chart.derivatives(y)
    n = np.cross(d1[..., 0, :], d1[..., 1, :])
    nn = np.linalg.norm(n, axis=-1)
    if np.any(nn < DEGENERACY_TOL):
        raise DegenerateFrame(f"chart {chart.name!r}: |a1 x a2| < {DEGENERACY_TOL}")
    a3 = n / nn[..., None]

    A = np.einsum("...ai,...bi->...ab", d1, d1)
    Ainv, det = _inv2(A)
    Ainv = 0.5 * (Ainv + np.swapaxes(Ainv, -1, -2))
    acon_t = np.einsum("...ab,...bi->...ai", Ainv, d1)
    a_cov = np.concatenate([d1, a3[..., None, :]], axis=-2)
    a_con = np.concatenate([acon_t, a3[..., None, :]], axis=-2)

    b = np.einsum("...abi,...i->...ab", d2, a3)
    bm = np.einsum("...sk,...ka->...sa", Ainv, b)
    gam = np.einsum("...abi,...si->...sab", d2, acon_t)

    # d_c a_3 = -b_{cn} a^n (Weingarten)
    da3 = -np.einsum("...cn,...ni->...ci", b, acon_t)
    db = (np.einsum("...abci,...i->...cab", d3, a3)
          + np.einsum("...abi,...ci->...cab", d2, da3))
    dA = np.einsum("...cmi,...ni->...cmn", d2, d1)
    dA = dA + np.swapaxes(dA, -1, -2)
    dAinv = -np.einsum("...sm,...cmn,...nk->...csk", Ainv, dA, Ainv)
    dbm = (np.einsum("...csk,...ka->...csa", dAinv, b)
           + np.einsum("...sk,...cka->...csa", Ainv, db))

    return SurfaceFrame(y=y, theta=theta, d2theta=d2, a_cov=a_cov, a_con=a_con,
                        metric_cov=A, metric_con=Ainv, area=det, curv_cov=b,
                        curv_mixed=bm, christoffel=gam, curv_mixed_deriv=dbm)


def gamma(frame: SurfaceFrame, s: SurfaceDisplacementSample) -> np.ndarray:
    """Linearised change of metric gamma_{ab}(eta), shape ``(..., 2, 2)``."""
    g = s.grad[..., :2, :]
    sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    return (sym - np.einsum("...sab,...s->...ab", frame.christoffel, s.eta[..., :2])
            - frame.curv_cov * s.eta[..., 2, None, None])


def rho(frame: SurfaceFrame, s: SurfaceDisplacementSample) -> np.ndarray:
    """Linearised change of curvature rho_{ab}(eta), shape ``(..., 2, 2)``."""
    if s.hess3 is None:
        raise ValueError("rho needs the Hessian of eta_3")
    G, bm, b, D = frame.christoffel, frame.curv_mixed, frame.curv_cov, frame.curv_mixed_deriv
    eta_t, eta3 = s.eta[..., :2], s.eta[..., 2]
    out = s.hess3 - np.einsum("...sab,...s->...ab", G, s.grad[..., 2, :])
    out = out - np.einsum("...sa,...sb->...ab", bm, b) * eta3[..., None, None]
    # C[b, s] = d_b eta_s - Gamma^t_{bs} eta_t
    C = np.swapaxes(s.grad[..., :2, :], -1, -2) - np.einsum("...tbs,...t->...bs", G, eta_t)
    out = out + np.einsum("...sa,...bs->...ab", bm, C) + np.einsum("...tb,...at->...ab", bm, C)
    T = (np.einsum("...atb->...abt", D)
         + np.einsum("...tas,...sb->...abt", G, bm)
         - np.einsum("...sab,...ts->...abt", G, bm))
    out = out + np.einsum("...abt,...t->...ab", T, eta_t)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def confinement_margin(chart: Chart, hs: HalfSpace, grid: int = 200) -> float:
    """Grid minimum of theta(y) . q."""
    return float(np.min(chart.theta(chart.grid(grid)) @ hs.q))


def normal_alignment(chart: Chart, hs: HalfSpace, grid: int = 200) -> float:
    """Grid minimum of a^3(y) . q with a_3 = a_1 x a_2 / |a_1 x a_2|."""
    fr = eval_frame(chart, chart.grid(grid))
    return float(np.min(fr.a_cov[..., 2, :] @ hs.q))


# ---------------------------------------------------------------- builtins

_PI = math.pi
_TOL = 1e-12

# name -> (expression builder, admissible range, default bounds, default gamma_0)
_BUILTINS = {
    "plate": (lambda: (_Y1, _Y2, sp.Integer(0)),
              (-math.inf, math.inf, -math.inf, math.inf), (0.0, 1.0, 0.0, 1.0), ("left",)),
    "sphere_cap": (lambda: (sp.cos(_Y1) * sp.sin(_Y2), sp.sin(_Y1) * sp.sin(_Y2), sp.cos(_Y2)),
                   (0.0, _PI, 0.1, _PI / 2), (0.0, _PI, 0.1, _PI / 4), ("bottom",)),
    "cylinder": (lambda: (sp.cos(_Y1), _Y2, sp.sin(_Y1)),
                 (0.1, _PI - 0.1, 0.0, 2.0), (0.1, _PI - 0.1, 0.0, 2.0), ("bottom",)),
    "hyperboloid": (lambda: (sp.sqrt(1 + _Y2**2) * sp.cos(_Y1), sp.sqrt(1 + _Y2**2) * sp.sin(_Y1), _Y2),
                    (0.1, _PI - 0.1, -2.0, 2.0), (0.1, _PI - 0.1, -2.0, 2.0), ("left", "right")),
}

BUILTIN_CHARTS = tuple(_BUILTINS)


def builtin_chart(name: str, bounds: Sequence[float] | None = None,
                  clamped_edges: Sequence[str] | None = None, *, swap: bool = False,
                  offset: Sequence[float] | None = None, check_grid: int = 50) -> Chart:
    """Construct one of the example surfaces.

    Parameters
    ----------
    name : {"plate", "sphere_cap", "cylinder", "hyperboloid"}
    bounds : sequence of 4 floats, optional
        Rectangle in the parameter order of the returned chart.
    clamped_edges : sequence of str, optional
        Edges forming gamma_0, in the parameter order of the returned chart.
    swap : bool
        Exchange the roles of y1 and y2.  This reverses the orientation of
        a_3 and is the remedy when the alignment hypothesis fails.
    offset : 3-vector, optional
        Rigid translation added to theta.

    Ranges (unswapped order): sphere_cap y1 in [0, pi], y2 in [0.1, pi/2);
    cylinder y1 in [0.1, pi - 0.1], y2 in [0, 2]; hyperboloid
    y1 in [0.1, pi - 0.1], y2 in [-2, 2]; plate unrestricted.

    Raises
    ------
    InvalidBounds
        If the rectangle leaves the admissible range or the chart fails the
        immersion/injectivity check on a ``check_grid`` grid.
    """
    if name not in _BUILTINS:
        raise ValueError(f"unknown chart {name!r}; expected one of {BUILTIN_CHARTS}")
    build, rng, default_bounds, default_edges = _BUILTINS[name]
    if bounds is None:
        b = default_bounds
        bounds = (b[2], b[3], b[0], b[1]) if swap else b
    bounds = tuple(float(v) for v in bounds)
    if len(bounds) != 4:
        raise InvalidBounds("bounds need four numbers")
    native = (bounds[2], bounds[3], bounds[0], bounds[1]) if swap else bounds
    lo1, hi1, lo2, hi2 = rng
    upper_open = name == "sphere_cap"
    if (native[0] < lo1 - _TOL or native[1] > hi1 + _TOL or native[2] < lo2 - _TOL
            or (native[3] >= hi2 - _TOL if upper_open else native[3] > hi2 + _TOL)
            or native[0] >= native[1] or native[2] >= native[3]):
        raise InvalidBounds(f"{name}: rectangle {native} outside admissible range {rng}")
    if clamped_edges is None:
        clamped_edges = tuple(_SWAP_EDGE[e] for e in default_edges) if swap else default_edges
    clamped_edges = tuple(clamped_edges)
    exprs = build()
    if swap:
        exprs = tuple(sp.sympify(e).subs({_Y1: _Y2, _Y2: _Y1}, simultaneous=True) for e in exprs)
    if offset is not None:
        exprs = tuple(sp.sympify(e) + sp.nsimplify(float(o)) for e, o in zip(exprs, offset))
    label = name + ("_swapped" if swap else "")
    chart = Chart(label, tuple(exprs), bounds, clamped_edges)
    if check_grid:
        check_chart(chart, check_grid)
    return chart


def check_chart(chart: Chart, n: int = 50) -> None:
    """Immersion and injectivity check on an ``n x n`` grid.

    Raises
    ------
    InvalidBounds
        If the chart degenerates or two distinct grid points share an image.
    """
    pts = chart.grid(n)
    try:
        eval_frame(chart, pts)
    except DegenerateFrame as exc:
        raise InvalidBounds(str(exc)) from exc
    img = chart.theta(pts).reshape(-1, 3)
    scale = max(float(np.ptp(img, axis=0).max()), 1.0)
    pairs = cKDTree(img).query_pairs(1e-9 * scale)
    if pairs:
        raise InvalidBounds(f"chart {chart.name!r} is not injective on the sampling grid")


def edge_distance(chart_bounds: Sequence[float], edges: Sequence[str], y: np.ndarray) -> np.ndarray:
    """Exact distance in parameter space from ``y`` to the union of ``edges``."""
    y = np.asarray(y, dtype=float)
    y1a, y1b, y2a, y2b = chart_bounds
    y1 = np.clip(y[..., 0], y1a, y1b)
    y2 = np.clip(y[..., 1], y2a, y2b)
    d = np.full(y.shape[:-1], np.inf)
    for e in edges:
        # rectangles: the nearest point on an edge segment is a clipped projection
        if e == "left":
            d = np.minimum(d, np.hypot(y[..., 0] - y1a, y[..., 1] - y2))
        elif e == "right":
            d = np.minimum(d, np.hypot(y[..., 0] - y1b, y[..., 1] - y2))
        elif e == "bottom":
            d = np.minimum(d, np.hypot(y[..., 1] - y2a, y[..., 0] - y1))
        elif e == "top":
            d = np.minimum(d, np.hypot(y[..., 1] - y2b, y[..., 0] - y1))
    return d
