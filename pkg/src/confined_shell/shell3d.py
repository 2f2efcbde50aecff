"""Three-dimensional shell geometry in scaled coordinates.

The reference shell is ``Theta(y, x3) = theta(y) + eps * x3 * a_3(y)`` with
``x3`` in ``[-1, 1]``.  Derivatives in the transverse direction are taken
with respect to the unscaled variable ``eps * x3``, so the Christoffel symbols
returned here are those of the physical shell evaluated at the scaled point.

Index conventions follow :mod:`confined_shell.geometry`; 3D indices run over
0, 1, 2 with 2 the transverse direction.  ``christoffel3[..., p, i, j]`` is
Gamma^p_{ij}(eps).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateDeformedFrame, DegenerateFrame, InvalidLame
from .geometry import Chart, SurfaceDisplacementSample, SurfaceFrame, _inv2, eval_frame

#: Pair (Voigt-style) ordering of symmetric index pairs, factor-free storage.
VOIGT = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
#: Multiplicity of each pair in a full double contraction.
VOIGT_WEIGHT = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

GAUSS3_X = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GAUSS3_W = np.array([5.0, 8.0, 5.0]) / 9.0


@dataclass
class ShellFrame3D:
    """Pointwise quantities of Theta^eps (see module docstring)."""

    eps: float
    x3: np.ndarray
    g_cov: np.ndarray
    g_con: np.ndarray
    metric_cov: np.ndarray
    metric_con: np.ndarray
    vol: np.ndarray
    christoffel3: np.ndarray

    @property
    def sqrt_g(self) -> np.ndarray:
        return np.sqrt(self.vol)


@dataclass
class ElasticityTensor:
    """Contravariant isotropic elasticity tensor.

    ``components[..., i, j, k, l]`` is A^{ijkl}; ``pair[..., I, J]`` is the
    factor-free 6x6 matrix in :data:`VOIGT` order.
    """

    components: np.ndarray
    pair: np.ndarray
    lame: tuple


def check_lame(lame) -> tuple[float, float]:
    lam, mu = (float(v) for v in lame)
    if not (mu > 0.0) or not (lam >= 0.0):
        raise InvalidLame(f"need lambda >= 0 and mu > 0, got ({lam}, {mu})")
    return lam, mu


def eval_shell_frame(frame: SurfaceFrame, eps: float, x3) -> ShellFrame3D:
    """3D frame of the scaled shell at the points of ``frame`` and heights ``x3``.

    ``x3`` is a scalar or an array broadcastable to ``frame.shape``.

    Raises
    ------
    DegenerateFrame
        If the map ``x3 -> Theta`` stops being an orientation-preserving
        immersion, i.e. ``det(I - eps x3 b) <= 0`` somewhere.
    """
    x3 = np.broadcast_to(np.asarray(x3, dtype=float), frame.shape)
    t = eps * x3
    at = frame.a_cov[..., :2, :]
    a3 = frame.a_cov[..., 2, :]
    bm = frame.curv_mixed
    # shifter I - t b; its determinant squared is g / a
    shift = np.eye(2) - t[..., None, None] * bm
    jac = shift[..., 0, 0] * shift[..., 1, 1] - shift[..., 0, 1] * shift[..., 1, 0]
    if np.any(jac <= 1e-12):
        raise DegenerateFrame(f"det g(eps) <= 0 at eps = {eps}: eps too large for the curvature")
    gt = np.einsum("...sa,...si->...ai", shift, at)
    G2 = np.einsum("...ai,...bi->...ab", gt, gt)
    G2inv, det2 = _inv2(G2)
    G2inv = 0.5 * (G2inv + np.swapaxes(G2inv, -1, -2))
    gcon_t = np.einsum("...ab,...bi->...ai", G2inv, gt)

    shape = frame.shape
    metric_cov = np.zeros(shape + (3, 3))
    metric_cov[..., :2, :2] = G2
    metric_cov[..., 2, 2] = 1.0
    metric_con = np.zeros(shape + (3, 3))
    metric_con[..., :2, :2] = G2inv
    metric_con[..., 2, 2] = 1.0
    g_cov = np.concatenate([gt, a3[..., None, :]], axis=-2)
    g_con = np.concatenate([gcon_t, a3[..., None, :]], axis=-2)

    # dg[..., i, j, :] = d_i g_j
    dg = np.zeros(shape + (3, 3, 3))
    ba = np.einsum("...sa,...si->...ai", bm, at)  # b^s_a a_s
    dga = (frame.d2theta
           - t[..., None, None, None] * (np.einsum("...bsa,...si->...bai", frame.curv_mixed_deriv, at)
                                         + np.einsum("...sa,...bsi->...bai", bm, frame.d2theta)))
    dg[..., :2, :2, :] = dga
    dg[..., 2, :2, :] = -ba
    dg[..., :2, 2, :] = -ba
    chris = np.einsum("...iju,...pu->...pij", dg, g_con)
    chris = 0.5 * (chris + np.swapaxes(chris, -1, -2))
    chris[..., 2, :2, 2] = 0.0
    chris[..., 2, 2, :2] = 0.0
    chris[..., :, 2, 2] = 0.0
    return ShellFrame3D(eps=float(eps), x3=x3, g_cov=g_cov, g_con=g_con, metric_cov=metric_cov,
                        metric_con=metric_con, vol=det2, christoffel3=chris)


def _isotropic(gcon: np.ndarray, lam: float, mu: float) -> np.ndarray:
    return (lam * np.einsum("...ij,...kl->...ijkl", gcon, gcon)
            + mu * (np.einsum("...ik,...jl->...ijkl", gcon, gcon)
                    + np.einsum("...il,...jk->...ijkl", gcon, gcon)))


def pair_matrix(A: np.ndarray) -> np.ndarray:
    """Factor-free pair matrix of a fourth-order tensor in :data:`VOIGT` order."""
    I = np.array([p[0] for p in VOIGT])
    J = np.array([p[1] for p in VOIGT])
    return A[..., I[:, None], J[:, None], I[None, :], J[None, :]]


def elasticity_tensor(sf: ShellFrame3D, lame) -> ElasticityTensor:
    """A^{ijkl}(eps) = lam g^{ij} g^{kl} + mu (g^{ik} g^{jl} + g^{il} g^{jk})."""
    lam, mu = check_lame(lame)
    A = _isotropic(sf.metric_con, lam, mu)
    return ElasticityTensor(A, pair_matrix(A), (lam, mu))


def _limit_metric(frame: SurfaceFrame) -> np.ndarray:
    m = np.zeros(frame.shape + (3, 3))
    m[..., :2, :2] = frame.metric_con
    m[..., 2, 2] = 1.0
    return m


def limit_elasticity_tensor(frame: SurfaceFrame, lame) -> ElasticityTensor:
    """Elasticity tensor at eps * x3 = 0 built from the surface metric."""
    lam, mu = check_lame(lame)
    A = _isotropic(_limit_metric(frame), lam, mu)
    return ElasticityTensor(A, pair_matrix(A), (lam, mu))


def reduced_membrane_tensor(frame: SurfaceFrame, lame) -> np.ndarray:
    """a^{abst} = 4 lam mu/(lam + 2 mu) a^{ab} a^{st} + 2 mu (a^{as} a^{bt} + a^{at} a^{bs})."""
    lam, mu = check_lame(lame)
    m = frame.metric_con
    return (4.0 * lam * mu / (lam + 2.0 * mu) * np.einsum("...ab,...st->...abst", m, m)
            + 2.0 * mu * (np.einsum("...as,...bt->...abst", m, m)
                          + np.einsum("...at,...bs->...abst", m, m)))


def scaled_strains(sf: ShellFrame3D, eps: float, v_val, v_grad) -> np.ndarray:
    """Scaled linearised strains e_{i||j}(eps; v), shape ``(..., 3, 3)``.

    Parameters
    ----------
    v_val : array (..., 3)
        Covariant components v_i.
    v_grad : array (..., 3, 3)
        ``v_grad[..., i, j] = d_j v_i`` with ``j = 2`` the derivative in the
        scaled variable x3.
    """
    v_val = np.asarray(v_val, dtype=float)
    D = np.array(v_grad, dtype=float, copy=True)
    D[..., 2] /= eps
    e = 0.5 * (D + np.swapaxes(D, -1, -2)) - np.einsum("...pij,...p->...ij", sf.christoffel3, v_val)
    return e


# ------------------------------------------------------------- expansions

EXPANSION_QUANTITIES = ("A", "g", "Gamma_sab", "Gamma_3ab", "Gamma_sa3", "g_a", "g_con")


def _fit_slope(eps: np.ndarray, res: np.ndarray) -> float:
    if np.any(res <= 0.0) or len(eps) < 2 or np.max(res) < 1e-12:
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(res), 1)[0])


def expansion_residuals(chart: Chart, lame, eps_list: Sequence[float], grid: int = 21,
                        x3_levels: Sequence[float] = (-1.0, -0.5, 0.5, 1.0)) -> list[dict]:
    """Sup-norm residuals of the small-eps expansions of the 3D geometry.

    Returns one record ``{"quantity", "eps", "residual", "fitted_slope"}`` per
    quantity and eps.  Quantities: ``A`` (A(eps) - A(0)), ``g`` (g(eps) - a),
    the Christoffel families ``Gamma_sab``, ``Gamma_3ab``, ``Gamma_sa3`` and
    the bases ``g_a`` and ``g_con`` against their stated expansions.  The
    slope is the least-squares log-log fit, ``nan`` when a residual is zero.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    y1a, y1b, y2a, y2b = chart.bounds
    g1, g2 = np.meshgrid(np.linspace(y1a, y1b, grid), np.linspace(y2a, y2b, grid), indexing="ij")
    fr = eval_frame(chart, np.stack([g1, g2], -1))
    A0 = limit_elasticity_tensor(fr, lame).components
    G, bm, b, D = fr.christoffel, fr.curv_mixed, fr.curv_cov, fr.curv_mixed_deriv
    at, acon_t = fr.a_cov[..., :2, :], fr.a_con[..., :2, :]
    first_G = (np.einsum("...asb->...sab", D) + np.einsum("...sat,...tb->...sab", G, bm)
               - np.einsum("...tab,...st->...sab", G, bm))
    bb = np.einsum("...sa,...sb->...ab", bm, b)
    bmbm = np.einsum("...ta,...st->...sa", bm, bm)
    res = {q: np.zeros(len(eps_arr)) for q in EXPANSION_QUANTITIES}
    for n, eps in enumerate(eps_arr):
        for x3 in x3_levels:
            t = eps * x3
            sf = eval_shell_frame(fr, eps, x3)
            A = elasticity_tensor(sf, lame).components
            C = sf.christoffel3
            cand = {
                "A": A - A0,
                "g": sf.vol - fr.area,
                "Gamma_sab": C[..., :2, :2, :2] - (G - t * first_G),
                "Gamma_3ab": C[..., 2, :2, :2] - (b - t * bb),
                "Gamma_sa3": C[..., :2, :2, 2] - (-bm - t * bmbm),
                "g_a": sf.g_cov[..., :2, :] - (at - t * np.einsum("...sa,...si->...ai", bm, at)),
                "g_con": sf.g_con[..., :2, :] - (acon_t + t * np.einsum("...as,...si->...ai", bm, acon_t)),
            }
            for q, v in cand.items():
                res[q][n] = max(res[q][n], float(np.max(np.abs(v))))
    out = []
    for q in EXPANSION_QUANTITIES:
        slope = _fit_slope(eps_arr, res[q])
        for n, eps in enumerate(eps_arr):
            out.append({"quantity": q, "eps": float(eps), "residual": float(res[q][n]),
                        "fitted_slope": slope})
    return out


# ----------------------------------------------------------- KL lifting

def deformed_normal(frame: SurfaceFrame, zeta: SurfaceDisplacementSample) -> np.ndarray:
    """Unit normal of the deformed midsurface theta + zeta_i a^i.

    Raises
    ------
    DegenerateDeformedFrame
        If the deformed tangents are parallel.
    """
    at, acon_t, a3 = frame.a_cov[..., :2, :], frame.a_con[..., :2, :], frame.a_cov[..., 2, :]
    G, bm, b = frame.christoffel, frame.curv_mixed, frame.curv_cov
    # d_a a^s = -Gamma^s_{an} a^n + b^s_a a_3 ;  d_a a^3 = -b_{an} a^n
    da_con = (-np.einsum("...san,...ni->...asi", G, acon_t)
              + np.einsum("...sa,...i->...asi", bm, a3))
    da3 = -np.einsum("...an,...ni->...ai", b, acon_t)
    tang = (at + np.einsum("...ia,...ik->...ak", zeta.grad, frame.a_con)
            + np.einsum("...s,...asi->...ai", zeta.eta[..., :2], da_con)
            + zeta.eta[..., 2, None, None] * da3)
    n = np.cross(tang[..., 0, :], tang[..., 1, :])
    nn = np.linalg.norm(n, axis=-1)
    if np.any(nn < 1e-12):
        raise DegenerateDeformedFrame("deformed tangents are parallel")
    return n / nn[..., None]


class KLField:
    """Kirchhoff-Love lift of a midsurface displacement.

    Calling the object with ``x3`` returns the covariant components
    u_i(eps)(y, x3) with respect to g^i(eps).
    """

    def __init__(self, frame: SurfaceFrame, zeta: SurfaceDisplacementSample, eps: float):
        self.frame, self.zeta, self.eps = frame, zeta, float(eps)
        self.a3_def = deformed_normal(frame, zeta)
        fr = frame
        self._n_dot_a = np.einsum("...i,...ki->...k", self.a3_def, fr.a_cov)
        self._n_dot_acon = np.einsum("...i,...ki->...k", self.a3_def, fr.a_con[..., :2, :])
        self._zb = np.einsum("...s,...st,...bt->...b", zeta.eta[..., :2], fr.metric_con, fr.curv_cov)
        self._bn = np.einsum("...bt,...t->...b", fr.curv_cov, self._n_dot_acon)

    def __call__(self, x3) -> np.ndarray:
        t = self.eps * np.asarray(x3, dtype=float)
        t = np.broadcast_to(t, self.frame.shape)[..., None]
        z = self.zeta.eta
        ub = z[..., :2] - t * self._zb + t * self._n_dot_a[..., :2] - t**2 * self._bn
        u3 = z[..., 2:] + t * self._n_dot_a[..., 2:] - t
        return np.concatenate([ub, u3], axis=-1)

    def closed_form_average(self) -> np.ndarray:
        """Transverse average in closed form.

        With the normalised mean (1/2) int_{-1}^{1}, the quadratic term
        averages to eps^2/3, so the tangential correction carries 1/3.
        """
        z = self.zeta.eta
        ub = z[..., :2] - self.eps**2 / 3.0 * self._bn
        return np.concatenate([ub, z[..., 2:]], axis=-1)

    def position(self, x3) -> np.ndarray:
        """Deformed position Theta + u_i g^i(eps) at height ``x3``."""
        sf = eval_shell_frame(self.frame, self.eps, x3)
        t = self.eps * np.broadcast_to(np.asarray(x3, dtype=float), self.frame.shape)
        u = self(x3)
        return (self.frame.theta + t[..., None] * self.frame.a_cov[..., 2, :]
                + np.einsum("...i,...ik->...k", u, sf.g_con))


def kl_lift(frame: SurfaceFrame, zeta: SurfaceDisplacementSample, eps: float) -> KLField:
    """Kirchhoff-Love lift u(eps) of the midsurface displacement ``zeta``."""
    return KLField(frame, zeta, eps)


def transverse_average(field) -> np.ndarray:
    """Normalised transverse mean (1/2) int_{-1}^{1} v dx3.

    Parameters
    ----------
    field : callable or ndarray
        A callable ``x3 -> array`` is integrated with 3-point Gauss.  An
        array is read as nodal values on an even number of equal intervals
        along its last axis and integrated with composite Simpson.
    """
    if callable(field):
        return sum(w * np.asarray(field(x), dtype=float) for x, w in zip(GAUSS3_X, GAUSS3_W)) / 2.0
    v = np.asarray(field, dtype=float)
    return v @ simpson_weights(v.shape[-1] - 1)


def simpson_weights(nz: int) -> np.ndarray:
    """Weights of the normalised mean over ``nz`` (even) equal intervals of [-1, 1]."""
    if nz < 2 or nz % 2:
        raise ValueError("Simpson weights need an even number of intervals")
    w = np.ones(nz + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (2.0 / nz) / 3.0 / 2.0
