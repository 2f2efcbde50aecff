"""Reference quadrature and shape functions on rectangular cells."""
from __future__ import annotations

import numpy as np

Q1_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def gauss_2d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on [-1, 1]^2, points ordered with the first coordinate fastest."""
    x, w = gauss_1d(n)
    X1, X2 = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    return np.stack([X1.ravel(), X2.ravel()], -1), W.ravel()


def q1_2d(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape functions and reference gradients, shapes (nq, 4) and (nq, 4, 2)."""
    s, t = xi[:, 0:1], xi[:, 1:2]
    cs, ct = Q1_CORNERS[:, 0], Q1_CORNERS[:, 1]
    N = 0.25 * (1 + cs * s) * (1 + ct * t)
    dN = np.stack([0.25 * cs * (1 + ct * t), 0.25 * ct * (1 + cs * s)], axis=-1)
    return N, dN


def hermite_1d(s: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cubic Hermite basis on a segment of length ``h``; ``s`` in [0, 1].

    Columns: value at 0, slope at 0, value at 1, slope at 1.  Returns the
    functions and their first and second derivatives in the physical
    coordinate.
    """
    s = np.asarray(s, dtype=float)[:, None]
    H = np.hstack([1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3),
                   3 * s**2 - 2 * s**3, h * (-s**2 + s**3)])
    dH = np.hstack([-6 * s + 6 * s**2, h * (1 - 4 * s + 3 * s**2),
                    6 * s - 6 * s**2, h * (-2 * s + 3 * s**2)]) / h
    d2H = np.hstack([-6 + 12 * s, h * (-4 + 6 * s), 6 - 12 * s, h * (-2 + 6 * s)]) / h**2
    return H, dH, d2H


def bfs_2d(xi: np.ndarray, hx: float, hy: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bogner-Fox-Schmit bicubic basis on an ``hx x hy`` cell.

    Local dof ``4 a + r`` belongs to corner ``a`` (counter-clockwise from
    lower-left) with ``r`` indexing (w, d1 w, d2 w, d12 w).  Returns values
    (nq, 16), gradients (nq, 16, 2) and Hessians (nq, 16, 2, 2).
    """
    s, t = (xi[:, 0] + 1) / 2, (xi[:, 1] + 1) / 2
    Hs, dHs, d2Hs = hermite_1d(s, hx)
    Ht, dHt, d2Ht = hermite_1d(t, hy)
    nq = xi.shape[0]
    N = np.zeros((nq, 16))
    G = np.zeros((nq, 16, 2))
    Hh = np.zeros((nq, 16, 2, 2))
    for a, (cs, ct) in enumerate(Q1_CORNERS):
        vs, ss = (0, 1) if cs < 0 else (2, 3)
        vt, st = (0, 1) if ct < 0 else (2, 3)
        for r, (i, j) in enumerate(((vs, vt), (ss, vt), (vs, st), (ss, st))):
            d = 4 * a + r
            N[:, d] = Hs[:, i] * Ht[:, j]
            G[:, d, 0] = dHs[:, i] * Ht[:, j]
            G[:, d, 1] = Hs[:, i] * dHt[:, j]
            Hh[:, d, 0, 0] = d2Hs[:, i] * Ht[:, j]
            Hh[:, d, 1, 1] = Hs[:, i] * d2Ht[:, j]
            Hh[:, d, 0, 1] = Hh[:, d, 1, 0] = dHs[:, i] * dHt[:, j]
    return N, G, Hh
