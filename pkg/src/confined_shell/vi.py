"""Finite-dimensional variational inequalities with one half-space per node.

The problem is

    minimise  1/2 x^T H x - f^T x   subject to   c_n . x[dofs_n] >= b_n,

with at most one row per node and each row touching the (up to) three dofs
of its node.  :func:`solve_vi` rotates every constrained node so that its
row becomes a lower bound on a single coordinate, runs projected
Gauss-Seidel with exact nodal minimisation, and finishes with an active-set
Newton polish that certifies the KKT conditions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import InfeasibleProblem, MaxIterations, SingularMatrix, TooManyRows

KKT_TOL = 1e-8
ACTIVE_TOL = 1e-9
MAX_SWEEPS = 100_000


@dataclass
class ConstraintSet:
    """Rows ``coef[n] . x[dofs[n]] >= bound[n]``, one per node.

    Attributes
    ----------
    node : (m,) int
        Node id of each row (unique).
    dofs : (m, k) int
        Dofs touched by each row (k <= 3, distinct within a row).
    coef : (m, k) float
        Row coefficients, each row with positive norm.
    bound : (m,) float
    """

    node: np.ndarray
    dofs: np.ndarray
    coef: np.ndarray
    bound: np.ndarray

    def __post_init__(self):
        self.node = np.asarray(self.node, dtype=np.int64).reshape(-1)
        m = self.node.size
        self.dofs = np.asarray(self.dofs, dtype=np.int64)
        self.coef = np.asarray(self.coef, dtype=float)
        k = self.dofs.shape[-1] if self.dofs.ndim == 2 else (self.dofs.size // m if m else 0)
        self.dofs = self.dofs.reshape(m, k)
        self.coef = self.coef.reshape(m, k)
        self.bound = np.asarray(self.bound, dtype=float).reshape(m)
        if len(np.unique(self.node)) != m:
            raise ValueError("constraint node ids must be unique")
        if m and np.any(np.linalg.norm(self.coef, axis=1) <= 0.0):
            raise ValueError("constraint rows need |c_n| > 0")

    @classmethod
    def empty(cls, k: int = 3) -> "ConstraintSet":
        return cls(np.zeros(0, int), np.zeros((0, k), int), np.zeros((0, k)), np.zeros(0))

    def __len__(self) -> int:
        return self.node.size

    def values(self, x: np.ndarray) -> np.ndarray:
        """Row values ``c_n . x[dofs_n]``."""
        return np.einsum("mk,mk->m", self.coef, x[self.dofs])

    def slack(self, x: np.ndarray) -> np.ndarray:
        return self.values(x) - self.bound

    def remap(self, old_to_new: np.ndarray) -> "ConstraintSet":
        """Renumber dofs through ``old_to_new`` (entries must be non-negative)."""
        d = old_to_new[self.dofs]
        if np.any(d < 0):
            raise ValueError("constraint touches an eliminated dof")
        return ConstraintSet(self.node.copy(), d, self.coef.copy(), self.bound.copy())


@dataclass
class QuadraticProgram:
    """Sparse convex QP with nodal half-space constraints."""

    H: sps.csr_matrix
    f: np.ndarray
    constraints: ConstraintSet

    def __post_init__(self):
        self.H = sps.csr_matrix(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        if self.H.shape != (self.f.size, self.f.size):
            raise ValueError("H and f sizes disagree")

    @property
    def n(self) -> int:
        return self.f.size

    def energy(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.H @ x) - self.f @ x)


@dataclass
class VIConfig:
    """Tolerances and iteration limits of :func:`solve_vi`."""

    tol: float = KKT_TOL
    active_tol: float = ACTIVE_TOL
    max_sweeps: int = MAX_SWEEPS
    warm_sweeps: int = 200
    sweep_tol: float = 1e-10
    max_polish: int = 200


@dataclass
class VISolution:
    """Certified solution of a :class:`QuadraticProgram`."""

    x: np.ndarray
    active: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    energy: float
    certified: bool = True
    sweeps: int = 0
    energy_history: list = field(default_factory=list)

    def certificate(self) -> dict:
        return {"kkt_residual": float(self.kkt_residual), "active_count": int(self.active.size),
                "iterations": int(self.iterations), "sweeps": int(self.sweeps),
                "energy": float(self.energy), "certified": bool(self.certified)}


# ------------------------------------------------------------ linear algebra

def solve_linear(H, f) -> np.ndarray:
    """Solve ``H x = f`` for symmetric positive definite ``H`` (sparse or dense).

    Raises
    ------
    SingularMatrix
        If the factorization fails or the relative residual exceeds 1e-10.
    """
    f = np.asarray(f, dtype=float)
    if f.size == 0:
        return np.zeros(0)
    try:
        if sps.issparse(H):
            lu = spla.splu(sps.csc_matrix(H))
            x = lu.solve(f)
            x = x + lu.solve(f - H @ x)
        else:
            H = np.asarray(H, dtype=float)
            cf = sla.cho_factor(H)
            x = sla.cho_solve(cf, f)
            x = x + sla.cho_solve(cf, f - H @ x)
    except (RuntimeError, sla.LinAlgError, ValueError) as exc:
        raise SingularMatrix(f"factorization failed: {exc}") from exc
    r = np.linalg.norm(H @ x - f)
    scale = max(np.linalg.norm(f), 1e-300)
    if not np.all(np.isfinite(x)) or (np.linalg.norm(f) > 0 and r > 1e-10 * scale):
        raise SingularMatrix(f"relative residual {r / scale:.3g} exceeds 1e-10")
    return x


# ------------------------------------------------------------- diagnostics

def _row_data(qp: QuadraticProgram, x: np.ndarray):
    c = qp.constraints
    g = qp.H @ x - qp.f
    slack = c.slack(x)
    cn2 = np.einsum("mk,mk->m", c.coef, c.coef)
    lam = np.einsum("mk,mk->m", g[c.dofs], c.coef) / cn2 if len(c) else np.zeros(0)
    return g, slack, lam


def complementarity_residual(qp: QuadraticProgram, x: np.ndarray) -> float:
    """Discrete optimality measure of ``x``.

    Maximum of: row violation ``(b_n - c_n . x)_+``, negative multiplier
    magnitude, complementarity product ``|lambda_n (c_n . x - b_n)|``, the
    gradient component tangent to each row, and the gradient on dofs that no
    row touches.  Multipliers are the least-squares estimates
    ``lambda_n = g_n . c_n / |c_n|^2`` with ``g = H x - f``.
    """
    x = np.asarray(x, dtype=float)
    g, slack, lam = _row_data(qp, x)
    c = qp.constraints
    parts = [0.0]
    if len(c):
        parts.append(float(np.max(np.maximum(-slack, 0.0))))
        parts.append(float(np.max(np.maximum(-lam, 0.0))))
        parts.append(float(np.max(np.abs(lam * slack))))
        tang = g[c.dofs] - lam[:, None] * c.coef
        parts.append(float(np.max(np.abs(tang))))
    mask = np.ones(qp.n, dtype=bool)
    mask[c.dofs.ravel()] = False
    if mask.any():
        parts.append(float(np.max(np.abs(g[mask]))))
    return max(parts)


# ---------------------------------------------------------------- rotation

@dataclass
class _Rotated:
    T: sps.csr_matrix
    Hz: sps.csr_matrix
    fz: np.ndarray
    bounded: np.ndarray      # rotated coordinate carrying each row's bound
    lo: np.ndarray           # lower bound of that coordinate
    cnorm: np.ndarray
    blocks: list             # list of dof arrays; first entry bounded when the block has a row


def _rotate(qp: QuadraticProgram) -> _Rotated:
    c = qp.constraints
    n = qp.n
    used = c.dofs.ravel()
    if len(np.unique(used)) != used.size:
        raise ValueError("constraint rows must touch disjoint dofs")
    rows, cols, vals = [], [], []
    free = np.ones(n, dtype=bool)
    free[used] = False
    idx = np.flatnonzero(free)
    rows.append(idx); cols.append(idx); vals.append(np.ones(idx.size))
    cnorm = np.linalg.norm(c.coef, axis=1)
    bounded = np.zeros(len(c), dtype=np.int64)
    blocks = []
    for r in range(len(c)):
        d = c.dofs[r]
        u = c.coef[r] / cnorm[r]
        Q, _ = np.linalg.qr(u[:, None], mode="complete")
        Q = Q.T.copy()
        if Q[0] @ u < 0:
            Q[0] = -Q[0]
        # z[d[i]] = sum_j Q[i, j] x[d[j]]
        rows.append(np.repeat(d, d.size)); cols.append(np.tile(d, d.size)); vals.append(Q.ravel())
        bounded[r] = d[0]
        blocks.append(d)
    T = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n)).tocsr()
    Hz = (T @ qp.H @ T.T).tocsr()
    Hz = ((Hz + Hz.T) * 0.5).tocsr()
    Hz.sort_indices()
    for j in idx:
        blocks.append(np.array([j]))
    order = np.argsort([b[0] for b in blocks], kind="stable")
    blocks = [blocks[i] for i in order]
    return _Rotated(T, Hz, T @ qp.f, bounded, c.bound / cnorm, cnorm, blocks)


# --------------------------------------------------------------------- PGS

try:  # numba turns the sweep into a tight loop; the Python fallback is identical
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*a, **k):
        def wrap(fn):
            return fn
        return wrap if not (a and callable(a[0])) else a[0]


@njit(cache=True)
def _pgs_kernel(indptr, indices, data, f, z, bptr, bdofs, bbound, blo, Hloc, nsweeps, tol):
    nb = bptr.size - 1
    sweeps = 0
    for s in range(nsweeps):
        change = 0.0
        zmax = 0.0
        for b in range(nb):
            k = bptr[b + 1] - bptr[b]
            r = np.zeros(3)
            for a in range(k):
                j = bdofs[bptr[b] + a]
                acc = f[j]
                for p in range(indptr[j], indptr[j + 1]):
                    acc -= data[p] * z[indices[p]]
                for e in range(k):
                    acc += Hloc[b, a, e] * z[bdofs[bptr[b] + e]]
                r[a] = acc
            zn = np.zeros(3)
            M = Hloc[b, :k, :k].copy()
            zn[:k] = np.linalg.solve(M, r[:k])
            if bbound[b] and zn[0] < blo[b]:
                zn[0] = blo[b]
                if k > 1:
                    rr = r[1:k] - Hloc[b, 1:k, 0] * blo[b]
                    zn[1:k] = np.linalg.solve(Hloc[b, 1:k, 1:k].copy(), rr)
            for a in range(k):
                j = bdofs[bptr[b] + a]
                dz = abs(zn[a] - z[j])
                if dz > change:
                    change = dz
                z[j] = zn[a]
                if abs(zn[a]) > zmax:
                    zmax = abs(zn[a])
        sweeps = s + 1
        if change <= tol * (1.0 + zmax):
            break
    return sweeps


def _pgs(rot: _Rotated, z: np.ndarray, nsweeps: int, tol: float, history: list | None = None) -> int:
    H = rot.Hz
    nb = len(rot.blocks)
    bptr = np.zeros(nb + 1, dtype=np.int64)
    bptr[1:] = np.cumsum([b.size for b in rot.blocks])
    bdofs = np.concatenate(rot.blocks).astype(np.int64)
    bounded_set = dict(zip(rot.bounded.tolist(), rot.lo.tolist()))
    bbound = np.array([b[0] in bounded_set for b in rot.blocks], dtype=np.bool_)
    blo = np.array([bounded_set.get(int(b[0]), 0.0) for b in rot.blocks])
    Hloc = np.zeros((nb, 3, 3))
    for i, b in enumerate(rot.blocks):
        Hloc[i, :b.size, :b.size] = H[b][:, b].toarray()
    args = (H.indptr.astype(np.int64), H.indices.astype(np.int64), H.data, rot.fz, z,
            bptr, bdofs, bbound, blo, Hloc)
    if history is None:
        return int(_pgs_kernel(*args, nsweeps, tol))
    total = 0
    for _ in range(nsweeps):
        done = int(_pgs_kernel(*args, 1, tol))
        total += done
        history.append(float(0.5 * z @ (H @ z) - rot.fz @ z))
        if len(history) > 1 and abs(history[-2] - history[-1]) <= tol * (1 + abs(history[-1])):
            break
    return total


# ------------------------------------------------------------------ polish

def _solve_with_active(rot: _Rotated, A: np.ndarray, lo_full: np.ndarray) -> np.ndarray:
    n = rot.fz.size
    act = np.zeros(n, dtype=bool)
    act[A] = True
    I = np.flatnonzero(~act)
    z = np.zeros(n)
    z[act] = lo_full[act]
    if I.size:
        HII = rot.Hz[I][:, I]
        rhs = rot.fz[I] - rot.Hz[I][:, act] @ z[act]
        z[I] = solve_linear(HII, rhs)
    return z


def _polish(rot: _Rotated, z0: np.ndarray, cfg: VIConfig):
    """Primal-dual active-set Newton iteration started from ``z0``.

    Switches to single changes (most violated first, lowest index on ties)
    when a full update revisits an active set.
    """
    n = rot.fz.size
    K = rot.bounded
    lo_full = np.full(n, -np.inf)
    lo_full[K] = rot.lo
    gz = rot.Hz @ z0 - rot.fz
    A = set(K[(z0[K] - rot.lo <= cfg.active_tol * (1 + np.abs(rot.lo))) & (gz[K] > 0)].tolist())
    seen = set()
    single = False
    z = z0
    for it in range(1, cfg.max_polish + 1):
        Aarr = np.array(sorted(A), dtype=np.int64)
        z = _solve_with_active(rot, Aarr, lo_full)
        lam = rot.Hz @ z - rot.fz
        viol_in = {int(k): float(rot.lo[i] - z[k]) for i, k in enumerate(K)
                   if k not in A and z[k] < rot.lo[i] - cfg.active_tol * (1 + abs(rot.lo[i]))}
        viol_out = {int(k): float(-lam[k]) for k in A if lam[k] < -cfg.active_tol}
        if not viol_in and not viol_out:
            return z, it, True
        key = frozenset(A)
        if key in seen:
            single = True
        seen.add(key)
        if single:
            cand = sorted(list(viol_in.items()) + list(viol_out.items()), key=lambda kv: (-kv[1], kv[0]))
            k = cand[0][0]
            if k in A:
                A.discard(k)
            else:
                A.add(k)
        else:
            A = (A - set(viol_out)) | set(viol_in)
    return z, cfg.max_polish, False


# ------------------------------------------------------------------ driver

def solve_vi(qp: QuadraticProgram, cfg: VIConfig | None = None, *, x0: np.ndarray | None = None,
             record_energy: bool = False) -> VISolution:
    """Minimise 1/2 x^T H x - f^T x subject to the nodal half-space rows.

    Projected Gauss-Seidel in rotated nodal coordinates (exact blockwise
    minimisation with projection) provides a warm start; an active-set Newton
    polish then solves the equality-constrained KKT system exactly and the
    result is certified with :func:`complementarity_residual`.

    Raises
    ------
    MaxIterations
        If no certified point is reached; the best iterate is attached.
    """
    cfg = cfg or VIConfig()
    rot = _rotate(qp)
    n = qp.n
    if x0 is None:
        z = np.zeros(n)
    else:
        z = rot.T @ np.asarray(x0, dtype=float)
    z[rot.bounded] = np.maximum(z[rot.bounded], rot.lo)
    history: list = [] if record_energy else None
    sweeps = 0
    best = None
    while True:
        budget = min(cfg.warm_sweeps, cfg.max_sweeps - sweeps)
        if budget > 0:
            sweeps += _pgs(rot, z, budget, cfg.sweep_tol, history)
        zp, its, ok = _polish(rot, z.copy(), cfg)
        x = rot.T.T @ zp
        res = complementarity_residual(qp, x)
        if best is None or res < best[1]:
            best = (x, res, its)
        if ok and res <= cfg.tol:
            break
        if sweeps >= cfg.max_sweeps:
            xb, rb, ib = best
            raise MaxIterations(f"no certified solution after {sweeps} sweeps (residual {rb:.3g})",
                                _make_solution(qp, xb, rb, ib, sweeps, history, cfg, certified=False))
    return _make_solution(qp, x, res, its, sweeps, history, cfg)


def _make_solution(qp, x, res, its, sweeps, history, cfg, certified=True) -> VISolution:
    g, slack, lam = _row_data(qp, x)
    act = np.flatnonzero(slack <= cfg.active_tol * (1 + np.abs(qp.constraints.bound))) if len(slack) else np.zeros(0, int)
    mult = np.zeros(len(slack))
    mult[act] = lam[act]
    return VISolution(x=x, active=act, multipliers=mult, kkt_residual=float(res), iterations=int(its),
                      energy=qp.energy(x), certified=certified, sweeps=int(sweeps),
                      energy_history=history or [])


# ------------------------------------------------------------- brute force

def brute_force_vi(qp: QuadraticProgram, max_rows: int = 20) -> np.ndarray:
    """Enumerate every active set and return the least-energy feasible KKT point.

    Raises
    ------
    TooManyRows
        If the program has more than ``max_rows`` rows.
    InfeasibleProblem
        If no active set yields a feasible KKT point.
    """
    c = qp.constraints
    m = len(c)
    if m > max_rows:
        raise TooManyRows(f"{m} rows exceed the enumeration limit {max_rows}")
    H = qp.H.toarray()
    n = qp.n
    C = np.zeros((m, n))
    for r in range(m):
        C[r, c.dofs[r]] = c.coef[r]
    cf = sla.cho_factor(H)
    x0 = sla.cho_solve(cf, qp.f)
    HiC = sla.cho_solve(cf, C.T) if m else np.zeros((n, 0))
    S = C @ HiC
    rhs = c.bound - C @ x0
    best, best_e = None, np.inf
    tol = 1e-10
    for k in range(m + 1):
        for act in itertools.combinations(range(m), k):
            a = list(act)
            if a:
                lam = np.linalg.solve(S[np.ix_(a, a)], rhs[a])
                if np.any(lam < -tol):
                    continue
                x = x0 + HiC[:, a] @ lam
            else:
                x = x0
            if np.any(C @ x - c.bound < -tol * (1 + np.abs(c.bound))):
                continue
            e = 0.5 * x @ H @ x - qp.f @ x
            if e < best_e:
                best, best_e = x, e
    if best is None:
        raise InfeasibleProblem("no feasible KKT point found")
    return best
