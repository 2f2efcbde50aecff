"""Plain-text dumps of assembled quadratic programs.

Format (one record per line, ``#`` starts a comment)::

    n <ndof>
    H <nnz>
    <row> <col> <value>          nnz lines, sorted by (row, col)
    f <ndof>
    <index> <value>              ndof lines
    constraints <m> <k>
    <node> <dof_1..dof_k> <coef_1..coef_k> <bound>

Floats are written with 17 significant digits so a round trip is exact.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np
import scipy.sparse as sps

from ..vi import ConstraintSet, QuadraticProgram

_F = "{:.17g}"


def atomic_write_text(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_system(qp: QuadraticProgram) -> str:
    H = sps.coo_matrix(qp.H)
    order = np.lexsort((H.col, H.row))
    lines = ["# confined-shell quadratic program", f"n {qp.n}", f"H {H.nnz}"]
    lines += [f"{r} {c} {_F.format(v)}" for r, c, v in zip(H.row[order], H.col[order], H.data[order])]
    lines.append(f"f {qp.n}")
    lines += [f"{i} {_F.format(v)}" for i, v in enumerate(qp.f)]
    c = qp.constraints
    k = c.dofs.shape[1] if len(c) else 0
    lines.append(f"constraints {len(c)} {k}")
    for r in range(len(c)):
        parts = [str(c.node[r])] + [str(d) for d in c.dofs[r]] + [_F.format(v) for v in c.coef[r]]
        parts.append(_F.format(c.bound[r]))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def write_system(path: str, qp: QuadraticProgram) -> None:
    """Dump ``qp`` to ``path`` atomically."""
    atomic_write_text(path, format_system(qp))


def read_system(path: str) -> QuadraticProgram:
    """Inverse of :func:`write_system`."""
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    it = iter(rows)

    def header(tag):
        r = next(it)
        if r[0] != tag:
            raise ValueError(f"expected {tag!r} record, found {r[0]!r}")
        return [int(x) for x in r[1:]]

    (n,) = header("n")
    (nnz,) = header("H")
    trip = np.array([next(it) for _ in range(nnz)], dtype=float).reshape(nnz, 3)
    H = sps.coo_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(n, n)).tocsr()
    (nf,) = header("f")
    fv = np.array([next(it) for _ in range(nf)], dtype=float).reshape(nf, 2)
    f = np.zeros(n)
    f[fv[:, 0].astype(int)] = fv[:, 1]
    m, k = header("constraints")
    recs = np.array([next(it) for _ in range(m)], dtype=float).reshape(m, 2 + 2 * k)
    cons = ConstraintSet(recs[:, 0].astype(int), recs[:, 1:1 + k].astype(int),
                         recs[:, 1 + k:1 + 2 * k], recs[:, -1]) if m else ConstraintSet.empty(max(k, 1))
    return QuadraticProgram(H, f, cons)
