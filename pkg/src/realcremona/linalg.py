"""Exact linear algebra over the scalar tower.

Matrices are plain lists of lists of Scalar; everything is field Gaussian
elimination (division is exact).  Sizes stay small (condition matrices of
linear systems, 4x4 projectivities), so no fraction-free tricks are needed.
"""

from __future__ import annotations

from typing import List, Sequence

from .scalars import Scalar

Matrix = List[List[Scalar]]

__all__ = ["rref", "nullspace", "rank", "det", "solve", "mat_mul", "mat_vec",
           "mat_inverse", "identity_matrix"]


def _clone(rows: Sequence[Sequence[Scalar]]) -> Matrix:
    return [list(r) for r in rows]


def rref(rows: Sequence[Sequence[Scalar]]):
    """Reduced row echelon form; returns (rref_rows, pivot_columns)."""
    m = _clone(rows)
    if not m:
        return m, []
    ncols = len(m[0])
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if not m[i][c].is_zero()),
                   None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = m[r][c].inverse()
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and not m[i][c].is_zero():
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m, pivots


def rank(rows: Sequence[Sequence[Scalar]]) -> int:
    return len(rref(rows)[1])


def nullspace(rows: Sequence[Sequence[Scalar]], ncols: int) -> List[List[Scalar]]:
    """Basis of the right kernel (one vector per free column)."""
    if not rows:
        rows = []
    red, pivots = rref(rows) if rows else ([], [])
    ctx_scalar = rows[0][0] if rows else None
    one = Scalar.one(ctx_scalar.ctx) if ctx_scalar else Scalar.one()
    zero = Scalar.zero(one.ctx)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [zero] * ncols
        vec[fc] = one
        for r, pc in enumerate(pivots):
            vec[pc] = -red[r][fc]
        basis.append(vec)
    return basis


def det(rows: Sequence[Sequence[Scalar]]) -> Scalar:
    m = _clone(rows)
    n = len(m)
    one = Scalar.one(m[0][0].ctx) if n else Scalar.one()
    sign = 1
    acc = one
    for c in range(n):
        piv = next((i for i in range(c, n) if not m[i][c].is_zero()), None)
        if piv is None:
            return Scalar.zero(one.ctx)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            sign = -sign
        acc = acc * m[c][c]
        inv = m[c][c].inverse()
        for i in range(c + 1, n):
            if not m[i][c].is_zero():
                f = m[i][c] * inv
                m[i] = [a - f * b for a, b in zip(m[i], m[c])]
    return acc if sign > 0 else -acc


def solve(rows: Sequence[Sequence[Scalar]], rhs: Sequence[Scalar]):
    """Solve A x = b; returns x or raises ValueError when inconsistent or
    underdetermined."""
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    red, pivots = rref(aug)
    ncols = len(rows[0])
    if ncols in pivots:
        raise ValueError("inconsistent linear system")
    if len(pivots) < ncols:
        raise ValueError("underdetermined linear system")
    zero = Scalar.zero(rows[0][0].ctx)
    x = [zero] * ncols
    for r, pc in enumerate(pivots):
        x[pc] = red[r][ncols]
    return x


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    return [[_dot(row, [b[k][j] for k in range(len(b))])
             for j in range(len(b[0]))] for row in a]


def mat_vec(a: Matrix, v: Sequence[Scalar]):
    return [_dot(row, v) for row in a]


def _dot(row, col):
    acc = None
    for x, y in zip(row, col):
        p = x * y
        acc = p if acc is None else acc + p
    return acc


def identity_matrix(n: int, ctx=None) -> Matrix:
    one = Scalar.one(ctx) if ctx else Scalar.one()
    zero = Scalar.zero(one.ctx)
    return [[one if i == j else zero for j in range(n)] for i in range(n)]


def mat_inverse(a: Matrix) -> Matrix:
    n = len(a)
    ident = identity_matrix(n, a[0][0].ctx)
    aug = [list(r) + list(e) for r, e in zip(a, ident)]
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ValueError("matrix is singular")
    return [row[n:] for row in red]
