"""The orthogonal group of the sphere quadric: exact rational machinery.

PO(3,1) here is the group of real projective 4x4 matrices preserving the
form J = diag(1, -1, -1, -1) up to a positive scalar.  Point transport uses
J-reflections, which need no square roots: for p, q on the quadric with
B(p, q) != 0 the reflection in v = p - q swaps p and q exactly.
"""

from __future__ import annotations

from typing import List, Sequence

from .scalars import Scalar
from .linalg import mat_mul, mat_vec
from .models import Q31, ProjPoint, GeometryError
from .maps import MapRep, projectivity

__all__ = ["bform", "is_po31_matrix", "po31_map", "reflection_sending",
           "apply_matrix_point", "J_SIGNS", "rotation_xy", "boost_wx",
           "po31_scale_lambda"]

J_SIGNS = (1, -1, -1, -1)


def bform(p: Sequence[Scalar], q: Sequence[Scalar]) -> Scalar:
    acc = None
    for s, (a, b) in zip(J_SIGNS, zip(p, q)):
        term = a * b
        if s < 0:
            term = -term
        acc = term if acc is None else acc + term
    return acc


def _identity4(ctx):
    one = Scalar.one(ctx)
    zero = Scalar.zero(ctx)
    return [[one if i == j else zero for j in range(4)] for i in range(4)]


def reflection_in(v: Sequence[Scalar]) -> List[List[Scalar]]:
    """J-reflection x -> x - 2 B(x,v)/B(v,v) v; requires B(v,v) != 0."""
    nv = bform(v, v)
    if nv.is_zero():
        raise GeometryError("reflection vector is isotropic")
    inv = nv.inverse()
    two = Scalar.from_rational(2)
    mat = _identity4(v[0].ctx)
    for i in range(4):
        for j in range(4):
            jv = v[j] if J_SIGNS[j] > 0 else -v[j]
            mat[i][j] = mat[i][j] - two * v[i] * jv * inv
    return mat


def reflection_sending(p: ProjPoint, q: ProjPoint) -> List[List[Scalar]]:
    """A PO(3,1) matrix (a reflection or a product of two) sending p to q."""
    pc, qc = list(p.flat), list(q.flat)
    if p == q:
        return _identity4(pc[0].ctx)
    v = [a - b for a, b in zip(pc, qc)]
    if not bform(v, v).is_zero():
        return reflection_in(v)
    # isotropic difference: route through an intermediate rational point
    for mid in _intermediates():
        mc = mid.flat
        v1 = [a - b for a, b in zip(pc, mc)]
        v2 = [a - b for a, b in zip(mc, qc)]
        if not bform(v1, v1).is_zero() and not bform(v2, v2).is_zero():
            return mat_mul(reflection_in(v2), reflection_in(v1))
    raise GeometryError("could not build a reflection chain")


def _intermediates():
    raw = [(1, 0, 0, 1), (1, 0, 0, -1), (1, 0, 1, 0), (1, 1, 0, 0),
           (5, 3, 4, 0), (5, 0, 4, 3), (13, 3, 4, 12), (25, 12, 16, 9),
           (13, 4, 12, 3), (5, 4, 0, 3)]
    return [ProjPoint(Q31, [[Scalar.from_rational(c) for c in t]])
            for t in raw]


def po31_scale_lambda(mat: Sequence[Sequence[Scalar]]):
    """The scalar with M^T J M = lambda J, or None if M not J-orthogonal."""
    n = 4
    mtjm = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = None
            for k in range(n):
                term = mat[k][i] * mat[k][j]
                if J_SIGNS[k] < 0:
                    term = -term
                acc = term if acc is None else acc + term
            mtjm[i][j] = acc
    lam = mtjm[0][0]
    for i in range(n):
        for j in range(n):
            want = lam if i == j and J_SIGNS[i] > 0 else (
                -lam if i == j else Scalar.zero(lam.ctx))
            if not (mtjm[i][j] - want).is_zero():
                return None
    return lam


def is_po31_matrix(mat) -> bool:
    for row in mat:
        for c in row:
            if not c.is_real():
                return False
    lam = po31_scale_lambda(mat)
    if lam is None or lam.is_zero():
        return False
    return lam.sign() > 0


def po31_map(mat) -> MapRep:
    """The projectivity of Q31 given by a PO(3,1) matrix."""
    if not is_po31_matrix(mat):
        raise GeometryError("matrix does not preserve the quadric form "
                            "up to a positive scalar")
    return projectivity(Q31, [mat])


def apply_matrix_point(mat, p: ProjPoint) -> ProjPoint:
    return ProjPoint(p.model, [mat_vec(mat, list(p.flat))])


def rotation_xy(i: int, j: int, c: Scalar, s: Scalar):
    """Rational rotation in space coordinates i, j (1-based among x,y,z)."""
    mat = _identity4(c.ctx)
    mat[i][i] = c
    mat[j][j] = c
    mat[i][j] = -s
    mat[j][i] = s
    return mat


def boost_wx(i: int, ch: Scalar, sh: Scalar):
    """Rational hyperbolic rotation mixing w with space coordinate i."""
    mat = _identity4(ch.ctx)
    mat[0][0] = ch
    mat[i][i] = ch
    mat[0][i] = sh
    mat[i][0] = sh
    return mat
