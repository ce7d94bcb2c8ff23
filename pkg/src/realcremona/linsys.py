"""Linear systems of forms with assigned multiplicities.

The conditions "vanish to order >= m along a tower" are assembled as exact
linear functionals on the coefficients of the reduced monomial basis: each
basis monomial is pulled back to the local chart at the proper point, pushed
through the tower's blow-up chain without dividing (raw transforms), and the
relevant truncated coefficients become matrix rows.  With sigma(T) the sum of
the assigned multiplicities of the strict prefixes of a tower T, the
conditions for T of multiplicity m are the raw coefficients of total degree
below sigma(T) + m at T's level.
"""

from __future__ import annotations

from typing import List, Sequence

from .scalars import QI, Scalar, FieldCtx
from .forms import Form
from .linalg import nullspace, rank, rref, det
from .models import (Model, P2, ProjPoint, PointTower,
                     MultiplicityAssignment, GeometryError, local_chart,
                     on_model)
from .charts import TSeries, series_of_form, blowup_raw

__all__ = ["conic_through", "exists_conic_through_6", "linear_system",
           "monomial_forms", "condition_rows", "realify_vectors"]


def monomial_forms(model: Model, mdeg) -> List[Form]:
    """The reduced monomial basis of the given multidegree, as Forms."""
    one = Scalar.one()
    return [Form.monomial(model.blocks, e, one)
            for e in model.monomials(mdeg)]


def _group_order(towers) -> int:
    # cutoff coefficients have total degree < sigma + m <= sum of the group's
    # multiplicities, so that sum bounds the series order needed
    return sum(m for _, m in towers) + 1


def condition_rows(model: Model, mdeg, assignment: MultiplicityAssignment,
                   basis: Sequence[Form] = None):
    """Exact condition matrix rows for the assigned multiplicities."""
    if basis is None:
        basis = monomial_forms(model, mdeg)
    for t, _ in assignment:
        if t.point.model != model:
            raise GeometryError("tower lives on a different model")
        if not on_model(t.point, model):
            raise GeometryError(f"point not on {model.name}: {t.point!r}")
    rows: List[List[Scalar]] = []
    by_point: dict = {}
    for tower, mult in assignment:
        by_point.setdefault(tower.point, []).append((tower, mult))
    for point, towers in by_point.items():
        chart = local_chart(point, _group_order(towers))
        base_series = [series_of_form(f, chart) for f in basis]
        assigned = {t.chain: m for t, m in towers}
        # raw transforms per chain prefix, shared across basis entries
        cache = {(): base_series}

        def series_for(chain):
            if chain in cache:
                return cache[chain]
            prev = series_for(chain[:-1])
            cid, delta = chain[-1]
            cur = [blowup_raw(s, cid, delta) for s in prev]
            cache[chain] = cur
            return cur

        for tower, mult in sorted(towers, key=lambda tm: len(tm[0].chain)):
            sigma = sum(assigned.get(tower.chain[:k], 0)
                        for k in range(len(tower.chain)))
            level = series_for(tower.chain)
            cutoff = sigma + mult
            keys = sorted({k for s in level for k in s.terms
                           if k[0] + k[1] < cutoff})
            for key in keys:
                rows.append([s.terms.get(key, Scalar.zero(QI))
                             for s in level])
    return rows, list(basis)


def linear_system(model: Model, mdeg, assignment: MultiplicityAssignment,
                  realify: bool = True) -> List[Form]:
    """Basis of forms of the multidegree vanishing along the assignment.

    When the assignment is conjugation-closed (it must be, by construction of
    MultiplicityAssignment) and realify is set, the returned basis consists
    of real forms spanning the same space.
    """
    if isinstance(mdeg, int):
        mdeg = (mdeg,) * model.nfactors
    rows, basis = condition_rows(model, mdeg, assignment)
    vectors = nullspace(rows, len(basis)) if rows else \
        [[Scalar.one() if i == j else Scalar.zero() for j in range(len(basis))]
         for i in range(len(basis))]
    if realify:
        vectors = realify_vectors(vectors)
    out = []
    for vec in vectors:
        f = None
        for c, mono in zip(vec, basis):
            if c.is_zero():
                continue
            piece = mono.scale(c)
            f = piece if f is None else f + piece
        if f is not None:
            out.append(f.monic())
    return out


def realify_vectors(vectors):
    """Turn a conjugation-stable spanning set into a real basis.

    Each vector contributes v + conj v and (v - conj v)/i; an exact row
    reduction then extracts an independent subset of the same size.
    """
    if not vectors:
        return vectors
    n = len(vectors[0])
    minus_i = Scalar.gauss(0, -1)
    cands = []
    for v in vectors:
        vc = [c.conj() for c in v]
        plus = [a + b for a, b in zip(v, vc)]
        minus = [(a - b) * minus_i for a, b in zip(v, vc)]
        for cand in (plus, minus):
            if any(not c.is_zero() for c in cand):
                cands.append(cand)
    red, pivots = rref(cands)
    # rows of the rref with pivots are an independent real generating set
    out = [row for row in red if any(not c.is_zero() for c in row)]
    if len(out) != len(vectors):
        raise GeometryError("realification changed the dimension "
                            "(conditions were not conjugation-stable)")
    for row in out:
        if any(not c.is_real() for c in row):
            raise GeometryError("realified basis is not real")
    return out


# -- conics -------------------------------------------------------------------

_CONIC_EXPS = [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1),
               (0, 0, 2)]


def _conic_row(p: ProjPoint):
    coords = p.flat
    return [_mono_eval(coords, e) for e in _CONIC_EXPS]


def _mono_eval(coords, exp):
    acc = None
    for c, k in zip(coords, exp):
        for _ in range(k):
            acc = c if acc is None else acc * c
    if acc is None:
        return Scalar.one(coords[0].ctx)
    return acc


def conic_through(points: Sequence[ProjPoint]) -> Form:
    """The unique conic through five plane points in general position."""
    points = list(points)
    if len(points) != 5:
        raise GeometryError("conic_through expects exactly five points")
    if len(set(points)) != 5:
        raise GeometryError("conic_through: repeated point")
    rows = [_conic_row(p) for p in points]
    if rank(rows) != 5:
        raise GeometryError(
            "degenerate configuration: the five points do not impose "
            "independent conditions on conics")
    basis = nullspace(rows, 6)
    assert len(basis) == 1
    vec = basis[0]
    terms = {e: c for e, c in zip(_CONIC_EXPS, vec) if not c.is_zero()}
    return Form.from_scalar_terms((3,), terms, mdeg=(2,)).monic()


def exists_conic_through_6(points: Sequence[ProjPoint]) -> bool:
    """True iff some conic passes through all six plane points."""
    points = list(points)
    if len(points) != 6:
        raise GeometryError("exists_conic_through_6 expects six points")
    rows = [_conic_row(p) for p in points]
    return det(rows).is_zero()
