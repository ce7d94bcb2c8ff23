"""Base loci: certified metadata, from-scratch solving, Noether accounting.

A map's base locus is computed one of two ways.  Constructor- and
composition-propagated metadata is verified, never trusted: every claimed
(tower, multiplicity) is re-measured by exact vanishing orders, and on plane
and quadric self-maps the Noether identities must close, which certifies
completeness.  Without metadata the locus is solved from scratch at desk
scale: resultant elimination to shadow coordinates, Q(i) root finding,
per-shadow fiber gcds, then multiplicities and infinitely-near towers by
blow-up recursion on local series.  Points outside Q(i) (or beyond the
degree cap) surface as IrrationalBaseLocus / CapacityError, exactly as the
Noether accounting reports the locus incomplete.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .scalars import QI, Scalar, CapacityError
from .forms import Form
from .io import parse_form
from .models import (Model, P2, Q31, F0, ProjPoint, PointTower,
                     MultiplicityAssignment, GeometryError, local_chart,
                     on_model)
from .charts import TSeries, series_of_form, blowup_raw
from .maps import (MapRep, MapMeta, MapError, IrrationalBaseLocus,
                   measure_orders)
from .rootfind import gaussian_roots
from .linalg import det

__all__ = ["base_locus", "factor_base_loci", "noether_check", "NoetherReport",
           "is_real_regular", "verify_base_meta", "solve_common_zeros_p2",
           "FROM_SCRATCH_DEGREE_CAP"]

FROM_SCRATCH_DEGREE_CAP = 14


# -- public API -----------------------------------------------------------------


def factor_base_loci(m: MapRep) -> Tuple[MultiplicityAssignment, ...]:
    """Per-component-tuple base loci (certified)."""
    if m.meta is not None:
        if not m.meta.verified:
            verify_base_meta(m)
        return m.meta.base
    base = _solve_factor_loci(m)
    m.meta = MapMeta(base, {}, verified=False)
    verify_base_meta(m)
    return m.meta.base


def base_locus(m: MapRep) -> MultiplicityAssignment:
    """Union base locus of the map (multiplicity = max over factors)."""
    per = factor_base_loci(m)
    merged: dict = {}
    for ma in per:
        for t, mult in ma:
            merged[t] = max(merged.get(t, 0), mult)
    return MultiplicityAssignment(merged.items(), check_closed=False)


@dataclass
class NoetherReport:
    passed: bool
    degree: int
    sum_mult: int
    sum_mult_sq: int
    expected_sum: int
    expected_sum_sq: int

    @property
    def residuals(self):
        return (self.sum_mult - self.expected_sum,
                self.sum_mult_sq - self.expected_sum_sq)


def noether_check(m: MapRep) -> NoetherReport:
    """The exact degree/multiplicity identities on P2 and Q31 self-maps."""
    if m.source not in (P2, Q31) or m.source != m.target:
        raise MapError("noether_check applies to P2 and Q31 self-maps")
    d = m.degree()
    ma = factor_base_loci(m)[0]
    s1, s2 = ma.total(), ma.total_sq()
    if m.source == P2:
        e1, e2 = 3 * (d - 1), d * d - 1
    else:
        e1, e2 = 4 * (d - 1), 2 * (d * d - 1)
    return NoetherReport(s1 == e1 and s2 == e2, d, s1, s2, e1, e2)


def is_real_regular(m: MapRep) -> bool:
    """True when the map and its inverse are defined at every real point."""
    if not m.is_real_map():
        return False
    for side in (m, m.inverse):
        for ma in factor_base_loci(side):
            for t, _ in ma:
                if t.is_real():
                    return False
    return True


# -- metadata verification --------------------------------------------------------


def verify_base_meta(m: MapRep):
    """Measure every claimed multiplicity; close Noether when applicable."""
    meta = m.meta
    for i, tup in enumerate(m.comps):
        forms = [f for f in tup if not f.is_zero()]
        claims = list(meta.base[i])
        by_root: dict = {}
        for t, mult in claims:
            by_root.setdefault(t.point, []).append((t, mult))
        for point, towers in by_root.items():
            if not on_model(point, m.source):
                raise MapError("claimed base point is off the source model")
            assigned = {t.chain: mult for t, mult in towers}
            need = sum(mult for _, mult in towers) + 3
            for t, mult in towers:
                sigma = sum(assigned.get(t.chain[:k], 0)
                            for k in range(len(t.chain)))
                got = measure_orders(forms, t, need)
                if got is None or got - sigma != mult:
                    raise MapError(
                        f"claimed multiplicity {mult} at {t!r} measured "
                        f"{None if got is None else got - sigma}")
    if m.source == m.target and m.source in (P2, Q31):
        d = m.degree()
        ma = meta.base[0]
        s1, s2 = ma.total(), ma.total_sq()
        if m.source == P2:
            ok = s1 == 3 * (d - 1) and s2 == d * d - 1
        else:
            ok = s1 == 4 * (d - 1) and s2 == 2 * (d * d - 1)
        if not ok:
            raise IrrationalBaseLocus(
                f"base locus incomplete on {m.source.name}: degree {d}, "
                f"sum {s1}, sum of squares {s2}")
    meta.verified = True


# -- from-scratch solving ----------------------------------------------------------


def _solve_factor_loci(m: MapRep):
    src = m.source
    out = []
    for i in range(m.target.nfactors):
        tup = [f for f in m.comps[i] if not f.is_zero()]
        d = sum(m.factor_mdeg(i))
        effective = 2 * d if src == Q31 else d
        if effective > FROM_SCRATCH_DEGREE_CAP:
            raise CapacityError(
                f"from-scratch base locus beyond degree cap "
                f"({effective} > {FROM_SCRATCH_DEGREE_CAP}); "
                f"provide metadata")
        if src == P2:
            points = solve_common_zeros_p2(tup)
        elif src == Q31:
            points = _solve_common_zeros_q31(tup)
        elif src == F0:
            points = _solve_common_zeros_f0(tup)
        else:
            raise CapacityError(
                f"from-scratch base locus unsupported on {src.name}")
        entries = _towers_from_points(tup, points)
        out.append(MultiplicityAssignment(entries, check_closed=False))
    return out


_COMBOS = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1),
           (1, 1, 1), (1, 2, 3), (1, -1, 2), (2, 1, -1), (1, 3, -2),
           (3, -1, 1)]


def _combo(forms, weights):
    acc = None
    for w, f in zip(weights, forms):
        if w == 0:
            continue
        piece = f.scale_int(w)
        acc = piece if acc is None else acc + piece
    return acc


def solve_common_zeros_p2(forms: Sequence[Form]) -> List[ProjPoint]:
    """All common zeros in P2 with coordinates in Q(i).

    Pairwise resultants of the raw components can vanish identically (shared
    factors), so small deterministic linear combinations are eliminated
    instead; spurious extra intersections are filtered by the exact fiber
    check below.
    """
    if len(forms) < 2:
        raise MapError("need at least two forms to cut out points")
    cands = [_combo(forms, w[:len(forms)])
             for w in _COMBOS if any(w[:len(forms)])]
    cands = [c for c in cands if c is not None and not c.is_zero()]
    shear = _find_shear(cands)
    sheared_cands = [_apply_shear(f, shear) for f in cands]
    gs = None
    used = 0
    for i in range(len(sheared_cands)):
        for j in range(i + 1, len(sheared_cands)):
            if used >= 3 and gs is not None and len(gs) <= 1:
                break
            r = _resultant_z(sheared_cands[i], sheared_cands[j])
            if not r or (len(r) == 1 and r[0].is_zero()):
                continue
            gs = r if gs is None else _poly_gcd(gs, r)
            used += 1
            if used >= 3:
                break
        if used >= 3:
            break
    if gs is None:
        raise MapError("all elimination pairs were degenerate")
    sheared_all = [_apply_shear(f, shear) for f in forms]
    shadows = _binary_roots(gs)
    pts = []
    for (x0, y0) in shadows:
        slices = [_specialize_xy(f, x0, y0) for f in sheared_all]
        g = slices[0]
        for s in slices[1:]:
            g = _poly_gcd(g, s)
            if not g:
                break
        if not g or len(g) <= 1:
            continue
        roots, cof = gaussian_roots(g)
        for z0, _ in roots:
            pts.append(ProjPoint(P2, [[x0, y0, z0]]))
    # un-shear and keep only true common zeros
    a, b = shear
    out = []
    seen = set()
    for p in pts:
        x, y, z = p.flat
        q = ProjPoint(P2, [[x + z.mul_int(a), y + z.mul_int(b), z]])
        if q not in seen and all(f.evaluate(q.flat).is_zero() for f in forms):
            seen.add(q)
            out.append(q)
    return out


def _find_shear(forms):
    for a in range(0, 8):
        for b in range(0, 8):
            pt = [Scalar.from_rational(a), Scalar.from_rational(b),
                  Scalar.one()]
            if all(not f.evaluate(pt).is_zero() for f in forms):
                return (a, b)
    raise MapError("no usable shear found")


def _apply_shear(f: Form, shear):
    a, b = shear
    if a == 0 and b == 0:
        return f
    x = Form.variable((3,), 0)
    y = Form.variable((3,), 1)
    z = Form.variable((3,), 2)
    return f.substitute([x + z.scale_int(a), y + z.scale_int(b), z])


def _dense_z(f: Form):
    """Coefficients in z as univariate lists over (x, y)-forms, dense in z."""
    d = f.mdeg[0]
    out = [dict() for _ in range(d + 1)]
    for e, c in f.terms.items():
        out[e[2]][(e[0], e[1])] = c
    return out, f


def _specialize_xy(f: Form, x0: Scalar, y0: Scalar):
    """Dense z-coefficient list of f at (x0, y0, z)."""
    d = f.mdeg[0]
    coeffs = [Scalar.zero() for _ in range(d + 1)]
    powx: dict = {0: Scalar.one()}
    powy: dict = {0: Scalar.one()}

    def px(k):
        if k not in powx:
            powx[k] = px(k - 1) * x0
        return powx[k]

    def py(k):
        if k not in powy:
            powy[k] = py(k - 1) * y0
        return powy[k]

    for e, c in f.scalar_terms():
        coeffs[e[2]] = coeffs[e[2]] + c * px(e[0]) * py(e[1])
    while coeffs and coeffs[-1].is_zero():
        coeffs.pop()
    return coeffs


def _resultant_z(f: Form, g: Form):
    """Res_z of two sheared plane forms, as a dense univariate in t = x/y.

    Computed by interpolation: the z-leading coefficients are constants after
    the shear, so specialization commutes with the resultant.
    """
    dtot = f.mdeg[0] * g.mdeg[0]
    nodes = []
    values = []
    t = 0
    while len(nodes) < dtot + 1:
        x0 = Scalar.from_rational(t)
        y0 = Scalar.one()
        fv = _specialize_xy(f, x0, y0)
        gv = _specialize_xy(g, x0, y0)
        t += 1
        if len(fv) != f.mdeg[0] + 1 or len(gv) != g.mdeg[0] + 1:
            raise MapError("shear failed to stabilize the z-degree")
        nodes.append(x0)
        values.append(_uni_resultant(fv, gv))
        if t > 4 * (dtot + 2):
            raise MapError("resultant interpolation ran out of nodes")
    return _newton_to_dense(nodes, values)


def _uni_resultant(f, g):
    """Resultant of two dense univariate Scalar polynomials."""
    f = list(f)
    g = list(g)
    res = Scalar.one()
    while True:
        df, dg = len(f) - 1, len(g) - 1
        if dg < 0:
            return Scalar.zero()
        if dg == 0:
            return res * _spow(g[0], df)
        r = _poly_mod(f, g)
        dr = len(r) - 1
        sign = -1 if (df * dg) % 2 else 1
        lead_pow = _spow(g[-1], df - dr)
        res = res * lead_pow
        if sign < 0:
            res = -res
        f, g = g, r
        if not g:
            return Scalar.zero()


def _spow(s: Scalar, k: int) -> Scalar:
    out = Scalar.one(s.ctx)
    for _ in range(k):
        out = out * s
    return out


def _strip_poly(f):
    f = list(f)
    while f and f[-1].is_zero():
        f.pop()
    return f


def _poly_mod(f, g):
    f = _strip_poly(f)
    dg = len(g) - 1
    inv = g[-1].inverse()
    while len(f) - 1 >= dg and f:
        c = f[-1] * inv
        k = len(f) - 1 - dg
        for j in range(dg + 1):
            f[k + j] = f[k + j] - c * g[j]
        while f and f[-1].is_zero():
            f.pop()
    return f


def _poly_gcd(f, g):
    f = _strip_poly(f)
    g = _strip_poly(g)
    while g:
        f, g = g, _poly_mod(f, g)
    if f:
        inv = f[-1].inverse()
        f = [c * inv for c in f]
    return f


def _newton_to_dense(nodes, values):
    coeffs = list(values)
    n = len(nodes)
    for j in range(1, n):
        for k in range(n - 1, j - 1, -1):
            coeffs[k] = (coeffs[k] - coeffs[k - 1]) * \
                (nodes[k] - nodes[k - j]).inverse()
    # expand Newton form to dense monomial coefficients
    dense = [Scalar.zero()] * n
    dense[0] = coeffs[-1]
    deg = 0
    for k in range(n - 2, -1, -1):
        # dense <- dense * (t - nodes[k]) + coeffs[k]
        deg += 1
        new = [Scalar.zero()] * n
        for i in range(deg):
            if not dense[i].is_zero():
                new[i + 1] = new[i + 1] + dense[i]
                new[i] = new[i] - dense[i] * nodes[k]
        new[0] = new[0] + coeffs[k]
        dense = new
    while len(dense) > 1 and dense[-1].is_zero():
        dense.pop()
    return dense


def _binary_roots(gcd_poly):
    """Shadows (x0, y0) from a dehomogenized gcd in t = x (at y = 1).

    The point at infinity (1 : 0) is always included as a candidate; callers
    filter every shadow by an exact fiber check, so inclusion is safe.
    """
    shadows = []
    if len(gcd_poly) > 1:
        roots, _ = gaussian_roots(gcd_poly)
        for r, _mult in roots:
            shadows.append((r, Scalar.one()))
    shadows.append((Scalar.one(), Scalar.zero()))
    return shadows


# -- Q31 and F0 solving ------------------------------------------------------------

_PARAM_Q31 = None


def _q31_parametrization():
    """The degree-2 plane parametrization of the quadric used for solving."""
    global _PARAM_Q31
    if _PARAM_Q31 is None:
        names = ("x", "y", "z")
        _PARAM_Q31 = tuple(parse_form(t, names, (3,)) for t in (
            "x^2 + y^2 + z^2", "2*x*z", "2*y*z", "x^2 + y^2 - z^2"))
    return _PARAM_Q31


def _q31_centers():
    """Deterministic rational sphere points usable as projection centers."""
    raw = [(1, 0, 0, 1), (1, 0, 0, -1), (1, 0, 1, 0), (1, 1, 0, 0),
           (5, 3, 4, 0), (5, 0, 3, 4), (13, 3, 4, 12), (13, 12, 3, 4)]
    return [ProjPoint(Q31, [[Scalar.from_rational(c) for c in t]])
            for t in raw]


def _solve_common_zeros_q31(forms: Sequence[Form]) -> List[ProjPoint]:
    # project from a center that is not itself a base point, so the pulled
    # back system has no fixed line
    from .po31 import reflection_sending, matrix_to_pointmap
    pN = _q31_centers()[0]
    center = next((c for c in _q31_centers()
                   if any(not f.evaluate(c.flat).is_zero() for f in forms)),
                  None)
    par = [Form(f.ctx, f.blocks, f.mdeg, f.den, dict(f.terms),
                _normalized=True) for f in _q31_parametrization()]
    extra_pts = []
    if center is None:
        # every candidate center is a base point: strip the fixed line and
        # remember the center itself
        center = pN
        extra_pts.append(pN)
    if center != pN:
        refl = reflection_sending(pN, center)
        par = [None] * 4
        std = _q31_parametrization()
        for i in range(4):
            acc = None
            for j in range(4):
                if refl[i][j].is_zero():
                    continue
                piece = std[j].scale(refl[i][j])
                acc = piece if acc is None else acc + piece
            par[i] = acc
    pulled = [f.substitute(list(par)) for f in forms]
    from .forms import gcd_forms
    g = gcd_forms(pulled)
    if g.total_degree() > 0:
        pulled = [f.exact_div(g) for f in pulled]
        for c in _q31_centers():
            if all(f.evaluate(c.flat).is_zero() for f in forms):
                extra_pts.append(c)
    sigma_base = {
        ProjPoint(P2, [[Scalar.one(), Scalar.gauss(0, 1), Scalar.zero()]]),
        ProjPoint(P2, [[Scalar.one(), Scalar.gauss(0, -1), Scalar.zero()]])}
    plane_pts = [p for p in solve_common_zeros_p2(pulled)
                 if p not in sigma_base]
    out = []
    seen = set()
    for p in plane_pts:
        vals = [f.evaluate(p.flat) for f in par]
        if all(v.is_zero() for v in vals):
            continue
        q = ProjPoint(Q31, [vals])
        if q in seen:
            continue
        if all(f.evaluate(q.flat).is_zero() for f in forms):
            seen.add(q)
            out.append(q)
    for q in extra_pts:
        if q not in seen and all(f.evaluate(q.flat).is_zero() for f in forms):
            seen.add(q)
            out.append(q)
    return out


def _solve_common_zeros_f0(forms: Sequence[Form]) -> List[ProjPoint]:
    """Common zeros of bihomogeneous forms on P1 x P1."""
    f, rest = forms[0], forms[1:]
    if not rest:
        raise MapError("need two forms on F0")
    g = rest[0]
    # resultant in the y-block via specialization of the x-block
    dy = f.mdeg[1] + g.mdeg[1]
    dx = f.mdeg[0] * g.mdeg[1] + g.mdeg[0] * f.mdeg[1]
    nodes, values = [], []
    t = 0
    while len(nodes) < dx + 1 and t < 6 * (dx + 2):
        x0 = [Scalar.from_rational(t), Scalar.one()]
        fv = _coeffs_y(f, x0)
        gv = _coeffs_y(g, x0)
        t += 1
        if len(fv) != f.mdeg[1] + 1 or len(gv) != g.mdeg[1] + 1:
            continue
        nodes.append(x0[0])
        values.append(_uni_resultant(fv, gv))
    if len(nodes) < dx + 1:
        raise MapError("F0 resultant interpolation failed")
    dense = _newton_to_dense(nodes, values)
    shadows = []
    if len(dense) > 1:
        roots, _ = gaussian_roots(dense)
        shadows = [(r, Scalar.one()) for r, _m in roots]
    shadows.append((Scalar.one(), Scalar.zero()))
    out = []
    seen = set()
    for x0 in shadows:
        slices = [_coeffs_y(h, list(x0)) for h in forms]
        gcd = slices[0]
        for s in slices[1:]:
            gcd = _poly_gcd(gcd, s)
        if len(gcd) <= 1:
            # y-leading drops of all slices mean the point (1:0) in y
            if all(len(s) < h.mdeg[1] + 1 for s, h in zip(slices, forms)) \
                    and all(len(s) == 0 or True for s in slices):
                pass
            continue
        roots, _ = gaussian_roots(gcd)
        cands = [(r, Scalar.one()) for r, _m in roots]
        for y0 in cands:
            p = ProjPoint(F0, [list(x0), list(y0)])
            if all(h.evaluate(p.flat).is_zero() for h in forms) \
                    and p not in seen:
                seen.add(p)
                out.append(p)
        # the y = (1:0) fiber
        p = ProjPoint(F0, [list(x0), [Scalar.one(), Scalar.zero()]])
        if all(h.evaluate(p.flat).is_zero() for h in forms) and p not in seen:
            seen.add(p)
            out.append(p)
    return out


def _coeffs_y(f: Form, x0):
    """Dense list in the second block parameter at y = (t : 1), x fixed."""
    d = f.mdeg[1]
    coeffs = [Scalar.zero()] * (d + 1)
    for e, c in f.scalar_terms():
        val = c * _spow(x0[0], e[0]) * _spow(x0[1], e[1])
        coeffs[e[2]] = coeffs[e[2]] + val
    while coeffs and coeffs[-1].is_zero():
        coeffs.pop()
    return coeffs


# -- multiplicities and towers ------------------------------------------------------


def _towers_from_points(forms, points):
    entries = []
    dmax = max(f.total_degree() for f in forms)
    for p in points:
        order = 2 * dmax + 6
        while True:
            try:
                entries.extend(_tower_rec(forms, p, (), 0, order))
                break
            except MapError:
                order *= 2
                if order > 64 * (dmax + 2):
                    raise
    return entries


def _tower_rec(forms, point, chain, sigma, order):
    chart = local_chart(point, order)
    series = [series_of_form(f, chart) for f in forms]
    for cid, delta in chain:
        series = [blowup_raw(s, cid, delta) for s in series]
    orders = [s.order_of_vanishing() for s in series]
    if any(o is None for o in orders):
        raise MapError("series order too small for tower measurement")
    mult = min(orders) - sigma
    if mult <= 0:
        return []
    tower = PointTower(point, chain)
    out = [(tower, mult)]
    if len(chain) > 12:
        raise MapError("tower recursion exceeded the depth bound")
    # children: directions on the exceptional line where the strict system
    # still vanishes
    sigma2 = sigma + mult
    for cid in ("a", "b"):
        zero = Scalar.zero()
        nxt = [blowup_raw(s, cid, zero) for s in series]
        rests = [_exceptional_poly(s, sigma2) for s in nxt]
        g = rests[0]
        for r in rests[1:]:
            g = _poly_gcd(g, r)
            if len(g) <= 1:
                break
        if cid == "a":
            if len(g) > 1:
                roots, cof = gaussian_roots(g)
                if cof > 0:
                    raise IrrationalBaseLocus(
                        "infinitely near direction outside Q(i)")
                for delta, _m in roots:
                    out.extend(_tower_rec(forms, point,
                                          chain + ((cid, delta),),
                                          sigma2, order))
        else:
            # only the direction missed by chart 'a': delta = 0 in chart 'b'
            if _poly_value_at_zero(rests):
                out.extend(_tower_rec(forms, point, chain + ((cid, zero),),
                                      sigma2, order))
    return out


def _exceptional_poly(series: TSeries, shift: int):
    """Restriction of series / e^shift to the exceptional line {e = 0}."""
    top = series.order - shift
    out = [Scalar.zero()] * max(0, top + 1)
    for (i, j), c in series.terms.items():
        if i == shift and j <= top:
            out[j] = c
    while out and out[-1].is_zero():
        out.pop()
    return out


def _poly_value_at_zero(rests):
    """True when every restriction polynomial vanishes at 0."""
    for r in rests:
        if r and not r[0].is_zero():
            return False
        if not r:
            continue
    return True
