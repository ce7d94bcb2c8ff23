"""Birational map values and exact composition.

A MapRep holds one tuple of source-variable Forms per target factor, an
inverse witness (same data in the opposite direction, materialized lazily
for composites), and optional certified base-locus metadata:

    meta.base        per component tuple: MultiplicityAssignment on the source
    meta.contracted  inverse-side base tower -> source curve contracted onto it

Composition substitutes, reduces modulo the source relations, and cancels the
fixed divisor.  When both factors carry metadata the cancellation divisor is
predicted exactly (product of the inner map's contracted curves over matched
base points, raised to the outer multiplicities), removed by exact division,
and the composite's claimed base locus is re-verified by vanishing-order
measurements plus the Noether identities; nothing is trusted without a check.
Beyond a raw-degree cutoff on the plane the composite is recovered by exact
evaluation/interpolation on integer grids instead of expanding the raw
substitution, with the same certification.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

from ._ints import ONE, gcdint
from .scalars import QI, Scalar, FieldCtx, CapacityError
from .forms import Form, FormError, gcd_forms
from .linalg import solve, mat_inverse, mat_vec
from .models import (Model, P2, Q31, F0, D6, ProjPoint, PointTower,
                     MultiplicityAssignment, GeometryError, local_chart)
from .charts import TSeries, series_of_form, blowup_raw

__all__ = ["MapRep", "MapMeta", "compose", "identity_map", "MapError",
           "IrrationalBaseLocus", "projectivity", "map_equal",
           "evaluate_map", "transport_tower", "measure_orders",
           "RAW_DEGREE_CUTOFF"]

RAW_DEGREE_CUTOFF = 140


class MapError(ValueError):
    pass


class IrrationalBaseLocus(MapError):
    """Base points exist outside the supported scalar tower."""


class MapMeta:
    __slots__ = ("base", "contracted", "verified")

    def __init__(self, base, contracted=None, verified=False):
        self.base = tuple(base)
        self.contracted = dict(contracted or {})
        self.verified = verified

    def union_assignment(self) -> MultiplicityAssignment:
        merged: dict = {}
        for ma in self.base:
            for t, m in ma:
                merged[t] = merged.get(t, 0) + m
        return MultiplicityAssignment(merged.items(), check_closed=False)

    def curve_for(self, tower) -> Optional[Form]:
        c = self.contracted.get(tower)
        if callable(c):
            c = c()
            self.contracted[tower] = c
        return c


class MapRep:
    __slots__ = ("source", "target", "_comps", "_comps_thunk", "meta", "_inv",
                 "_mdegs", "_inv_builder")

    def __init__(self, source: Model, target: Model, comps=None,
                 comps_thunk: Callable = None, meta: MapMeta = None,
                 normalize: bool = True, check_relations: bool = True,
                 mdegs=None):
        self.source = source
        self.target = target
        self._comps_thunk = comps_thunk
        self.meta = meta
        self._inv = None
        self._inv_builder = None
        self._mdegs = tuple(tuple(m) for m in mdegs) if mdegs else None
        if comps is not None:
            self._comps = _prepare_comps(source, target, comps, normalize,
                                         check_relations)
            self._mdegs = tuple(t[0].mdeg for t in self._comps)
        else:
            self._comps = None

    # -- components ---------------------------------------------------------

    @property
    def comps(self) -> Tuple[Tuple[Form, ...], ...]:
        if self._comps is None:
            self._comps = _prepare_comps(self.source, self.target,
                                         self._comps_thunk(), True, False)
            self._mdegs = tuple(t[0].mdeg for t in self._comps)
            self._comps_thunk = None
        return self._comps

    @property
    def flat_comps(self) -> List[Form]:
        return [c for tup in self.comps for c in tup]

    def set_inverse(self, inv: "MapRep"):
        self._inv = inv
        inv._inv = self

    @property
    def inverse(self) -> "MapRep":
        if self._inv is None:
            if self._inv_builder is None:
                raise MapError("map has no inverse witness")
            built = self._inv_builder()
            self._inv_builder = None
            self.set_inverse(built)
        return self._inv

    def factor_mdeg(self, i: int):
        if self._mdegs is not None:
            return self._mdegs[i]
        return self.comps[i][0].mdeg

    def degree(self) -> int:
        """Degree for single-factor targets over single-factor sources."""
        if self.target.nfactors != 1 or self.source.nfactors != 1:
            raise MapError("degree() needs single-factor models; "
                           "use factor_mdeg")
        return self.factor_mdeg(0)[0]

    def bidegrees(self):
        return tuple(self.factor_mdeg(i) for i in range(self.target.nfactors))

    # -- reality -------------------------------------------------------------

    def is_real_map(self) -> bool:
        for tup in self.comps:
            units = set()
            for f in tup:
                if f.is_zero():
                    continue
                u = f.is_real_up_to_unit()
                if u is None:
                    return False
                units.add(u)
            if len(units) > 1:
                return False
        return True

    # -- equality -------------------------------------------------------------

    def equals(self, other: "MapRep") -> bool:
        return map_equal(self, other)

    def is_identity(self) -> bool:
        return map_equal(self, identity_map(self.source)) \
            if self.source == self.target else False

    def __repr__(self):
        degs = ", ".join(str(self.factor_mdeg(i))
                         for i in range(self.target.nfactors)) \
            if self._comps is not None else "lazy"
        return (f"<MapRep {self.source.name} -> {self.target.name} "
                f"mdeg {degs}>")


def _prepare_comps(source, target, comps, normalize, check_relations):
    fixed = []
    offs = [0]
    for b in target.blocks:
        offs.append(offs[-1] + b)
    if len(comps) != target.nfactors:
        raise MapError("component tuple count != target factors")
    for i, tup in enumerate(comps):
        tup = [source.normal_form(f) for f in tup]
        if len(tup) != target.blocks[i]:
            raise MapError("component count != target block size")
        nz = next((f for f in tup if not f.is_zero()), None)
        if nz is None:
            raise MapError("all components of a factor vanish")
        if any((not f.is_zero()) and f.mdeg != nz.mdeg for f in tup):
            raise MapError("components of one factor differ in multidegree")
        tup = [f if not f.is_zero() else Form.zero(f.blocks, nz.mdeg, f.ctx)
               for f in tup]
        if normalize:
            lead = nz.lead_coeff()
            inv = lead.inverse()
            tup = [f.scale(inv) for f in tup]
        fixed.append(tuple(tup))
    if check_relations:
        flat = [c for tup in fixed for c in tup]
        for rel in target.relations:
            pulled = rel.substitute(flat)
            if not source.normal_form(pulled).is_zero():
                raise MapError(
                    f"components violate target relation of {target.name}")
    return tuple(fixed)


# -- identity and projectivities ------------------------------------------------


def identity_map(model: Model) -> MapRep:
    offs = 0
    comps = []
    for b in model.blocks:
        comps.append(tuple(Form.variable(model.blocks, offs + j)
                           for j in range(b)))
        offs += b
    m = MapRep(model, model, comps, check_relations=False,
               meta=MapMeta([MultiplicityAssignment([])
                             for _ in model.blocks]))
    m.set_inverse(m)
    return m


def projectivity(model: Model, matrices) -> MapRep:
    """Linear automorphism given per-factor square matrices of Scalars."""
    if len(matrices) != model.nfactors:
        raise MapError("one matrix per factor required")
    offs = 0
    comps = []
    for b, mat in zip(model.blocks, matrices):
        xs = [Form.variable(model.blocks, offs + j) for j in range(b)]
        tup = []
        for row in mat:
            f = None
            for c, x in zip(row, xs):
                if c.is_zero():
                    continue
                piece = x.scale(c)
                f = piece if f is None else f + piece
            if f is None:
                f = Form.zero(model.blocks, xs[0].mdeg)
            tup.append(f)
        comps.append(tuple(tup))
        offs += b
    m = MapRep(model, model, comps,
               meta=MapMeta([MultiplicityAssignment([])
                             for _ in model.blocks]))
    inv = MapRep(model, model,
                 [tuple(_linear_comb(model, offs0, mat_inverse(mat)))
                  for offs0, mat in _offset_mats(model, matrices)],
                 meta=MapMeta([MultiplicityAssignment([])
                               for _ in model.blocks]))
    m.set_inverse(inv)
    return m


def _offset_mats(model, matrices):
    offs = 0
    out = []
    for b, mat in zip(model.blocks, matrices):
        out.append((offs, mat))
        offs += b
    return out


def _linear_comb(model, offs, mat):
    b = len(mat)
    xs = [Form.variable(model.blocks, offs + j) for j in range(b)]
    tup = []
    for row in mat:
        f = None
        for c, x in zip(row, xs):
            if c.is_zero():
                continue
            piece = x.scale(c)
            f = piece if f is None else f + piece
        if f is None:
            f = Form.zero(model.blocks, xs[0].mdeg)
        tup.append(f)
    return tup


def linear_matrix_of(m: MapRep):
    """Per-factor matrices of a linear map (degree one in each factor)."""
    out = []
    offs = 0
    for i, b in enumerate(m.target.blocks):
        tup = m.comps[i]
        mdeg = m.factor_mdeg(i)
        if sum(mdeg) != 1:
            raise MapError("map is not linear in factor %d" % i)
        src_block = mdeg.index(1)
        src_off = sum(m.source.blocks[:src_block])
        n = m.source.blocks[src_block]
        mat = []
        for f in tup:
            row = []
            for j in range(n):
                exp = [0] * m.source.nvars
                exp[src_off + j] = 1
                row.append(f.coeff(tuple(exp)))
            mat.append(row)
        out.append(mat)
        offs += b
    return out


# -- evaluation -----------------------------------------------------------------


def evaluate_map(m: MapRep, p: ProjPoint) -> Optional[ProjPoint]:
    """Image of a point; None when p is a base point of m."""
    if p.model != m.source:
        raise MapError("point is not on the source model")
    flat = p.flat
    factors = []
    for tup in m.comps:
        vals = [f.evaluate(flat) for f in tup]
        if all(v.is_zero() for v in vals):
            return None
        factors.append(vals)
    return ProjPoint(m.target, factors)


def map_equal(a: MapRep, b: MapRep) -> bool:
    """Exact equality as maps: per-factor tuples proportional, modulo the
    source relations when there are any."""
    if a.source != b.source or a.target != b.target:
        return False
    relations = bool(a.source.relations)
    for i in range(a.target.nfactors):
        ta, tb = a.comps[i], b.comps[i]
        if ta[0].mdeg != tb[0].mdeg and not relations:
            # with relations, tuples of different multidegrees can still
            # agree as maps (e.g. (y:z) = (u:v) on the Hirzebruch surface)
            return False
        if not relations:
            ja = next(j for j, f in enumerate(ta) if not f.is_zero())
            jb = next(j for j, f in enumerate(tb) if not f.is_zero())
            if ja != jb:
                return False
            u = ta[ja].proportional(tb[jb])
            if u is None:
                return False
            for fa, fb in zip(ta, tb):
                if not fa.scale(u) == fb:
                    return False
        else:
            # cross minors must vanish in the coordinate ring
            n = len(ta)
            for j in range(n):
                for k in range(j + 1, n):
                    minor = ta[j] * tb[k] - ta[k] * tb[j]
                    if not a.source.normal_form(minor).is_zero():
                        return False
            # and the tuples must not be orthogonal degenerate pairs
            paired = any(
                not a.source.normal_form(ta[j] * tb[j]).is_zero()
                for j in range(n))
            if not paired:
                return False
    return True


# -- towers: arcs and transport ---------------------------------------------------


def _arc_local(chain, order: int):
    """Local (s, t) series of the curvilinear arc pinned by a tower chain.

    Built by folding the blow-up substitutions back from the deepest level,
    where the arc is (e, 0), transverse to the last exceptional line.  The
    conventions match blowup_raw exactly: chart 'a' sends (s, t) to
    (e, e*(delta + t')); chart 'b' to (e*(delta + s'), e).
    """
    s = TSeries.var(0, order)
    t = TSeries(order)
    for cid, delta in reversed(chain):
        d = TSeries.const(delta, order)
        if cid == "a":
            s, t = s, s * (d + t)
        else:
            s, t = t * (d + s), t
    return s, t


def _arc_series(tower: PointTower, order: int) -> List[TSeries]:
    """Ambient coordinates along the arc defined by the tower (variable 0)."""
    chart = local_chart(tower.point, order)
    s, t = _arc_local(tower.chain, order)
    return [c.substitute(s, t) for c in chart]


def _series_ratio(num: TSeries, den: TSeries) -> TSeries:
    k = den.order_of_vanishing()
    if k is None:
        raise ZeroDivisionError("ratio by the zero series")
    on = num.order_of_vanishing()
    if on is not None and on < k:
        raise MapError("series ratio is not a power series")
    return _shift_down(num, k) * _shift_down(den, k).inverse()


def transport_tower(g: MapRep, tower: PointTower, height: int = 1,
                    order: int = None) -> PointTower:
    """Image of a tower under g, computed along its arc.

    Works even when the proper point of `tower` is a base point of g (the
    common power of the arc parameter is stripped); `height` is the height of
    the image tower to reconstruct.
    """
    if order is None:
        dmax = max(sum(f.total_degree() for f in tup[:1])
                   for tup in g.comps)
        order = 2 * (height + 1) + dmax + 2
    arc = _arc_series(tower, order)
    img_factors = []
    for tup in g.comps:
        vals = [series_of_form(f, arc) for f in tup]
        shifts = [v.order_of_vanishing() for v in vals if not v.is_zero()]
        if not shifts:
            raise MapError("tower arc lands entirely in the base locus")
        k = min(shifts)
        img_factors.append([_shift_down(v, k) for v in vals])
    point = ProjPoint(
        g.target, [[v.at_origin() for v in fac] for fac in img_factors])
    if height == 1:
        return PointTower(point)
    if g.target.nfactors != 1:
        raise MapError("tower transport beyond height 1 needs a "
                       "single-factor target")
    # express the target chart parameters along the image arc
    tchart = local_chart(point, height + 1)
    free_idx, piv = _chart_free_indices(tchart)
    vals = img_factors[0]
    inv0 = vals[piv].inverse()
    consts = [c.at_origin() for c in tchart]
    params = []
    for fi in free_idx:
        series = vals[fi] * inv0
        params.append(series - TSeries.const(consts[fi], series.order))
    s_e, t_e = params
    chain = []
    for _ in range(height - 1):
        os_ = s_e.order_of_vanishing()
        ot_ = t_e.order_of_vanishing()
        if os_ is None and ot_ is None:
            raise MapError("image arc too short for the requested height")
        if os_ is not None and (ot_ is None or os_ <= ot_):
            ratio = _series_ratio(t_e, s_e)
            delta = ratio.at_origin()
            chain.append(("a", delta))
            s_e, t_e = s_e, ratio - TSeries.const(delta, ratio.order)
        else:
            ratio = _series_ratio(s_e, t_e)
            delta = ratio.at_origin()
            chain.append(("b", delta))
            s_e, t_e = t_e, ratio - TSeries.const(delta, ratio.order)
    return PointTower(point, chain)


def _shift_down(series: TSeries, k: int):
    if k == 0:
        return series
    return TSeries(series.order - k,
                   {(i - k, j): c for (i, j), c in series.terms.items()
                    if i >= k})


def _chart_free_indices(chart):
    """Indices of the chart coordinates of shape const + s and const + t,
    plus a pivot index (unit constant)."""
    free = [None, None]
    piv = None
    for idx, series in enumerate(chart):
        t = dict(series.terms)
        t.pop((0, 0), None)
        if not t:
            if piv is None:
                piv = idx
            continue
        if set(t) == {(1, 0)} and t[(1, 0)].is_one():
            free[0] = idx
        elif set(t) == {(0, 1)} and t[(0, 1)].is_one():
            free[1] = idx
    if free[0] is None or free[1] is None or piv is None:
        raise MapError("chart is not in split form")
    return free, piv


# -- vanishing orders ---------------------------------------------------------


def measure_orders(forms: Sequence[Form], tower: PointTower, order: int):
    """Raw vanishing order of the system along the tower's final level."""
    chart = local_chart(tower.point, order)
    series = [series_of_form(f, chart) for f in forms if not f.is_zero()]
    for cid, delta in tower.chain:
        series = [blowup_raw(s, cid, delta) for s in series]
    orders = [s.order_of_vanishing() for s in series]
    if any(o is None for o in orders):
        return None
    return min(orders)


def curve_mult_at_tower(curve: Form, tower: PointTower) -> int:
    """Multiplicity of a curve at a (possibly infinitely near) point.

    Strict-transform bookkeeping: at each level the measured multiplicity is
    divided out before blowing up further.
    """
    order = 2 * curve.total_degree() + 2 * len(tower.chain) + 4
    chart = local_chart(tower.point, order)
    s = series_of_form(curve, chart)
    m = s.order_of_vanishing()
    if m is None:
        raise MapError("series order exceeded while measuring a curve")
    for cid, delta in tower.chain:
        s = blowup_raw(s, cid, delta)
        s = _shift_down(s, m)
        m = s.order_of_vanishing()
        if m is None:
            raise MapError("series order exceeded while measuring a curve")
    return m


# -- composition ----------------------------------------------------------------


class _Side:
    """Bookkeeping bundle for one direction of a composition."""

    __slots__ = ("outer", "inner", "matched", "deltas", "raw_mdeg",
                 "new_mdeg")

    def __init__(self, outer: MapRep, inner: MapRep):
        self.outer = outer
        self.inner = inner


def compose(psi: MapRep, phi: MapRep, certify: bool = True) -> MapRep:
    """Exact composite psi o phi (phi applies first)."""
    if phi.target != psi.source:
        raise MapError(f"cannot compose: {phi.target.name} vs "
                       f"{psi.source.name}")
    have_meta = (psi.meta is not None and phi.meta is not None
                 and (phi._inv is not None or phi._inv_builder is not None))
    if not have_meta:
        return _compose_plain(psi, phi)
    fwd = _bookkeep(psi, phi)
    if fwd is None:
        return _compose_plain(psi, phi)
    comps, meta = _compose_with_plan(psi, phi, fwd, certify)
    out = MapRep(phi.source, psi.target, comps, meta=meta,
                 check_relations=False)
    if psi._inv is not None or psi._inv_builder is not None:
        out._inv_builder = (lambda _a=phi, _b=psi, _c=certify:
                            compose(_a.inverse, _b.inverse, certify=_c))
    return out


def _compose_plain(psi: MapRep, phi: MapRep) -> MapRep:
    """Metadata-free composition: substitute, reduce, cancel by honest gcd.

    Only valid directly for relation-free sources (P2, F0, P1); on other
    models common factors modulo the relations cannot be seen on
    representatives, so metadata is required there.
    """
    src = phi.source
    args = phi.flat_comps
    comps = []
    for tup in psi.comps:
        raw = [src.normal_form(f.substitute(args)) for f in tup]
        if not src.relations:
            g = gcd_forms(raw)
            if g.total_degree() > 0:
                raw = [f.exact_div(g) for f in raw]
        comps.append(tuple(raw))
    out = MapRep(src, psi.target, comps, check_relations=False)
    if src.relations and max(
            sum(out.factor_mdeg(i)) for i in range(out.target.nfactors)) > 1:
        # common factors modulo the relations are invisible on
        # representatives; nonlinear composites here need metadata
        raise MapError(
            "composition on a relation model needs base-locus metadata")
    inv_ok = (phi._inv is not None or phi._inv_builder is not None) and \
        (psi._inv is not None or psi._inv_builder is not None)
    if inv_ok:
        out._inv_builder = (lambda _a=phi, _b=psi:
                            _compose_plain(_a.inverse, _b.inverse))
    return out


def _bookkeep(psi: MapRep, phi: MapRep):
    """Candidate cancellation divisors and base positions for psi o phi.

    Everything here is a candidate only: divisor exponents are found by
    exact division trials, multiplicities by measurement, and completeness
    by the Noether identities, so an over- or under-supplied candidate never
    corrupts the result; at worst composition falls back or raises.
    """
    if psi.meta is None or phi.meta is None:
        return None
    inv_keys = list(phi.meta.contracted.keys())
    plan = {"raw_mdeg": [], "cands": [], "positions": [], "interp": []}
    inner_entries = []
    if phi.meta.base is not None:
        for ma in phi.meta.base:
            for t, m in ma:
                inner_entries.append(t)
    transports: dict = {}
    for i in range(psi.target.nfactors):
        raw_mdeg = _raw_mdeg(psi, phi, i)
        entries = list(psi.meta.base[i])
        towers_here = {t for t, _ in entries}
        roots_here = {t.point for t in towers_here}
        mult_of = {t: m for t, m in entries}
        cands = []
        matched_exact = set()
        interp_parts = []
        interp_ok = True
        for key in inv_keys:
            if not all(t.point in roots_here for t in key):
                continue
            curve = phi.meta.curve_for(key)
            if curve is None:
                continue
            cands.append((key, curve))
            if all(t in towers_here and t.is_proper() for t in key):
                matched_exact.update(key)
                ms = {mult_of[t] for t in key}
                if len(ms) == 1:
                    interp_parts.append((curve, ms.pop()))
                else:
                    interp_ok = False
            else:
                interp_ok = False
        # positions: transported outer entries + inner entries verbatim
        positions = list(inner_entries)
        matched_roots = {t.point for key, _ in cands for t in key}
        for t, m in entries:
            if t in matched_exact:
                if not t.is_proper():
                    interp_ok = False
                continue
            if t.point in matched_roots:
                if t.is_proper():
                    continue  # divisor removed at this root
                interp_ok = False
                key = ("drop", t)
            else:
                key = ("move", t)
                if not t.is_proper():
                    interp_ok = False
            transports.setdefault(key, None)
            positions.append(key)
        plan["raw_mdeg"].append(tuple(raw_mdeg))
        plan["cands"].append(cands)
        plan["positions"].append(positions)
        plan["interp"].append(interp_parts if interp_ok else None)
    # resolve transports through the inverse witness of the inner map
    for key in list(transports):
        kind, t = key
        try:
            if kind == "move" and t.is_proper():
                img = evaluate_map(phi.inverse, t.point)
                transports[key] = PointTower(img) if img is not None else None
            else:
                height = t.height - 1 if kind == "drop" else t.height
                transports[key] = transport_tower(phi.inverse, t,
                                                  height=max(1, height))
        except (MapError, GeometryError, ZeroDivisionError):
            transports[key] = None
    for i in range(len(plan["positions"])):
        fixed = []
        for p in plan["positions"][i]:
            if isinstance(p, PointTower):
                fixed.append(p)
                continue
            resolved = transports[p]
            if resolved is None:
                if p[0] == "move":
                    return None
                continue
            fixed.append(resolved)
        plan["positions"][i] = fixed
    return plan


def _raw_mdeg(psi, phi, i):
    mdeg_i = psi.factor_mdeg(i)
    out = [0] * phi.source.nfactors
    for j in range(phi.target.nfactors):
        inner = phi.factor_mdeg(j)
        out = [a + mdeg_i[j] * b for a, b in zip(out, inner)]
    return out


def _safe_transport(psi, tower):
    try:
        if tower.is_proper():
            img = evaluate_map(psi, tower.point)
            return PointTower(img) if img is not None else None
        return transport_tower(psi, tower, height=tower.height)
    except (MapError, GeometryError, ZeroDivisionError):
        return None


def _pullback_curve_thunk(phi, curve):
    def thunk(_phi=phi, _curve=curve):
        raw = _phi.source.normal_form(_curve.substitute(_phi.flat_comps))
        for key in _phi.meta.contracted:
            d = _phi.meta.curve_for(key)
            if d is None:
                continue
            k = min(curve_mult_at_tower(_curve, q) for q in key)
            for _ in range(k):
                raw = _reduced_divide(_phi.source, raw, d)
        return raw
    return thunk


def _divide_out(src, raws, curve):
    """Largest k with curve^k dividing every component; returns (k, raws)."""
    k = 0
    while True:
        try:
            nxt = [_reduced_divide(src, f, curve) if not f.is_zero()
                   else _shift_zero(f, curve) for f in raws]
        except (FormError, MapError):
            return k, raws
        raws = nxt
        k += 1
        if k > 4096:
            raise MapError("runaway cancellation division")


def _shift_zero(f, curve):
    mdeg = tuple(a - b for a, b in zip(f.mdeg, curve.mdeg))
    if any(d < 0 for d in mdeg):
        raise FormError("zero component cannot shrink below degree zero")
    return Form.zero(f.blocks, mdeg, f.ctx)


def _measure_positions(forms, positions):
    """Exact multiplicities of the system at candidate towers (0s dropped)."""
    entries = {}
    by_point: dict = {}
    for t in positions:
        by_point.setdefault(t.point, set()).add(t.chain)
    dmax = max((f.total_degree() for f in forms), default=1)
    for point, chains in by_point.items():
        allchains = set()
        for ch in chains:
            for k in range(len(ch) + 1):
                allchains.add(ch[:k])
        order = 2 * max(len(c) for c in allchains) + 6
        while True:
            try:
                got = _measure_tree(forms, point, allchains, order)
                break
            except _OrderTooSmall:
                order *= 2
                if order > 64 * (dmax + 4):
                    raise MapError("measurement series order exploded")
        for ch, m in got.items():
            if m > 0:
                entries[PointTower(point, ch)] = m
    return entries


class _OrderTooSmall(Exception):
    pass


def _measure_tree(forms, point, allchains, order):
    chart = local_chart(point, order)
    base = [series_of_form(f, chart) for f in forms if not f.is_zero()]
    info = {(): (base, 0)}
    out = {}
    for ch in sorted(allchains, key=len):
        if ch not in info:
            parent = ch[:-1]
            series, sigma = info[parent]
            mprev = max(out.get(parent, 0), 0)
            cid, delta = ch[-1]
            series = [blowup_raw(s, cid, delta) for s in series]
            info[ch] = (series, sigma + mprev)
        series, sigma = info[ch]
        orders = [s.order_of_vanishing() for s in series]
        if any(o is None for o in orders):
            raise _OrderTooSmall()
        out[ch] = min(orders) - sigma
    return out


def _compose_with_plan(psi: MapRep, phi: MapRep, plan, certify: bool):
    src = phi.source
    args = phi.flat_comps
    comps = []
    exponents = []
    for i, tup in enumerate(psi.comps):
        raw_deg = sum(plan["raw_mdeg"][i])
        cands = plan["cands"][i]
        exps_i = []
        if raw_deg <= RAW_DEGREE_CUTOFF:
            raws = [src.normal_form(f.substitute(args)) for f in tup]
            for key, curve in cands:
                k, raws = _divide_out(src, raws, curve)
                exps_i.append((key, curve, k))
            comps.append(tuple(raws))
        else:
            parts = plan["interp"][i]
            if parts is None:
                raise CapacityError(
                    "composition beyond the raw-degree cutoff needs a "
                    "generic (all-proper) cancellation pattern")
            d = raw_deg - sum(m * sum(curve.mdeg) for curve, m in parts)
            comps.append(_interpolate_composite(
                psi, phi, i, (d,), [(None, m, c) for c, m in parts]))
            exps_i = [(key, curve, None) for key, curve in cands]
        exponents.append(exps_i)
    base = []
    for i in range(len(comps)):
        forms = [f for f in comps[i] if not f.is_zero()]
        measured = _measure_positions(forms, plan["positions"][i])
        base.append(MultiplicityAssignment(measured.items(),
                                           check_closed=False))
    meta = MapMeta(base, {}, verified=False)
    if certify:
        _certify_composite(src, psi.target, comps, meta)
    _fill_contracted(psi, phi, comps, meta, plan, exponents)
    return comps, meta


def _fill_contracted(psi, phi, comps, meta, plan, exponents):
    """Contracted curves of the composite, keyed by inverse-side towers."""
    contracted = {}
    divided = {}
    for exps_i in exponents:
        for key, curve, k in exps_i:
            divided[key] = (curve, k)
    for key in phi.meta.contracted:
        if key in divided:
            curve, k = divided[key]
            # a fully cancelled inner curve can remain contracted when the
            # outer map had deeper structure over it: test by sampling
            target = _still_contracted_target(psi.target, comps, curve)
            if target is not None:
                contracted[frozenset({target})] = curve
            continue
        curve = phi.meta.curve_for(key)
        if curve is None:
            continue
        moved = []
        ok = True
        for t in key:
            img = _safe_transport(psi, t)
            if img is None:
                ok = False
                break
            moved.append(img)
        if ok:
            contracted[frozenset(moved)] = curve
    for key in psi.meta.contracted:
        curve = psi.meta.curve_for(key)
        if curve is None:
            continue
        contracted.setdefault(key, _pullback_curve_thunk(phi, curve))
    meta.contracted = contracted


def _still_contracted_target(target_model, comps, curve):
    """The image point when the composite contracts `curve`, else None."""
    try:
        pts = _points_on_curve(curve, 2)
    except (MapError, GeometryError):
        return None
    images = []
    for p in pts:
        factors = []
        for tup in comps:
            vals = [f.evaluate(p.flat) for f in tup]
            if all(v.is_zero() for v in vals):
                return None
            factors.append(vals)
        images.append(ProjPoint(target_model, factors))
    if len(images) == 2 and images[0] == images[1]:
        return PointTower(images[0])
    return None


def _points_on_curve(curve: Form, n: int):
    """A few exact Q(i)-points on a plane curve (for contraction tests)."""
    from .rootfind import gaussian_roots
    if curve.blocks != (3,):
        raise MapError("curve sampling implemented on the plane only")
    out = []
    tried = 0
    a = 0
    while len(out) < n and tried < 60:
        base = [Scalar.from_rational(a), Scalar.from_rational(1 + (a % 3)),
                Scalar.one()]
        direction = [Scalar.one(), Scalar.from_rational(a + 2), Scalar.zero()]
        a += 1
        tried += 1
        coeffs = curve.restrict_line(base, direction)
        while coeffs and coeffs[-1].is_zero():
            coeffs.pop()
        if len(coeffs) <= 1:
            continue
        if any(not c.is_gaussian() for c in coeffs):
            raise MapError("curve sampling needs plain Q(i) coefficients")
        roots, _ = gaussian_roots(coeffs)
        for r, _m in roots:
            pt = ProjPoint(P2, [[b + d * r for b, d in zip(base, direction)]])
            if pt not in out:
                out.append(pt)
            if len(out) >= n:
                break
    if len(out) < n:
        raise MapError("could not sample enough points on the curve")
    return out


def _certify_composite(src, tgt, comps, meta):
    """Noether identities certify completeness on P2 and Q31 self-maps."""
    if src == tgt and src in (P2, Q31) and len(comps) == 1:
        d = comps[0][0].mdeg[0]
        ma = meta.base[0]
        s1, s2 = ma.total(), ma.total_sq()
        if src == P2:
            ok = s1 == 3 * (d - 1) and s2 == d * d - 1
        else:
            ok = s1 == 4 * (d - 1) and s2 == 2 * (d * d - 1)
        if not ok:
            raise MapError(
                f"Noether accounting failed on {src.name}: d={d}, "
                f"sum={s1}, sumsq={s2}")
    meta.verified = True


def _reduced_divide(model: Model, raw: Form, delta: Form) -> Form:
    """Exact division raw / delta in the model's coordinate ring."""
    if not model.relations:
        return raw.exact_div(delta)
    if model.name == "Q31":
        return _q31_divide(raw, delta)
    return _solve_divide(model, raw, delta)


def _q31_divide(raw: Form, delta: Form) -> Form:
    """Division in k[Q31] by the w-conjugate trick.

    delta = A + w B with A, B w-free; its conjugate is A - w B and
    delta * conj = A^2 - (x^2+y^2+z^2) B^2 is w-free, so two plain exact
    divisions finish the job.
    """
    conj = _w_negate(delta)
    num = Q31.normal_form(raw * conj)
    nrm = Q31.normal_form(delta * conj)
    if any(e[0] for e in nrm.terms):
        raise MapError("norm of the divisor is not w-free")
    a, b = _w_split(num)
    na, _ = _w_split(nrm)
    qa = a.exact_div(na) if not a.is_zero() else a
    qb = b.exact_div(na) if not b.is_zero() else b
    mdeg = (raw.mdeg[0] - delta.mdeg[0],)
    out = qa
    w = Form.variable((4,), 0, qa.ctx)
    if not qb.is_zero():
        out = qa + w * qb if not qa.is_zero() else w * qb
    return Form(out.ctx, out.blocks, mdeg, out.den, out.terms)


def _w_negate(f: Form) -> Form:
    terms = {}
    for e, c in f.terms.items():
        terms[e] = tuple(-x for x in c) if e[0] % 2 else c
    return Form(f.ctx, f.blocks, f.mdeg, f.den, terms, _normalized=True)


def _w_split(f: Form):
    """f = A + w*B with A, B w-free (f must be reduced, w-degree <= 1)."""
    a_terms = {}
    b_terms = {}
    for e, c in f.terms.items():
        if e[0] == 0:
            a_terms[e] = c
        elif e[0] == 1:
            b_terms[(0,) + e[1:]] = c
        else:
            raise MapError("form is not reduced in w")
    mdeg_a = f.mdeg
    mdeg_b = (f.mdeg[0] - 1,)
    return (Form(f.ctx, f.blocks, mdeg_a, f.den, a_terms),
            Form(f.ctx, f.blocks, mdeg_b, f.den, b_terms))


def _solve_divide(model: Model, raw: Form, delta: Form) -> Form:
    """Quotient-ring division by exact linear solving (small models only)."""
    mdeg = tuple(a - b for a, b in zip(raw.mdeg, delta.mdeg))
    if any(d < 0 for d in mdeg):
        raise FormError("quotient would have negative multidegree")
    basis = model.monomials(mdeg)
    cols = []
    row_index: dict = {}
    for e in basis:
        prod = model.normal_form(
            Form.monomial(model.blocks, e, Scalar.one(raw.ctx)) * delta)
        cols.append(dict(prod.scalar_terms()))
        for k in prod.terms:
            row_index.setdefault(k, len(row_index))
    target = model.normal_form(raw)
    for k in target.terms:
        row_index.setdefault(k, len(row_index))
    rows = []
    rhs = []
    zero = Scalar.zero(raw.ctx)
    for k, idx in sorted(row_index.items(), key=lambda kv: kv[1]):
        rows.append([col.get(k, zero) for col in cols])
        rhs.append(target.coeff(k))
    sol = solve(rows, rhs)
    out = None
    for c, e in zip(sol, basis):
        if c.is_zero():
            continue
        piece = Form.monomial(model.blocks, e, c)
        out = piece if out is None else out + piece
    if out is None:
        raise FormError("zero quotient in reduced division")
    check = model.normal_form(out * delta)
    if not (check - model.normal_form(raw)).is_zero():
        raise FormError("reduced division verification failed")
    return out


# -- interpolation path (plane source) ------------------------------------------


def _interpolate_composite(psi, phi, i, new_mdeg, delta_parts):
    src = phi.source
    if src != P2:
        raise CapacityError(
            "compositions beyond the raw-degree cutoff are only supported "
            "over the plane")
    d = new_mdeg[0]
    tup = psi.comps[i]
    xs, ys = _clean_grid(phi, delta_parts, d)
    values = []
    one = Scalar.one()
    for a in range(d + 1):
        row = []
        for b in range(d + 1 - a):
            p = [xs[a], ys[b], one]
            img = [g.evaluate(p) for g in phi.flat_comps]
            dval = one
            for _, m, curve in delta_parts:
                cv = curve.evaluate(p)
                for _ in range(m):
                    dval = dval * cv
            row.append([f.evaluate(img) / dval for f in tup])
        values.append(row)
    comps = []
    for ci in range(len(tup)):
        grid = [[values[a][b][ci] for b in range(d + 1 - a)]
                for a in range(d + 1)]
        comps.append(_triangular_interpolate(grid, xs, ys, d))
    # consistency spot checks off the grid
    checked = 0
    step = 1
    while checked < 3:
        extra = [xs[-1] + Scalar.from_rational(step),
                 ys[-1] + Scalar.from_rational(step + 1), one]
        step += 1
        if step > 60:
            raise MapError("no clean spot-check point found")
        img = [g.evaluate(extra) for g in phi.flat_comps]
        if all(v.is_zero() for v in img):
            continue
        dval = one
        for _, m, curve in delta_parts:
            cv = curve.evaluate(extra)
            for _ in range(m):
                dval = dval * cv
        if dval.is_zero():
            continue
        direct = [f.evaluate(img) / dval for f in tup]
        for f, want in zip(comps, direct):
            if not (f.evaluate(extra) - want).is_zero():
                raise MapError("interpolated composite failed the spot check")
        checked += 1
    return tuple(comps)


def _clean_grid(phi, delta_parts, d):
    """Integer nodes whose full triangular grid avoids the bad locus."""
    one = Scalar.one()

    def bad(x, y):
        p = [x, y, one]
        for _, _, curve in delta_parts:
            if curve.evaluate(p).is_zero():
                return True
        vals = [g.evaluate(p) for g in phi.flat_comps]
        offs = 0
        for b in phi.target.blocks:
            if all(vals[offs + j].is_zero() for j in range(b)):
                return True
            offs += b
        return False

    xs = []
    ys = []
    cx = 0
    while len(xs) < d + 1 or len(ys) < d + 1:
        cand = Scalar.from_rational(cx)
        cx += 1
        if len(xs) < d + 1:
            xs.append(cand)
        if len(ys) < d + 1:
            ys.append(cand)
    # screen and replace offending nodes until the whole grid is clean;
    # the bad locus is a curve, so fresh integer nodes escape it quickly
    guard = 0
    while True:
        guard += 1
        if guard > 60:
            raise MapError("could not find a clean interpolation grid")
        bad_x = set()
        bad_y = set()
        for a in range(d + 1):
            for b in range(d + 1 - a):
                if bad(xs[a], ys[b]):
                    bad_x.add(a)
                    bad_y.add(b)
        if not bad_x and not bad_y:
            return xs, ys
        for a in sorted(bad_x):
            xs[a] = Scalar.from_rational(cx)
            cx += 1
        if guard % 2 == 0:
            for b in sorted(bad_y):
                ys[b] = Scalar.from_rational(cx)
                cx += 1


def _triangular_interpolate(grid, xs, ys, d):
    """Interpolate the triangular value grid into a degree-d plane form.

    grid[a][b] is the value at (xs[a], ys[b]), defined for a + b <= d.
    """
    layers = []
    work = [row[:] for row in grid]
    for a in range(d + 1):
        layers.append(_newton_univariate(ys[:d + 1 - a], work[a]))
        for a2 in range(a + 1, d + 1):
            den = (xs[a2] - xs[a]).inverse()
            for b in range(d + 1 - a2):
                work[a2][b] = (work[a2][b] - _eval_newton(
                    layers[a], ys[:d + 1 - a], ys[b])) * den
    # assemble: P = sum_a prod_{j<a}(x - xs[j]) * N_a(y)
    x = Form.variable((3,), 0)
    y = Form.variable((3,), 1)
    z = Form.variable((3,), 2)
    acc = None
    lead = Form.constant((3,), Scalar.one())
    for a in range(d + 1):
        ply = _newton_poly_form(layers[a], ys, y, z, d - a)
        piece = lead * ply
        acc = piece if acc is None else _pad_add(acc, piece)
        if a < d:
            lead = lead * (x - z.scale(xs[a]))
    # rehomogenize the (x, y)-dehomogenization with z powers; terms built
    # above may carry stray z exponents from the Newton products, and
    # distinct ones can collapse onto one monomial, so accumulate
    out_terms: dict = {}
    for e, c in acc.scalar_terms():
        key = (e[0], e[1], d - e[0] - e[1])
        cur = out_terms.get(key)
        s = c if cur is None else cur + c
        if s.is_zero():
            out_terms.pop(key, None)
        else:
            out_terms[key] = s
    return Form.from_scalar_terms((3,), out_terms, ctx=acc.ctx, mdeg=(d,))


def _pad_add(a: Form, b: Form) -> Form:
    from .forms import _add_padded
    return _add_padded(a, b)


def _newton_univariate(nodes, values):
    """Newton divided-difference coefficients for the given nodes/values."""
    coeffs = list(values)
    n = len(nodes)
    for j in range(1, n):
        for k in range(n - 1, j - 1, -1):
            coeffs[k] = (coeffs[k] - coeffs[k - 1]) * \
                (nodes[k] - nodes[k - j]).inverse()
    return coeffs


def _eval_newton(coeffs, nodes, x):
    acc = coeffs[-1]
    for k in range(len(coeffs) - 2, -1, -1):
        acc = acc * (x - nodes[k]) + coeffs[k]
    return acc


def _newton_poly_form(coeffs, nodes, y: Form, z: Form, dmax: int) -> Form:
    acc = None
    lead = Form.constant((3,), Scalar.one())
    for k, c in enumerate(coeffs):
        if not c.is_zero():
            piece = lead.scale(c)
            acc = piece if acc is None else _pad_add(acc, piece)
        if k < len(coeffs) - 1:
            lead = lead * (y - z.scale(nodes[k]))
    if acc is None:
        return Form.zero((3,), (0,))
    return acc
