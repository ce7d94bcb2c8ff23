"""Constructors for the generator maps and Sarkisov links.

Every constructor returns a MapRep with full certified metadata (base locus,
contracted curves, inverse witness) and self-verifies: the inverse round trip
must normalize to the identity exactly, the Noether identities must close,
and the classifier must report the intended type.  Inverse witnesses are
built from the symmetric construction at the image points and corrected by
the projectivity that makes the round trip the identity; image points of
contracted curves are computed by evaluating the map at an exactly
constructed rational point of the curve, so all data stays in the scalar
tower.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .scalars import QI, Scalar, sc, sc_i, CapacityError, adjoin_sqrt
from .forms import Form, FormError, gcd_forms
from .io import parse_form
from .linalg import (nullspace, rank, det, mat_inverse, mat_mul, mat_vec,
                     identity_matrix, solve)
from .models import (Model, P2, Q31, F0, D6, FN, ProjPoint, PointTower,
                     MultiplicityAssignment, GeometryError, local_chart,
                     on_model)
from .linsys import (linear_system, conic_through, exists_conic_through_6,
                     condition_rows, monomial_forms)
from .maps import (MapRep, MapMeta, MapError, compose, identity_map,
                   projectivity, evaluate_map, transport_tower,
                   linear_matrix_of, curve_mult_at_tower, _reduced_divide,
                   _divide_out)
from .po31 import reflection_sending, po31_map, is_po31_matrix

__all__ = ["sigma0", "sigma1", "tau0", "stereographic",
           "stereographic_inverse", "quadratic_real", "quadratic_mixed",
           "standard_quintic", "special_quintic_tangent",
           "special_quintic_tower", "standard_cubic_q31", "special_cubic_q31",
           "p2_to_f0", "sarkisov_link", "aut_f0", "swap_f0",
           "projectivity_p2"]


def _pf(text, model=P2):
    return parse_form(text, model.var_names, model.blocks)


def _pt(model, *coords):
    return ProjPoint(model, [[c if isinstance(c, Scalar)
                              else Scalar.from_rational(c) for c in fac]
                             for fac in coords])


def _tower(p, *chain):
    return PointTower(p, chain)


def _orbit(*towers):
    return frozenset(towers)


# -- explicit involutions -----------------------------------------------------


def sigma0() -> MapRep:
    """The standard quadratic involution (x:y:z) -> (yz:xz:xy)."""
    comps = (_pf("y*z"), _pf("x*z"), _pf("x*y"))
    pts = [_pt(P2, (1, 0, 0)), _pt(P2, (0, 1, 0)), _pt(P2, (0, 0, 1))]
    ma = MultiplicityAssignment([(PointTower(p), 1) for p in pts])
    contracted = {
        _orbit(PointTower(pts[0])): _pf("x"),
        _orbit(PointTower(pts[1])): _pf("y"),
        _orbit(PointTower(pts[2])): _pf("z"),
    }
    m = MapRep(P2, P2, [comps], meta=MapMeta([ma], contracted))
    m2 = MapRep(P2, P2, [comps], meta=MapMeta([ma], dict(contracted)))
    m.set_inverse(m2)
    return m


def sigma1() -> MapRep:
    """The quadratic involution (x:y:z) -> (y^2+z^2 : xy : xz)."""
    comps = (_pf("y^2 + z^2"), _pf("x*y"), _pf("x*z"))
    p_real = _pt(P2, (1, 0, 0))
    p_im = _pt(P2, (0, 1, sc_i()))
    pts = [p_real, p_im, p_im.conj()]
    ma = MultiplicityAssignment([(PointTower(p), 1) for p in pts])
    contracted = {
        _orbit(PointTower(p_real)): _pf("x"),
        # y - I*z vanishes on the line sent to (0:1:-I), y + I*z on the
        # conjugate line
        _orbit(PointTower(_pt(P2, (0, 1, sc_i(0, -1))))): _pf("y - I*z"),
        _orbit(PointTower(_pt(P2, (0, 1, sc_i())))): _pf("y + I*z"),
    }
    m = MapRep(P2, P2, [comps], meta=MapMeta([ma], contracted))
    m2 = MapRep(P2, P2, [comps], meta=MapMeta([ma], dict(contracted)))
    m.set_inverse(m2)
    return m


def tau0() -> MapRep:
    """The torus involution ((x0:x1),(y0:y1)) ->
    ((x0:x1),(x0 y0 + x1 y1 : x1 y0 - x0 y1))."""
    comps1 = (_pf("x0", F0), _pf("x1", F0))
    comps2 = (_pf("x0*y0 + x1*y1", F0), _pf("x1*y0 - x0*y1", F0))
    p = _pt(F0, (sc_i(), sc(1)), (sc_i(), sc(1)))
    ma1 = MultiplicityAssignment([])
    ma2 = MultiplicityAssignment([(PointTower(p), 1),
                                  (PointTower(p.conj()), 1)])
    contracted = {
        _orbit(PointTower(p)): _pf("x0 - I*x1", F0),
        _orbit(PointTower(p.conj())): _pf("x0 + I*x1", F0),
    }
    m = MapRep(F0, F0, [comps1, comps2], meta=MapMeta([ma1, ma2], contracted))
    m2 = MapRep(F0, F0, [comps1, comps2],
                meta=MapMeta([ma1, ma2], dict(contracted)))
    m.set_inverse(m2)
    return m


# -- stereographic projection ---------------------------------------------------

_P_NORTH = None


def _north():
    global _P_NORTH
    if _P_NORTH is None:
        _P_NORTH = _pt(Q31, (1, 0, 0, 1))
    return _P_NORTH


def _stereo_north_pair():
    """The stereographic projection from the north pole and its inverse."""
    phi_comps = (_pf("x", Q31), _pf("y", Q31), _pf("w - z", Q31))
    inv_comps = (_pf("x^2 + y^2 + z^2"), _pf("2*x*z"), _pf("2*y*z"),
                 _pf("x^2 + y^2 - z^2"))
    pN = _north()
    ma_phi = MultiplicityAssignment([(PointTower(pN), 1)],
                                    check_closed=False)
    im_pair = [_pt(P2, (1, sc_i(), 0)), _pt(P2, (1, sc_i(0, -1), 0))]
    ma_inv = MultiplicityAssignment([(PointTower(p), 1) for p in im_pair])
    contracted_phi = {
        _orbit(PointTower(im_pair[0]), PointTower(im_pair[1])):
            _pf("w - z", Q31),
    }
    contracted_inv = {_orbit(PointTower(pN)): _pf("z")}
    phi = MapRep(Q31, P2, [phi_comps],
                 meta=MapMeta([ma_phi], contracted_phi))
    inv = MapRep(P2, Q31, [inv_comps],
                 meta=MapMeta([ma_inv], contracted_inv))
    phi.set_inverse(inv)
    return phi


def stereographic(center: ProjPoint = None) -> MapRep:
    """Stereographic projection Q31 -> P2 from a real center.

    Centers other than the north pole are reached by an exact J-reflection;
    when no such element exists over the current scalar field a capacity
    error is raised (the tower is never extended here).
    """
    phi = _stereo_north_pair()
    if center is None or center == _north():
        return phi
    if not center.is_real() or not on_model(center, Q31):
        raise GeometryError("stereographic center must be a real point "
                            "of the quadric")
    try:
        mat = reflection_sending(center, _north())
    except GeometryError as exc:
        raise CapacityError(
            f"no rational PO(3,1) element moves {center!r} to the north "
            f"pole: {exc}") from exc
    move = po31_map(mat)
    return compose(phi, move)


def stereographic_inverse(center: ProjPoint = None) -> MapRep:
    return stereographic(center).inverse


# -- generic constructor helpers ---------------------------------------------


def _line_through(p: ProjPoint, q: ProjPoint) -> Form:
    """The line through two distinct plane points (cross product)."""
    a = p.flat
    b = q.flat
    co = [a[1] * b[2] - a[2] * b[1],
          a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]]
    if all(c.is_zero() for c in co):
        raise GeometryError("points coincide; no unique line")
    terms = {(1, 0, 0): co[0], (0, 1, 0): co[1], (0, 0, 1): co[2]}
    return Form.from_scalar_terms((3,), terms, mdeg=(1,)).monic()


def _collinear(p, q, r) -> bool:
    rows = [list(p.flat), list(q.flat), list(r.flat)]
    return det(rows).is_zero()


_DIR_CANDIDATES = [0, 1, -1, 2, -2, 3, 5, 7, -3, 4, -5, 8, 9, 11]


def _sample_on_curve(curve: Form, through: ProjPoint, avoid) -> ProjPoint:
    """A point of a plane curve: second intersection with lines through a
    known point of the curve."""
    if curve.mdeg[0] == 1:
        # a line: parametrize its solution space directly (it may be
        # imaginary, so real walking directions would never stay on it)
        co = [curve.coeff(tuple(1 if j == k else 0 for j in range(3)))
              for k in range(3)]
        sols = nullspace([co], 3)
        v1, v2 = sols
        for c in _DIR_CANDIDATES:
            t = Scalar.from_rational(c)
            coords = [a + t * b for a, b in zip(v1, v2)]
            try:
                pt = ProjPoint(P2, [coords])
            except GeometryError:
                continue
            if pt not in avoid and pt != through:
                return pt
        raise GeometryError("could not sample a point on the line")
    base = list(through.flat)
    for c1 in _DIR_CANDIDATES:
        for c2 in _DIR_CANDIDATES:
          for pat in range(3):
            picks = [Scalar.one(), Scalar.from_rational(c1),
                     Scalar.from_rational(c2)]
            direction = [picks[(j - pat) % 3] for j in range(3)]
            raw = curve.restrict_line(base, direction)
            coeffs = list(raw)
            while coeffs and coeffs[-1].is_zero():
                coeffs.pop()
            if not coeffs:
                # the test line lies inside the curve: walk along it
                for tval in _DIR_CANDIDATES[1:]:
                    t = Scalar.from_rational(tval)
                    try:
                        pt = ProjPoint(P2, [[b + d * t for b, d
                                             in zip(base, direction)]])
                    except GeometryError:
                        continue
                    if pt not in avoid and pt != through:
                        return pt
                continue
            if len(coeffs) != curve.mdeg[0] + 1:
                continue
            # t = 0 is the known point; factor it out
            if not coeffs[0].is_zero():
                continue
            lin = coeffs[1:]
            if len(lin) == 2:
                t = -(lin[0] / lin[1])
                pt = ProjPoint(P2, [[b + d * t
                                     for b, d in zip(base, direction)]])
                if pt not in avoid and pt != through:
                    return pt
    raise GeometryError("could not sample a point on the curve")


def _sample_on_quadric_conic(plane: Form, through: ProjPoint, avoid):
    """A point of the conic (plane section) of Q31 through a known point."""
    base = list(through.flat)
    rel = Q31.relations[0]
    # directions inside the plane: solve the linear form for one coordinate
    co = [plane.coeff(tuple(1 if j == k else 0 for j in range(4)))
          for k in range(4)]
    piv = next(k for k in range(4) if not co[k].is_zero())
    inv = co[piv].inverse()
    for c in range(len(_DIR_CANDIDATES) ** 2):
        c1 = _DIR_CANDIDATES[c % len(_DIR_CANDIDATES)]
        c2 = _DIR_CANDIDATES[(c // len(_DIR_CANDIDATES)) %
                             len(_DIR_CANDIDATES)]
        free = [k for k in range(4) if k != piv]
        direction = [Scalar.zero()] * 4
        direction[free[0]] = Scalar.one()
        direction[free[1]] = Scalar.from_rational(c1)
        direction[free[2]] = Scalar.from_rational(c2)
        direction[piv] = -inv * sum(
            (co[k] * direction[k] for k in free), Scalar.zero())
        coeffs = rel.restrict_line(base, direction)
        while coeffs and coeffs[-1].is_zero():
            coeffs.pop()
        if len(coeffs) != 3 or not coeffs[0].is_zero():
            continue
        t = -(coeffs[1] / coeffs[2])
        if t.is_zero():
            continue
        pt = ProjPoint(Q31, [[b + d * t for b, d in zip(base, direction)]])
        if pt not in avoid and pt != through and on_model(pt, Q31):
            return pt
    raise GeometryError("could not sample a point on the quadric conic")


def _system_map(model, mdeg, assignment, expected_dim):
    basis = linear_system(model, mdeg, assignment)
    if len(basis) != expected_dim:
        raise GeometryError(
            f"linear system has dimension {len(basis)}, expected "
            f"{expected_dim} (degenerate configuration)")
    return basis


def _linearize(f_comps_flat, g_tuple, src: Model, candidates):
    """Matrix M with g o f = M (linear), via empirical cancellation."""
    raws = [src.normal_form(g.substitute(f_comps_flat)) for g in g_tuple]
    for curve in candidates:
        _, raws = _divide_out(src, raws, curve)
    n = src.nvars
    mat = []
    for f in raws:
        if sum(f.mdeg) != 1:
            raise GeometryError(
                "projectivity correction failed: composite is not linear "
                f"(multidegree {f.mdeg})")
        row = []
        for j in range(n):
            exp = [0] * n
            exp[j] = 1
            row.append(f.coeff(tuple(exp)))
        mat.append(row)
    return mat


def _wire_selfmap(model, fwd_comps, fwd_meta, cand_comps, cand_meta,
                  delta_curves, inv_curves=()):
    """Finish a self-map constructor: correct the candidate inverse by the
    projectivity that closes the round trip, link the witnesses, verify.

    `inv_curves` are target-side contracted curves whose keys (base towers
    of the forward map) are found empirically after the witnesses exist.
    """
    fwd = MapRep(model, model, [tuple(fwd_comps)], meta=fwd_meta)
    flat = fwd.flat_comps
    mat = _linearize(flat, cand_comps, model, delta_curves)
    minv = mat_inverse(mat)
    inv_comps = []
    for row in minv:
        acc = None
        for c, g in zip(row, cand_comps):
            if c.is_zero():
                continue
            piece = g.scale(c)
            acc = piece if acc is None else acc + piece
        inv_comps.append(acc)
    inv = MapRep(model, model, [tuple(inv_comps)], meta=cand_meta)
    fwd.set_inverse(inv)
    if inv_curves:
        _label_inverse_contracted(fwd, inv_curves)
    rt = compose(inv, fwd, certify=False)
    if not rt.is_identity():
        raise GeometryError("inverse round trip is not the identity")
    rt2 = compose(fwd, inv, certify=False)
    if not rt2.is_identity():
        raise GeometryError("reverse round trip is not the identity")
    return fwd


# -- quadratic maps -------------------------------------------------------------


def _quadratic(points: List[ProjPoint]) -> MapRep:
    if len(points) != 3 or len(set(points)) != 3:
        raise GeometryError("three distinct base points required")
    if _collinear(*points):
        raise GeometryError("quadratic base points are collinear")
    ma = MultiplicityAssignment([(PointTower(p), 1) for p in points])
    basis = _system_map(P2, (2,), ma, 3)
    lines = {}
    images = {}
    used = set(points)
    for i, p in enumerate(points):
        others = [q for q in points if q != p]
        line = _line_through(*others)
        sample = _sample_on_curve(line, others[0], used)
        vals = [f.evaluate(sample.flat) for f in basis]
        if all(v.is_zero() for v in vals):
            raise GeometryError("sampled point is a base point")
        q_img = ProjPoint(P2, [vals])
        lines[i] = line
        images[i] = q_img
    if len(set(images.values())) != 3 or _collinear(*images.values()):
        raise GeometryError("image triangle is degenerate")
    contracted = {_orbit(PointTower(images[i])): lines[i]
                  for i in range(3)}
    fwd_meta = MapMeta([ma], contracted)
    # symmetric construction at the images
    ma_q = MultiplicityAssignment([(PointTower(q), 1)
                                   for q in images.values()])
    cand = _system_map(P2, (2,), ma_q, 3)
    back_lines = {}
    for i in range(3):
        others = [images[j] for j in range(3) if j != i]
        back_lines[i] = _line_through(*others)
    cand_meta = MapMeta(
        [ma_q],
        {_orbit(PointTower(points[i])): back_lines[i] for i in range(3)})
    delta = [lines[i] for i in range(3)]
    return _wire_selfmap(P2, basis, fwd_meta, cand, cand_meta, delta)


def quadratic_real(p1: ProjPoint, p2: ProjPoint, p3: ProjPoint) -> MapRep:
    """Quadratic map with three real proper base points (sigma0 class)."""
    for p in (p1, p2, p3):
        if not p.is_real():
            raise GeometryError("quadratic_real needs real points")
    return _quadratic([p1, p2, p3])


def quadratic_mixed(p_real: ProjPoint, q_im: ProjPoint) -> MapRep:
    """Quadratic map with one real and two conjugate imaginary base points
    (sigma1 class)."""
    if not p_real.is_real():
        raise GeometryError("first point must be real")
    if q_im.is_real():
        raise GeometryError("second point must be imaginary")
    return _quadratic([p_real, q_im, q_im.conj()])


# -- quintic transformations -----------------------------------------------------


def _check_imaginary_pairs(points):
    for p in points:
        if p.is_real():
            raise GeometryError(f"point {p!r} is real; need imaginary pairs")


def _conic_irreducible(conic: Form) -> bool:
    # 3x3 symmetric Gram determinant of the ternary quadratic form
    half = Scalar.from_rational(1, 2)
    def g(e):
        return conic.coeff(e)
    rows = [
        [g((2, 0, 0)), g((1, 1, 0)) * half, g((1, 0, 1)) * half],
        [g((1, 1, 0)) * half, g((0, 2, 0)), g((0, 1, 1)) * half],
        [g((1, 0, 1)) * half, g((0, 1, 1)) * half, g((0, 0, 2))],
    ]
    return not det(rows).is_zero()


def standard_quintic(p1: ProjPoint, p2: ProjPoint, p3: ProjPoint) -> MapRep:
    """Standard quintic at three conjugate imaginary point pairs."""
    reps = [p1, p2, p3]
    _check_imaginary_pairs(reps)
    six = []
    for p in reps:
        six.extend([p, p.conj()])
    if len(set(six)) != 6:
        raise GeometryError("the six points are not distinct")
    if exists_conic_through_6(six):
        raise GeometryError("the six points lie on a conic")
    conics = {}
    for i, p in enumerate(six):
        others = [q for q in six if q != p]
        conic = conic_through(others)
        if not _conic_irreducible(conic):
            raise GeometryError(
                "a five-point conic is reducible (degenerate configuration)")
        conics[i] = conic
    ma = MultiplicityAssignment([(PointTower(p), 2) for p in six])
    basis = _system_map(P2, (5,), ma, 3)
    sixset = set(six)
    images = {}
    for i, p in enumerate(six):
        anchor = next(q for q in six if q != p)
        sample = _sample_on_curve(conics[i], anchor, sixset)
        vals = [f.evaluate(sample.flat) for f in basis]
        if all(v.is_zero() for v in vals):
            raise GeometryError("conic sample hit the base locus")
        images[i] = ProjPoint(P2, [vals])
    img_list = [images[i] for i in range(6)]
    if len(set(img_list)) != 6:
        raise GeometryError("image points are not distinct")
    if exists_conic_through_6(img_list):
        raise GeometryError("image points lie on a conic")
    contracted = {_orbit(PointTower(images[i])): conics[i] for i in range(6)}
    fwd_meta = MapMeta([ma], contracted)
    ma_q = MultiplicityAssignment([(PointTower(q), 2) for q in img_list])
    cand = _system_map(P2, (5,), ma_q, 3)
    back = {}
    for i in range(6):
        others = [img_list[j] for j in range(6) if j != i]
        back[i] = conic_through(others)
    cand_meta = MapMeta(
        [ma_q], {_orbit(PointTower(six[i])): back[i] for i in range(6)})
    delta = [conics[i] for i in range(6)]
    return _wire_selfmap(P2, basis, fwd_meta, cand, cand_meta, delta)


def _probe_direction(exclude, ctx=QI):
    for c in _DIR_CANDIDATES:
        d = Scalar.from_rational(c)
        if all(not (d - e).is_zero() for e in exclude):
            return d
    raise GeometryError("no probe direction available")


def _crossing_tower_key(f: MapRep, curve: Form, sixset, height=2):
    """Key tower for a contracted curve: image point plus approach
    direction, found by transporting an arc crossing the curve."""
    anchor_pt = None
    sample = None
    for p in sixset:
        if curve.evaluate(p.flat).is_zero():
            anchor_pt = p
            break
    if anchor_pt is None:
        raise GeometryError("no anchor on the contracted curve")
    sample = _sample_on_curve(curve, anchor_pt, sixset)
    for c in _DIR_CANDIDATES:
        tower = PointTower(sample, [("a", Scalar.from_rational(c))])
        try:
            img = transport_tower(f, tower, height=height)
        except (MapError, GeometryError, ZeroDivisionError):
            continue
        return img
    raise GeometryError("could not transport a crossing arc")


def special_quintic_tangent(p1: ProjPoint, p2: ProjPoint,
                            d3: Tuple[str, Scalar]) -> MapRep:
    """Special quintic: two proper pairs plus a pair in the first
    neighbourhood of the second pair."""
    _check_imaginary_pairs([p1, p2])
    cid, delta = d3
    t3 = PointTower(p2, [(cid, delta)])
    t3c = t3.conj()
    four = [p1, p1.conj(), p2, p2.conj()]
    if len(set(four)) != 4:
        raise GeometryError("proper points are not distinct")
    for a in range(2):
        for b in range(a + 1, 3):
            for c in range(b + 1, 4):
                if _collinear(four[a], four[b], four[c]):
                    raise GeometryError("three of the four proper points "
                                        "are collinear")
    scheme = [(PointTower(p), 1) for p in four] + [(t3, 1), (t3c, 1)]
    rows, basis = condition_rows(P2, (2,),
                                 MultiplicityAssignment(scheme))
    if rank(rows) != 6:
        raise GeometryError("a conic passes through the six-point scheme")
    ma = MultiplicityAssignment(
        [(PointTower(p), 2) for p in four] + [(t3, 2), (t3c, 2)])
    comps = _system_map(P2, (5,), ma, 3)
    fwd_pre = MapRep(P2, P2, [tuple(comps)],
                     meta=MapMeta([ma], {}))
    # contracted conics: through the scheme minus one tower / one proper pt
    def conic_sys(entries):
        sys_ = linear_system(P2, (2,),
                             MultiplicityAssignment(entries,
                                                    check_closed=False),
                             realify=False)
        if len(sys_) != 1:
            raise GeometryError("contracted conic is not unique")
        return sys_[0]

    C = conic_sys([(PointTower(p), 1) for p in four] + [(t3, 1)])
    Cc = C.conj().monic()
    K = conic_sys([(PointTower(four[1]), 1), (PointTower(four[2]), 1),
                   (PointTower(four[3]), 1), (t3, 1), (t3c, 1)])
    Kc = K.conj().monic()
    sixset = set(four)
    # image data, found empirically
    q_pairs = {}
    for curve in (K, Kc):
        anchor = next(p for p in four if curve.evaluate(p.flat).is_zero())
        s = _sample_on_curve(curve, anchor, sixset)
        vals = [f.evaluate(s.flat) for f in comps]
        q_pairs[curve] = ProjPoint(P2, [vals])
    # q2 = image of the deepest exceptional: transport of height-3 arcs
    dprobe = _probe_direction([])
    deep = PointTower(p2, [(cid, delta), ("a", dprobe)])
    q2 = transport_tower(fwd_pre, deep, height=1).point
    q2c = q2.conj()
    # tower direction over q2: approach of arcs crossing C
    tq3 = _crossing_tower_key(fwd_pre, C, sixset | {q2, q2c}, height=2)
    if tq3.point != q2:
        q2, q2c = tq3.point, tq3.point.conj()
    tq3c = tq3.conj()
    q1 = q_pairs[K]
    q1c = q_pairs[Kc]
    if q1c != q1.conj():
        q1c = q1.conj()
    ma_q = MultiplicityAssignment(
        [(PointTower(q1), 2), (PointTower(q1c), 2),
         (PointTower(q2), 2), (PointTower(q2c), 2), (tq3, 2), (tq3c, 2)])
    cand = _system_map(P2, (5,), ma_q, 3)
    contracted = {
        _orbit(PointTower(q1)): K,
        _orbit(PointTower(q1c)): Kc,
        _orbit(tq3): C,
        _orbit(tq3c): Cc,
    }
    fwd_meta = MapMeta([ma], contracted)
    # candidate-inverse contracted data, mirrored empirically
    def conic_sys_q(entries):
        sys_ = linear_system(P2, (2,),
                             MultiplicityAssignment(entries,
                                                    check_closed=False),
                             realify=False)
        if len(sys_) != 1:
            raise GeometryError("mirror conic is not unique")
        return sys_[0]

    Cq = conic_sys_q([(PointTower(q1), 1), (PointTower(q1c), 1),
                      (PointTower(q2), 1), (PointTower(q2c), 1), (tq3, 1)])
    Cqc = Cq.conj().monic()
    Kq = conic_sys_q([(PointTower(q1c), 1), (PointTower(q2), 1),
                      (PointTower(q2c), 1), (tq3, 1), (tq3c, 1)])
    Kqc = Kq.conj().monic()
    cand_meta = MapMeta([ma_q], {})
    return _wire_selfmap(P2, comps, fwd_meta, cand, cand_meta,
                         [C, Cc, K, Kc], inv_curves=[Cq, Cqc, Kq, Kqc])


def _label_inverse_contracted(fwd: MapRep, curves):
    """Attach contracted curves to the inverse witness, labelled by where
    the inverse actually sends them."""
    inv = fwd.inverse
    base_towers = [t for t, _ in fwd.meta.base[0]]
    contracted = dict(inv.meta.contracted) if inv.meta else {}
    for curve in curves:
        try:
            key = _match_contracted_target(inv, curve, base_towers)
        except (MapError, GeometryError):
            continue
        if key is not None:
            contracted[_orbit(key)] = curve
    if inv.meta is not None:
        inv.meta.contracted = contracted


def _two_samples(model, curve: Form, anchors, avoid):
    """Two distinct non-special points on a contracted curve, preferring
    anchored sampling through known points of the curve."""
    on_curve = [p for p in anchors
                if curve.evaluate(p.flat).is_zero()]
    out = []
    avoid = set(avoid) | set(anchors)
    for anchor in on_curve:
        try:
            if model == P2:
                s = _sample_on_curve(curve, anchor, avoid | set(out))
            elif model == Q31:
                s = _sample_on_quadric_conic(curve, anchor,
                                             avoid | set(out))
            else:
                break
        except GeometryError:
            continue
        if s not in out:
            out.append(s)
        if len(out) == 2:
            return out
    while len(out) < 2:
        extra = _curve_points_on(model, curve, 4)
        for s in extra:
            if s not in out and s not in avoid:
                out.append(s)
            if len(out) == 2:
                return out
        raise GeometryError("could not sample the contracted curve twice")
    return out


def _match_contracted_target(g: MapRep, curve: Form, base_towers):
    """The base tower of g-inverse onto which g contracts `curve`."""
    anchors = [t.point for t in (g.meta.base[0].towers() if g.meta else [])]
    pts = _two_samples(g.source, curve, anchors,
                       [t.point for t in base_towers])
    imgs = [evaluate_map(g, p) for p in pts]
    if any(i is None for i in imgs) or imgs[0] != imgs[1]:
        return None
    root = imgs[0]
    cands = [t for t in base_towers if t.point == root]
    if not cands:
        return None
    deepest = max(cands, key=lambda t: t.height)
    if deepest.height == 1:
        return deepest
    probe = _crossing_key_from_sample(g, pts[0], deepest.height)
    best = None
    for t in cands:
        if t.chain == probe.chain[:len(t.chain)]:
            if best is None or t.height > best.height:
                best = t
    return best


def _curve_points_on(model, curve: Form, n: int):
    """Exact points on a contracted curve of the given model."""
    from .maps import _points_on_curve
    if model == P2:
        return _points_on_curve(curve, n)
    if model == Q31:
        from .locus import _q31_parametrization
        par = list(_q31_parametrization())
        pulled = curve.substitute(par)
        out = []
        for p in _points_on_curve(pulled, 3 * n):
            vals = [f.evaluate(p.flat) for f in par]
            if all(v.is_zero() for v in vals):
                continue
            q = ProjPoint(Q31, [vals])
            if q not in out and on_model(q, Q31):
                out.append(q)
            if len(out) >= n:
                return out
        raise GeometryError("could not sample the quadric curve")
    raise GeometryError(f"curve sampling unsupported on {model.name}")


def _crossing_key_from_sample(g: MapRep, sample: ProjPoint, height: int):
    for c in _DIR_CANDIDATES:
        tower = PointTower(sample, [("a", Scalar.from_rational(c))])
        try:
            return transport_tower(g, tower, height=height)
        except (MapError, GeometryError, ZeroDivisionError):
            continue
    raise GeometryError("could not transport a crossing arc")


def special_quintic_tower(p1: ProjPoint, d2: Tuple[str, Scalar],
                          d3: Tuple[str, Scalar]) -> MapRep:
    """Special quintic with a full height-3 tower over one imaginary pair."""
    _check_imaginary_pairs([p1])
    if d3 == ("b", Scalar.zero()) or (d3[0] == "b" and d3[1].is_zero()):
        raise GeometryError("the level-3 direction lies on the exceptional "
                            "divisor of the first point")
    t2 = PointTower(p1, [d2])
    t3 = PointTower(p1, [d2, d3])
    towers = [PointTower(p1), t2, t3]
    all_towers = towers + [t.conj() for t in towers]
    scheme = [(t, 1) for t in all_towers]
    rows, _ = condition_rows(P2, (2,), MultiplicityAssignment(scheme))
    if rank(rows) != 6:
        raise GeometryError("a conic passes through the six-point scheme")
    ma = MultiplicityAssignment([(t, 2) for t in all_towers])
    comps = _system_map(P2, (5,), ma, 3)
    fwd_pre = MapRep(P2, P2, [tuple(comps)], meta=MapMeta([ma], {}))

    def conic_sys(entries):
        sys_ = linear_system(P2, (2,),
                             MultiplicityAssignment(entries,
                                                    check_closed=False),
                             realify=False)
        if len(sys_) != 1:
            raise GeometryError("contracted conic is not unique")
        return sys_[0]

    C = conic_sys([(PointTower(p1), 1), (PointTower(p1.conj()), 1),
                   (t2, 1), (t2.conj(), 1), (t3, 1)])
    Cc = C.conj().monic()
    # image structure: probe with arcs
    p1c = p1.conj()
    probe_levels = []
    dgen = _probe_direction([d2[1]])
    # image of the deepest exceptional: height-4 arcs degenerate; use
    # transports of arcs through the tower levels
    deep = PointTower(p1, [d2, d3, ("a", _probe_direction([]))])
    q1 = transport_tower(fwd_pre, deep, height=1).point
    tq = _crossing_tower_key(fwd_pre, C, {p1, p1c, q1, q1.conj()}, height=3)
    if tq.point != q1:
        q1 = tq.point
    q1c = q1.conj()
    tq2 = PointTower(q1, tq.chain[:1])
    tq3 = PointTower(q1, tq.chain[:2])
    ma_q = MultiplicityAssignment(
        [(PointTower(q1), 2), (PointTower(q1c), 2),
         (tq2, 2), (tq2.conj(), 2), (tq3, 2), (tq3.conj(), 2)])
    cand = _system_map(P2, (5,), ma_q, 3)
    contracted = {_orbit(tq3): C, _orbit(tq3.conj()): Cc}
    fwd_meta = MapMeta([ma], contracted)
    cand_meta = MapMeta([ma_q], {})
    Cq = linear_system(
        P2, (2,),
        MultiplicityAssignment(
            [(PointTower(q1), 1), (PointTower(q1c), 1), (tq2, 1),
             (tq2.conj(), 1), (tq3, 1)], check_closed=False),
        realify=False)
    if len(Cq) != 1:
        raise GeometryError("mirror conic of the tower quintic not unique")
    return _wire_selfmap(P2, comps, fwd_meta, cand, cand_meta, [C, Cc],
                         inv_curves=[Cq[0], Cq[0].conj().monic()])


# -- cubic transformations on the quadric ------------------------------------------


def _plane_through(points) -> Form:
    rows = [list(p.flat) for p in points]
    basis = nullspace(rows, 4)
    if len(basis) != 1:
        raise GeometryError("three points do not span a unique plane")
    vec = basis[0]
    terms = {tuple(1 if j == k else 0 for j in range(4)): vec[k]
             for k in range(4) if not vec[k].is_zero()}
    return Form.from_scalar_terms((4,), terms, mdeg=(1,)).monic()


def _image_quadric(basis):
    """The unique quadric relation among four cubic-section components."""
    pairs = [(i, j) for i in range(4) for j in range(i, 4)]
    cols = []
    row_index = {}
    for (i, j) in pairs:
        prod = Q31.normal_form(basis[i] * basis[j])
        col = dict(prod.scalar_terms())
        cols.append(col)
        for e in col:
            row_index.setdefault(e, len(row_index))
    rows = []
    zero = Scalar.zero()
    for e, _ in sorted(row_index.items(), key=lambda kv: kv[1]):
        rows.append([col.get(e, zero) for col in cols])
    kernel = nullspace(rows, len(pairs))
    if len(kernel) != 1:
        raise GeometryError("image quadric is not unique "
                            f"(kernel dimension {len(kernel)})")
    vec = kernel[0]
    gram = [[Scalar.zero()] * 4 for _ in range(4)]
    half = Scalar.from_rational(1, 2)
    for (i, j), c in zip(pairs, vec):
        if i == j:
            gram[i][i] = c
        else:
            gram[i][j] = c * half
            gram[j][i] = c * half
    return gram


def _qval(gram, v, w):
    acc = None
    for i in range(len(gram)):
        if v[i].is_zero():
            continue
        for j in range(len(gram)):
            if gram[i][j].is_zero() or w[j].is_zero():
                continue
            term = v[i] * gram[i][j] * w[j]
            acc = term if acc is None else acc + term
    return acc if acc is not None else Scalar.zero(gram[0][0].ctx)


def _diagonalize_symmetric(gram):
    """Congruence diagonalization over the real subfield: returns (N, D)
    with N^T G N = diag(D)."""
    n = len(gram)
    g = [row[:] for row in gram]
    basis = identity_matrix(n, g[0][0].ctx)
    cols = [[basis[i][j] for i in range(n)] for j in range(n)]
    done = []
    vecs = []
    for _ in range(n):
        # pick a vector with nonzero form value among remaining columns
        pick = None
        for v in cols:
            val = _qval(gram, v, v)
            if not val.is_zero():
                pick = v
                break
        if pick is None:
            # isotropic remainder: mix two columns with nonzero pairing
            for a in range(len(cols)):
                for b in range(a + 1, len(cols)):
                    if not _qval(gram, cols[a], cols[b]).is_zero():
                        pick = [x + y for x, y in zip(cols[a], cols[b])]
                        break
                if pick is not None:
                    break
        if pick is None:
            raise GeometryError("quadric rank is too small")
        val = _qval(gram, pick, pick)
        vecs.append(pick)
        done.append(val)
        inv = val.inverse()
        new_cols = []
        for v in cols:
            lam = _qval(gram, pick, v) * inv
            w = [x - lam * y for x, y in zip(v, pick)]
            if any(not c.is_zero() for c in w):
                new_cols.append(w)
        cols = new_cols[:n - len(vecs)]
    N = [[vecs[j][i] for j in range(n)] for i in range(n)]
    return N, done


def _normalize_quadric_components(basis):
    """Recombine four cubic sections so they satisfy the standard quadric
    relation; may extend the scalar tower by square roots."""
    gram = _image_quadric(basis)
    N, diag = _diagonalize_symmetric(gram)
    signs = [d.sign() for d in diag]
    if sum(signs) == 2:
        diag = [-d for d in diag]
        signs = [-s for s in signs]
    if sum(signs) != -2:
        raise GeometryError(
            f"image quadric has signature {signs}; not the sphere quadric")
    order = sorted(range(4), key=lambda k: (0 if signs[k] > 0 else 1, k))
    # U = N^{-1} B; target components W = U0, X_i = sqrt(-d_i/d_0) U_i
    ninv = mat_inverse(N)
    u_comps = []
    for row in ninv:
        acc = None
        for c, b in zip(row, basis):
            if c.is_zero():
                continue
            piece = b.scale(c)
            acc = piece if acc is None else acc + piece
        u_comps.append(acc)
    k0 = order[0]
    d0 = diag[k0]
    out = [u_comps[k0]]
    ctx = d0.ctx
    for k in order[1:]:
        ratio = -(diag[k] / d0)
        if not ratio.is_rational():
            raise CapacityError("quadric scaling needs a non-rational "
                                "square root")
        ctx, root = adjoin_sqrt(ctx, ratio.to_ctx(ctx))
        out.append(u_comps[k].scale(root))
    return out


def _cubic_q31(assignment: MultiplicityAssignment, planes, normalize=True):
    comps4 = linear_system(Q31, (3,), assignment)
    if len(comps4) != 4:
        raise GeometryError(
            f"cubic section system has dimension {len(comps4)}, expected 4")
    # the candidate inverse skips normalization: the projectivity
    # correction absorbs any PGL4 mismatch, so a second tower extension is
    # never needed
    comps = _normalize_quadric_components(comps4) if normalize else comps4
    base_pts = [t.point for t, _ in assignment]
    images = {}
    for key, plane in planes.items():
        anchor = next((p for p in base_pts
                       if plane.evaluate(p.flat).is_zero()), None)
        if anchor is None:
            raise GeometryError("no anchor on a contracted plane section")
        s = _sample_on_quadric_conic(plane, anchor, set(base_pts))
        vals = [f.evaluate(s.flat) for f in comps]
        if all(v.is_zero() for v in vals):
            raise GeometryError("conic sample hit the base locus")
        images[key] = ProjPoint(Q31, [vals])
    return comps, images


def standard_cubic_q31(p1: ProjPoint, p2: ProjPoint) -> MapRep:
    """Standard cubic of the quadric at two conjugate imaginary pairs."""
    _check_imaginary_pairs([p1, p2])
    four = [p1, p1.conj(), p2, p2.conj()]
    for p in four:
        if not on_model(p, Q31):
            raise GeometryError("base points must lie on the quadric")
    if len(set(four)) != 4:
        raise GeometryError("the four points are not distinct")
    if det([list(p.flat) for p in four]).is_zero():
        raise GeometryError("the four points lie on a plane")
    ma = MultiplicityAssignment([(PointTower(p), 2) for p in four])
    planes = {}
    for i, p in enumerate(four):
        others = [q for q in four if q != p]
        planes[i] = _plane_through(others)
    comps, images = _cubic_q31(ma, planes)
    img_list = [images[i] for i in range(4)]
    if len(set(img_list)) != 4 or det(
            [list(p.flat) for p in img_list]).is_zero():
        raise GeometryError("image points are degenerate")
    contracted = {_orbit(PointTower(images[i])): planes[i]
                  for i in range(4)}
    fwd_meta = MapMeta([ma], contracted)
    ma_q = MultiplicityAssignment([(PointTower(q), 2) for q in img_list])
    planes_q = {}
    for i in range(4):
        others = [img_list[j] for j in range(4) if j != i]
        planes_q[i] = _plane_through(others)
    cand, _ = _cubic_q31(ma_q, {}, normalize=False)
    cand_meta = MapMeta(
        [ma_q], {_orbit(PointTower(four[i])): planes_q[i]
                 for i in range(4)})
    delta = [planes[i] for i in range(4)]
    return _wire_selfmap(Q31, comps, fwd_meta, cand, cand_meta, delta)


def special_cubic_q31(p1: ProjPoint, d2: Tuple[str, Scalar]) -> MapRep:
    """Special cubic: one imaginary pair plus a first-neighbourhood pair."""
    _check_imaginary_pairs([p1])
    if not on_model(p1, Q31):
        raise GeometryError("base point must lie on the quadric")
    t2 = PointTower(p1, [d2])
    towers = [PointTower(p1), PointTower(p1.conj()), t2, t2.conj()]
    scheme = MultiplicityAssignment([(t, 1) for t in towers])
    rows, _ = condition_rows(Q31, (1,), scheme)
    if rank(rows) != 4:
        raise GeometryError("a conic of the quadric passes through the "
                            "four-point scheme")
    ma = MultiplicityAssignment([(t, 2) for t in towers])

    def plane_sys(entries):
        sys_ = linear_system(Q31, (1,),
                             MultiplicityAssignment(entries,
                                                    check_closed=False),
                             realify=False)
        if len(sys_) != 1:
            raise GeometryError("contracted plane section is not unique")
        return sys_[0]

    C = plane_sys([(PointTower(p1), 1), (PointTower(p1.conj()), 1),
                   (t2, 1)])
    Cc = C.conj().monic()
    comps, _imgs = _cubic_q31(ma, {})
    fwd_pre = MapRep(Q31, Q31, [tuple(comps)], meta=MapMeta([ma], {}))
    dgen = _probe_direction([d2[1]])
    deep = PointTower(p1, [d2, ("a", _probe_direction([]))])
    q1 = transport_tower(fwd_pre, deep, height=1).point
    tq = _crossing_tower_q31(fwd_pre, C, {p1, p1.conj()}, height=2)
    if tq.point != q1:
        q1 = tq.point
    q1c = q1.conj()
    tq2 = PointTower(q1, tq.chain[:1])
    ma_q = MultiplicityAssignment(
        [(PointTower(q1), 2), (PointTower(q1c), 2),
         (tq2, 2), (tq2.conj(), 2)])
    cand, _ = _cubic_q31(ma_q, {}, normalize=False)
    contracted = {_orbit(tq): C, _orbit(tq.conj()): Cc}
    fwd_meta = MapMeta([ma], contracted)
    cand_meta = MapMeta([ma_q], {})
    Cq = plane_sys([(PointTower(q1), 1), (PointTower(q1c), 1), (tq2, 1)])
    return _wire_selfmap(Q31, comps, fwd_meta, cand, cand_meta, [C, Cc],
                         inv_curves=[Cq, Cq.conj().monic()])


def _crossing_tower_q31(f: MapRep, plane: Form, avoid, height=2):
    anchor = next((p for p in avoid
                   if plane.evaluate(p.flat).is_zero()), None)
    if anchor is None:
        raise GeometryError("no anchor on the plane section")
    sample = _sample_on_quadric_conic(plane, anchor, set(avoid))
    for c in _DIR_CANDIDATES:
        tower = PointTower(sample, [("a", Scalar.from_rational(c))])
        try:
            return transport_tower(f, tower, height=height)
        except (MapError, GeometryError, ZeroDivisionError):
            continue
    raise GeometryError("could not transport a crossing arc on the quadric")


# -- conic-bundle scaffolding -----------------------------------------------------


def p2_to_f0() -> MapRep:
    """The birational map (x:y:z) -> ((x:y),(x:z)) with its inverse."""
    comps = [( _pf("x"), _pf("y")), (_pf("x"), _pf("z"))]
    base1 = MultiplicityAssignment(
        [(PointTower(_pt(P2, (0, 0, 1))), 1)], check_closed=False)
    base2 = MultiplicityAssignment(
        [(PointTower(_pt(P2, (0, 1, 0))), 1)], check_closed=False)
    pF = _pt(F0, (0, 1), (0, 1))
    contracted = {_orbit(PointTower(pF)): _pf("x")}
    fwd = MapRep(P2, F0, comps, meta=MapMeta([base1, base2], contracted))
    inv_comps = [(_pf("x0*y0", F0), _pf("x1*y0", F0), _pf("x0*y1", F0))]
    base_inv = MultiplicityAssignment([(PointTower(pF), 1)],
                                      check_closed=False)
    contracted_inv = {
        _orbit(PointTower(_pt(P2, (0, 1, 0)))): _pf("x0", F0),
        _orbit(PointTower(_pt(P2, (0, 0, 1)))): _pf("y0", F0),
    }
    inv = MapRep(F0, P2, inv_comps, meta=MapMeta([base_inv], contracted_inv))
    fwd.set_inverse(inv)
    rt = compose(inv, fwd, certify=False)
    assert rt.is_identity()
    return fwd


def aut_f0(m1, m2, swap: bool = False) -> MapRep:
    """A real automorphism of F0: two 2x2 matrices and an optional factor
    swap (applied after the matrices)."""
    base = projectivity(F0, [m1, m2])
    if not swap:
        return base
    return compose(swap_f0(), base)


def swap_f0() -> MapRep:
    comps = [(_pf("y0", F0), _pf("y1", F0)), (_pf("x0", F0), _pf("x1", F0))]
    empty = [MultiplicityAssignment([]), MultiplicityAssignment([])]
    m = MapRep(F0, F0, comps, meta=MapMeta(empty, {}))
    m2 = MapRep(F0, F0, comps, meta=MapMeta(list(empty), {}))
    m.set_inverse(m2)
    return m


def projectivity_p2(mat) -> MapRep:
    for row in mat:
        for c in row:
            if not c.is_real():
                raise GeometryError("projectivity matrix must be real")
    return projectivity(P2, [mat])


def _f1_to_p2() -> MapRep:
    """The contraction F1 -> P2 (type III link) and its blow-up inverse."""
    F1 = FN(1)
    comps = [(_pf("x", F1), _pf("y", F1), _pf("z", F1))]
    e_pt = _pt(P2, (1, 0, 0))
    fwd = MapRep(F1, P2, comps,
                 meta=MapMeta([MultiplicityAssignment([])], {}))
    inv_comps = [(_pf("x"), _pf("y"), _pf("z")), (_pf("y"), _pf("z"))]
    base1 = MultiplicityAssignment([], check_closed=False)
    base2 = MultiplicityAssignment([(PointTower(e_pt), 1)],
                                   check_closed=False)
    inv = MapRep(P2, F1, [
        (_pf("x"), _pf("y"), _pf("z")),
        (_pf("y"), _pf("z")),
    ], meta=MapMeta([base1, base2], {}))
    fwd.set_inverse(inv)
    return fwd


def _d6_to_q31() -> MapRep:
    """The projection D6 -> Q31 contracting the two imaginary sections."""
    comps = [(_pf("w", D6), _pf("x", D6), _pf("y", D6), _pf("z", D6))]
    fwd = MapRep(D6, Q31, comps,
                 meta=MapMeta([MultiplicityAssignment([])], {}))
    pair = [_pt(Q31, (0, 0, 1, sc_i())), _pt(Q31, (0, 0, 1, sc_i(0, -1)))]
    base1 = MultiplicityAssignment([], check_closed=False)
    base2 = MultiplicityAssignment([(PointTower(p), 1) for p in pair])
    inv = MapRep(Q31, D6, [
        (_pf("w", Q31), _pf("x", Q31), _pf("y", Q31), _pf("z", Q31)),
        (_pf("w", Q31), _pf("x", Q31)),
    ], meta=MapMeta([base1, base2], {}))
    fwd.set_inverse(inv)
    return fwd


def sarkisov_link(kind: int, **params) -> MapRep:
    """The Sarkisov links used by the factorization algorithms.

    kind 1: contraction F1 -> P2 (type III); kind 2: stereographic pair
    (type II), kwargs center=real quadric point; kind 3: projection
    D6 -> Q31 (type III); kind 4: blow-up link F0 -> F1 at a real point
    (kwargs point=); kind 6: elementary transformation of F0 at an
    imaginary pair off the real fibres (kwargs point=); kind 7: the factor
    exchange of F0 (type IV).
    """
    if kind == 1:
        return _f1_to_p2()
    if kind == 2:
        return stereographic(params.get("center"))
    if kind == 3:
        return _d6_to_q31()
    if kind == 4:
        return _f0_to_f1(params["point"])
    if kind == 6:
        return _elementary_f0(params["point"])
    if kind == 7:
        return swap_f0()
    raise GeometryError(f"unsupported Sarkisov link kind {kind}; kinds "
                        "5, 6 (n=1), 8, 9 exist only inside composite "
                        "constructions")


def _moebius_to(a: Scalar, b: Scalar):
    """Real matrix sending a + b*I to I on the line (b != 0)."""
    # z -> (z - a)/b
    return [[Scalar.one(), -a], [Scalar.zero(), b]]


def _f0_normalizer(p: ProjPoint):
    """Real automorphism of F0 sending the imaginary pair p to
    ((i:1),(i:1)); requires both coordinates off the real fibres."""
    (x0, x1), (y0, y1) = p.coords
    if x1.is_zero() or y1.is_zero():
        raise GeometryError("pair lies on a fibre at infinity")
    zx = x0 / x1
    zy = y0 / y1
    ax, bx = zx.real(), zx.imag()
    ay, by = zy.real(), zy.imag()
    if bx.is_zero() or by.is_zero():
        raise GeometryError("pair lies on a real fibre")
    return projectivity(F0, [_moebius_to(ax, bx), _moebius_to(ay, by)])


def _elementary_f0(p: ProjPoint) -> MapRep:
    """Type II link of F0 centered at an imaginary pair off real fibres."""
    if p.is_real():
        raise GeometryError("elementary transformation needs an imaginary "
                            "pair")
    alpha = _f0_normalizer(p)
    return compose(tau0(), alpha)


def _f0_to_f1(q: ProjPoint) -> MapRep:
    """Type II link F0 -> F1: blow up a real point, contract its fibre."""
    if not q.is_real():
        raise GeometryError("this link blows up a real point")
    # normalize q to ((1:0),(1:0)) by a real automorphism, then use the
    # explicit link, and note the F1 fibration coordinate is the first P1
    (x0, x1), (y0, y1) = q.coords
    m1 = _move_to_infinity(x0, x1)
    m2 = _move_to_infinity(y0, y1)
    alpha = projectivity(F0, [m1, m2])
    F1 = FN(1)
    # ((x0:x1),(y0:y1)) -> ((x:y:z),(u:v)) = ((x0 y1 : x1 y0 : x1 y1),
    # (x0 : x1)); relation y v = z u holds: (x1 y0) x1 = (x1 y1) ... check
    comps = [
        (_pf("x1*y0", F0), _pf("x0*y1", F0), _pf("x1*y1", F0)),
        (_pf("x0", F0), _pf("x1", F0)),
    ]
    qstd = _pt(F0, (1, 0), (1, 0))
    base1 = MultiplicityAssignment([(PointTower(qstd), 1)],
                                   check_closed=False)
    base2 = MultiplicityAssignment([], check_closed=False)
    img_pt = _pt(F1, (0, 1, 0), (1, 0))
    fwd = MapRep(F0, F1, comps,
                 meta=MapMeta([base1, base2],
                              {_orbit(PointTower(img_pt)): _pf("x1", F0)}))
    inv_comps = [
        (_pf("u", F1), _pf("v", F1)),
        (_pf("x", F1), _pf("z", F1)),
    ]
    ibase1 = MultiplicityAssignment([], check_closed=False)
    ibase2 = MultiplicityAssignment([(PointTower(img_pt), 1)],
                                    check_closed=False)
    inv = MapRep(F1, F0, inv_comps,
                 meta=MapMeta([ibase1, ibase2],
                              {_orbit(PointTower(qstd)): _pf("v", F1)}))
    fwd.set_inverse(inv)
    return compose(fwd, alpha)


def _move_to_infinity(c0: Scalar, c1: Scalar):
    """Real 2x2 matrix sending (c0:c1) to (1:0)."""
    if c1.is_zero():
        return identity_matrix(2, c0.ctx)
    if c0.is_zero():
        z = Scalar.zero(c0.ctx)
        o = Scalar.one(c0.ctx)
        return [[z, o], [o, z]]
    return [[Scalar.zero(c0.ctx), Scalar.one(c0.ctx)],
            [c1, -c0]]
