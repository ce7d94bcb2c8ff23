"""Surface models, projective points, and infinitely-near point towers.

Models in play:

    P2   plane, coordinates (x:y:z)
    Q31  sphere quadric w^2 = x^2 + y^2 + z^2 in P3, coordinates (w:x:y:z)
    FN(n) Hirzebruch surface y*v^n = z*u^n in P2 x P1  (n >= 1)
    F0   P1 x P1, coordinates ((x0:x1),(y0:y1))
    D6   degree-6 del Pezzo conic bundle w*v = x*u inside Q31 x P1
    P1   the line (used as a fibration base only)

Points are stored per projective factor with the canonical normalization
"first nonzero coordinate equals 1"; towers are a proper point plus a chain
of blow-up directions (chart id + Scalar), expressed in the deterministic
local chart that `local_chart` attaches to the proper point.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .scalars import QI, Scalar, FieldCtx
from .forms import Form, FormError, RewriteRule, rewrite
from .charts import TSeries, newton_solve, series_of_form
from .io import parse_form

__all__ = ["Model", "P2", "Q31", "F0", "D6", "FN", "P1", "ProjPoint",
           "PointTower", "MultiplicityAssignment", "on_model",
           "is_real_point", "local_chart", "GeometryError"]


class GeometryError(ValueError):
    """Degenerate configuration: a genericity precondition failed exactly."""


class Model:
    __slots__ = ("name", "blocks", "var_names", "relations", "rho",
                 "_rules")
    _registry: dict = {}

    def __init__(self, name, blocks, var_names, relation_texts, rho):
        self.name = name
        self.blocks = tuple(blocks)
        self.var_names = tuple(var_names)
        self.relations = tuple(
            parse_form(t, self.var_names, self.blocks) for t in relation_texts)
        self.rho = rho
        self._rules = None
        Model._registry[name] = self

    @property
    def nvars(self) -> int:
        return sum(self.blocks)

    @property
    def nfactors(self) -> int:
        return len(self.blocks)

    def __repr__(self):
        return f"<Model {self.name}>"

    def __eq__(self, other):
        return isinstance(other, Model) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    @staticmethod
    def by_name(name: str) -> "Model":
        try:
            return Model._registry[name]
        except KeyError:
            raise GeometryError(f"unknown model {name!r}") from None

    # -- reduction to the normal form of the coordinate ring ---------------

    def rewrite_rules(self):
        if self._rules is None:
            self._rules = _build_rules(self)
        return self._rules

    def normal_form(self, f: Form) -> Form:
        rules = self.rewrite_rules()
        if not rules:
            return f
        return rewrite(f, rules)

    # -- degree-space monomials ---------------------------------------------

    def monomials(self, mdeg) -> List[Tuple[int, ...]]:
        """Exponents of the reduced monomial basis in multidegree mdeg."""
        rules = self.rewrite_rules()
        leads = [r.lead for r in rules]
        offs = [0]
        for b in self.blocks:
            offs.append(offs[-1] + b)
        out = []

        def rec(block, acc):
            if block == len(self.blocks):
                exp = tuple(acc)
                if not any(all(x >= l for x, l in zip(exp, lead))
                           for lead in leads):
                    out.append(exp)
                return
            n = self.blocks[block]
            d = mdeg[block]

            def fill(pos, remaining, cur):
                if pos == n - 1:
                    rec(block + 1, acc + cur + [remaining])
                    return
                for k in range(remaining, -1, -1):
                    fill(pos + 1, remaining - k, cur + [k])

            fill(0, d, [])

        rec(0, [])
        return sorted(out, reverse=True)


def _build_rules(model: Model):
    rules = []
    for rel in model.relations:
        lead = max(rel.terms)
        lead_c = rel.coeff(lead)
        rest = rel - Form.monomial(rel.blocks, lead, lead_c)
        rules.append(RewriteRule(lead, rest.scale(-(lead_c.inverse()))))
    if model.name == "D6":
        # Completion of {w^2 - (x^2+y^2+z^2), w*v - x*u} to a confluent
        # system: S-polynomials contribute w*x*u -> (x^2+y^2+z^2)*v and
        # x^2*u^2 -> (x^2+y^2+z^2)*v^2.
        names, blocks = model.var_names, model.blocks
        q = "(x^2 + y^2 + z^2)"
        rules.append(RewriteRule(
            parse_form("w*x*u", names, blocks).lead_exp(),
            parse_form(q + "*v", names, blocks)))
        rules.append(RewriteRule(
            parse_form("x^2*u^2", names, blocks).lead_exp(),
            parse_form(q + "*v^2", names, blocks)))
    return rules


P2 = Model("P2", (3,), ("x", "y", "z"), (), rho=1)
Q31 = Model("Q31", (4,), ("w", "x", "y", "z"),
            ("w^2 - x^2 - y^2 - z^2",), rho=1)
F0 = Model("F0", (2, 2), ("x0", "x1", "y0", "y1"), (), rho=2)
D6 = Model("D6", (4, 2), ("w", "x", "y", "z", "u", "v"),
           ("w^2 - x^2 - y^2 - z^2", "w*v - x*u"), rho=2)
P1 = Model("P1", (2,), ("s", "t"), (), rho=1)

_FN_CACHE: dict = {}


def FN(n: int) -> Model:
    """Hirzebruch surface F_n (n >= 1); F0 is the separate product model."""
    if n == 0:
        return F0
    m = _FN_CACHE.get(n)
    if m is None:
        rel = f"y*v^{n} - z*u^{n}" if n > 1 else "y*v - z*u"
        m = Model(f"F{n}", (3, 2), ("x", "y", "z", "u", "v"), (rel,), rho=2)
        _FN_CACHE[n] = m
    return m


# -- points -------------------------------------------------------------------


class ProjPoint:
    __slots__ = ("model", "coords")

    def __init__(self, model: Model, coords, normalize=True):
        self.model = model
        if len(coords) != model.nfactors:
            # allow flat input for single-factor models
            if model.nfactors == 1 and len(coords) == model.blocks[0]:
                coords = (tuple(coords),)
            else:
                raise GeometryError("wrong number of point factors")
        fixed = []
        for b, fac in enumerate(coords):
            fac = tuple(fac)
            if len(fac) != model.blocks[b]:
                raise GeometryError("wrong coordinate count in factor")
            if normalize:
                piv = next((c for c in fac if not c.is_zero()), None)
                if piv is None:
                    raise GeometryError("zero tuple in projective factor")
                inv = piv.inverse()
                fac = tuple(c * inv for c in fac)
            fixed.append(fac)
        self.coords = tuple(fixed)

    @property
    def flat(self):
        return tuple(c for fac in self.coords for c in fac)

    def conj(self) -> "ProjPoint":
        return ProjPoint(self.model,
                         tuple(tuple(c.conj() for c in fac)
                               for fac in self.coords))

    def is_real(self) -> bool:
        return all(c.is_real() for fac in self.coords for c in fac)

    def __eq__(self, other):
        return (isinstance(other, ProjPoint) and self.model == other.model
                and self.coords == other.coords)

    def __hash__(self):
        return hash((self.model.name, self.coords))

    def sort_key(self):
        return tuple(c.sort_key() for c in self.flat)

    def __repr__(self):
        from .io import format_scalar
        facs = ", ".join(
            "(" + ":".join(format_scalar(c) for c in fac) + ")"
            for fac in self.coords)
        return f"ProjPoint[{self.model.name}] {facs}"


class PointTower:
    """A proper point plus a chain of blow-up directions above it.

    Directions are (chart, delta) pairs in the charts of `local_chart` at the
    proper point; an empty chain is a proper point.
    """

    __slots__ = ("point", "chain")

    def __init__(self, point: ProjPoint, chain=()):
        self.point = point
        self.chain = tuple((cid, d) for cid, d in chain)
        for cid, _ in self.chain:
            if cid not in ("a", "b"):
                raise GeometryError(f"unknown blow-up chart {cid!r}")

    @property
    def height(self) -> int:
        return 1 + len(self.chain)

    def is_proper(self) -> bool:
        return not self.chain

    def conj(self) -> "PointTower":
        return PointTower(self.point.conj(),
                          tuple((cid, d.conj()) for cid, d in self.chain))

    def is_real(self) -> bool:
        return self.point.is_real() and all(
            d.is_real() for _, d in self.chain)

    def __eq__(self, other):
        return (isinstance(other, PointTower) and self.point == other.point
                and self.chain == other.chain)

    def __hash__(self):
        return hash((self.point, self.chain))

    def sort_key(self):
        return (self.point.sort_key(),
                tuple((cid, d.sort_key()) for cid, d in self.chain))

    def __repr__(self):
        from .io import format_scalar
        s = repr(self.point)
        for cid, d in self.chain:
            s += f" ; chart={cid} dir={format_scalar(d)}"
        return s


class MultiplicityAssignment:
    """Conjugation-closed list of (PointTower, multiplicity) pairs."""

    __slots__ = ("entries",)

    def __init__(self, entries, check_closed=True):
        seen = {}
        for tower, mult in entries:
            if mult <= 0:
                raise GeometryError("multiplicities must be positive")
            if tower in seen:
                raise GeometryError(f"duplicate tower {tower!r}")
            seen[tower] = mult
        if check_closed:
            for tower, mult in seen.items():
                other = seen.get(tower.conj())
                if other != mult:
                    raise GeometryError(
                        "assignment is not conjugation-closed")
        self.entries = tuple(sorted(seen.items(),
                                    key=lambda kv: kv[0].sort_key()))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def towers(self):
        return [t for t, _ in self.entries]

    def total(self) -> int:
        return sum(m for _, m in self.entries)

    def total_sq(self) -> int:
        return sum(m * m for _, m in self.entries)

    def __eq__(self, other):
        return (isinstance(other, MultiplicityAssignment)
                and self.entries == other.entries)

    def __repr__(self):
        return f"MultiplicityAssignment({list(self.entries)!r})"


# -- predicates ---------------------------------------------------------------


def on_model(p: ProjPoint, model: Model) -> bool:
    """True when every defining relation vanishes at p."""
    if p.model.blocks != model.blocks:
        raise GeometryError("dimension mismatch")
    return all(rel.evaluate(p.flat).is_zero() for rel in model.relations)


def is_real_point(p) -> bool:
    """Conjugation-fixedness of a point or tower, projectively."""
    if isinstance(p, PointTower):
        return p.is_real()
    return p.is_real()


# -- local charts --------------------------------------------------------------


def local_chart(point: ProjPoint, order: int) -> List[TSeries]:
    """Deterministic local chart: one ambient-coordinate series per variable.

    The point sits at (s, t) = (0, 0); the recipe commutes with conjugation
    (it only uses field operations and zero tests on the normalized
    coordinates), so towers over conjugate points are conjugate.
    """
    model = point.model
    ctx = _point_ctx(point)
    if model.name == "P2":
        return _chart_plane(point.coords[0], order, ctx)
    if model.name == "Q31":
        return _chart_quadric(point.coords[0], order, ctx)
    if model.name == "F0":
        a = _chart_line(point.coords[0], 0, order, ctx)
        b = _chart_line(point.coords[1], 1, order, ctx)
        return a + b
    if model.name.startswith("F"):
        return _chart_hirzebruch(model, point, order, ctx)
    if model.name == "D6":
        return _chart_d6(point, order, ctx)
    raise GeometryError(f"no local charts on model {model.name}")


def _point_ctx(point: ProjPoint) -> FieldCtx:
    ctx = QI
    for c in point.flat:
        if c.ctx.contains(ctx):
            ctx = c.ctx
    return ctx


def _chart_plane(coords, order, ctx):
    piv = next(j for j, c in enumerate(coords) if not c.is_zero())
    rest = [j for j in range(3) if j != piv]
    out = [None] * 3
    out[piv] = TSeries.const(Scalar.one(ctx), order)
    out[rest[0]] = TSeries.const(coords[rest[0]], order) + \
        TSeries.var(0, order, ctx)
    out[rest[1]] = TSeries.const(coords[rest[1]], order) + \
        TSeries.var(1, order, ctx)
    return out


def _chart_line(coords, which: int, order, ctx):
    piv = next(j for j, c in enumerate(coords) if not c.is_zero())
    other = 1 - piv
    out = [None, None]
    out[piv] = TSeries.const(Scalar.one(ctx), order)
    out[other] = TSeries.const(coords[other], order) + \
        TSeries.var(which, order, ctx)
    return out


def _chart_quadric(coords, order, ctx):
    # normalize pivot, pick a dependent coordinate with nonzero gradient
    piv = next(j for j, c in enumerate(coords) if not c.is_zero())
    rel_grad = [coords[0], -coords[1], -coords[2], -coords[3]]
    dep = next(j for j in range(4)
               if j != piv and not rel_grad[j].is_zero())
    free = [j for j in range(4) if j not in (piv, dep)]
    out = [None] * 4
    out[piv] = TSeries.const(Scalar.one(ctx), order)
    out[free[0]] = TSeries.const(coords[free[0]], order) + \
        TSeries.var(0, order, ctx)
    out[free[1]] = TSeries.const(coords[free[1]], order) + \
        TSeries.var(1, order, ctx)
    sign = {0: 1}
    rel = Q31.relations[0]

    def g(u):
        vals = list(out)
        vals[dep] = u
        return series_of_form(rel, vals)

    out[dep] = newton_solve(g, coords[dep], order)
    return out


def _chart_hirzebruch(model, point, order, ctx):
    # relation y*v^n = z*u^n is linear in y and in z; u, v never both vanish
    n = int(model.name[1:])
    c1, c2 = point.coords
    line = _chart_line(c2, 1, order, ctx)
    u_s, v_s = line
    piv = next(j for j, c in enumerate(c1) if not c.is_zero())
    out = [None] * 3
    out[piv] = TSeries.const(Scalar.one(ctx), order)
    u_unit = not (u_s ** n).at_origin().is_zero()
    if piv == 0:
        if u_unit:
            out[1] = TSeries.const(c1[1], order) + TSeries.var(0, order, ctx)
            out[2] = out[1] * (v_s ** n) * (u_s ** n).inverse()
        else:
            out[2] = TSeries.const(c1[2], order) + TSeries.var(0, order, ctx)
            out[1] = out[2] * (u_s ** n) * (v_s ** n).inverse()
    elif piv == 1:
        # y = 1 forces u invertible at the point (else v would vanish too)
        out[0] = TSeries.const(c1[0], order) + TSeries.var(0, order, ctx)
        out[2] = out[piv] * (v_s ** n) * (u_s ** n).inverse()
    else:
        # z = 1 with x = y = 0 forces u = 0, hence v invertible
        out[0] = TSeries.const(c1[0], order) + TSeries.var(0, order, ctx)
        out[1] = out[piv] * (u_s ** n) * (v_s ** n).inverse()
    return out + line


def _chart_d6(point, order, ctx):
    c1, c2 = point.coords
    line = _chart_line(c2, 1, order, ctx)
    u_s, v_s = line
    rel = Q31.relations[0]
    if not u_s.at_origin().is_zero():
        solved, ratio, independents = 1, v_s * u_s.inverse(), (0, 2, 3)
        source = 0  # x = w * ratio
    else:
        solved, ratio, independents = 0, u_s * v_s.inverse(), (1, 2, 3)
        source = 1  # w = x * ratio
    piv = next(j for j in independents if not c1[j].is_zero())
    others = [j for j in independents if j != piv]
    for free, dep in (others, others[::-1]):
        out = [None] * 4
        out[piv] = TSeries.const(Scalar.one(ctx), order)
        out[free] = TSeries.const(c1[free], order) + TSeries.var(0, order, ctx)

        def g(uu, _out=out, _dep=dep):
            vals = list(_out)
            vals[_dep] = uu
            vals[solved] = vals[source] * ratio
            from .charts import series_of_form
            return series_of_form(rel, vals)

        try:
            out[dep] = newton_solve(g, c1[dep], order)
        except ZeroDivisionError:
            continue
        out[solved] = out[source] * ratio
        return out + line
    raise GeometryError("degenerate D6 chart (singular point?)")
