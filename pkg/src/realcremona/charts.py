"""Local analytic charts and blow-up towers.

Multiplicity conditions and base-locus measurements both happen in exact
truncated power series in two local parameters (s, t) centered at a surface
point.  A chart is a list of ambient-coordinate series; on the quadric and
the conic-bundle models the dependent coordinates are solved from the
relations by series Newton iteration, which keeps everything in the scalar
field (no square roots are ever taken: the iteration starts at the known
point).

Blow-up bookkeeping follows the two standard charts:

    chart 'a':  (s, t) = (e, e*(delta + t'))      E = {e = 0}
    chart 'b':  (s, t) = (e*(delta + s'), e)      E = {e = 0}

A direction on the exceptional line is a chart id plus the Scalar delta; the
direction missed by chart 'a' is chart 'b' with delta 0.  Raw (undivided)
transforms are used throughout: the order conditions at level k of a tower
with assigned multiplicities m_0, ..., m_k read off raw coefficients with
total degree below m_0 + ... + m_k, which keeps every condition linear in the
original form coefficients.
"""

from __future__ import annotations

from typing import List, Sequence

from .scalars import QI, Scalar
from .forms import Form, FormError

__all__ = ["TSeries", "series_of_form", "blowup_raw", "tower_orders",
           "vanishing_order", "exceptional_restriction"]


class TSeries:
    """Truncated power series in two variables; terms beyond `order` dropped."""

    __slots__ = ("order", "terms")

    def __init__(self, order: int, terms=None):
        self.order = order
        self.terms = {}
        if terms:
            for (i, j), c in terms.items():
                if i + j <= order and not c.is_zero():
                    self.terms[(i, j)] = c

    @staticmethod
    def const(c: Scalar, order: int) -> "TSeries":
        return TSeries(order, {(0, 0): c})

    @staticmethod
    def var(which: int, order: int, ctx=QI) -> "TSeries":
        key = (1, 0) if which == 0 else (0, 1)
        return TSeries(order, {key: Scalar.one(ctx)})

    def is_zero(self) -> bool:
        return not self.terms

    def copy_order(self, order: int) -> "TSeries":
        return TSeries(order, self.terms)

    def __add__(self, other: "TSeries") -> "TSeries":
        order = min(self.order, other.order)
        out = dict(self.terms)
        for k, c in other.terms.items():
            cur = out.get(k)
            s = c if cur is None else cur + c
            if s.is_zero():
                out.pop(k, None)
            else:
                out[k] = s
        return TSeries(order, out)

    def __sub__(self, other: "TSeries") -> "TSeries":
        return self + other.scale(Scalar.from_rational(-1))

    def scale(self, c: Scalar) -> "TSeries":
        if c.is_zero():
            return TSeries(self.order)
        return TSeries(self.order, {k: v * c for k, v in self.terms.items()})

    def __mul__(self, other: "TSeries") -> "TSeries":
        order = min(self.order, other.order)
        out: dict = {}
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                i, j = i1 + i2, j1 + j2
                if i + j > order:
                    continue
                key = (i, j)
                p = c1 * c2
                cur = out.get(key)
                s = p if cur is None else cur + p
                if s.is_zero():
                    out.pop(key, None)
                else:
                    out[key] = s
        return TSeries(order, out)

    def __pow__(self, k: int) -> "TSeries":
        result = TSeries.const(Scalar.one(), self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def at_origin(self) -> Scalar:
        return self.terms.get((0, 0), Scalar.zero())

    def inverse(self) -> "TSeries":
        """Multiplicative inverse of a unit series (nonzero constant term)."""
        c0 = self.at_origin()
        if c0.is_zero():
            raise ZeroDivisionError("series has no constant term")
        inv0 = c0.inverse()
        rest = self - TSeries.const(c0, self.order)
        out = TSeries.const(inv0, self.order)
        term = TSeries.const(inv0, self.order)
        for _ in range(self.order):
            term = term * rest.scale(-inv0)
            if term.is_zero():
                break
            out = out + term
        return out

    def order_of_vanishing(self):
        """Minimal total degree with a nonzero coefficient (None if 0-series)."""
        if not self.terms:
            return None
        return min(i + j for i, j in self.terms)

    def substitute(self, s_series: "TSeries", t_series: "TSeries") -> "TSeries":
        order = min(self.order, s_series.order, t_series.order)
        smax = max((i for i, _ in self.terms), default=0)
        tmax = max((j for _, j in self.terms), default=0)
        spow = [TSeries.const(Scalar.one(), order)]
        for _ in range(smax):
            spow.append(spow[-1] * s_series)
        tpow = [TSeries.const(Scalar.one(), order)]
        for _ in range(tmax):
            tpow.append(tpow[-1] * t_series)
        acc = TSeries(order)
        for (i, j), c in self.terms.items():
            acc = acc + (spow[i] * tpow[j]).scale(c)
        return acc


def series_of_form(form: Form, chart: Sequence[TSeries]) -> TSeries:
    """Pull a form back along a chart (one series per ambient variable)."""
    if len(chart) != form.nvars:
        raise FormError("chart length does not match form variables")
    order = min(s.order for s in chart)
    maxdeg = [0] * form.nvars
    for e in form.terms:
        for v, k in enumerate(e):
            if k > maxdeg[v]:
                maxdeg[v] = k
    powers: List[List[TSeries]] = []
    for v in range(form.nvars):
        row = [TSeries.const(Scalar.one(form.ctx), order)]
        for _ in range(maxdeg[v]):
            row.append(row[-1] * chart[v])
        powers.append(row)
    acc = TSeries(order)
    for e, c in form.scalar_terms():
        term = TSeries.const(c, order)
        for v, k in enumerate(e):
            if k:
                term = term * powers[v][k]
        acc = acc + term
    return acc


def newton_solve(relation_eval, start: Scalar, order: int) -> TSeries:
    """Solve G(u; s, t) = 0 for u as a series with u(0,0) = start.

    `relation_eval(u_series)` must return the series G(u(s,t); s, t); the
    derivative is computed by a symmetric difference quotient trick: we
    require G quadratic in u, so G(u+h) - G(u) = h * (dG/du(u) + h*a2) and
    Newton converges quadratically from the exact point.
    """
    u = TSeries.const(start, order)
    one = TSeries.const(Scalar.one(start.ctx), order)
    for _ in range(order.bit_length() + 3):
        g = relation_eval(u)
        if g.is_zero():
            return u
        # G is quadratic in u, so G(u+1) - G(u-1) = 2 G'(u) exactly.
        gp = (relation_eval(u + one) - relation_eval(u - one)).scale(
            Scalar.from_rational(1, 2))
        u = u - g * gp.inverse()
    if not relation_eval(u).is_zero():
        raise ArithmeticError("series Newton iteration failed to converge")
    return u


def blowup_raw(series: TSeries, chart_id: str, delta: Scalar) -> TSeries:
    """Raw blow-up transform (no exceptional division).

    chart 'a': (s, t) -> (e, e*(delta + t)); chart 'b': (s, t) ->
    (e*(delta + s), e).  The exceptional line is {e = 0} in both.
    """
    order = series.order
    e = TSeries.var(0, order, delta.ctx)
    other = TSeries.var(1, order, delta.ctx)
    shifted = other + TSeries.const(delta, order)
    prod = e * shifted
    if chart_id == "a":
        return series.substitute(e, prod)
    if chart_id == "b":
        return series.substitute(prod, e)
    raise ValueError(f"unknown blow-up chart {chart_id!r}")


def vanishing_order(series: TSeries):
    return series.order_of_vanishing()


def exceptional_restriction(series: TSeries, shift: int):
    """Coefficients along the exceptional line of series / e^shift.

    Returns the dense list of Scalars c_j = coefficient of e^shift * t^j,
    i.e. the restriction to {e = 0} of the shifted transform (e is variable
    0 after blowup_raw).
    """
    top = series.order - shift
    out = [Scalar.zero()] * (top + 1)
    for (i, j), c in series.terms.items():
        if i == shift and j <= top:
            out[j] = c
    return out


def tower_orders(raw: TSeries, levels, measured=None):
    """Order conditions along a blow-up chain; used by linear systems.

    `levels` is the list of (chart_id, delta) pairs *above* the proper point
    (empty for a proper point).  Returns the list of raw series, one per
    level, where level k's series is the raw transform after k blow-ups.
    """
    out = [raw]
    cur = raw
    for chart_id, delta in levels:
        cur = blowup_raw(cur, chart_id, delta)
        out.append(cur)
    return out
