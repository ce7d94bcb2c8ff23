"""Exact scalars: the field Q(i) optionally extended by real square roots.

A scalar lives in Q(i)(sqrt(d_1), ..., sqrt(d_k)) where the radicands d_j are
positive integers whose pairwise subset products are non-squares (verified at
adjunction time), so the 2^k products sqrt(prod_{j in m} d_j), m running over
subsets, form a basis of the tower over Q(i).

Representation:  value = ( sum_m (co[2m] + i*co[2m+1]) * sqrt(R_m) ) / den
with integer coordinates `co`, positive integer denominator `den`, and
R_m = prod of ctx.roots[j] over the bits j of the subset mask m.  Scalars are
immutable, normalized (gcd of all coordinates and den is 1, den > 0), and
hash/compare by value.  Complex conjugation fixes every sqrt(d_j) and sends
i to -i, so it simply negates the odd coordinates.

k is capped (default 4, env REALCREMONA_MAX_SQRT or CREMONA_MAX_SQRT); only
the quadric-normalization path of the cubic constructor ever extends a tower.
"""

from __future__ import annotations

import os
from fractions import Fraction

from ._ints import ZERO, ONE, mpz, gcdint, gcd_many, is_square, isqrt

__all__ = [
    "FieldCtx", "Scalar", "QI", "CapacityError",
    "sc", "sc_i", "scalar_from_fraction",
]


class CapacityError(Exception):
    """Raised when a computation would exceed the scalar-tower capacity."""


def _max_roots() -> int:
    for env in ("REALCREMONA_MAX_SQRT", "CREMONA_MAX_SQRT"):
        v = os.environ.get(env)
        if v:
            return int(v)
    return 4


# Small primes used to strip obvious square factors from radicands.  Purely
# cosmetic: correctness never depends on radicands being square-free.
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def _strip_small_squares(n):
    n = mpz(n)
    out = ONE
    for p in _SMALL_PRIMES:
        pp = p * p
        while n % pp == 0:
            n //= pp
            out *= p
    return out, n


class FieldCtx:
    """A scalar tower: the tuple of adjoined radicands (positive integers)."""

    __slots__ = ("roots", "dim", "_mult_factor", "_mask_value")
    _cache: dict = {}

    def __new__(cls, roots=()):
        roots = tuple(int(r) for r in roots)
        ctx = cls._cache.get(roots)
        if ctx is not None:
            return ctx
        ctx = object.__new__(cls)
        ctx.roots = roots
        ctx.dim = 1 << len(roots)
        # mask -> prod of radicands over bits; (s, t) factor computed lazily
        ctx._mask_value = [ONE] * ctx.dim
        for m in range(1, ctx.dim):
            low = m & (-m)
            j = low.bit_length() - 1
            ctx._mask_value[m] = ctx._mask_value[m ^ low] * roots[j]
        ctx._mult_factor = {}
        cls._cache[roots] = ctx
        return ctx

    def factor(self, s: int, t: int):
        """sqrt(R_s)*sqrt(R_t) = factor * sqrt(R_{s^t}); returns the factor."""
        key = s & t
        f = self._mult_factor.get(key)
        if f is None:
            f = self._mask_value[key]
            self._mult_factor[key] = f
        return f

    def contains(self, other: "FieldCtx") -> bool:
        """True when other's roots are a prefix-compatible subset of ours."""
        return all(r in self.roots for r in other.roots)

    def mask_map(self, sub: "FieldCtx"):
        """For each sub-mask, the corresponding mask in this larger tower."""
        idx = [self.roots.index(r) for r in sub.roots]
        maps = []
        for m in range(sub.dim):
            big = 0
            for j in range(len(sub.roots)):
                if m >> j & 1:
                    big |= 1 << idx[j]
            maps.append(big)
        return maps

    def __repr__(self):
        return f"FieldCtx({self.roots})"


QI = FieldCtx(())


class Scalar:
    __slots__ = ("ctx", "den", "co", "_hash")

    def __init__(self, ctx: FieldCtx, den, co, _normalized=False):
        self.ctx = ctx
        if _normalized:
            self.den = den
            self.co = co
        else:
            den = mpz(den)
            co = [mpz(c) for c in co]
            if den == 0:
                raise ZeroDivisionError("scalar with zero denominator")
            if den < 0:
                den = -den
                co = [-c for c in co]
            g = gcd_many([den, *co])
            if g > 1:
                den //= g
                co = [c // g for c in co]
            self.den = den
            self.co = tuple(co)
        self._hash = None

    # -- constructors -----------------------------------------------------

    @staticmethod
    def zero(ctx: FieldCtx = QI) -> "Scalar":
        return Scalar(ctx, ONE, (ZERO,) * (2 * ctx.dim), _normalized=True)

    @staticmethod
    def one(ctx: FieldCtx = QI) -> "Scalar":
        co = [ZERO] * (2 * ctx.dim)
        co[0] = ONE
        return Scalar(ctx, ONE, tuple(co), _normalized=True)

    @staticmethod
    def from_rational(num, den=1, ctx: FieldCtx = QI) -> "Scalar":
        co = [ZERO] * (2 * ctx.dim)
        co[0] = mpz(num)
        return Scalar(ctx, mpz(den), co)

    @staticmethod
    def gauss(re, im, den=1, ctx: FieldCtx = QI) -> "Scalar":
        co = [ZERO] * (2 * ctx.dim)
        co[0] = mpz(re)
        co[1] = mpz(im)
        return Scalar(ctx, mpz(den), co)

    # -- structure --------------------------------------------------------

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.co)

    def is_one(self) -> bool:
        return self.den == 1 and self.co[0] == 1 and all(
            c == 0 for c in self.co[1:])

    def is_rational(self) -> bool:
        return all(c == 0 for c in self.co[1:])

    def is_gaussian(self) -> bool:
        return all(c == 0 for c in self.co[2:])

    def is_real(self) -> bool:
        return all(self.co[2 * m + 1] == 0 for m in range(self.ctx.dim))

    def as_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError("scalar is not rational")
        return Fraction(int(self.co[0]), int(self.den))

    def as_gauss(self):
        """(re, im, den) integer triple; requires a plain Q(i) value."""
        if not self.is_gaussian():
            raise ValueError("scalar is not in Q(i)")
        return self.co[0], self.co[1], self.den

    def conj(self) -> "Scalar":
        co = list(self.co)
        for m in range(self.ctx.dim):
            co[2 * m + 1] = -co[2 * m + 1]
        return Scalar(self.ctx, self.den, tuple(co), _normalized=True)

    def real(self) -> "Scalar":
        co = list(self.co)
        for m in range(self.ctx.dim):
            co[2 * m + 1] = ZERO
        return Scalar(self.ctx, self.den, co)

    def imag(self) -> "Scalar":
        co = [ZERO] * (2 * self.ctx.dim)
        for m in range(self.ctx.dim):
            co[2 * m] = self.co[2 * m + 1]
        return Scalar(self.ctx, self.den, co)

    def to_ctx(self, ctx: FieldCtx) -> "Scalar":
        if ctx is self.ctx:
            return self
        if not ctx.contains(self.ctx):
            raise CapacityError(
                f"cannot embed scalar over {self.ctx} into {ctx}")
        maps = ctx.mask_map(self.ctx)
        co = [ZERO] * (2 * ctx.dim)
        for m in range(self.ctx.dim):
            big = maps[m]
            co[2 * big] = self.co[2 * m]
            co[2 * big + 1] = self.co[2 * m + 1]
        return Scalar(ctx, self.den, tuple(co), _normalized=True)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: "Scalar") -> "Scalar":
        a, b = _align(self, other)
        if a.den == b.den:
            co = [x + y for x, y in zip(a.co, b.co)]
            return Scalar(a.ctx, a.den, co)
        co = [x * b.den + y * a.den for x, y in zip(a.co, b.co)]
        return Scalar(a.ctx, a.den * b.den, co)

    def __sub__(self, other: "Scalar") -> "Scalar":
        a, b = _align(self, other)
        if a.den == b.den:
            co = [x - y for x, y in zip(a.co, b.co)]
            return Scalar(a.ctx, a.den, co)
        co = [x * b.den - y * a.den for x, y in zip(a.co, b.co)]
        return Scalar(a.ctx, a.den * b.den, co)

    def __neg__(self) -> "Scalar":
        return Scalar(self.ctx, self.den, tuple(-c for c in self.co),
                      _normalized=True)

    def __mul__(self, other: "Scalar") -> "Scalar":
        a, b = _align(self, other)
        ctx = a.ctx
        if ctx.dim == 1:
            x, y = a.co
            u, v = b.co
            return Scalar(ctx, a.den * b.den, (x * u - y * v, x * v + y * u))
        co = [ZERO] * (2 * ctx.dim)
        aco, bco = a.co, b.co
        for s in range(ctx.dim):
            ar = aco[2 * s]
            ai = aco[2 * s + 1]
            if ar == 0 and ai == 0:
                continue
            for t in range(ctx.dim):
                br = bco[2 * t]
                bi = bco[2 * t + 1]
                if br == 0 and bi == 0:
                    continue
                f = ctx.factor(s, t)
                m = s ^ t
                co[2 * m] += f * (ar * br - ai * bi)
                co[2 * m + 1] += f * (ar * bi + ai * br)
        return Scalar(ctx, a.den * b.den, co)

    def inverse(self) -> "Scalar":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero scalar")
        ctx = self.ctx
        if ctx.dim == 1:
            a, b = self.co
            n = a * a + b * b
            return Scalar(ctx, n, (self.den * a, -self.den * b))
        # Solve s*x = 1 in the 2^k-dimensional Q(i)-algebra by elimination.
        dim = ctx.dim
        col = [(Fraction(int(self.co[2 * m]), int(self.den)),
                Fraction(int(self.co[2 * m + 1]), int(self.den)))
               for m in range(dim)]
        mat = []
        for t in range(dim):  # column t = s * basis_t in the basis
            column = [(Fraction(0), Fraction(0))] * dim
            for s in range(dim):
                re, im = col[s]
                if re == 0 and im == 0:
                    continue
                f = int(ctx.factor(s, t))
                m = s ^ t
                cr, ci = column[m]
                column[m] = (cr + f * re, ci + f * im)
            mat.append(column)
        rows = [[mat[t][m] for t in range(dim)] for m in range(dim)]
        rhs = [(Fraction(1), Fraction(0))] + \
              [(Fraction(0), Fraction(0))] * (dim - 1)
        sol = _solve_gauss_complex(rows, rhs)
        den = 1
        for re, im in sol:
            den = den * re.denominator // gcdint(den, re.denominator)
            den = den * im.denominator // gcdint(den, im.denominator)
        co = []
        for re, im in sol:
            co.append(mpz(re.numerator * (den // re.denominator)))
            co.append(mpz(im.numerator * (den // im.denominator)))
        out = Scalar(ctx, den, co)
        assert (out * self).is_one(), "tower inversion failed"
        return out

    def __truediv__(self, other: "Scalar") -> "Scalar":
        return self * other.inverse()

    def mul_int(self, n) -> "Scalar":
        return Scalar(self.ctx, self.den, tuple(c * n for c in self.co))

    # -- comparisons -------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Scalar):
            return NotImplemented
        a, b = _align(self, other)
        return a.den == b.den and a.co == b.co

    def __hash__(self):
        # Equal values in different towers must hash alike, so plain Q(i)
        # values always hash through the same 3-tuple.
        if self._hash is None:
            if self.is_gaussian():
                h = hash((int(self.den), int(self.co[0]), int(self.co[1])))
            else:
                h = hash((self.ctx.roots, int(self.den),
                          tuple(int(c) for c in self.co)))
            self._hash = h
        return self._hash

    def sign(self) -> int:
        """Sign of a real scalar (-1, 0, 1); exact, recursing on the tower."""
        if not self.is_real():
            raise ValueError("sign of a non-real scalar")
        return _sign_rec([self.co[2 * m] for m in range(self.ctx.dim)],
                         self.ctx)

    def sort_key(self):
        """Deterministic total order key (representation order, not numeric)."""
        return (self.ctx.roots, tuple(int(c) for c in self.co), int(self.den))

    # -- misc ---------------------------------------------------------------

    def __repr__(self):
        from .io import format_scalar
        return f"Scalar({format_scalar(self)})"

    def __bool__(self):
        return not self.is_zero()


def _align(a: Scalar, b: Scalar):
    if a.ctx is b.ctx:
        return a, b
    if a.ctx.contains(b.ctx):
        return a, b.to_ctx(a.ctx)
    if b.ctx.contains(a.ctx):
        return a.to_ctx(b.ctx), b
    raise CapacityError(f"incompatible scalar towers {a.ctx} and {b.ctx}")


def _sign_rec(coords, ctx: FieldCtx) -> int:
    # coords: rational numerators over the tower basis (common den irrelevant).
    k = len(ctx.roots)
    if k == 0:
        v = coords[0]
        return (v > 0) - (v < 0)
    sub = FieldCtx(ctx.roots[:-1])
    half = 1 << (k - 1)
    A = coords[:half]
    B = coords[half:]
    d = ctx.roots[-1]
    if all(c == 0 for c in B):
        return _sign_rec(A, sub)
    if all(c == 0 for c in A):
        return _sign_rec(B, sub)
    sa = _sign_rec(A, sub)
    sb = _sign_rec(B, sub)
    if sa == sb:
        return sa
    if sa == 0:
        return sb
    if sb == 0:
        return sa
    # Compare A^2 against B^2 * d inside the subtower.
    A2 = _square_coords(A, sub)
    B2 = _square_coords(B, sub)
    diff = [a - b * d for a, b in zip(A2, B2)]
    s = _sign_rec(diff, sub)
    return sa if s > 0 else sb if s < 0 else 0


def _square_coords(coords, ctx: FieldCtx):
    out = [ZERO] * ctx.dim
    for s in range(ctx.dim):
        if coords[s] == 0:
            continue
        for t in range(ctx.dim):
            if coords[t] == 0:
                continue
            out[s ^ t] += ctx.factor(s, t) * coords[s] * coords[t]
    return out


def _solve_gauss_complex(rows, rhs):
    """Gaussian elimination over Q(i) with Fraction pairs; rows is modified."""
    n = len(rows)
    for i in range(n):
        piv = next((r for r in range(i, n)
                    if rows[r][i][0] != 0 or rows[r][i][1] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular multiplication matrix")
        rows[i], rows[piv] = rows[piv], rows[i]
        rhs[i], rhs[piv] = rhs[piv], rhs[i]
        pr, pi = rows[i][i]
        nrm = pr * pr + pi * pi
        inv = (pr / nrm, -pi / nrm)
        rows[i] = [_cmul(inv, c) for c in rows[i]]
        rhs[i] = _cmul(inv, rhs[i])
        for r in range(n):
            if r == i:
                continue
            f = rows[r][i]
            if f[0] == 0 and f[1] == 0:
                continue
            rows[r] = [(a[0] - _cmul(f, b)[0], a[1] - _cmul(f, b)[1])
                       for a, b in zip(rows[r], rows[i])]
            m = _cmul(f, rhs[i])
            rhs[r] = (rhs[r][0] - m[0], rhs[r][1] - m[1])
    return rhs


def _cmul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


# -- tower extension -------------------------------------------------------


def adjoin_sqrt(ctx: FieldCtx, value: Scalar):
    """Return (new_ctx, sqrt_scalar) with sqrt_scalar^2 == value.

    `value` must be a positive rational (in the given tower's rational part).
    If the square root already lies in the tower it is returned without
    extension; otherwise a radicand is appended, subject to the tower cap.
    """
    if not value.is_rational():
        raise CapacityError("can only adjoin square roots of rationals")
    num, den = int(value.co[0]), int(value.den)
    if num <= 0:
        raise CapacityError("can only adjoin square roots of positives")
    # sqrt(num/den) = sqrt(num*den) / den
    n = mpz(num) * den
    sq, rad = _strip_small_squares(n)
    # Already a square in the tower?  Check rad * R_m for each subset mask:
    # rad*R_m = r^2 gives sqrt(rad) = r*sqrt(R_m)/R_m.
    for m in range(ctx.dim):
        prod = rad * ctx._mask_value[m]
        if is_square(prod):
            r = isqrt(prod)
            co = [ZERO] * (2 * ctx.dim)
            co[2 * m] = sq * r
            return ctx, Scalar(ctx, den * ctx._mask_value[m], co)
    if len(ctx.roots) >= _max_roots():
        raise CapacityError(
            f"scalar tower cap ({_max_roots()} square roots) exceeded; "
            f"set REALCREMONA_MAX_SQRT to raise it")
    new_ctx = FieldCtx(ctx.roots + (int(rad),))
    co = [ZERO] * (2 * new_ctx.dim)
    co[2 * (new_ctx.dim >> 1)] = sq  # the new top mask
    return new_ctx, Scalar(new_ctx, den, co)


# -- small conveniences ------------------------------------------------------


def sc(num, den=1) -> Scalar:
    """Rational scalar in plain Q(i)."""
    return Scalar.from_rational(num, den)


def sc_i(re=0, im=1, den=1) -> Scalar:
    """Gaussian scalar re + im*i over den."""
    return Scalar.gauss(re, im, den)


def scalar_from_fraction(f: Fraction) -> Scalar:
    return Scalar.from_rational(f.numerator, f.denominator)
