"""Integer backend: gmpy2 when available, stdlib fallback.

Every exact computation in the package funnels through these names, so the
whole library switches backend in one place.  gmpy2's GMP-backed mpz is
substantially faster than CPython ints once coefficients reach a few hundred
digits, which they do for composite maps.
"""

from __future__ import annotations

import math

try:
    import gmpy2 as _g

    mpz = _g.mpz
    gcdint = _g.gcd
    isqrt = _g.isqrt
    HAVE_GMPY2 = True
except ImportError:  # pragma: no cover - exercised only without gmpy2
    mpz = int
    gcdint = math.gcd
    isqrt = math.isqrt
    HAVE_GMPY2 = False

ZERO = mpz(0)
ONE = mpz(1)


def gcd_many(values):
    """gcd of an iterable of integers (0 for an empty iterable)."""
    g = ZERO
    for v in values:
        g = gcdint(g, v)
        if g == 1:
            return ONE
    return g


def is_square(n) -> bool:
    """Exact test: is the nonnegative integer n a perfect square?"""
    if n < 0:
        return False
    r = isqrt(n)
    return r * r == n
