"""Pure-Python sparse-term kernel.

Terms are dicts mapping exponent tuples to integer coefficient tuples
(length 2*dim: interleaved real/imag coordinates over the scalar-tower
basis).  Denominators are managed by the caller; everything here is exact
integer arithmetic.  `realcremona._kernel_c` implements the same API in
Cython; `realcremona.kernel` selects one at import time.
"""

from __future__ import annotations

KERNEL_NAME = "py"


def coeff_mul(a, b, dim, factor):
    """Product of two coefficient tuples over the tower basis."""
    if dim == 1:
        ar, ai = a
        br, bi = b
        return (ar * br - ai * bi, ar * bi + ai * br)
    out = [0] * (2 * dim)
    for s in range(dim):
        ar = a[2 * s]
        ai = a[2 * s + 1]
        if not ar and not ai:
            continue
        for t in range(dim):
            br = b[2 * t]
            bi = b[2 * t + 1]
            if not br and not bi:
                continue
            f = factor(s, t)
            m = s ^ t
            out[2 * m] += f * (ar * br - ai * bi)
            out[2 * m + 1] += f * (ar * bi + ai * br)
    return tuple(out)


def coeff_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def coeff_is_zero(a):
    return not any(a)


def mul_terms(A, B, dim, factor):
    """Merge-product of two term dicts; zero terms pruned."""
    if len(A) > len(B):
        A, B = B, A
    out = {}
    if dim == 1:
        for ea, (ar, ai) in A.items():
            for eb, (br, bi) in B.items():
                exp = tuple(x + y for x, y in zip(ea, eb))
                re = ar * br - ai * bi
                im = ar * bi + ai * br
                cur = out.get(exp)
                if cur is None:
                    out[exp] = (re, im)
                else:
                    out[exp] = (cur[0] + re, cur[1] + im)
        return {e: c for e, c in out.items() if c[0] or c[1]}
    for ea, ca in A.items():
        for eb, cb in B.items():
            exp = tuple(x + y for x, y in zip(ea, eb))
            prod = coeff_mul(ca, cb, dim, factor)
            cur = out.get(exp)
            if cur is None:
                out[exp] = prod
            else:
                out[exp] = coeff_add(cur, prod)
    return {e: c for e, c in out.items() if any(c)}


def addmul_terms(acc, B, coeff, dim, factor):
    """acc += coeff * B, in place (acc mutated and returned)."""
    if dim == 1 and len(coeff) == 2:
        cr, ci = coeff
        for eb, (br, bi) in B.items():
            re = cr * br - ci * bi
            im = cr * bi + ci * br
            cur = acc.get(eb)
            if cur is None:
                acc[eb] = (re, im)
            else:
                acc[eb] = (cur[0] + re, cur[1] + im)
        return acc
    for eb, cb in B.items():
        prod = coeff_mul(coeff, cb, dim, factor)
        cur = acc.get(eb)
        if cur is None:
            acc[eb] = prod
        else:
            acc[eb] = coeff_add(cur, prod)
    return acc


def add_terms(A, B):
    """A + B as raw integer term dicts (same denominator assumed)."""
    out = dict(A)
    for e, c in B.items():
        cur = out.get(e)
        if cur is None:
            out[e] = c
        else:
            s = tuple(x + y for x, y in zip(cur, c))
            if any(s):
                out[e] = s
            else:
                del out[e]
    return out


def scale_terms(A, k):
    """A * k for a plain integer k (k != 0)."""
    return {e: tuple(x * k for x in c) for e, c in A.items()}


def evaluate_terms(terms, powers, dim, factor):
    """Exact evaluation: powers[v][k] = coefficient tuple of x_v^k."""
    total = None
    for exp, c in terms.items():
        acc = c
        for v, k in enumerate(exp):
            if k:
                acc = coeff_mul(acc, powers[v][k], dim, factor)
        total = acc if total is None else coeff_add(total, acc)
    if total is None:
        return (0,) * (2 * dim)
    return total
