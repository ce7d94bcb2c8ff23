"""Exact roots of univariate polynomials over Q(i).

The solver is modular: pick a split prime p = 1 (mod 4) at which the
square-free part stays separable, read off the roots of both residue images
(i -> +-omega with omega^2 = -1 mod p), Hensel-lift them to a large prime
power, pair the two embeddings to get candidate (real, imag) residues,
rationally reconstruct, and verify every candidate exactly.  Candidates for
true roots always survive (denominators divide the leading coefficient, which
the prime avoids), so after lifting past the root-height bound the verified
set is provably complete: whatever does not reconstruct has no root in Q(i).

Polynomials here are dense low-to-high lists; coefficients are (re, im)
integer pairs for the Z[i] layer and Scalars at the API boundary.
"""

from __future__ import annotations

import random

from ._ints import mpz, gcdint, isqrt
from .scalars import QI, Scalar

__all__ = ["gaussian_roots", "rational_reconstruct"]


# -- Z[i] coefficient helpers -------------------------------------------------


def _gnorm(c):
    return c[0] * c[0] + c[1] * c[1]


def _gmul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _gsub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _integerize(coeffs):
    """Scalars -> (list of (re, im) int pairs); clears denominators."""
    den = mpz(1)
    for c in coeffs:
        den = den * c.den // gcdint(den, c.den)
    out = []
    for c in coeffs:
        re, im, d = c.as_gauss()
        k = den // d
        out.append((re * k, im * k))
    return out


def _gpoly_strip(p):
    while p and p[-1] == (0, 0):
        p.pop()
    return p


def _gpoly_deriv(p):
    return _gpoly_strip([( k * c[0], k * c[1]) for k, c in enumerate(p)][1:])


def _gpoly_eval_scalar(coeffs, x: Scalar) -> Scalar:
    acc = Scalar.zero(x.ctx)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


# -- modular layer -------------------------------------------------------------


def _find_split_prime(rng, p_min=1 << 40):
    while True:
        cand = rng.randrange(p_min, p_min << 1) | 1
        cand -= (cand - 1) % 4  # force 1 mod 4
        if cand % 4 != 1:
            continue
        if _is_probable_prime(cand):
            return cand


def _is_probable_prime(n) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _sqrt_minus_one(p, rng):
    while True:
        a = rng.randrange(2, p - 1)
        w = pow(a, (p - 1) // 4, p)
        if w * w % p == p - 1:
            return w


def _mod_image(gpoly, omega, p):
    return [(c[0] + c[1] * omega) % p for c in gpoly]


def _pstrip(f):
    while f and f[-1] == 0:
        f.pop()
    return f


def _pmod(f, g, p):
    f = list(f)
    dg = len(g) - 1
    inv = pow(g[-1], -1, p)
    while len(f) - 1 >= dg and f:
        k = len(f) - 1 - dg
        c = f[-1] * inv % p
        for j, gc in enumerate(g):
            f[k + j] = (f[k + j] - c * gc) % p
        _pstrip(f)
    return f


def _pgcd(f, g, p):
    f, g = list(f), list(g)
    while g:
        f, g = g, _pmod(f, g, p)
        _pstrip(g)
    if f:
        inv = pow(f[-1], -1, p)
        f = [c * inv % p for c in f]
    return f


def _pmulmod(a, b, g, p):
    out = [0] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        if ca:
            for j, cb in enumerate(b):
                out[i + j] = (out[i + j] + ca * cb) % p
    return _pmod(out, g, p)


def _ppowmod(base, e, g, p):
    result = [1]
    base = _pmod(list(base), g, p)
    while e:
        if e & 1:
            result = _pmulmod(result, base, g, p)
        base = _pmulmod(base, base, g, p)
        e >>= 1
    return result


def _roots_mod_p(f, p, rng):
    """All roots in F_p of f (squarefree mod p)."""
    # restrict to the split part: gcd(x^p - x, f)
    xp = _ppowmod([0, 1], p, f, p)
    xp_minus_x = _pstrip([(c - (1 if k == 1 else 0)) % p
                          for k, c in enumerate(xp + [0, 0][:max(0, 2 - len(xp))])])
    split = _pgcd(f, xp_minus_x, p)
    roots = []
    stack = [split]
    while stack:
        g = stack.pop()
        if len(g) <= 1:
            continue
        if len(g) == 2:
            roots.append((-g[0]) * pow(g[1], -1, p) % p)
            continue
        while True:
            c = rng.randrange(p)
            shifted = _ppowmod([c, 1], (p - 1) // 2, g, p)
            shifted = _pstrip([(x - (1 if k == 0 else 0)) % p
                               for k, x in enumerate(shifted)])
            h = _pgcd(g, shifted, p)
            if 0 < len(h) - 1 < len(g) - 1:
                stack.append(h)
                stack.append(_pdiv_exact(g, h, p))
                break
    return roots


def _pdiv_exact(f, g, p):
    f = list(f)
    q = [0] * (len(f) - len(g) + 1)
    inv = pow(g[-1], -1, p)
    while len(f) >= len(g) and f:
        k = len(f) - len(g)
        c = f[-1] * inv % p
        q[k] = c
        for j, gc in enumerate(g):
            f[k + j] = (f[k + j] - c * gc) % p
        _pstrip(f)
    return q


def _hensel_lift_root(gpoly, dpoly, r, omega, p, target_m):
    """Lift root r of the omega-image mod p to mod p^target (omega lifted too)."""
    mod = p
    while mod < target_m:
        mod = mod * mod
        # lift omega: w <- w - (w^2+1)/(2w)
        omega = (omega - (omega * omega + 1) * pow(2 * omega, -1, mod)) % mod
        fr = _geval_mod(gpoly, r, omega, mod)
        fdr = _geval_mod(dpoly, r, omega, mod)
        r = (r - fr * pow(fdr, -1, mod)) % mod
    return r, omega, mod


def _geval_mod(gpoly, x, omega, mod):
    acc = 0
    for c in reversed(gpoly):
        acc = (acc * x + c[0] + c[1] * omega) % mod
    return acc


def rational_reconstruct(r, m, bound):
    """a/b = r (mod m) with |a|, b <= bound, b > 0; None if impossible."""
    r %= m
    v0, v1 = (mpz(m), mpz(0)), (mpz(r), mpz(1))
    while v1[0] > bound:
        q = v0[0] // v1[0]
        v0, v1 = v1, (v0[0] - q * v1[0], v0[1] - q * v1[1])
    a, b = v1
    if b == 0 or abs(b) > bound:
        return None
    if b < 0:
        a, b = -a, -b
    if gcdint(abs(a), b) != 1:
        return None
    return a, b


# -- public API ----------------------------------------------------------------


def gaussian_roots(coeffs):
    """Roots in Q(i) of sum coeffs[k] t^k, coeffs Scalars over plain Q(i).

    Returns (roots, cofactor_degree): `roots` is a list of (Scalar, mult)
    sorted deterministically, `cofactor_degree` the degree of the remaining
    factor that provably has no Q(i) root.
    """
    cs = list(coeffs)
    while cs and cs[-1].is_zero():
        cs.pop()
    if not cs:
        raise ValueError("root finding on the zero polynomial")
    if len(cs) == 1:
        return [], 0
    if any(not c.is_gaussian() for c in cs):
        raise ValueError("gaussian_roots needs plain Q(i) coefficients")
    g = _integerize(cs)
    # strip roots at 0
    zero_mult = 0
    while g[0] == (0, 0):
        g.pop(0)
        zero_mult += 1
    found = {}
    if zero_mult:
        found[Scalar.zero()] = zero_mult
    if len(g) > 1:
        for root in _nonzero_roots(g):
            found[root] = _vanishing_mult(g, root)
    items = sorted(found.items(), key=lambda kv: kv[0].sort_key())
    cofactor = len(g) - 1 - sum(m for r, m in found.items()
                                if not r.is_zero())
    return items, cofactor


def _nonzero_roots(g):
    rng = random.Random(0xC0FFEE ^ len(g))
    # square-free part over Q(i): g / gcd(g, g') computed mod p is enough,
    # since we only need a separable polynomial with the same root set.
    dpoly = _gpoly_deriv(list(g))
    n = len(g) - 1
    maxnorm = max(_gnorm(c) for c in g)
    lead_norm = _gnorm(g[-1])
    # |den| <= |lc|, |num| <= |den| * (1 + max|c|/|lc|) <= |lc| + max|c|
    bound = (isqrt(maxnorm) + isqrt(lead_norm) + 2) ** 2
    target = 8 * bound * bound
    for _attempt in range(24):
        p = _find_split_prime(rng)
        omega = _sqrt_minus_one(p, rng)
        f1 = _pstrip(_mod_image(g, omega, p))
        f2 = _pstrip(_mod_image(g, p - omega, p))
        if len(f1) != len(g) or len(f2) != len(g):
            continue  # leading coefficient vanished
        sqf1 = _pdiv_gcd_deriv(f1, p)
        sqf2 = _pdiv_gcd_deriv(f2, p)
        r1s = _roots_mod_p(sqf1, p, rng)
        r2s = _roots_mod_p(sqf2, p, rng)
        if not r1s or not r2s:
            return []
        # Hensel wants simple roots of the full g-images: drop roots that are
        # multiple mod p (they may hide distinct true roots; retry new prime).
        d1 = _pstrip([((k * c) % p) for k, c in enumerate(f1)][1:])
        d2 = _pstrip([((k * c) % p) for k, c in enumerate(f2)][1:])
        if any(_peval(d1, r, p) == 0 for r in r1s) or \
           any(_peval(d2, r, p) == 0 for r in r2s):
            continue
        lifted1 = []
        for r in r1s:
            rr, om, mod = _hensel_lift_root(g, dpoly, r, omega, p, target)
            lifted1.append(rr)
        omega_m = om
        modulus = mod
        lifted2 = []
        for r in r2s:
            rr, om2, mod2 = _hensel_lift_root(g, dpoly, r, p - omega, p,
                                              target)
            lifted2.append(rr)
        inv2 = pow(2, -1, modulus)
        inv2w = pow(2 * omega_m, -1, modulus)
        roots = []
        seen = set()
        for r1 in lifted1:
            for r2 in lifted2:
                x = (r1 + r2) * inv2 % modulus
                y = (r1 - r2) * inv2w % modulus
                rx = rational_reconstruct(x, modulus, bound)
                if rx is None:
                    continue
                ry = rational_reconstruct(y, modulus, bound)
                if ry is None:
                    continue
                den = rx[1] * ry[1] // gcdint(rx[1], ry[1])
                cand = Scalar.gauss(rx[0] * (den // rx[1]),
                                    ry[0] * (den // ry[1]), den)
                if cand in seen:
                    continue
                seen.add(cand)
                if _gpoly_eval_scalar(
                        [Scalar.gauss(c[0], c[1]) for c in g], cand).is_zero():
                    roots.append(cand)
        return roots
    raise RuntimeError("could not find a usable split prime")


def _pdiv_gcd_deriv(f, p):
    d = _pstrip([(k * c) % p for k, c in enumerate(f)][1:])
    if not d:
        return f
    g = _pgcd(f, d, p)
    if len(g) == 1:
        return f
    return _pdiv_exact(f, g, p)


def _peval(f, x, p):
    acc = 0
    for c in reversed(f):
        acc = (acc * x + c) % p
    return acc


def _vanishing_mult(g, root: Scalar) -> int:
    scal = [Scalar.gauss(c[0], c[1]) for c in g]
    mult = 0
    cur = scal
    while len(cur) > 1 and _gpoly_eval_scalar(cur, root).is_zero():
        # synthetic division by (t - root)
        out = []
        acc = Scalar.zero(root.ctx)
        for c in reversed(cur):
            acc = acc * root + c
            out.append(acc)
        out.reverse()
        cur = out[1:]
        mult += 1
    return mult
