"""Multihomogeneous sparse forms over the scalar tower.

A Form is a polynomial whose variables are partitioned into blocks (one block
per projective factor of a surface model) and which is homogeneous of a fixed
degree in each block.  Terms are stored sparsely:

    Form.terms : dict  exponent-tuple -> integer coefficient tuple
    Form.den   : common positive integer denominator
    Form.ctx   : scalar tower (realcremona.scalars.FieldCtx)

The coefficient of an exponent is the Scalar with coordinates terms[exp] over
den.  Keeping coefficients integerized with one shared denominator keeps the
hot loops (products, substitution, evaluation) free of per-term gcd work;
normalization happens once per operation.  The term order used everywhere is
graded lexicographic: within a multidegree, plain tuple comparison of
exponents (earlier variables weigh more), largest exponent tuple leading.

Forms are immutable by convention: no public method mutates and instances are
safe to share across threads.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from . import kernel
from ._ints import ZERO, ONE, mpz, gcd_many, gcdint
from .scalars import QI, FieldCtx, Scalar, CapacityError

__all__ = ["Form", "FormError", "reduce_mod", "gcd_forms", "RewriteRule"]


class FormError(ValueError):
    """Structural error: incompatible blocks, degrees, or substitutions."""


def _block_offsets(blocks):
    offs = [0]
    for b in blocks:
        offs.append(offs[-1] + b)
    return tuple(offs)


class Form:
    __slots__ = ("ctx", "blocks", "mdeg", "den", "terms")

    def __init__(self, ctx, blocks, mdeg, den, terms, _normalized=False):
        self.ctx = ctx
        self.blocks = tuple(blocks)
        self.mdeg = tuple(mdeg)
        if _normalized:
            self.den = den
            self.terms = terms
            return
        den = mpz(den)
        if den < 0:
            den = -den
            terms = {e: tuple(-x for x in c) for e, c in terms.items()}
        terms = {e: c for e, c in terms.items() if any(c)}
        g = den
        for c in terms.values():
            g = gcd_many([g, *c])
            if g == 1:
                break
        if g > 1:
            den //= g
            terms = {e: tuple(x // g for x in c) for e, c in terms.items()}
        self.den = den
        self.terms = terms

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(blocks, mdeg, ctx: FieldCtx = QI) -> "Form":
        return Form(ctx, blocks, mdeg, ONE, {}, _normalized=True)

    @staticmethod
    def from_scalar_terms(blocks, terms: dict, ctx: FieldCtx = QI,
                          mdeg=None) -> "Form":
        """Build from {exponent-tuple: Scalar}; multidegree checked/inferred."""
        nvars = sum(blocks)
        offs = _block_offsets(blocks)
        clean = {e: s for e, s in terms.items() if not s.is_zero()}
        for e in clean:
            if len(e) != nvars or any(x < 0 for x in e):
                raise FormError(f"bad exponent tuple {e} for blocks {blocks}")
        degs = {tuple(sum(e[offs[b]:offs[b + 1]]) for b in range(len(blocks)))
                for e in clean}
        if mdeg is None:
            if not degs:
                raise FormError("cannot infer multidegree of the zero form")
            if len(degs) > 1:
                raise FormError(f"terms are not multihomogeneous: {degs}")
            mdeg = degs.pop()
        else:
            mdeg = tuple(mdeg)
            if degs - {mdeg}:
                raise FormError(
                    f"terms do not match declared multidegree {mdeg}")
        ctx = _common_ctx([ctx, *(s.ctx for s in clean.values())])
        den = ONE
        for s in clean.values():
            den = den * s.den // gcdint(den, s.den)
        iterms = {}
        for e, s in clean.items():
            s = s.to_ctx(ctx)
            k = den // s.den
            iterms[e] = tuple(x * k for x in s.co)
        return Form(ctx, blocks, mdeg, den, iterms)

    @staticmethod
    def monomial(blocks, exp, coeff: Scalar) -> "Form":
        return Form.from_scalar_terms(blocks, {tuple(exp): coeff},
                                      ctx=coeff.ctx)

    @staticmethod
    def variable(blocks, v, ctx: FieldCtx = QI) -> "Form":
        nvars = sum(blocks)
        exp = tuple(1 if j == v else 0 for j in range(nvars))
        return Form.monomial(blocks, exp, Scalar.one(ctx))

    @staticmethod
    def constant(blocks, s: Scalar) -> "Form":
        nvars = sum(blocks)
        return Form.from_scalar_terms(blocks, {(0,) * nvars: s}, ctx=s.ctx,
                                      mdeg=(0,) * len(blocks))

    # -- structure -----------------------------------------------------------

    @property
    def nvars(self) -> int:
        return sum(self.blocks)

    def is_zero(self) -> bool:
        return not self.terms

    def total_degree(self) -> int:
        return sum(self.mdeg)

    def num_terms(self) -> int:
        return len(self.terms)

    def coeff(self, exp) -> Scalar:
        c = self.terms.get(tuple(exp))
        if c is None:
            return Scalar.zero(self.ctx)
        return Scalar(self.ctx, self.den, c)

    def scalar_terms(self):
        """Iterate (exponent, Scalar) pairs in descending term order."""
        for e in sorted(self.terms, reverse=True):
            yield e, Scalar(self.ctx, self.den, self.terms[e])

    def lead_exp(self):
        if not self.terms:
            raise FormError("zero form has no leading term")
        return max(self.terms)

    def lead_coeff(self) -> Scalar:
        return self.coeff(self.lead_exp())

    def degree_in(self, v: int) -> int:
        return max((e[v] for e in self.terms), default=0)

    def to_ctx(self, ctx: FieldCtx) -> "Form":
        if ctx is self.ctx:
            return self
        if not ctx.contains(self.ctx):
            raise CapacityError("cannot embed form into smaller tower")
        maps = ctx.mask_map(self.ctx)
        width = 2 * ctx.dim
        terms = {}
        for e, c in self.terms.items():
            out = [ZERO] * width
            for m in range(self.ctx.dim):
                big = maps[m]
                out[2 * big] = c[2 * m]
                out[2 * big + 1] = c[2 * m + 1]
            terms[e] = tuple(out)
        return Form(ctx, self.blocks, self.mdeg, self.den, terms,
                    _normalized=True)

    # -- ring operations -------------------------------------------------------

    def _check_add_compat(self, other: "Form"):
        if self.blocks != other.blocks:
            raise FormError(
                f"block mismatch: {self.blocks} vs {other.blocks}")
        if self.mdeg != other.mdeg:
            raise FormError(
                f"multidegree mismatch: {self.mdeg} vs {other.mdeg}")

    def __add__(self, other: "Form") -> "Form":
        self._check_add_compat(other)
        a, b = _align_forms(self, other)
        if a.den == b.den:
            return Form(a.ctx, a.blocks, a.mdeg, a.den,
                        kernel.add_terms(a.terms, b.terms))
        g = gcdint(a.den, b.den)
        ka = b.den // g
        kb = a.den // g
        terms = kernel.add_terms(kernel.scale_terms(a.terms, ka),
                                 kernel.scale_terms(b.terms, kb))
        return Form(a.ctx, a.blocks, a.mdeg, a.den * ka, terms)

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def __neg__(self) -> "Form":
        terms = {e: tuple(-x for x in c) for e, c in self.terms.items()}
        return Form(self.ctx, self.blocks, self.mdeg, self.den, terms,
                    _normalized=True)

    def __mul__(self, other: "Form") -> "Form":
        if self.blocks != other.blocks:
            raise FormError(
                f"block mismatch: {self.blocks} vs {other.blocks}")
        a, b = _align_forms(self, other)
        mdeg = tuple(x + y for x, y in zip(a.mdeg, b.mdeg))
        terms = kernel.mul_terms(a.terms, b.terms, a.ctx.dim, a.ctx.factor)
        return Form(a.ctx, a.blocks, mdeg, a.den * b.den, terms)

    def scale(self, s: Scalar) -> "Form":
        if s.is_zero():
            return Form.zero(self.blocks, self.mdeg, self.ctx)
        ctx = _common_ctx([self.ctx, s.ctx])
        f = self.to_ctx(ctx)
        s = s.to_ctx(ctx)
        terms = {e: kernel.coeff_mul(c, s.co, ctx.dim, ctx.factor)
                 for e, c in f.terms.items()}
        return Form(ctx, f.blocks, f.mdeg, f.den * s.den, terms)

    def scale_int(self, k) -> "Form":
        if k == 0:
            return Form.zero(self.blocks, self.mdeg, self.ctx)
        return Form(self.ctx, self.blocks, self.mdeg, self.den,
                    kernel.scale_terms(self.terms, mpz(k)))

    def __pow__(self, k: int) -> "Form":
        if k < 0:
            raise FormError("negative form power")
        result = Form.constant(self.blocks, Scalar.one(self.ctx))
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def conj(self) -> "Form":
        terms = {}
        for e, c in self.terms.items():
            out = list(c)
            for m in range(self.ctx.dim):
                out[2 * m + 1] = -out[2 * m + 1]
            terms[e] = tuple(out)
        return Form(self.ctx, self.blocks, self.mdeg, self.den, terms,
                    _normalized=True)

    def real_imag(self):
        """(F + conj F)/2 and (F - conj F)/(2i) as forms."""
        re_terms, im_terms = {}, {}
        for e, c in self.terms.items():
            re = [ZERO] * len(c)
            im = [ZERO] * len(c)
            for m in range(self.ctx.dim):
                re[2 * m] = c[2 * m]
                im[2 * m] = c[2 * m + 1]
            if any(re):
                re_terms[e] = tuple(re)
            if any(im):
                im_terms[e] = tuple(im)
        return (Form(self.ctx, self.blocks, self.mdeg, self.den, re_terms),
                Form(self.ctx, self.blocks, self.mdeg, self.den, im_terms))

    def derivative(self, v: int) -> "Form":
        offs = _block_offsets(self.blocks)
        b = next(i for i in range(len(self.blocks))
                 if offs[i] <= v < offs[i + 1])
        mdeg = list(self.mdeg)
        if mdeg[b] == 0:
            return Form.zero(self.blocks, tuple(mdeg), self.ctx)
        mdeg[b] -= 1
        terms = {}
        for e, c in self.terms.items():
            k = e[v]
            if k == 0:
                continue
            ne = e[:v] + (k - 1,) + e[v + 1:]
            terms[ne] = tuple(x * k for x in c)
        return Form(self.ctx, self.blocks, tuple(mdeg), self.den, terms)

    # -- normalization ------------------------------------------------------

    def monic(self) -> "Form":
        """Scale so the leading coefficient (term order) is one."""
        if self.is_zero():
            return self
        return self.scale(self.lead_coeff().inverse())

    def is_real_up_to_unit(self):
        """Return a real Scalar u with conj(F) == u*F, or None.

        A form is 'real' exactly when such a nonzero real unit exists.
        """
        if self.is_zero():
            return Scalar.one(self.ctx)
        lead = self.lead_exp()
        u = self.conj().coeff(lead) / self.coeff(lead)
        if not u.is_real():
            return None
        if self.conj() == self.scale(u):
            return u
        return None

    # -- evaluation and substitution ----------------------------------------

    def evaluate(self, point: Sequence[Scalar]) -> Scalar:
        """Exact value at a full coordinate tuple (all blocks concatenated)."""
        if len(point) != self.nvars:
            raise FormError("evaluation point has wrong length")
        ctx = _common_ctx([self.ctx, *(s.ctx for s in point)])
        f = self.to_ctx(ctx)
        offs = _block_offsets(self.blocks)
        # Integerize block-wise; each block scaling contributes den^mdeg.
        scaled = []
        extra_den = ONE
        for b, nb in enumerate(self.blocks):
            coords = [point[v].to_ctx(ctx) for v in range(offs[b], offs[b + 1])]
            db = ONE
            for s in coords:
                db = db * s.den // gcdint(db, s.den)
            for s in coords:
                k = db // s.den
                scaled.append(tuple(x * k for x in s.co))
            extra_den *= db ** self.mdeg[b]
        maxdeg = [0] * self.nvars
        for e in f.terms:
            for v, k in enumerate(e):
                if k > maxdeg[v]:
                    maxdeg[v] = k
        one = tuple([ONE] + [ZERO] * (2 * ctx.dim - 1))
        powers = []
        for v in range(self.nvars):
            row = [one]
            for _ in range(maxdeg[v]):
                row.append(kernel.coeff_mul(row[-1], scaled[v], ctx.dim,
                                            ctx.factor))
            powers.append(row)
        co = kernel.evaluate_terms(f.terms, powers, ctx.dim, ctx.factor)
        return Scalar(ctx, f.den * extra_den, co)

    def substitute(self, args: Sequence["Form"]) -> "Form":
        """Substitute one form per variable of self.

        All substituted forms must share a block structure, and the forms for
        the variables of one block of self must share one multidegree, so the
        result is multihomogeneous.
        """
        if len(args) != self.nvars:
            raise FormError("substitute needs one form per variable")
        offs = _block_offsets(self.blocks)
        tgt_blocks = args[0].blocks
        ctx = _common_ctx([self.ctx, *(g.ctx for g in args)])
        args = [g.to_ctx(ctx) for g in args]
        block_mdeg = []
        block_den = []
        for b, nb in enumerate(self.blocks):
            gs = args[offs[b]:offs[b + 1]]
            mdegs = {g.mdeg for g in gs}
            blockset = {g.blocks for g in gs}
            if len(mdegs) != 1 or blockset != {tgt_blocks}:
                raise FormError(
                    "inhomogeneous substitution: block %d arguments must "
                    "share blocks and multidegree" % b)
            db = ONE
            for g in gs:
                db = db * g.den // gcdint(db, g.den)
            # Integerize: substitute g*db (den 1) and divide the result by
            # db^mdeg at the end, which is uniform thanks to homogeneity.
            gs = [Form(ctx, tgt_blocks, g.mdeg, ONE,
                       kernel.scale_terms(g.terms, db // g.den),
                       _normalized=True) for g in gs]
            args[offs[b]:offs[b + 1]] = gs
            block_mdeg.append(mdegs.pop())
            block_den.append(db)
        out_mdeg = tuple(
            sum(self.mdeg[b] * block_mdeg[b][j] for b in range(len(self.blocks)))
        for j in range(len(tgt_blocks)))
        extra_den = ONE
        for b in range(len(self.blocks)):
            extra_den *= block_den[b] ** self.mdeg[b]
        f = self.to_ctx(ctx)
        items = list(f.terms.items())
        terms = _subst_rec(items, 0, args, ctx, tgt_blocks, out_mdeg,
                           _PowerCache(args))
        return Form(ctx, tgt_blocks, out_mdeg, f.den * extra_den, terms.terms)

    def restrict_line(self, base: Sequence[Scalar], direction: Sequence[Scalar],
                      factor: int = 0):
        """Coefficients of F restricted to the pencil base + t*direction.

        Variables in block `factor` are replaced by base_v*s + dir_v*t (the
        other blocks are evaluated at base); returns the list of Scalar
        coefficients of t^0..t^d on the affine line s = 1.
        """
        offs = _block_offsets(self.blocks)
        ctx = _common_ctx([self.ctx, *(s.ctx for s in base),
                           *(s.ctx for s in direction)])
        line_blocks = (2,)
        args = []
        for v in range(self.nvars):
            b = next(i for i in range(len(self.blocks))
                     if offs[i] <= v < offs[i + 1])
            if b == factor:
                args.append(Form.from_scalar_terms(
                    line_blocks,
                    {(1, 0): base[v].to_ctx(ctx),
                     (0, 1): direction[v].to_ctx(ctx)}, ctx=ctx, mdeg=(1,)))
            else:
                args.append(Form.constant(line_blocks, base[v].to_ctx(ctx)))
        g = self.substitute(args)
        d = g.mdeg[0]
        return [g.coeff((d - k, k)) for k in range(d + 1)]

    # -- division ---------------------------------------------------------------

    def exact_div(self, divisor: "Form") -> "Form":
        """Exact quotient self / divisor; FormError when not divisible."""
        if divisor.is_zero():
            raise FormError("division by zero form")
        if self.is_zero():
            mdeg = tuple(a - b for a, b in zip(self.mdeg, divisor.mdeg))
            return Form.zero(self.blocks, mdeg, self.ctx)
        a, d = _align_forms(self, divisor)
        mdeg = tuple(x - y for x, y in zip(a.mdeg, d.mdeg))
        if any(m < 0 for m in mdeg):
            raise FormError("quotient would have negative degree")
        ctx = a.ctx
        dim = ctx.dim
        lead_d = d.lead_exp()
        inv_lead = Scalar(ctx, d.den, d.terms[lead_d]).inverse()
        rem = {e: Scalar(ctx, a.den, c) for e, c in a.terms.items()}
        q_terms: dict = {}
        while rem:
            e = max(rem)
            qe = tuple(x - y for x, y in zip(e, lead_d))
            if any(x < 0 for x in qe):
                raise FormError("not divisible (leading-term obstruction)")
            qc = rem[e] * inv_lead
            q_terms[qe] = qc
            # rem -= qc * x^qe * d
            for de, dc in d.terms.items():
                te = tuple(x + y for x, y in zip(qe, de))
                val = rem.get(te, Scalar.zero(ctx)) - qc * Scalar(ctx, d.den, dc)
                if val.is_zero():
                    rem.pop(te, None)
                else:
                    rem[te] = val
        return Form.from_scalar_terms(a.blocks, q_terms, ctx=ctx, mdeg=mdeg)

    def divides(self, other: "Form") -> bool:
        try:
            other.exact_div(self)
            return True
        except FormError:
            return False

    # -- comparisons and misc -----------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        if self.blocks != other.blocks or self.mdeg != other.mdeg:
            return False
        a, b = _align_forms(self, other)
        return a.den == b.den and a.terms == b.terms

    def __hash__(self):
        key = tuple(sorted(self.terms.items()))
        return hash((self.blocks, self.mdeg, int(self.den),
                     tuple((e, tuple(int(x) for x in c)) for e, c in key)))

    def proportional(self, other: "Form"):
        """Return Scalar u with other == u*self, or None."""
        if self.blocks != other.blocks or self.mdeg != other.mdeg:
            return None
        if self.is_zero():
            return Scalar.one(self.ctx) if other.is_zero() else None
        if other.is_zero():
            return None
        if set(self.terms) != set(other.terms):
            return None
        lead = self.lead_exp()
        u = other.coeff(lead) / self.coeff(lead)
        if self.scale(u) == other:
            return u
        return None

    def __repr__(self):
        from .io import format_form
        return f"Form({format_form(self)})"


class _PowerCache:
    """Cache of argument powers used by the Horner substitution."""

    __slots__ = ("args", "cache")

    def __init__(self, args):
        self.args = args
        self.cache = [dict() for _ in args]

    def power(self, v, k):
        c = self.cache[v]
        f = c.get(k)
        if f is None:
            if k == 1:
                f = self.args[v]
            else:
                half = self.power(v, k // 2)
                f = half * half
                if k & 1:
                    f = f * self.args[v]
            c[k] = f
        return f


def _subst_rec(items, v, args, ctx, tgt_blocks, out_mdeg, powers):
    """Recursive Horner substitution.  Returns an integer-term Form whose den
    is 1 by construction (arguments were integerized by the caller)."""
    nargs = len(args)
    if v == nargs:
        # items all have the empty remaining exponent: a single constant
        total = None
        for _, c in items:
            total = c if total is None else kernel.coeff_add(total, c)
        nv = sum(tgt_blocks)
        mdeg0 = (0,) * len(tgt_blocks)
        if total is None or not any(total):
            return Form.zero(tgt_blocks, mdeg0, ctx)
        return Form(ctx, tgt_blocks, mdeg0, ONE, {(0,) * nv: total},
                    _normalized=True)
    groups: dict = {}
    for e, c in items:
        groups.setdefault(e[v], []).append((e, c))
    ks = sorted(groups, reverse=True)
    acc = None
    prev_k = None
    for k in ks:
        part = _subst_rec(groups[k], v + 1, args, ctx, tgt_blocks, out_mdeg,
                          powers)
        if acc is None:
            acc = part
        else:
            step = prev_k - k
            acc = acc * powers.power(v, step)
            acc = _add_padded(acc, part)
        prev_k = k
    if prev_k:
        acc = acc * powers.power(v, prev_k)
    return acc


def _add_padded(a: Form, b: Form) -> Form:
    """Add forms of different multidegrees by treating lower one as-is.

    Intermediate Horner accumulators are inhomogeneous in the target grading;
    we carry them as raw term dicts inside a Form shell with the larger
    multidegree and only require true homogeneity at the very end.
    """
    if b.is_zero():
        return a
    if a.is_zero():
        return b
    ctx = _common_ctx([a.ctx, b.ctx])
    a = a.to_ctx(ctx)
    b = b.to_ctx(ctx)
    mdeg = tuple(max(x, y) for x, y in zip(a.mdeg, b.mdeg))
    g = gcdint(a.den, b.den)
    ka = b.den // g
    kb = a.den // g
    terms = kernel.add_terms(kernel.scale_terms(a.terms, ka),
                             kernel.scale_terms(b.terms, kb))
    return Form(ctx, a.blocks, mdeg, a.den * ka, terms)


def _align_forms(a: Form, b: Form):
    ctx = _common_ctx([a.ctx, b.ctx])
    return a.to_ctx(ctx), b.to_ctx(ctx)


def _common_ctx(ctxs) -> FieldCtx:
    best = QI
    for c in ctxs:
        if c is best or best.contains(c):
            continue
        if c.contains(best):
            best = c
        else:
            raise CapacityError(f"incompatible towers {best} and {c}")
    return best


# -- rewriting / reduction ---------------------------------------------------


class RewriteRule:
    """Monomial rewrite lead -> replacement (forms of equal multidegree)."""

    __slots__ = ("lead", "replacement")

    def __init__(self, lead, replacement: Form):
        self.lead = tuple(lead)
        self.replacement = replacement

    def applies(self, exp) -> bool:
        return all(e >= l for e, l in zip(exp, self.lead))


def rewrite(form: Form, rules: Sequence[RewriteRule]) -> Form:
    """Normal form of `form` under the rewrite rules.

    Rules must rewrite each monomial to term-order-smaller monomials (true for
    every relation rule in this package), which guarantees termination.
    """
    ctx = _common_ctx([form.ctx, *(r.replacement.ctx for r in rules)])
    f = form.to_ctx(ctx)
    # Fast path: a single rule var^2 -> var-free replacement (the quadric
    # relations).  Split each exponent as var^(2m+r) and use cached powers.
    if len(rules) == 1:
        single = _square_rule_var(rules[0], f.nvars)
        if single is not None:
            return _rewrite_square(f, single, rules[0].replacement.to_ctx(ctx))
    work = {e: Scalar(ctx, f.den, c) for e, c in f.terms.items()}
    out: dict = {}
    guard = 0
    while work:
        guard += 1
        if guard > 10_000_000:
            raise FormError("rewriting did not terminate")
        e, c = work.popitem()
        rule = next((r for r in rules if r.applies(e)), None)
        if rule is None:
            cur = out.get(e)
            s = c if cur is None else cur + c
            if s.is_zero():
                out.pop(e, None)
            else:
                out[e] = s
            continue
        rep = rule.replacement.to_ctx(ctx)
        shift = tuple(x - l for x, l in zip(e, rule.lead))
        for re_, rc in rep.scalar_terms():
            ne = tuple(x + s for x, s in zip(re_, shift))
            prod = c * rc
            cur = work.get(ne)
            s = prod if cur is None else cur + prod
            if s.is_zero():
                work.pop(ne, None)
            else:
                work[ne] = s
    return Form.from_scalar_terms(f.blocks, out, ctx=ctx, mdeg=f.mdeg)


def _square_rule_var(rule: RewriteRule, nvars: int):
    """Index v when the rule is exactly var_v^2 -> (var_v-free form)."""
    hot = [j for j, x in enumerate(rule.lead) if x]
    if len(hot) != 1 or rule.lead[hot[0]] != 2:
        return None
    v = hot[0]
    if any(e[v] for e in rule.replacement.terms):
        return None
    return v


def _rewrite_square(f: Form, v: int, rep: Form):
    groups: dict = {}
    for e, c in f.terms.items():
        m, r = divmod(e[v], 2)
        ne = e[:v] + (r,) + e[v + 1:]
        groups.setdefault(m, {})[ne] = c
    powers = {0: Form.constant(f.blocks, Scalar.one(f.ctx))}
    acc = None
    for m in sorted(groups):
        if m not in powers:
            prev = max(powers)
            p = powers[prev]
            for _ in range(m - prev):
                p = p * rep
            powers[m] = p
        piece = Form(f.ctx, f.blocks, f.mdeg, f.den, dict(groups[m]),
                     _normalized=True)
        piece = piece * powers[m] if m else piece
        acc = piece if acc is None else _add_padded(acc, piece)
    if acc is None:
        return Form.zero(f.blocks, f.mdeg, f.ctx)
    return Form(acc.ctx, f.blocks, f.mdeg, acc.den, acc.terms)


def reduce_mod(form: Form, relation: Form, var: int) -> Form:
    """Canonical remainder of `form` modulo a relation quadratic in one
    variable.

    The relation must contain var^2 with an invertible coefficient and no
    higher power of var; the rewrite sends var^2 to the negated rest.  The
    result has degree <= 1 in var and the operation is idempotent.
    """
    sq = None
    for e in relation.terms:
        if e[var] >= 2:
            if e[var] > 2 or any(x for j, x in enumerate(e) if j != var):
                raise FormError("relation is not monic-quadratic in the "
                                "eliminated variable")
            if sq is not None:
                raise FormError("relation has several var^2 terms")
            sq = e
    if sq is None:
        raise FormError("eliminated variable does not appear squared")
    c = relation.coeff(sq)
    rest = relation - Form.monomial(relation.blocks, sq, c)
    replacement = rest.scale(-(c.inverse()))
    rule = RewriteRule(sq, replacement)
    return rewrite(form, [rule])


# -- gcd ----------------------------------------------------------------------


def gcd_forms(forms: Iterable[Form]) -> Form:
    """Greatest common divisor, monic under the term order.

    Content/primitive-part recursion over the first active variable, with a
    subresultant pseudo-remainder sequence at the univariate layer.  Inputs
    must share a block structure; gcd of zeros is zero.
    """
    fs = [f for f in forms]
    if not fs:
        raise FormError("gcd of an empty list")
    blocks = fs[0].blocks
    if any(f.blocks != blocks for f in fs):
        raise FormError("gcd inputs have mismatched blocks")
    nz = [f for f in fs if not f.is_zero()]
    if not nz:
        return fs[0]
    g = nz[0]
    for f in nz[1:]:
        g = _gcd2(g, f)
        if g.total_degree() == 0:
            break
    return g.monic()


def _gcd2(a: Form, b: Form) -> Form:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    v = next((v for v in range(a.nvars)
              if a.degree_in(v) > 0 or b.degree_in(v) > 0), None)
    if v is None:
        return Form.constant(a.blocks, Scalar.one(a.ctx))
    da, db = a.degree_in(v), b.degree_in(v)
    if da == 0 or db == 0:
        # gcd(content-only, other) = gcd of contents
        ca = _content(a, v)
        cb = _content(b, v)
        return _gcd2(ca, cb)
    if da < db:
        a, b = b, a
        da, db = db, da
    ca, pa = _content_pp(a, v)
    cb, pb = _content_pp(b, v)
    cont = _gcd2(ca, cb)
    g = _prs_gcd(pa, pb, v)
    return cont * g


def _coeff_forms(f: Form, v: int):
    """Coefficients of f as a polynomial in variable v (dict deg -> Form)."""
    offs = _block_offsets(f.blocks)
    bidx = next(i for i in range(len(f.blocks)) if offs[i] <= v < offs[i + 1])
    groups: dict = {}
    for e, c in f.terms.items():
        k = e[v]
        ne = e[:v] + (0,) + e[v + 1:]
        groups.setdefault(k, {})[ne] = c
    out = {}
    for k, terms in groups.items():
        mdeg = list(f.mdeg)
        mdeg[bidx] -= k
        out[k] = Form(f.ctx, f.blocks, tuple(mdeg), f.den, dict(terms))
    return out

def _content(f: Form, v: int) -> Form:
    coeffs = list(_coeff_forms(f, v).values())
    g = coeffs[0]
    for c in coeffs[1:]:
        g = _gcd2(g, c)
        if g.total_degree() == 0:
            return Form.constant(f.blocks, Scalar.one(f.ctx))
    return g.monic()


def _content_pp(f: Form, v: int):
    c = _content(f, v)
    if c.total_degree() == 0:
        return c, f
    return c, f.exact_div(c)


def _shift_var(f: Form, v: int, k: int) -> Form:
    if k == 0:
        return f
    offs = _block_offsets(f.blocks)
    bidx = next(i for i in range(len(f.blocks)) if offs[i] <= v < offs[i + 1])
    mdeg = list(f.mdeg)
    mdeg[bidx] += k
    terms = {e[:v] + (e[v] + k,) + e[v + 1:]: c for e, c in f.terms.items()}
    return Form(f.ctx, f.blocks, tuple(mdeg), f.den, terms, _normalized=True)


def _pseudo_rem(a: Form, b: Form, v: int) -> Form:
    """prem(a, b) in the variable v: lc(b)^(da-db+1) * a mod b."""
    da, db = a.degree_in(v), b.degree_in(v)
    bc = _coeff_forms(b, v)
    lb = bc[db]
    r = a
    steps = da - db + 1
    while not r.is_zero() and r.degree_in(v) >= db:
        dr = r.degree_in(v)
        rc = _coeff_forms(r, v)
        lr = rc[dr]
        r = r * lb - _shift_var(lr, v, dr - db) * b
        steps -= 1
    for _ in range(max(0, steps)):
        r = r * lb
    return r


def _prs_gcd(a: Form, b: Form, v: int) -> Form:
    """Primitive gcd of primitive a, b via a primitive PRS in variable v."""
    if a.degree_in(v) < b.degree_in(v):
        a, b = b, a
    while True:
        if b.is_zero():
            _, pp = _content_pp(a, v)
            return pp
        r = _pseudo_rem(a, b, v)
        if r.is_zero():
            _, pp = _content_pp(b, v)
            return pp
        if r.degree_in(v) == 0:
            return Form.constant(a.blocks, Scalar.one(a.ctx))
        _, r = _content_pp(r, v)
        a, b = b, r
