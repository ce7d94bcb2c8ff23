"""Text syntax for scalars and forms.

Grammar (whitespace-insensitive):

    expr    :=  term (('+'|'-') term)*
    term    :=  unary ('*' unary)*
    unary   :=  '-' unary | atom ('^' natural)?
    atom    :=  natural | natural '/' natural | 'I' | 'sqrt' '(' natural ')'
              | variable | '(' expr ')'

Variables are the model's fixed names.  Printing is canonical: terms in
descending graded-lex order, integerized coefficients, one space around '+'
and '-'.  parse(print(F)) == F for every normalized form.
"""

from __future__ import annotations

import re as _re

from .forms import Form, FormError
from .scalars import QI, FieldCtx, Scalar, adjoin_sqrt

__all__ = ["format_scalar", "format_form", "parse_form", "parse_scalar",
           "ParseError"]


class ParseError(ValueError):
    def __init__(self, message, pos=None):
        self.pos = pos
        super().__init__(message if pos is None
                         else f"{message} (column {pos + 1})")


# -- printing -----------------------------------------------------------------


def _format_rational(num, den) -> str:
    if den == 1:
        return str(num)
    return f"{num}/{den}"


def _mask_suffix(ctx: FieldCtx, m: int) -> str:
    parts = []
    for j, d in enumerate(ctx.roots):
        if m >> j & 1:
            parts.append(f"sqrt({d})")
    return "*".join(parts)


def format_scalar(s: Scalar) -> str:
    """Canonical scalar text, e.g. '1/2 - 3*I' or '2*sqrt(5)'."""
    if s.is_zero():
        return "0"
    parts = []
    for m in range(s.ctx.dim):
        for imag in (0, 1):
            c = s.co[2 * m + imag]
            if c == 0:
                continue
            neg = c < 0
            mag = -c if neg else c
            bits = []
            suffix = _mask_suffix(s.ctx, m)
            if s.den != 1 or mag != 1 or (not imag and not suffix):
                bits.append(_format_rational(mag, s.den))
            if imag:
                bits.append("I")
            if suffix:
                bits.append(suffix)
            parts.append(("-" if neg else "+", "*".join(bits)))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, text in parts[1:]:
        out += f" {sign} {text}"
    return out


def _scalar_needs_parens(s: Scalar) -> bool:
    nonzero = sum(1 for c in s.co if c != 0)
    return nonzero > 1 or any(c < 0 for c in s.co)


def format_form(f: Form, names=None) -> str:
    """Canonical polynomial text for a form."""
    if names is None:
        names = [f"x{j}" for j in range(f.nvars)]
    if f.is_zero():
        return "0"
    chunks = []
    for e, c in f.scalar_terms():
        mono = "*".join(
            f"{names[v]}^{k}" if k > 1 else names[v]
            for v, k in enumerate(e) if k)
        if not mono:
            chunks.append(("+", format_scalar(c)))
            continue
        if c.is_one():
            chunks.append(("+", mono))
        elif (-c).is_one():
            chunks.append(("-", mono))
        elif _scalar_needs_parens(c):
            neg = c.is_real() and c.sign() < 0
            if neg:
                c = -c
            inner = format_scalar(c)
            if _scalar_needs_parens(c):
                inner = f"({inner})"
            chunks.append(("-" if neg else "+", f"{inner}*{mono}"))
        else:
            text = format_scalar(c)
            if text.startswith("-"):
                chunks.append(("-", f"{text[1:]}*{mono}"))
            else:
                chunks.append(("+", f"{text}*{mono}"))
    sign0, first = chunks[0]
    out = ("-" if sign0 == "-" else "") + first
    for sign, text in chunks[1:]:
        out += f" {sign} {text}"
    return out


# -- parsing ------------------------------------------------------------------

_TOKEN = _re.compile(r"\s*(\d+|[A-Za-z_][A-Za-z_0-9]*|\*\*|[-+*/^()])")


def _tokenize(text):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ParseError(f"unexpected character {text[pos]!r}", pos)
            break
        tok = m.group(1)
        out.append((tok, m.start(1)))
        pos = m.end()
    return out


class _Parser:
    """Recursive-descent parser producing {exponent: Scalar} term dicts."""

    def __init__(self, tokens, names, ctx):
        self.tokens = tokens
        self.i = 0
        self.names = list(names)
        self.nvars = len(self.names)
        self.ctx = ctx

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i][0]
        return None

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, want):
        tok, pos = self.next() if self.i < len(self.tokens) else (None, -1)
        if tok != want:
            raise ParseError(f"expected {want!r}, found {tok!r}", pos)

    # polynomial value = dict exponent -> Scalar (constants at exp 0)

    def parse(self):
        val = self.expr()
        if self.i != len(self.tokens):
            tok, pos = self.tokens[self.i]
            raise ParseError(f"trailing input {tok!r}", pos)
        return val

    def expr(self):
        sign = 1
        if self.peek() in ("+", "-"):
            sign = -1 if self.next()[0] == "-" else 1
        val = self.term()
        if sign < 0:
            val = self._neg(val)
        while self.peek() in ("+", "-"):
            op = self.next()[0]
            rhs = self.term()
            val = self._add(val, self._neg(rhs) if op == "-" else rhs)
        return val

    def term(self):
        val = self.unary()
        while self.peek() == "*":
            self.next()
            val = self._mul(val, self.unary())
        return val

    def unary(self):
        if self.peek() == "-":
            self.next()
            return self._neg(self.unary())
        val = self.atom()
        while self.peek() in ("^", "**"):
            self.next()
            tok, pos = self.next() if self.i < len(self.tokens) else (None, -1)
            if tok is None or not tok.isdigit():
                raise ParseError("exponent must be a natural number", pos)
            val = self._pow(val, int(tok))
        return val

    def atom(self):
        if self.i >= len(self.tokens):
            raise ParseError("unexpected end of input")
        tok, pos = self.next()
        if tok == "(":
            val = self.expr()
            self.expect(")")
            return val
        if tok.isdigit():
            num = int(tok)
            if self.peek() == "/":
                save = self.i
                self.next()
                dtok, dpos = self.next() if self.i < len(self.tokens) \
                    else (None, -1)
                if dtok is None or not dtok.isdigit():
                    self.i = save
                    return self._const(Scalar.from_rational(num, ctx=self.ctx))
                return self._const(
                    Scalar.from_rational(num, int(dtok), ctx=self.ctx))
            return self._const(Scalar.from_rational(num, ctx=self.ctx))
        if tok == "I":
            return self._const(Scalar.gauss(0, 1, ctx=self.ctx))
        if tok == "sqrt":
            self.expect("(")
            dtok, dpos = self.next() if self.i < len(self.tokens) \
                else (None, -1)
            if dtok is None or not dtok.isdigit():
                raise ParseError("sqrt expects a natural number", dpos)
            self.expect(")")
            self.ctx, root = adjoin_sqrt(
                self.ctx, Scalar.from_rational(int(dtok), ctx=self.ctx))
            return self._const(root)
        if tok in self.names:
            v = self.names.index(tok)
            exp = tuple(1 if j == v else 0 for j in range(self.nvars))
            return {exp: Scalar.one(self.ctx)}
        raise ParseError(f"unknown name {tok!r}", pos)

    def _const(self, s: Scalar):
        return {(0,) * self.nvars: s}

    @staticmethod
    def _neg(val):
        return {e: -c for e, c in val.items()}

    @staticmethod
    def _add(a, b):
        out = dict(a)
        for e, c in b.items():
            s = out.get(e)
            s = c if s is None else s + c
            if s.is_zero():
                out.pop(e, None)
            else:
                out[e] = s
        return out

    @staticmethod
    def _mul(a, b):
        out: dict = {}
        for ea, ca in a.items():
            for eb, cb in b.items():
                e = tuple(x + y for x, y in zip(ea, eb))
                prod = ca * cb
                s = out.get(e)
                s = prod if s is None else s + prod
                if s.is_zero():
                    out.pop(e, None)
                else:
                    out[e] = s
        return out

    def _pow(self, val, k):
        out = self._const(Scalar.one(self.ctx))
        for _ in range(k):
            out = self._mul(out, val)
        return out


def parse_form(text: str, names, blocks, ctx: FieldCtx = QI,
               mdeg=None) -> Form:
    """Parse polynomial text into a multihomogeneous Form."""
    parser = _Parser(_tokenize(text), names, ctx)
    terms = parser.parse()
    if not terms:
        if mdeg is None:
            raise ParseError("cannot infer the multidegree of 0; pass mdeg")
        return Form.zero(blocks, mdeg, parser.ctx)
    try:
        return Form.from_scalar_terms(blocks, terms, ctx=parser.ctx, mdeg=mdeg)
    except FormError as exc:
        raise ParseError(str(exc)) from None


def parse_scalar(text: str, ctx: FieldCtx = QI) -> Scalar:
    parser = _Parser(_tokenize(text), [], ctx)
    terms = parser.parse()
    if not terms:
        return Scalar.zero(ctx)
    return terms[()]
