"""Symbolic weight expressions: exact sums of terms

    rational * h^a * prod_m dW_m^b_m * prod Int_m[...]^c

where ``Int_m[f1, .., fk]`` denotes the integral over [0, h] of the product
of the factors against the driver of color m (color 0 integrates against
time).  Factors inside an integrand are functions of the integration
variable: the symbol that reads ``h`` at top level denotes the upper limit
of the enclosing integral one level down, so nesting needs no named
variables.  Integrals against either stochastic calculus share one symbolic
form; the Ito/Stratonovich choice is made at evaluation time.

Normalization is applied by every constructor:

* integrands are distributed over sums and merged into a single monomial
  per atom, with the rational coefficient pulled out;
* ``Int_0`` of a pure power of the time variable integrates exactly, so
  purely deterministic expressions collapse to rational multiples of
  powers of h;
* ``Int_m[1]`` for m > 0 becomes the increment atom ``dW_m``;
* equal atom structures merge, zero terms vanish.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction


class ExprError(Exception):
    pass


class ExprParseError(ExprError):
    pass


@dataclass(frozen=True)
class IntAtom:
    """Irreducible integral of a monomial integrand against driver ``color``."""

    color: int
    integrand: "Mono"


@dataclass(frozen=True)
class Mono:
    """Coefficient-free monomial: time power, increment powers, integral powers."""

    hpow: int = 0
    dws: tuple[tuple[int, int], ...] = ()
    ints: tuple[tuple[IntAtom, int], ...] = ()

    @property
    def is_one(self) -> bool:
        return self.hpow == 0 and not self.dws and not self.ints

    @property
    def is_deterministic(self) -> bool:
        return not self.dws and not self.ints


ONE_MONO = Mono()


def atom_key(atom: IntAtom):
    return (atom.color, mono_key(atom.integrand))


def mono_key(mono: Mono):
    return (mono.hpow, mono.dws, tuple((atom_key(a), p) for a, p in mono.ints))


def mono_mul(a: Mono, b: Mono) -> Mono:
    if a.is_one:
        return b
    if b.is_one:
        return a
    dws: dict[int, int] = {}
    for m, p in a.dws + b.dws:
        dws[m] = dws.get(m, 0) + p
    ints: dict[IntAtom, int] = {}
    for atom, p in a.ints + b.ints:
        ints[atom] = ints.get(atom, 0) + p
    return Mono(a.hpow + b.hpow,
                tuple(sorted(dws.items())),
                tuple(sorted(ints.items(), key=lambda ap: atom_key(ap[0]))))


@dataclass(frozen=True)
class WeightExpr:
    """Normalized sum of (rational, monomial) terms."""

    terms: tuple[tuple[Fraction, Mono], ...] = ()

    # -- queries ---------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_deterministic(self) -> bool:
        return all(mono.is_deterministic for _, mono in self.terms)

    def colors(self) -> set[int]:
        """All stochastic colors referenced anywhere in the expression."""
        out: set[int] = set()

        def visit(mono: Mono):
            out.update(m for m, _ in mono.dws)
            for atom, _ in mono.ints:
                if atom.color > 0:
                    out.add(atom.color)
                visit(atom.integrand)

        for _, mono in self.terms:
            visit(mono)
        return out

    def as_rational_hpoly(self) -> dict[int, Fraction]:
        """Coefficients by power of h; raises for stochastic expressions."""
        if not self.is_deterministic:
            raise ExprError("expression is not deterministic")
        return {mono.hpow: c for c, mono in self.terms}

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other: "WeightExpr") -> "WeightExpr":
        if not isinstance(other, WeightExpr):
            return NotImplemented
        return _from_term_list(list(self.terms) + list(other.terms))

    def __neg__(self) -> "WeightExpr":
        return WeightExpr(tuple((-c, m) for c, m in self.terms))

    def __sub__(self, other: "WeightExpr") -> "WeightExpr":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, WeightExpr):
            out: list[tuple[Fraction, Mono]] = []
            for c1, m1 in self.terms:
                for c2, m2 in other.terms:
                    out.append((c1 * c2, mono_mul(m1, m2)))
            return _from_term_list(out)
        if isinstance(other, (int, Fraction)):
            return self.scaled(Fraction(other))
        return NotImplemented

    __rmul__ = __mul__

    def scaled(self, c: Fraction) -> "WeightExpr":
        if c == 0:
            return ZERO
        return WeightExpr(tuple((c * coeff, mono) for coeff, mono in self.terms))

    def __pow__(self, n: int) -> "WeightExpr":
        if n < 0:
            raise ExprError("negative powers are not defined")
        out = ONE
        for _ in range(n):
            out = out * self
        return out

    def __str__(self) -> str:
        return format_expr(self)


def _from_term_list(raw: list[tuple[Fraction, Mono]]) -> WeightExpr:
    acc: dict[Mono, Fraction] = {}
    for c, mono in raw:
        acc[mono] = acc.get(mono, Fraction(0)) + c
    terms = tuple(sorted(((c, m) for m, c in acc.items() if c != 0),
                         key=lambda cm: mono_key(cm[1])))
    return WeightExpr(terms)


ZERO = WeightExpr(())
ONE = WeightExpr(((Fraction(1), ONE_MONO),))


def rational(c) -> WeightExpr:
    c = Fraction(c)
    return ZERO if c == 0 else WeightExpr(((c, ONE_MONO),))


def h_power(a: int, coeff=1) -> WeightExpr:
    return WeightExpr(((Fraction(coeff), Mono(hpow=a)),)) if coeff else ZERO


H = h_power(1)


def dw(m: int) -> WeightExpr:
    if m <= 0:
        raise ExprError("increment atoms exist for stochastic colors only")
    return WeightExpr(((Fraction(1), Mono(dws=((m, 1),))),))


def integral(color: int, factors) -> WeightExpr:
    """The integral over [0, h] of the product of ``factors`` against the
    color-``color`` driver, normalized."""
    if color < 0:
        raise ExprError(f"invalid color {color}")
    factor_list = list(factors) or [ONE]
    out: list[tuple[Fraction, Mono]] = []
    stack = [(Fraction(1), ONE_MONO, 0)]
    while stack:
        coeff, mono, idx = stack.pop()
        if idx == len(factor_list):
            out.extend(_reduced_integral(color, coeff, mono))
            continue
        fac = factor_list[idx]
        if fac.is_zero:
            continue
        for c, m in fac.terms:
            stack.append((coeff * c, mono_mul(mono, m), idx + 1))
    return _from_term_list(out)


def _reduced_integral(color: int, coeff: Fraction, mono: Mono):
    if mono.is_deterministic:
        a = mono.hpow
        if color == 0:
            yield (coeff * Fraction(1, a + 1), Mono(hpow=a + 1))
            return
        if a == 0:
            yield (coeff, Mono(dws=((color, 1),)))
            return
    yield (coeff, Mono(ints=((IntAtom(color, mono), 1),)))


# ---------------------------------------------------------------------------
# Text form
# ---------------------------------------------------------------------------


def _format_mono(mono: Mono, depth: int) -> list[str]:
    var = "h" if depth == 0 else "s"
    parts: list[str] = []
    if depth == 0:
        if mono.hpow:
            parts.append(var if mono.hpow == 1 else f"{var}^{mono.hpow}")
        parts.extend(_format_dws(mono))
        parts.extend(_format_ints(mono, depth))
    else:
        # integrand factor lists read innermost-integral first, time power last
        parts.extend(_format_ints(mono, depth))
        parts.extend(_format_dws(mono))
        if mono.hpow:
            parts.append(var if mono.hpow == 1 else f"{var}^{mono.hpow}")
    return parts


def _format_dws(mono: Mono) -> list[str]:
    return [f"dW{m}" if p == 1 else f"dW{m}^{p}" for m, p in mono.dws]


def _format_ints(mono: Mono, depth: int) -> list[str]:
    out = []
    for atom, p in mono.ints:
        inner = ",".join(_format_mono(atom.integrand, depth + 1)) or "1"
        body = f"Int{atom.color}[{inner}]"
        out.append(body if p == 1 else f"{body}^{p}")
    return out


def format_expr(expr: WeightExpr) -> str:
    """Documented text form, e.g. ``1/3*Int0[Int1[s^4],s]`` or ``3/8*h^2*dW1``."""
    if expr.is_zero:
        return "0"
    pieces = []
    for i, (coeff, mono) in enumerate(expr.terms):
        sign = "-" if coeff < 0 else "+"
        mag = -coeff if coeff < 0 else coeff
        factors = _format_mono(mono, 0)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([str(mag)] + factors)
        if i == 0:
            pieces.append(body if sign == "+" else f"-{body}")
        else:
            pieces.append(f" {sign} {body}")
    return "".join(pieces)


_TOKEN_RE = re.compile(r"\s*(Int\d+|dW\d+|\d+(?:/\d+)?|[hs]|\^|\*|\+|-|\[|\]|,|\(|\))")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            if text[pos:].strip():
                raise ExprParseError(f"bad token at {text[pos:]!r}")
            break
        tokens.append(match.group(1))
        pos = match.end()
    return tokens


class _ExprParser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ExprParseError("unexpected end of expression")
        self.pos += 1
        return tok

    def parse_expr(self) -> WeightExpr:
        first_sign = Fraction(1)
        if self.peek() in ("+", "-"):
            first_sign = Fraction(-1) if self.take() == "-" else Fraction(1)
        acc = self.parse_term().scaled(first_sign)
        while self.peek() in ("+", "-"):
            sign = Fraction(-1) if self.take() == "-" else Fraction(1)
            acc = acc + self.parse_term().scaled(sign)
        return acc

    def parse_term(self) -> WeightExpr:
        out = self.parse_power()
        while self.peek() == "*":
            self.take()
            out = out * self.parse_power()
        return out

    def parse_power(self) -> WeightExpr:
        base = self.parse_factor()
        if self.peek() == "^":
            self.take()
            tok = self.take()
            if not tok.isdigit():
                raise ExprParseError(f"exponent must be an integer, got {tok!r}")
            return base ** int(tok)
        return base

    def parse_factor(self) -> WeightExpr:
        tok = self.take()
        if tok == "(":
            inner = self.parse_expr()
            if self.take() != ")":
                raise ExprParseError("expected ')'")
            return inner
        if tok in ("h", "s"):
            return H
        if tok.startswith("dW"):
            return dw(int(tok[2:]))
        if tok.startswith("Int"):
            color = int(tok[3:])
            if self.take() != "[":
                raise ExprParseError("expected '[' after Int")
            factors = [self.parse_expr()]
            while self.peek() == ",":
                self.take()
                factors.append(self.parse_expr())
            if self.take() != "]":
                raise ExprParseError("expected ']'")
            return integral(color, factors)
        if re.fullmatch(r"\d+(/\d+)?", tok):
            return rational(Fraction(tok))
        raise ExprParseError(f"unexpected token {tok!r}")


def parse_expr(text: str) -> WeightExpr:
    """Parse the documented text form back into a normalized expression."""
    parser = _ExprParser(_tokenize(text))
    out = parser.parse_expr()
    if parser.peek() is not None:
        raise ExprParseError(f"trailing tokens from {parser.peek()!r}")
    return out
