"""Exact scalar coefficients over a declared symbol context.

Coefficients of all densities live in a multivariate rational function
field Q(coordinates, params, generators).  Coordinates are the flat
coordinates t^1..t^N (identified with the jet variables u^alpha_0),
params are free constants (m, c, A, ...), and generators are
transcendental atoms such as u^m, ln u or e^{-v} whose coordinate
derivatives are declared by a table.  Differentiation acts by the chain
rule through that table, so no generator is ever expanded.

The heavy lifting (sparse polynomial arithmetic, gcd cancellation,
canonical forms) is delegated to sympy.polys; this module owns the
symbol roles, the chain rule, substitution and the manifest / expression
grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from sympy import QQ
from sympy.polys.fields import field as _sympy_field


class ScalarError(Exception):
    """Base class for scalar-layer failures."""


class ContextMismatch(ScalarError):
    """Two expressions from different contexts were combined."""


class UnknownSymbol(ScalarError):
    """A name is not a coordinate, param or generator of the context."""


class DivisionByZero(ScalarError):
    """Division by the zero expression."""


class DenominatorVanishes(ScalarError):
    """A substitution sent a denominator to zero."""


class ScalarParseError(ScalarError):
    """The expression or manifest text does not match the grammar."""


_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

ScalarLike = Union["ScalarExpr", int, Fraction, str]


@dataclass(frozen=True)
class Param:
    """A free constant of the context."""

    name: str
    note: str = ""


@dataclass(frozen=True)
class Generator:
    """A transcendental coefficient atom with a declared derivative table.

    ``derivatives`` maps coordinate names to expression strings; absent
    coordinates have derivative zero.  The table entries may mention any
    context symbol, including the generator itself (d/du u^m = m*P/u).
    """

    name: str
    derivatives: tuple = ()  # tuple of (coordinate, expression string)
    note: str = ""

    @staticmethod
    def make(name: str, derivatives: Mapping[str, str], note: str = "") -> "Generator":
        return Generator(name, tuple(sorted(derivatives.items())), note)


class Context:
    """Declares the coefficient field and the chain rule for derivatives."""

    def __init__(
        self,
        name: str,
        coordinates: Sequence[str],
        params: Sequence[Union[str, Param]] = (),
        generators: Sequence[Generator] = (),
    ):
        self.name = name
        self.coordinates = tuple(coordinates)
        self.params = tuple(p if isinstance(p, Param) else Param(p) for p in params)
        self.generators = tuple(generators)

        if not self.coordinates:
            raise ScalarParseError("a context needs at least one coordinate")
        names = list(self.coordinates) + [p.name for p in self.params]
        names += [g.name for g in self.generators]
        seen = set()
        for n in names:
            if not _NAME_RE.match(n) or n in ("eps",):
                raise ScalarParseError(f"bad symbol name {n!r}")
            if n in seen:
                raise ScalarParseError(f"duplicate symbol name {n!r}")
            seen.add(n)
        self._names = tuple(names)
        self.field, *gens = _sympy_field(names, QQ)
        self._gens = {n: g for n, g in zip(names, gens)}
        self._gen_index = {n: i for i, n in enumerate(names)}

        # Parse derivative tables once the field exists.
        self._dtable = {}  # (generator name, coordinate name) -> ScalarExpr
        for g in self.generators:
            for coord, text in g.derivatives:
                if coord not in self.coordinates:
                    raise UnknownSymbol(
                        f"generator {g.name}: {coord!r} is not a coordinate"
                    )
                self._dtable[g.name, coord] = self.scalar(text)

    # -- basic properties ------------------------------------------------

    @property
    def n_components(self) -> int:
        return len(self.coordinates)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Context)
            and self.name == other.name
            and self.coordinates == other.coordinates
            and self.params == other.params
            and self.generators == other.generators
        )

    def __hash__(self):
        return hash((self.name, self.coordinates, self.params, self.generators))

    def __repr__(self):
        return f"Context({self.name!r}, N={self.n_components})"

    def check_same(self, other: "Context") -> None:
        if self != other:
            raise ContextMismatch(f"context {self.name!r} vs {other.name!r}")

    def extended(self, extra_params: Sequence[Union[str, Param]],
                 name: Optional[str] = None) -> "Context":
        """A copy of this context with additional free constants."""
        extra = tuple(p if isinstance(p, Param) else Param(p) for p in extra_params)
        return Context(
            name if name is not None else self.name,
            self.coordinates,
            self.params + extra,
            self.generators,
        )

    # -- element constructors --------------------------------------------

    @property
    def zero(self) -> "ScalarExpr":
        return ScalarExpr(self, self.field.zero)

    @property
    def one(self) -> "ScalarExpr":
        return ScalarExpr(self, self.field.one)

    def symbol(self, name: str) -> "ScalarExpr":
        if name not in self._gens:
            raise UnknownSymbol(f"{name!r} is not a symbol of context {self.name!r}")
        return ScalarExpr(self, self._gens[name])

    def rational(self, value: Union[int, Fraction]) -> "ScalarExpr":
        value = Fraction(value)
        return ScalarExpr(
            self, self.field.ground_new(QQ(value.numerator, value.denominator))
        )

    def scalar(self, value: ScalarLike) -> "ScalarExpr":
        """Coerce ints, Fractions, grammar strings or ScalarExprs."""
        if isinstance(value, ScalarExpr):
            self.check_same(value.ctx)
            return value
        if isinstance(value, (int, Fraction)):
            return self.rational(value)
        if isinstance(value, str):
            return parse_scalar(self, value)
        raise ScalarError(f"cannot coerce {value!r} to a scalar")

    # -- calculus ----------------------------------------------------------

    def derive(self, expr: "ScalarExpr", coordinate: str) -> "ScalarExpr":
        """d/d(coordinate) with the chain rule through generator tables."""
        self.check_same(expr.ctx)
        if coordinate not in self.coordinates:
            raise UnknownSymbol(f"{coordinate!r} is not a coordinate")
        fr = expr.fr
        out = fr.diff(self._gens[coordinate])
        for g in self.generators:
            d = self._dtable.get((g.name, coordinate))
            if d is not None:
                out = out + fr.diff(self._gens[g.name]) * d.fr
        return ScalarExpr(self, out)

    def derive_param(self, expr: "ScalarExpr", param: str) -> "ScalarExpr":
        """Formal d/d(param); params carry no derivative table."""
        self.check_same(expr.ctx)
        if param not in {p.name for p in self.params}:
            raise UnknownSymbol(f"{param!r} is not a param")
        return ScalarExpr(self, expr.fr.diff(self._gens[param]))

    def substitute(
        self, expr: "ScalarExpr", bindings: Mapping[str, ScalarLike]
    ) -> "ScalarExpr":
        """Substitute context symbols by scalars, staying in the field."""
        self.check_same(expr.ctx)
        vals = {}
        for name, v in bindings.items():
            if name not in self._gens:
                raise UnknownSymbol(f"{name!r} is not a symbol of {self.name!r}")
            vals[self._gen_index[name]] = self.scalar(v)
        num = self._poly_subst(expr.fr.numer, vals)
        den = self._poly_subst(expr.fr.denom, vals)
        if den.is_zero:
            raise DenominatorVanishes(f"substitution kills denominator of {expr}")
        return num / den

    def _poly_subst(self, poly, vals) -> "ScalarExpr":
        out = self.zero
        gens = [self.symbol(n) for n in self._names]
        for monom, coeff in poly.terms():
            term = ScalarExpr(self, self.field.ground_new(coeff))
            for i, e in enumerate(monom):
                if e == 0:
                    continue
                base = vals.get(i, gens[i])
                term = term * base**e
            out = out + term
        return out

    # -- manifest ----------------------------------------------------------

    def manifest(self) -> str:
        """Canonical text form; parse_manifest round-trips it bit-exactly."""
        lines = [f"context {self.name}"]
        lines.append("coordinates: " + ", ".join(self.coordinates))
        if self.params:
            parts = []
            for p in self.params:
                parts.append(f'{p.name} "{p.note}"' if p.note else p.name)
            lines.append("params: " + ", ".join(parts))
        for g in self.generators:
            head = f'generator {g.name} "{g.note}"' if g.note else f"generator {g.name}"
            rules = ", ".join(f"d/d{c} = {t}" for c, t in g.derivatives)
            lines.append(f"{head}: {rules}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse_manifest(text: str) -> "Context":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("context "):
            raise ScalarParseError("manifest must start with 'context <name>'")
        name = lines[0][len("context "):].strip()
        coords: tuple = ()
        params: list = []
        gens: list = []
        for ln in lines[1:]:
            if ln.startswith("coordinates:"):
                coords = tuple(s.strip() for s in ln[len("coordinates:"):].split(",") if s.strip())
            elif ln.startswith("params:"):
                for part in ln[len("params:"):].split(","):
                    part = part.strip()
                    if not part:
                        continue
                    m = re.match(r'([A-Za-z_][A-Za-z0-9_]*)(?:\s+"([^"]*)")?\Z', part)
                    if not m:
                        raise ScalarParseError(f"bad param entry {part!r}")
                    params.append(Param(m.group(1), m.group(2) or ""))
            elif ln.startswith("generator "):
                head, _, rules = ln.partition(":")
                m = re.match(r'generator\s+([A-Za-z_][A-Za-z0-9_]*)(?:\s+"([^"]*)")?\s*\Z', head)
                if not m or not rules:
                    raise ScalarParseError(f"bad generator line {ln!r}")
                table = []
                for rule in rules.split(","):
                    rule = rule.strip()
                    rm = re.match(r"d/d([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)\Z", rule)
                    if not rm:
                        raise ScalarParseError(f"bad derivative rule {rule!r}")
                    table.append((rm.group(1), rm.group(2).strip()))
                gens.append(Generator(m.group(1), tuple(table), m.group(2) or ""))
            else:
                raise ScalarParseError(f"unrecognized manifest line {ln!r}")
        return Context(name, coords, params, gens)


class ScalarExpr:
    """An element of the context's rational function field."""

    __slots__ = ("ctx", "fr")

    def __init__(self, ctx: Context, fr):
        self.ctx = ctx
        self.fr = fr

    # -- ring/field operations ---------------------------------------------

    def _coerce(self, other) -> "ScalarExpr":
        if isinstance(other, ScalarExpr):
            self.ctx.check_same(other.ctx)
            return other
        if isinstance(other, (int, Fraction)):
            return self.ctx.rational(other)
        return NotImplemented  # type: ignore[return-value]

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return ScalarExpr(self.ctx, self.fr + o.fr)

    __radd__ = __add__

    def __neg__(self):
        return ScalarExpr(self.ctx, -self.fr)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return ScalarExpr(self.ctx, self.fr - o.fr)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return ScalarExpr(self.ctx, o.fr - self.fr)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return ScalarExpr(self.ctx, self.fr * o.fr)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o.fr.numer.is_zero:
            raise DivisionByZero(f"{self} / 0")
        return ScalarExpr(self.ctx, self.fr / o.fr)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if self.fr.numer.is_zero:
            raise DivisionByZero(f"{o} / 0")
        return ScalarExpr(self.ctx, o.fr / self.fr)

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0 and self.fr.numer.is_zero:
            raise DivisionByZero("0 ** negative")
        return ScalarExpr(self.ctx, self.fr ** n)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = self.ctx.rational(other)
        if not isinstance(other, ScalarExpr):
            return NotImplemented
        return self.ctx == other.ctx and self.fr == other.fr

    def __hash__(self):
        return hash(self.fr)

    def __bool__(self):
        return not self.fr.numer.is_zero

    # -- queries -------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.fr.numer.is_zero

    @property
    def is_rational(self) -> bool:
        return self.fr.numer.is_ground and self.fr.denom.is_ground

    def as_fraction(self) -> Fraction:
        if not self.is_rational:
            raise ScalarError(f"{self} is not a rational constant")
        num = self.fr.numer.coeff(1)
        den = self.fr.denom.coeff(1)
        q = QQ.to_sympy(num / den)
        return Fraction(int(q.p), int(q.q))

    def symbols(self) -> set:
        """Names of context symbols actually appearing."""
        out = set()
        for poly in (self.fr.numer, self.fr.denom):
            for monom in poly.monoms():
                for name, e in zip(self.ctx._names, monom):
                    if e:
                        out.add(name)
        return out

    # -- calculus shorthands ---------------------------------------------------

    def derive(self, coordinate: str) -> "ScalarExpr":
        return self.ctx.derive(self, coordinate)

    def substitute(self, bindings: Mapping[str, ScalarLike]) -> "ScalarExpr":
        return self.ctx.substitute(self, bindings)

    # -- printing ----------------------------------------------------------------

    def __str__(self) -> str:
        return print_scalar(self)

    def __repr__(self) -> str:
        return f"<{print_scalar(self)}>"


# ---------------------------------------------------------------------------
# canonical printer
# ---------------------------------------------------------------------------


def _fmt_coeff(c) -> str:
    q = QQ.to_sympy(c)
    return str(Fraction(int(q.p), int(q.q)))


def _print_poly(ctx: Context, poly) -> str:
    if poly.is_zero:
        return "0"
    terms = sorted(poly.terms(), key=lambda t: t[0], reverse=True)
    parts = []
    for monom, coeff in terms:
        factors = []
        for name, e in zip(ctx._names, monom):
            if e == 1:
                factors.append(name)
            elif e:
                factors.append(f"{name}^{e}")
        cs = _fmt_coeff(coeff)
        negative = cs.startswith("-")
        mag = cs[1:] if negative else cs
        if factors and mag == "1":
            body = "*".join(factors)
        elif factors:
            body = mag + "*" + "*".join(factors)
        else:
            body = mag
        if not parts:
            parts.append(("-" if negative else "") + body)
        else:
            parts.append(("- " if negative else "+ ") + body)
    return " ".join(parts)


def print_scalar(expr: ScalarExpr) -> str:
    """Canonical text form: `num` or `(num)/(den)`, terms in lex order."""
    num, den = expr.fr.numer, expr.fr.denom
    if den == expr.ctx.field.ring.one:
        return _print_poly(expr.ctx, num)
    if den.is_ground:
        return _print_poly(expr.ctx, num.quo_ground(den.coeff(1)))
    return f"({_print_poly(expr.ctx, num)})/({_print_poly(expr.ctx, den)})"


# ---------------------------------------------------------------------------
# expression grammar
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ScalarParseError(f"bad token at {text[pos:pos+12]!r}")
            break
        pos = m.end()
        if m.group("num"):
            out.append(("num", int(m.group("num"))))
        elif m.group("name"):
            out.append(("name", m.group("name")))
        else:
            op = m.group("op")
            out.append(("op", "^" if op == "**" else op))
    out.append(("end", None))
    return out


class _ScalarParser:
    """Recursive descent over + - * / ^ with standard precedence."""

    def __init__(self, ctx: Context, tokens):
        self.ctx = ctx
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def parse(self) -> ScalarExpr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise ScalarParseError(f"trailing input at token {self.peek()!r}")
        return e

    def expr(self) -> ScalarExpr:
        kind, val = self.peek()
        neg = False
        if (kind, val) == ("op", "-"):
            self.next()
            neg = True
        elif (kind, val) == ("op", "+"):
            self.next()
        e = self.term()
        if neg:
            e = -e
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.next()
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> ScalarExpr:
        e = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.next()
            rhs = self.factor()
            e = e * rhs if op == "*" else e / rhs
        return e

    def factor(self) -> ScalarExpr:
        if self.peek() == ("op", "-"):
            self.next()
            return -self.factor()
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.next()
            return base ** self.exponent()
        return base

    def exponent(self) -> int:
        if self.peek() == ("op", "-"):
            self.next()
            return -self.exponent()
        kind, val = self.next()
        if kind == "num":
            return val
        if (kind, val) == ("op", "("):
            e = self.exponent()
            if self.next() != ("op", ")"):
                raise ScalarParseError("expected ) after exponent")
            return e
        raise ScalarParseError(f"exponent must be an integer, got {val!r}")

    def atom(self) -> ScalarExpr:
        kind, val = self.next()
        if kind == "num":
            return self.ctx.rational(val)
        if kind == "name":
            return self.ctx.symbol(val)
        if (kind, val) == ("op", "("):
            e = self.expr()
            if self.next() != ("op", ")"):
                raise ScalarParseError("unbalanced parenthesis")
            return e
        raise ScalarParseError(f"unexpected token {val!r}")


def parse_scalar(ctx: Context, text: str) -> ScalarExpr:
    return _ScalarParser(ctx, _tokenize(text)).parse()


def transfer_scalar(expr: ScalarExpr, ctx: Context) -> ScalarExpr:
    """Rebuild an expression in a context sharing its symbol names."""
    if expr.ctx is ctx or expr.ctx == ctx:
        return ScalarExpr(ctx, expr.fr)

    def lift(poly):
        out = ctx.field.zero
        for monom, coeff in zip(poly.monoms(), poly.coeffs()):
            term = ctx.field.ground_new(coeff)
            for name, e in zip(expr.ctx._names, monom):
                if e:
                    if name not in ctx._gens:
                        raise UnknownSymbol(
                            f"{name!r} missing from context {ctx.name!r}"
                        )
                    term = term * ctx._gens[name] ** e
            out = out + term
        return out

    num = lift(expr.fr.numer)
    den = lift(expr.fr.denom)
    return ScalarExpr(ctx, num) / ScalarExpr(ctx, den)
