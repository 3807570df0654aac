"""Differential polynomials on the formal loop space of a context.

A density is a finite sum of terms

    coeff * eps^e * u[a,k1]^p1 * ... * th[b,l1] * th[b,l2] * ...

where the coefficient lives in the context's field (and carries all
dependence on the order-0 jets u[a,0], identified with the coordinates),
even factors u[a,k] have k >= 1, and odd factors th[b,l] (l >= 0)
anticommute.  Odd factors are stored sorted by (b, l) with the
permutation sign absorbed into the coefficient; a repeated odd factor
kills the term.

x-degree bookkeeping: deg_dx(u[a,k]) = deg_dx(th[b,k]) = k and
deg_dx(eps) = -1, so the dispersive expansion is the expansion in eps at
fixed total x-degree.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .scalar import (
    Context,
    ScalarExpr,
    ScalarError,
    ScalarParseError,
    ContextMismatch,
    parse_scalar,
    transfer_scalar,
)

# even part: tuple of ((alpha, k), power), sorted, k >= 1, power >= 1
# odd part:  tuple of (alpha, k), strictly increasing, k >= 0
# key:       (even, odd, eps_power)
EvenPart = Tuple[Tuple[Tuple[int, int], int], ...]
OddPart = Tuple[Tuple[int, int], ...]
Key = Tuple[EvenPart, OddPart, int]

_EMPTY_KEY: Key = ((), (), 0)


class JetError(ScalarError):
    """Base class for jet-layer failures."""


class NotThetaLinear(JetError):
    """An operation requiring a theta-linear density got something else."""


class NonEigenCoefficient(JetError):
    """A coefficient monomial is not an eigenvector of the counting field."""


def _merge_even(a: EvenPart, b: EvenPart) -> EvenPart:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for var, p in b:
        d[var] = d.get(var, 0) + p
    return tuple(sorted(d.items()))


def _merge_odd(a: OddPart, b: OddPart) -> Tuple[int, OddPart]:
    """Concatenate odd factor lists; return (sign, sorted tuple) or (0, ())."""
    if not a:
        return 1, b
    if not b:
        return 1, a
    merged = list(a) + list(b)
    # insertion sort counting inversions; small lists in practice
    sign = 1
    for i in range(1, len(merged)):
        j = i
        while j > 0 and merged[j - 1] > merged[j]:
            merged[j - 1], merged[j] = merged[j], merged[j - 1]
            sign = -sign
            j -= 1
    for i in range(1, len(merged)):
        if merged[i - 1] == merged[i]:
            return 0, ()
    return sign, tuple(merged)


def _sort_odd(factors: Sequence[Tuple[int, int]]) -> Tuple[int, OddPart]:
    return _merge_odd(tuple(factors), ())


def _min_trunc(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


class DiffPoly:
    """A differential polynomial with exact field coefficients.

    ``trunc`` is the eps-truncation order: ``None`` means exact, an
    integer T means the element is only known modulo eps^(T+1) and all
    higher terms are dropped on construction.  Operations propagate the
    minimum truncation of their inputs.
    """

    __slots__ = ("ctx", "terms", "trunc")

    def __init__(self, ctx: Context, terms: Mapping[Key, ScalarExpr], trunc: Optional[int] = None):
        self.ctx = ctx
        self.trunc = trunc
        clean: Dict[Key, ScalarExpr] = {}
        for key, coeff in terms.items():
            if trunc is not None and key[2] > trunc:
                continue
            if not coeff.is_zero:
                clean[key] = coeff
        self.terms = clean

    # -- constructors --------------------------------------------------------

    @staticmethod
    def zero(ctx: Context, trunc: Optional[int] = None) -> "DiffPoly":
        return DiffPoly(ctx, {}, trunc)

    @staticmethod
    def from_scalar(ctx: Context, value, trunc: Optional[int] = None) -> "DiffPoly":
        return DiffPoly(ctx, {_EMPTY_KEY: ctx.scalar(value)}, trunc)

    @staticmethod
    def even_var(ctx: Context, alpha: int, k: int) -> "DiffPoly":
        """u[alpha,k]; for k = 0 this is the coordinate scalar."""
        _check_alpha(ctx, alpha)
        if k < 0:
            raise JetError("jet order must be >= 0")
        if k == 0:
            return DiffPoly.from_scalar(ctx, ctx.symbol(ctx.coordinates[alpha - 1]))
        return DiffPoly(ctx, {((((alpha, k), 1),), (), 0): ctx.one})

    @staticmethod
    def odd_var(ctx: Context, alpha: int, k: int) -> "DiffPoly":
        _check_alpha(ctx, alpha)
        if k < 0:
            raise JetError("jet order must be >= 0")
        return DiffPoly(ctx, {((), ((alpha, k),), 0): ctx.one})

    @staticmethod
    def eps(ctx: Context, power: int = 1) -> "DiffPoly":
        if power < 0:
            raise JetError("eps power must be >= 0")
        return DiffPoly(ctx, {((), (), power): ctx.one})

    # -- structure -----------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, ScalarExpr)):
            other = DiffPoly.from_scalar(self.ctx, other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        return self.ctx == other.ctx and self.terms == other.terms

    def __hash__(self):
        return hash((self.ctx, frozenset(self.terms.items())))

    def copy(self, trunc: Optional[int] = "keep") -> "DiffPoly":
        t = self.trunc if trunc == "keep" else trunc
        return DiffPoly(self.ctx, dict(self.terms), t)

    def mod_eps(self, order: int) -> "DiffPoly":
        """Truncate: drop all terms with eps power > order."""
        return DiffPoly(self.ctx, self.terms, _min_trunc(self.trunc, order))

    def eps_coefficient(self, power: int) -> "DiffPoly":
        """The eps^power slice, with the eps factor removed."""
        if self.trunc is not None and power > self.trunc:
            raise JetError(f"eps^{power} exceeds truncation order {self.trunc}")
        out = {}
        for (ev, od, e), c in self.terms.items():
            if e == power:
                out[(ev, od, 0)] = c
        return DiffPoly(self.ctx, out)

    def max_eps(self) -> int:
        return max((k[2] for k in self.terms), default=0)

    def max_order(self) -> int:
        m = 0
        for ev, od, _ in self.terms:
            for (a, k), p in ev:
                m = max(m, k)
            for a, k in od:
                m = max(m, k)
        return m

    def theta_degree(self) -> int:
        """Max number of odd factors over terms (0 for the zero density)."""
        return max((len(k[1]) for k in self.terms), default=0)

    # -- arithmetic ------------------------------------------------------------

    def _coerce(self, other) -> "DiffPoly":
        if isinstance(other, DiffPoly):
            self.ctx.check_same(other.ctx)
            return other
        if isinstance(other, (int, Fraction, ScalarExpr, str)):
            return DiffPoly.from_scalar(self.ctx, self.ctx.scalar(other))
        return NotImplemented  # type: ignore[return-value]

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        out = dict(self.terms)
        for key, c in o.terms.items():
            s = out.get(key)
            out[key] = c if s is None else s + c
        return DiffPoly(self.ctx, out, _min_trunc(self.trunc, o.trunc))

    __radd__ = __add__

    def __neg__(self):
        return DiffPoly(self.ctx, {k: -c for k, c in self.terms.items()}, self.trunc)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        trunc = _min_trunc(self.trunc, o.trunc)
        out: Dict[Key, ScalarExpr] = {}
        for (ev1, od1, e1), c1 in self.terms.items():
            for (ev2, od2, e2), c2 in o.terms.items():
                e = e1 + e2
                if trunc is not None and e > trunc:
                    continue
                sign, od = _merge_odd(od1, od2)
                if sign == 0:
                    continue
                key = (_merge_even(ev1, ev2), od, e)
                c = c1 * c2 if sign > 0 else -(c1 * c2)
                s = out.get(key)
                out[key] = c if s is None else s + c
        return DiffPoly(self.ctx, out, trunc)

    def __rmul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o * self

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            return NotImplemented
        out = DiffPoly.from_scalar(self.ctx, 1, self.trunc)
        for _ in range(n):
            out = out * self
        return out

    def map_coefficients(self, fn: Callable[[ScalarExpr], ScalarExpr]) -> "DiffPoly":
        return DiffPoly(self.ctx, {k: fn(c) for k, c in self.terms.items()}, self.trunc)

    # -- derivations -------------------------------------------------------------

    def dx(self) -> "DiffPoly":
        """Total x-derivative (even derivation of x-degree +1)."""
        ctx = self.ctx
        out: Dict[Key, ScalarExpr] = {}

        def add(key: Key, c: ScalarExpr):
            if self.trunc is not None and key[2] > self.trunc:
                return
            s = out.get(key)
            out[key] = c if s is None else s + c

        for (ev, od, e), c in self.terms.items():
            # coefficient part: sum_a u[a,1] * d(coeff)/dt^a
            for a, name in enumerate(ctx.coordinates, start=1):
                dc = ctx.derive(c, name)
                if not dc.is_zero:
                    add((_merge_even(ev, (((a, 1), 1),)), od, e), dc)
            # even factors
            for i, ((a, k), p) in enumerate(ev):
                newev = list(ev)
                if p == 1:
                    del newev[i]
                else:
                    newev[i] = ((a, k), p - 1)
                key = (_merge_even(tuple(newev), (((a, k + 1), 1),)), od, e)
                add(key, c * p if p != 1 else c)
            # odd factors
            for i, (a, k) in enumerate(od):
                newod = list(od)
                newod[i] = (a, k + 1)
                sign, od2 = _sort_odd(newod)
                if sign == 0:
                    continue
                add((ev, od2, e), c if sign > 0 else -c)
        return DiffPoly(ctx, out, self.trunc)

    def dx_power(self, n: int) -> "DiffPoly":
        p = self
        for _ in range(n):
            p = p.dx()
        return p

    def partial_even(self, alpha: int, k: int) -> "DiffPoly":
        """d/du[alpha,k]; k = 0 differentiates the coefficients."""
        _check_alpha(self.ctx, alpha)
        if k == 0:
            name = self.ctx.coordinates[alpha - 1]
            return self.map_coefficients(lambda c: self.ctx.derive(c, name))
        out: Dict[Key, ScalarExpr] = {}
        for (ev, od, e), c in self.terms.items():
            for i, ((a, kk), p) in enumerate(ev):
                if (a, kk) != (alpha, k):
                    continue
                newev = list(ev)
                if p == 1:
                    del newev[i]
                else:
                    newev[i] = ((a, kk), p - 1)
                key = (tuple(newev), od, e)
                cc = c * p if p != 1 else c
                s = out.get(key)
                out[key] = cc if s is None else s + cc
        return DiffPoly(self.ctx, out, self.trunc)

    def partial_odd(self, alpha: int, k: int) -> "DiffPoly":
        """Left superderivative d/d th[alpha,k]."""
        _check_alpha(self.ctx, alpha)
        out: Dict[Key, ScalarExpr] = {}
        for (ev, od, e), c in self.terms.items():
            for i, (a, kk) in enumerate(od):
                if (a, kk) != (alpha, k):
                    continue
                newod = od[:i] + od[i + 1:]
                cc = c if i % 2 == 0 else -c
                key = (ev, newod, e)
                s = out.get(key)
                out[key] = cc if s is None else s + cc
                break  # an odd factor appears at most once
        return DiffPoly(self.ctx, out, self.trunc)

    def partial_eps(self) -> "DiffPoly":
        out: Dict[Key, ScalarExpr] = {}
        for (ev, od, e), c in self.terms.items():
            if e:
                out[(ev, od, e - 1)] = c * e
        return DiffPoly(self.ctx, out, self.trunc)

    def var_der_even(self, alpha: int) -> "DiffPoly":
        """delta/delta u^alpha = sum_k (-dx)^k d/du[alpha,k]."""
        out = DiffPoly.zero(self.ctx, self.trunc)
        for k in range(self.max_order() + 1):
            piece = self.partial_even(alpha, k)
            for _ in range(k):
                piece = -piece.dx()
            out = out + piece
        return out

    def var_der_odd(self, alpha: int) -> "DiffPoly":
        """delta/delta theta_alpha = sum_k (-dx)^k d/dth[alpha,k]."""
        out = DiffPoly.zero(self.ctx, self.trunc)
        for k in range(self.max_order() + 1):
            piece = self.partial_odd(alpha, k)
            for _ in range(k):
                piece = -piece.dx()
            out = out + piece
        return out

    # -- counting operators ---------------------------------------------------------

    def apply_D(self) -> "DiffPoly":
        """D = sum u[a,k] d/du[a,k] + th d/dth + eps d/deps.

        Multiplies each term by the number of variable occurrences,
        where order-0 dependence is counted through the Euler action
        sum_a t^a d/dt^a on the coefficient.
        """
        ctx = self.ctx
        out: Dict[Key, ScalarExpr] = {}

        def add(key, c):
            if c.is_zero:
                return
            s = out.get(key)
            out[key] = c if s is None else s + c

        for (ev, od, e), c in self.terms.items():
            count = e + len(od) + sum(p for _, p in ev)
            euler = ctx.zero
            for name in ctx.coordinates:
                euler = euler + ctx.symbol(name) * ctx.derive(c, name)
            add((ev, od, e), c * count + euler)
        return DiffPoly(ctx, out, self.trunc)

    def d_eigen_split(self) -> List[Tuple[ScalarExpr, "DiffPoly"]]:
        """Split into D-eigencomponents (weight, part).

        Requires every coefficient monomial to be a D-eigenvector, i.e.
        each generator must satisfy  sum_a t^a d(g)/dt^a = w * g  for a
        scalar weight w free of coordinates.  Raises otherwise.
        """
        ctx = self.ctx
        gen_weight = {}
        for g in ctx.generators:
            gs = ctx.symbol(g.name)
            act = ctx.zero
            for name in ctx.coordinates:
                act = act + ctx.symbol(name) * ctx.derive(gs, name)
            w = act / gs
            banned = set(ctx.coordinates) | {gg.name for gg in ctx.generators}
            if w.symbols() & banned:
                raise NonEigenCoefficient(f"generator {g.name} is not a scaling eigenvector")
            gen_weight[g.name] = w
        buckets: Dict[ScalarExpr, Dict[Key, ScalarExpr]] = {}
        for key, c in self.terms.items():
            ev, od, e = key
            base = ctx.rational(e + len(od) + sum(p for _, p in ev))
            for monom, coeff, mono_expr in _coeff_monomials(ctx, c):
                w = base
                for name, expo in monom:
                    if name in ctx.coordinates:
                        w = w + expo
                    elif name in gen_weight:
                        w = w + gen_weight[name] * expo
                d = buckets.setdefault(w, {})
                s = d.get(key)
                d[key] = mono_expr if s is None else s + mono_expr
        return [(w, DiffPoly(ctx, t, self.trunc)) for w, t in buckets.items()]

    def apply_E_gamma(self, qmat, rvec, gamma) -> "DiffPoly":
        """Degree-counting Euler field E_gamma.

        qmat is the N x N matrix q (entries coerced to scalars), rvec the
        translation vector r, gamma the conformal shift.  Acts by

          sum_k [((1-q) u)^a_k + delta_k0 r^a] d/du[a,k]
          - sum_k ((1-q)^T th)_{a,k} d/dth[a,k]  + ((1-gamma)/2) eps d/deps
        """
        ctx = self.ctx
        n = ctx.n_components
        q = [[ctx.scalar(qmat[i][j]) for j in range(n)] for i in range(n)]
        r = [ctx.scalar(rvec[i]) for i in range(n)]
        ga = ctx.scalar(gamma)
        half = ctx.rational(Fraction(1, 2))
        # E^a(t) = ((1-q) t)^a + r^a  drives the coefficient part
        evec = []
        for i in range(n):
            acc = r[i]
            for j in range(n):
                coef = (ctx.one if i == j else ctx.zero) - q[i][j]
                if not coef.is_zero:
                    acc = acc + coef * ctx.symbol(ctx.coordinates[j])
            evec.append(acc)

        terms_out: Dict[Key, ScalarExpr] = {}

        def add(key, c):
            if c.is_zero:
                return
            if self.trunc is not None and key[2] > self.trunc:
                return
            s = terms_out.get(key)
            terms_out[key] = c if s is None else s + c

        for (ev, od, e), c in self.terms.items():
            # eps part
            if e:
                add((ev, od, e), c * e * (ctx.one - ga) * half)
            # coefficient part
            acc = ctx.zero
            for i, name in enumerate(ctx.coordinates):
                dc = ctx.derive(c, name)
                if not dc.is_zero:
                    acc = acc + evec[i] * dc
            add((ev, od, e), acc)
            # even jets: u^b_k d/du^a_k with matrix (1-q)^a_b
            for i, ((a, k), p) in enumerate(ev):
                for b in range(1, n + 1):
                    coef = (ctx.one if a == b else ctx.zero) - q[a - 1][b - 1]
                    if coef.is_zero:
                        continue
                    newev = list(ev)
                    if p == 1:
                        del newev[i]
                    else:
                        newev[i] = ((a, k), p - 1)
                    key = (_merge_even(tuple(newev), (((b, k), 1),)), od, e)
                    add(key, c * p * coef)
            # odd jets: - th_{a,k} d/dth_{b,k} with matrix (1-q)^a_b
            for i, (b, k) in enumerate(od):
                for a in range(1, n + 1):
                    coef = (ctx.one if a == b else ctx.zero) - q[a - 1][b - 1]
                    if coef.is_zero:
                        continue
                    newod = list(od)
                    newod[i] = (a, k)
                    sign, od2 = _sort_odd(newod)
                    if sign == 0:
                        continue
                    add((ev, od2, e), -c * coef * sign)
        return DiffPoly(ctx, terms_out, self.trunc)

    # -- evolution ----------------------------------------------------------------

    def evolve(self, flow: Sequence["DiffPoly"]) -> "DiffPoly":
        """d/dt along du^a/dt = flow[a-1]: sum_{a,k} dx^k(flow^a) d self/du^a_k."""
        ctx = self.ctx
        if len(flow) != ctx.n_components:
            raise JetError("flow needs one component per coordinate")
        out = DiffPoly.zero(ctx, self.trunc)
        kmax = self.max_order()
        for a, comp in enumerate(flow, start=1):
            ctx.check_same(comp.ctx)
            d = comp
            for k in range(kmax + 1):
                piece = self.partial_even(a, k)
                if piece:
                    out = out + d * piece
                if k < kmax:
                    d = d.dx()
        return out

    # -- grading ---------------------------------------------------------------------

    def dx_degrees(self) -> Dict[int, int]:
        """Map deg_dx -> number of terms at that degree."""
        out: Dict[int, int] = {}
        for ev, od, e in self.terms:
            d = sum(k * p for (a, k), p in ev) + sum(k for a, k in od) - e
            out[d] = out.get(d, 0) + 1
        return out

    def theta_degrees(self) -> Dict[int, int]:
        out: Dict[int, int] = {}
        for ev, od, e in self.terms:
            out[len(od)] = out.get(len(od), 0) + 1
        return out

    def grading_report(self) -> "GradingReport":
        return GradingReport(self.dx_degrees(), self.theta_degrees())

    # -- theta-linear integration ------------------------------------------------------

    def theta_collect(self) -> Dict[Tuple[int, int], "DiffPoly"]:
        """For theta-linear densities: map (alpha,k) -> even coefficient."""
        out: Dict[Tuple[int, int], Dict[Key, ScalarExpr]] = {}
        for (ev, od, e), c in self.terms.items():
            if len(od) != 1:
                raise NotThetaLinear("density is not theta-linear")
            out.setdefault(od[0], {})[(ev, (), e)] = c
        return {slot: DiffPoly(self.ctx, t, self.trunc) for slot, t in out.items()}

    def dx_preimage(self) -> Tuple["DiffPoly", "DiffPoly"]:
        """Solve self = dx(h) + residual for theta-linear densities.

        The residual is supported on th[.,0] slots and vanishes exactly
        when self is a total x-derivative; it equals
        sum_a (delta self / delta theta_a) th[a,0].
        """
        ctx = self.ctx
        if self.is_zero:
            return DiffPoly.zero(ctx, self.trunc), DiffPoly.zero(ctx, self.trunc)
        slots = self.theta_collect()
        h = DiffPoly.zero(ctx, self.trunc)
        residual = DiffPoly.zero(ctx, self.trunc)
        alphas = {a for a, k in slots}
        for a in alphas:
            kmax = max(k for aa, k in slots if aa == a)
            H: Dict[int, DiffPoly] = {}
            cur = DiffPoly.zero(ctx, self.trunc)  # H_{a,k} for k = kmax..0
            for k in range(kmax, 0, -1):
                P = slots.get((a, k), DiffPoly.zero(ctx, self.trunc))
                cur = P - cur.dx() if k < kmax else P
                # cur is H_{a,k-1}
                H[k - 1] = cur
            P0 = slots.get((a, 0), DiffPoly.zero(ctx, self.trunc))
            res_a = P0 - (H[0].dx() if 0 in H else DiffPoly.zero(ctx, self.trunc))
            for k, Hk in H.items():
                h = h + Hk * DiffPoly.odd_var(ctx, a, k)
            residual = residual + res_a * DiffPoly.odd_var(ctx, a, 0)
        return h, residual

    # -- printing and serialization ------------------------------------------------------

    def __str__(self) -> str:
        return print_diffpoly(self)

    def __repr__(self) -> str:
        return f"<DiffPoly {print_diffpoly(self)}>"

    def to_json(self) -> dict:
        terms = []
        for key in sorted(self.terms, key=_key_sort):
            ev, od, e = key
            terms.append(
                {
                    "even": [[a, k, p] for (a, k), p in ev],
                    "odd": [[a, k] for a, k in od],
                    "eps": e,
                    "coeff": str(self.terms[key]),
                }
            )
        out = {"context": self.ctx.name, "terms": terms}
        if self.trunc is not None:
            out["trunc"] = self.trunc
        return out

    @staticmethod
    def from_json(ctx: Context, data: dict) -> "DiffPoly":
        terms: Dict[Key, ScalarExpr] = {}
        for t in data["terms"]:
            ev = tuple(((a, k), p) for a, k, p in t.get("even", []))
            sign, od = _sort_odd([tuple(x) for x in t.get("odd", [])])
            if sign == 0:
                raise JetError("repeated odd factor in JSON term")
            c = ctx.scalar(t["coeff"])
            terms[(ev, od, t.get("eps", 0))] = c if sign > 0 else -c
        return DiffPoly(ctx, terms, data.get("trunc"))


class GradingReport:
    """Degree census of a density."""

    def __init__(self, dx_degrees: Dict[int, int], theta_degrees: Dict[int, int]):
        self.dx_degrees = dx_degrees
        self.theta_degrees = theta_degrees

    @property
    def dx_homogeneous(self) -> bool:
        return len(self.dx_degrees) <= 1

    @property
    def theta_homogeneous(self) -> bool:
        return len(self.theta_degrees) <= 1

    def __repr__(self):
        return f"GradingReport(dx={self.dx_degrees}, theta={self.theta_degrees})"


class LocalVectorField:
    """An evolutionary vector field du^a/dt = X^a.

    ``density`` is the canonical representative X^a th[a,0] of the local
    functional whose theta-variational derivatives are the components.
    """

    __slots__ = ("ctx", "components")

    def __init__(self, ctx: Context, components: Sequence[DiffPoly]):
        if len(components) != ctx.n_components:
            raise JetError("one component per coordinate required")
        for c in components:
            ctx.check_same(c.ctx)
            if c.theta_degree() != 0:
                raise JetError("vector field components must be even")
        self.ctx = ctx
        self.components = tuple(components)

    @property
    def density(self) -> DiffPoly:
        out = DiffPoly.zero(self.ctx)
        for a, comp in enumerate(self.components, start=1):
            out = out + comp * DiffPoly.odd_var(self.ctx, a, 0)
        return out

    @staticmethod
    def from_density(xbar: DiffPoly) -> "LocalVectorField":
        comps = [xbar.var_der_odd(a) for a in range(1, xbar.ctx.n_components + 1)]
        return LocalVectorField(xbar.ctx, comps)

    def __eq__(self, other):
        return (
            isinstance(other, LocalVectorField)
            and self.ctx == other.ctx
            and self.components == other.components
        )

    def __repr__(self):
        return f"LocalVectorField({list(map(str, self.components))})"


def _check_alpha(ctx: Context, alpha: int) -> None:
    if not 1 <= alpha <= ctx.n_components:
        raise JetError(f"component index {alpha} out of range 1..{ctx.n_components}")


def _coeff_monomials(ctx: Context, c: ScalarExpr):
    """Yield (monomial exponents over named symbols, coeff, monomial ScalarExpr).

    Requires the denominator to be a single monomial (true for every
    coefficient this code produces from eigen-weight contexts); general
    denominators raise.
    """
    den = c.fr.denom
    den_terms = list(den.terms())
    names = ctx._names
    if len(den_terms) != 1:
        # a denominator built from parameters alone carries weight zero,
        # so it can stay attached to every numerator monomial
        weighted = set(ctx.coordinates) | {g.name for g in ctx.generators}
        if any(e and names[i] in weighted
               for dmon, _ in den_terms for i, e in enumerate(dmon)):
            raise NonEigenCoefficient(f"coefficient {c} has a non-monomial denominator")
        ring = c.fr.numer.ring
        dinv = ScalarExpr(ctx, ctx.field.one / ctx.field(den))
        for monom, coeff in c.fr.numer.terms():
            mono = [(n, e) for n, e in zip(names, monom) if e]
            expr = ScalarExpr(ctx, ctx.field(ring.from_dict({monom: coeff}))) * dinv
            yield tuple(mono), coeff, expr
        return
    dmon, dcoef = den_terms[0]
    for monom, coeff in c.fr.numer.terms():
        net = [e - d for e, d in zip(monom, dmon)]
        mono = [(n, e) for n, e in zip(names, net) if e]
        expr = ScalarExpr(ctx, ctx.field.ground_new(coeff / dcoef))
        for n, e in mono:
            expr = expr * ctx.symbol(n) ** e
        yield tuple(mono), coeff, expr


def _key_sort(key: Key):
    ev, od, e = key
    return (e, tuple(sorted(ev)), od)


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------


def print_diffpoly(p: DiffPoly) -> str:
    if not p.terms:
        return "0"
    parts = []
    for key in sorted(p.terms, key=_key_sort):
        ev, od, e = key
        factors = []
        cs = str(p.terms[key])
        if cs != "1" or (not ev and not od and not e):
            factors.append(cs if _is_atom(cs) else f"({cs})")
        for (a, k), pw in ev:
            factors.append(f"u[{a},{k}]" + (f"^{pw}" if pw > 1 else ""))
        for a, k in od:
            factors.append(f"th[{a},{k}]")
        if e == 1:
            factors.append("eps")
        elif e:
            factors.append(f"eps^{e}")
        parts.append("*".join(factors))
    out = parts[0]
    for part in parts[1:]:
        if part.startswith("-"):
            out += " - " + part[1:]
        else:
            out += " + " + part
    return out


_ATOM_RE = re.compile(r"-?[A-Za-z0-9_/^]+\Z")


def _is_atom(s: str) -> bool:
    return bool(_ATOM_RE.match(s))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_JET_TOKEN = re.compile(
    r"\s*(?:(?P<jet>(?:u|th)\[\s*\d+\s*,\s*\d+\s*\])|(?P<eps>eps)"
    r"|(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^()]))"
)


def _jet_tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _JET_TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ScalarParseError(f"bad token at {text[pos:pos+16]!r}")
            break
        pos = m.end()
        if m.group("jet"):
            body = m.group("jet")
            kind = "u" if body.startswith("u") else "th"
            nums = re.findall(r"\d+", body)
            out.append(("jet", (kind, int(nums[0]), int(nums[1]))))
        elif m.group("eps"):
            out.append(("eps", None))
        elif m.group("num"):
            out.append(("num", int(m.group("num"))))
        elif m.group("name"):
            out.append(("name", m.group("name")))
        else:
            op = m.group("op")
            out.append(("op", "^" if op == "**" else op))
    out.append(("end", None))
    return out


class _JetParser:
    """Recursive descent for the density grammar.

    Scalars, u[a,k], th[a,k] and eps combine with + - * ^ and
    parentheses; division is only defined when the divisor is a pure
    scalar.
    """

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

    def parse(self) -> DiffPoly:
        e = self.expr()
        if self.peek()[0] != "end":
            raise ScalarParseError(f"trailing input at {self.peek()!r}")
        return e

    def expr(self) -> DiffPoly:
        if self.peek() == ("op", "-"):
            self.next()
            e = -self.term()
        else:
            if self.peek() == ("op", "+"):
                self.next()
            e = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            _, op = self.next()
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> DiffPoly:
        e = self.factor()
        while self.peek() in (("op", "*"), ("op", "/")):
            _, op = self.next()
            rhs = self.factor()
            if op == "*":
                e = e * rhs
            else:
                if rhs.theta_degree() != 0 or rhs.max_order() != 0 or rhs.max_eps() != 0:
                    raise ScalarParseError("division only by pure scalars")
                sc = rhs.terms.get(_EMPTY_KEY)
                if sc is None:
                    raise ScalarParseError("division by zero density")
                e = e.map_coefficients(lambda c: c / sc)
        return e

    def factor(self) -> DiffPoly:
        if self.peek() == ("op", "-"):
            self.next()
            return -self.factor()
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.next()
            n = self.exponent()
            if n < 0:
                if base.theta_degree() == 0 and base.max_order() == 0 and base.max_eps() == 0:
                    sc = base.terms.get(_EMPTY_KEY, self.ctx.zero)
                    return DiffPoly.from_scalar(self.ctx, sc ** n)
                raise ScalarParseError("negative powers only for pure scalars")
            return base ** n
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
        raise ScalarParseError("exponent must be an integer")

    def atom(self) -> DiffPoly:
        kind, val = self.next()
        if kind == "num":
            return DiffPoly.from_scalar(self.ctx, val)
        if kind == "name":
            return DiffPoly.from_scalar(self.ctx, self.ctx.symbol(val))
        if kind == "eps":
            return DiffPoly.eps(self.ctx)
        if kind == "jet":
            k, a, o = val
            if k == "u":
                return DiffPoly.even_var(self.ctx, a, o)
            return DiffPoly.odd_var(self.ctx, a, o)
        if (kind, val) == ("op", "("):
            e = self.expr()
            if self.next() != ("op", ")"):
                raise ScalarParseError("unbalanced parenthesis")
            return e
        raise ScalarParseError(f"unexpected token {val!r}")


def parse_diffpoly(ctx: Context, text: str) -> DiffPoly:
    return _JetParser(ctx, _jet_tokenize(text)).parse()


def transfer_diffpoly(p: DiffPoly, ctx: Context) -> DiffPoly:
    """Rebuild a density in a context sharing its symbol names."""
    if p.ctx is ctx or p.ctx == ctx:
        return DiffPoly(ctx, p.terms, p.trunc)
    return DiffPoly(
        ctx,
        {key: transfer_scalar(c, ctx) for key, c in p.terms.items()},
        p.trunc,
    )
