"""Normal-ordered formal differential operators in d/dx.

An operator is a finite sum  sum_k a_k * dx^k  with DiffPoly coefficients
written to the left of the derivations.  Composition uses

    dx^k o b = sum_i binom(k, i) dx^i(b) o dx^(k-i),

so products stay normal ordered.  Operator power series in an auxiliary
nilpotent variable are handled as plain lists of operators graded by the
power of that variable.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb, factorial
from typing import Callable, Dict, List, Optional, Sequence

from .scalar import Context
from .jet import DiffPoly, JetError

__all__ = ["DiffOperator", "series_mul", "series_exp", "series_apply"]


class DiffOperator:
    """sum_k coeffs[k] o dx^k acting on densities."""

    __slots__ = ("ctx", "coeffs")

    def __init__(self, ctx: Context, coeffs: Dict[int, DiffPoly]):
        self.ctx = ctx
        clean: Dict[int, DiffPoly] = {}
        for k, p in coeffs.items():
            if k < 0:
                raise JetError("operator orders must be >= 0")
            ctx.check_same(p.ctx)
            if not p.is_zero:
                clean[int(k)] = p
        self.coeffs = clean

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero(ctx: Context) -> "DiffOperator":
        return DiffOperator(ctx, {})

    @staticmethod
    def from_poly(p: DiffPoly, order: int = 0) -> "DiffOperator":
        return DiffOperator(p.ctx, {order: p})

    @staticmethod
    def identity(ctx: Context, trunc: Optional[int] = None) -> "DiffOperator":
        return DiffOperator(ctx, {0: DiffPoly.from_scalar(ctx, 1, trunc)})

    @staticmethod
    def dx_power(ctx: Context, k: int, trunc: Optional[int] = None) -> "DiffOperator":
        return DiffOperator(ctx, {k: DiffPoly.from_scalar(ctx, 1, trunc)})

    # -- ring structure -----------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def order(self) -> int:
        return max(self.coeffs) if self.coeffs else 0

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        self.ctx.check_same(other.ctx)
        out = dict(self.coeffs)
        for k, p in other.coeffs.items():
            out[k] = out[k] + p if k in out else p
        return DiffOperator(self.ctx, out)

    def __neg__(self) -> "DiffOperator":
        return DiffOperator(self.ctx, {k: -p for k, p in self.coeffs.items()})

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return self + (-other)

    def __mul__(self, other: "DiffOperator") -> "DiffOperator":
        """Composition self o other, normal ordered."""
        self.ctx.check_same(other.ctx)
        out: Dict[int, DiffPoly] = {}
        for k, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                db = b
                for i in range(k + 1):
                    term = a * db if i == 0 else a * db * comb(k, i)
                    slot = k + j - i
                    out[slot] = out[slot] + term if slot in out else term
                    if i < k:
                        db = db.dx()
        return DiffOperator(self.ctx, out)

    def scale(self, value) -> "DiffOperator":
        w = DiffPoly.from_scalar(self.ctx, value) if not isinstance(value, DiffPoly) else value
        return DiffOperator(self.ctx, {k: p * w for k, p in self.coeffs.items()})

    def map_coefficients(self, fn: Callable[[DiffPoly], DiffPoly]) -> "DiffOperator":
        return DiffOperator(self.ctx, {k: fn(p) for k, p in self.coeffs.items()})

    # -- action -------------------------------------------------------------

    def apply(self, p: DiffPoly) -> "DiffPoly":
        out = DiffPoly.zero(self.ctx, p.trunc)
        for k, a in sorted(self.coeffs.items()):
            out = out + a * p.dx_power(k)
        return out

    def density(self, alpha: int = 1) -> DiffPoly:
        """The theta-linear density sum_k coeffs[k] * th[alpha,k]."""
        out = DiffPoly.zero(self.ctx)
        for k, a in self.coeffs.items():
            out = out + a * DiffPoly.odd_var(self.ctx, alpha, k)
        return out

    @staticmethod
    def from_density(y: DiffPoly, alpha: int = 1) -> "DiffOperator":
        """Inverse of density(): y = sum_k Y_k th[alpha,k] -> sum_k Y_k dx^k."""
        if any(len(key[1]) != 1 for key in y.terms):
            raise JetError("operator lift needs a theta-linear density")
        coeffs: Dict[int, DiffPoly] = {}
        kmax = y.max_order()
        for k in range(kmax + 1):
            c = y.partial_odd(alpha, k)
            if not c.is_zero:
                coeffs[k] = c
        return DiffOperator(y.ctx, coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return self.ctx == other.ctx and self.coeffs == other.coeffs

    def __repr__(self):
        inner = ", ".join(f"{k}: {p!r}" for k, p in sorted(self.coeffs.items()))
        return f"DiffOperator({{{inner}}})"


# -- operator power series ---------------------------------------------------
#
# A series sum_j z^j A_j in a formal variable z is a list [A_0, A_1, ...] cut
# at a fixed length; z is nilpotent of the list length.


def series_mul(a: Sequence[DiffOperator], b: Sequence[DiffOperator], zmax: int) -> List[DiffOperator]:
    ctx = a[0].ctx if a else b[0].ctx
    out = [DiffOperator.zero(ctx) for _ in range(zmax + 1)]
    for i, ai in enumerate(a):
        if i > zmax or ai.is_zero:
            continue
        for j, bj in enumerate(b):
            if i + j > zmax:
                break
            if not bj.is_zero:
                out[i + j] = out[i + j] + ai * bj
    return out


def series_exp(a: Sequence[DiffOperator], zmax: int, trunc: Optional[int] = None) -> List[DiffOperator]:
    """exp of a series with zero constant term."""
    ctx = a[0].ctx
    if a and not a[0].is_zero:
        raise JetError("series_exp needs a series vanishing at z = 0")
    out = [DiffOperator.zero(ctx) for _ in range(zmax + 1)]
    out[0] = DiffOperator.identity(ctx, trunc)
    power = list(out)
    for n in range(1, zmax + 1):
        power = series_mul(power, a, zmax)
        inv = DiffPoly.from_scalar(ctx, Fraction(1, factorial(n)))
        for j in range(zmax + 1):
            if not power[j].is_zero:
                out[j] = out[j] + power[j].scale(inv)
    return out


def series_apply(a: Sequence[DiffOperator], p: DiffPoly) -> List[DiffPoly]:
    return [op.apply(p) for op in a]
