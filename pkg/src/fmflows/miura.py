"""Miura transformations, their action on flows, and Miura invariants.

A Miura transform close to identity replaces the dependent variables by
new ones agreeing with them at eps = 0.  This module pushes evolutionary
flows through such changes of variables, extracts the matrix of a flow at
the constant-jet locus (coefficients of the slots u[b,d+1], jets set to
zero and eps renamed to the series variable p), forms the symbol of a
transform the same way from the slots u[b,d], and computes the eigenvalue
series of a flow matrix.  Under a change of variables the flow matrix is
conjugated by the symbol, so its eigenvalue series do not move; they are
the invariants this module reports.
"""

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import sympy

from .jet import DiffPoly, JetError, LocalVectorField
from .scalar import Context, ScalarExpr

__all__ = [
    "MiuraError",
    "NotCloseToIdentity",
    "DegenerateLeadingSpectrum",
    "MiuraTransform",
    "MiuraMatrix",
    "MiuraInvariants",
    "taylor_shift",
    "apply_miura",
    "miura_matrix",
    "miura_symbol",
    "miura_invariants",
]


class MiuraError(JetError):
    pass


class NotCloseToIdentity(MiuraError):
    """The eps = 0 part of a transform must be the identity."""


class DegenerateLeadingSpectrum(MiuraError):
    """Leading eigenvalues coincide, so the series roots are ill defined."""


# -- substitution ----------------------------------------------------------------


def taylor_shift(p: DiffPoly, delta: Sequence[DiffPoly]) -> DiffPoly:
    """Substitute u^a_k -> u^a_k + dx^k(delta[a-1]) into p.

    Every delta component must vanish at eps = 0, so the expansion of the
    coefficients terminates at the eps truncation; the truncation must
    therefore be finite.  Jets are shifted exactly, coefficients through
    their Taylor series in the shift.
    """
    ctx = p.ctx
    cap = p.trunc
    for d in delta:
        ctx.check_same(d.ctx)
        if d and d.eps_coefficient(0):
            raise MiuraError("shift components must vanish at eps = 0")
        cap = d.trunc if cap is None else (cap if d.trunc is None else min(cap, d.trunc))
    if cap is None:
        raise MiuraError("taylor_shift needs a finite eps truncation")
    delta = [d.copy(trunc=cap) for d in delta]
    shifts: List[List[DiffPoly]] = [[d] for d in delta]

    def dxk(a: int, k: int) -> DiffPoly:
        row = shifts[a - 1]
        while len(row) <= k:
            row.append(row[-1].dx())
        return row[k]

    out = DiffPoly.zero(ctx, cap)
    for (ev, od, e), c in p.terms.items():
        # Taylor orders above cap - e die against the eps^e factor below, so
        # the expansion is cut there; every intermediate stays exact mod
        # eps^(cap+1).
        piece = _shift_coefficient(ctx, c, delta, cap, cap - e)
        for (a, k), pw in ev:
            jet = DiffPoly.even_var(ctx, a, k).copy(trunc=cap) + dxk(a, k)
            piece = piece * jet ** pw
        out = out + piece * DiffPoly(ctx, {((), od, e): ctx.one}, cap)
    return out


def _shift_coefficient(
    ctx: Context, c: ScalarExpr, delta: Sequence[DiffPoly], cap: int, room: int
) -> DiffPoly:
    """Taylor expansion of c(u + delta) through order ``room`` in the shift."""
    out = DiffPoly.zero(ctx, cap)
    if room < 0:
        return out

    def rec(cur: ScalarExpr, index: int, factor: DiffPoly):
        nonlocal out
        if cur.is_zero:
            return
        if index == len(delta):
            out = out + factor * DiffPoly.from_scalar(ctx, cur, cap)
            return
        d = delta[index]
        if not d:
            rec(cur, index + 1, factor)
            return
        coord = ctx.coordinates[index]
        power = factor
        der = cur
        fact = 1
        for m in range(room + 1):
            if m:
                der = der.derive(coord)
                fact *= m
                power = power * d
                if der.is_zero or not power:
                    break
                rec(der * ctx.rational(Fraction(1, fact)), index + 1, power)
            else:
                rec(der, index + 1, power)

    rec(c, 0, DiffPoly.from_scalar(ctx, 1, cap))
    return out


# -- transforms ------------------------------------------------------------------


class MiuraTransform:
    """A change of dependent variables close to identity.

    ``components[a-1]`` is the new a-th variable as a differential
    polynomial in the old ones, with finite eps truncation, even, of
    differential degree zero, and reducing to u^a at eps = 0.
    """

    __slots__ = ("ctx", "components", "trunc", "_inv")

    def __init__(self, ctx: Context, components: Sequence[DiffPoly]):
        if len(components) != ctx.n_components:
            raise MiuraError("one component per coordinate required")
        truncs = set()
        for a, comp in enumerate(components, start=1):
            ctx.check_same(comp.ctx)
            truncs.add(comp.trunc)
            if comp.theta_degree() != 0:
                raise MiuraError("transform components must be even")
            if set(comp.dx_degrees()) - {0}:
                raise MiuraError("transform components must have differential degree zero")
            if comp.eps_coefficient(0) != DiffPoly.even_var(ctx, a, 0):
                raise NotCloseToIdentity(f"component {a} is not u^{a} at eps = 0")
        if len(truncs) != 1 or None in truncs:
            raise MiuraError("components need one shared finite eps truncation")
        self.ctx = ctx
        self.components = tuple(components)
        self.trunc = truncs.pop()
        self._inv = None

    @staticmethod
    def identity(ctx: Context, trunc: int) -> "MiuraTransform":
        return MiuraTransform(
            ctx,
            [DiffPoly.even_var(ctx, a, 0).copy(trunc=trunc) for a in range(1, ctx.n_components + 1)],
        )

    def delta(self) -> List[DiffPoly]:
        """components minus the identity; each entry is O(eps)."""
        return [
            comp - DiffPoly.even_var(self.ctx, a, 0)
            for a, comp in enumerate(self.components, start=1)
        ]

    def inverse(self) -> "MiuraTransform":
        """Order-by-order inversion by fixed-point iteration in eps grading."""
        if self._inv is not None:
            return self._inv
        ctx = self.ctx
        g = self.delta()
        h = [DiffPoly.zero(ctx, self.trunc) for _ in g]
        for _ in range(self.trunc):
            h = [-taylor_shift(gc, h) for gc in g]
        inv = MiuraTransform(
            ctx,
            [DiffPoly.even_var(ctx, a, 0).copy(trunc=self.trunc) + hc
             for a, hc in enumerate(h, start=1)],
        )
        for a, comp in enumerate(self.components, start=1):
            if taylor_shift(comp, h) != DiffPoly.even_var(ctx, a, 0).copy(trunc=self.trunc):
                raise MiuraError(f"inversion failed to close in component {a}")
        self._inv = inv
        inv._inv = self
        return inv

    def then(self, other: "MiuraTransform") -> "MiuraTransform":
        """The transform 'self first, then other'."""
        self.ctx.check_same(other.ctx)
        d = self.delta()
        return MiuraTransform(self.ctx, [taylor_shift(c, d) for c in other.components])

    def __eq__(self, other):
        return (
            isinstance(other, MiuraTransform)
            and self.ctx == other.ctx
            and self.components == other.components
        )

    def __repr__(self):
        return f"MiuraTransform({list(map(str, self.components))})"


def apply_miura(x: LocalVectorField, m: MiuraTransform) -> LocalVectorField:
    """Push the flow of x through the change of variables m.

    The new components are sum_s (d m^a / d u^mu_s) dx^s(x^mu) with the old
    variables eliminated through the inverse transform.  Exact to the eps
    truncation of the transform (or of the flow, whichever is lower).
    """
    x.ctx.check_same(m.ctx)
    cap = m.trunc
    for c in x.components:
        if c.trunc is not None:
            cap = min(cap, c.trunc)
    h = m.inverse().delta()
    comps = [
        taylor_shift(uc.evolve(x.components).copy(trunc=cap), h) for uc in m.components
    ]
    return LocalVectorField(x.ctx, comps)


# -- series matrices -------------------------------------------------------------

PSeries = Tuple[ScalarExpr, ...]


def _ps_trim(ctx: Context, t: Sequence[ScalarExpr]) -> PSeries:
    t = list(t)
    while t and t[-1].is_zero:
        t.pop()
    return tuple(t)


def _ps_get(t: PSeries, k: int, zero: ScalarExpr) -> ScalarExpr:
    return t[k] if k < len(t) else zero


def _ps_add(ctx: Context, a: PSeries, b: PSeries) -> PSeries:
    n = max(len(a), len(b))
    z = ctx.zero
    return _ps_trim(ctx, [_ps_get(a, k, z) + _ps_get(b, k, z) for k in range(n)])


def _ps_neg(ctx: Context, a: PSeries) -> PSeries:
    return tuple(-c for c in a)


def _ps_mul(ctx: Context, a: PSeries, b: PSeries, cap: Optional[int]) -> PSeries:
    if not a or not b:
        return ()
    n = len(a) + len(b) - 2
    if cap is not None:
        n = min(n, cap)
    out = [ctx.zero] * (n + 1)
    for i, ca in enumerate(a):
        if ca.is_zero or i > n:
            continue
        for j, cb in enumerate(b):
            if i + j > n:
                break
            out[i + j] = out[i + j] + ca * cb
    return _ps_trim(ctx, out)


def _ps_div(ctx: Context, a: PSeries, b: PSeries, cap: int) -> PSeries:
    """a / b mod p^(cap+1); the constant term of b must be invertible."""
    z = ctx.zero
    if not b or b[0].is_zero:
        raise MiuraError("series division by a series vanishing at p = 0")
    inv0 = ctx.one / b[0]
    out = []
    for k in range(cap + 1):
        acc = _ps_get(a, k, z)
        for i in range(k):
            acc = acc - out[i] * _ps_get(b, k - i, z)
        out.append(acc * inv0)
    return _ps_trim(ctx, out)


def _ps_scalar(ctx: Context, value) -> PSeries:
    c = ctx.scalar(value)
    return () if c.is_zero else (c,)


class MiuraMatrix:
    """Square matrix of polynomials in the series variable p.

    Entries are tuples of coefficient ScalarExprs by p power.  ``trunc``
    caps the p order kept by arithmetic; inversion requires it.
    """

    __slots__ = ("ctx", "n", "entries", "trunc")

    def __init__(self, ctx: Context, entries: Sequence[Sequence[Sequence[ScalarExpr]]],
                 trunc: Optional[int] = None):
        n = len(entries)
        rows = []
        for row in entries:
            if len(row) != n:
                raise MiuraError("matrix must be square")
            cells = []
            for cell in row:
                cell = _ps_trim(ctx, tuple(cell))
                if trunc is not None:
                    cell = _ps_trim(ctx, cell[: trunc + 1])
                cells.append(cell)
            rows.append(tuple(cells))
        self.ctx = ctx
        self.n = n
        self.entries = tuple(rows)
        self.trunc = trunc

    @staticmethod
    def identity(ctx: Context, n: int, trunc: Optional[int] = None) -> "MiuraMatrix":
        one = (ctx.one,)
        return MiuraMatrix(
            ctx, [[one if i == j else () for j in range(n)] for i in range(n)], trunc
        )

    def entry(self, i: int, j: int, power: int) -> ScalarExpr:
        return _ps_get(self.entries[i][j], power, self.ctx.zero)

    def leading(self) -> List[List[ScalarExpr]]:
        z = self.ctx.zero
        return [[_ps_get(c, 0, z) for c in row] for row in self.entries]

    def _cap(self, other: "MiuraMatrix") -> Optional[int]:
        if self.trunc is None:
            return other.trunc
        if other.trunc is None:
            return self.trunc
        return min(self.trunc, other.trunc)

    def __mul__(self, other: "MiuraMatrix") -> "MiuraMatrix":
        self.ctx.check_same(other.ctx)
        if self.n != other.n:
            raise MiuraError("size mismatch")
        cap = self._cap(other)
        out = []
        for i in range(self.n):
            row = []
            for j in range(self.n):
                acc: PSeries = ()
                for k in range(self.n):
                    acc = _ps_add(
                        self.ctx, acc,
                        _ps_mul(self.ctx, self.entries[i][k], other.entries[k][j], cap),
                    )
                row.append(acc)
            out.append(row)
        return MiuraMatrix(self.ctx, out, cap)

    def __eq__(self, other):
        return (
            isinstance(other, MiuraMatrix)
            and self.ctx == other.ctx
            and self.n == other.n
            and self.entries == other.entries
        )

    def inverse(self) -> "MiuraMatrix":
        """Order-by-order inverse; the p = 0 part must be invertible."""
        if self.trunc is None:
            raise MiuraError("matrix inverse needs a truncation")
        ctx, n, cap = self.ctx, self.n, self.trunc
        b0 = _mat_inverse(ctx, self.leading())
        z = ctx.zero
        coeffs: List[List[List[ScalarExpr]]] = [
            [[_ps_get(self.entries[i][j], k, z) for j in range(n)] for i in range(n)]
            for k in range(cap + 1)
        ]
        inv: List[List[List[ScalarExpr]]] = [b0]
        for k in range(1, cap + 1):
            acc = [[z for _ in range(n)] for _ in range(n)]
            for i in range(1, k + 1):
                acc = _mat_add(acc, _mat_mul(coeffs[i], inv[k - i]))
            inv.append(_mat_mul([[-e for e in row] for row in b0], acc))
        out = [
            [tuple(inv[k][i][j] for k in range(cap + 1)) for j in range(n)]
            for i in range(n)
        ]
        return MiuraMatrix(ctx, out, cap)

    def to_json(self) -> dict:
        return {
            "context": self.ctx.name,
            "trunc": self.trunc,
            "entries": [[[str(c) for c in cell] for cell in row] for row in self.entries],
        }

    def __repr__(self):
        cells = []
        for i, row in enumerate(self.entries):
            for j, cell in enumerate(row):
                body = " + ".join(
                    f"({c})*p^{k}" if k else f"({c})" for k, c in enumerate(cell) if not c.is_zero
                )
                cells.append(f"[{i + 1},{j + 1}] {body or '0'}")
        return "MiuraMatrix(" + "; ".join(cells) + ")"


def _mat_mul(a, b):
    n = len(a)
    return [
        [sum((a[i][k] * b[k][j] for k in range(1, n)), a[i][0] * b[0][j]) for j in range(n)]
        for i in range(n)
    ]


def _mat_add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def _mat_inverse(ctx: Context, m: List[List[ScalarExpr]]) -> List[List[ScalarExpr]]:
    n = len(m)
    work = [list(row) + [ctx.one if i == j else ctx.zero for j in range(n)]
            for i, row in enumerate(m)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if not work[r][col].is_zero), None)
        if pivot is None:
            raise MiuraError("leading matrix is not invertible")
        work[col], work[pivot] = work[pivot], work[col]
        inv = ctx.one / work[col][col]
        work[col] = [inv * e for e in work[col]]
        for r in range(n):
            if r != col and not work[r][col].is_zero:
                f = work[r][col]
                work[r] = [e - f * p for e, p in zip(work[r], work[col])]
    return [row[n:] for row in work]


def _constant_jet_part(p: DiffPoly) -> PSeries:
    """Evaluate at vanishing positive jets, renaming eps to p."""
    out: Dict[int, ScalarExpr] = {}
    for (ev, od, e), c in p.terms.items():
        if ev or od:
            continue
        out[e] = out.get(e, p.ctx.zero) + c
    if not out:
        return ()
    top = max(out)
    z = p.ctx.zero
    return _ps_trim(p.ctx, [out.get(k, z) for k in range(top + 1)])


def miura_matrix(flow: Union[LocalVectorField, Sequence[DiffPoly]]) -> MiuraMatrix:
    """Matrix of a flow du^a/dt = Q^a at the constant-jet locus.

    Entry (a, b) collects the slots dQ^a/du^b_{d+1} over d >= 0, jets set
    to zero and eps renamed to p.
    """
    comps = flow.components if isinstance(flow, LocalVectorField) else tuple(flow)
    ctx = comps[0].ctx
    trunc = None
    entries = []
    for q in comps:
        ctx.check_same(q.ctx)
        if q.trunc is not None:
            trunc = q.trunc if trunc is None else min(trunc, q.trunc)
        row = []
        for b in range(1, ctx.n_components + 1):
            acc: PSeries = ()
            for d in range(q.max_order()):
                acc = _ps_add(ctx, acc, _constant_jet_part(q.partial_even(b, d + 1)))
            row.append(acc)
        entries.append(row)
    return MiuraMatrix(ctx, entries, trunc)


def miura_symbol(m: MiuraTransform) -> MiuraMatrix:
    """Symbol of a transform: slots d u~^a / d u^b_d at the constant-jet locus."""
    ctx = m.ctx
    entries = []
    for comp in m.components:
        row = []
        for b in range(1, ctx.n_components + 1):
            acc = _constant_jet_part(comp.partial_even(b, 0))
            for d in range(1, comp.max_order() + 1):
                acc = _ps_add(ctx, acc, _constant_jet_part(comp.partial_even(b, d)))
            row.append(acc)
        entries.append(row)
    return MiuraMatrix(ctx, entries, m.trunc)


# -- eigenvalue series -----------------------------------------------------------


class MiuraInvariants:
    """Eigenvalue series of a flow matrix, one per dependent variable."""

    __slots__ = ("ctx", "series", "trunc")

    def __init__(self, ctx: Context, series: Sequence[PSeries], trunc: int):
        self.ctx = ctx
        self.series = tuple(sorted(series, key=lambda s: [str(c) for c in s]))
        self.trunc = trunc

    def __eq__(self, other):
        return (
            isinstance(other, MiuraInvariants)
            and self.ctx == other.ctx
            and self.trunc == other.trunc
            and self.series == other.series
        )

    def to_json(self) -> dict:
        return {
            "context": self.ctx.name,
            "trunc": self.trunc,
            "invariants": [[str(c) for c in s] for s in self.series],
        }

    def __repr__(self):
        parts = []
        for s in self.series:
            body = " + ".join(
                f"({c})*p^{k}" if k else f"({c})" for k, c in enumerate(s) if not c.is_zero
            )
            parts.append(body or "0")
        return "MiuraInvariants(" + "; ".join(parts) + ")"


def _to_sympy(c: ScalarExpr):
    return c.fr.numer.as_expr() / c.fr.denom.as_expr()


def _leading_roots(ctx: Context, a: List[List[ScalarExpr]]) -> List[ScalarExpr]:
    n = len(a)
    if n == 1:
        return [a[0][0]]
    lam = sympy.Symbol("_lambda_")
    m = sympy.Matrix([[_to_sympy(c) for c in row] for row in a]) - lam * sympy.eye(n)
    poly = sympy.Poly(sympy.together(m.det()), lam)
    roots = sympy.roots(poly)
    if sum(roots.values()) != n:
        raise MiuraError("leading eigenvalues not solvable; pass them explicitly")
    out = []
    for root, mult in roots.items():
        expr = sympy.cancel(sympy.nsimplify(root, rational=True))
        try:
            val = ctx.scalar(str(expr).replace("**", "^"))
        except Exception as exc:
            raise MiuraError(
                f"leading eigenvalue {expr} is outside the coefficient field; "
                "pass leading eigenvalues explicitly"
            ) from exc
        out.extend([val] * mult)
    return out


def miura_invariants(
    s: MiuraMatrix, leading: Optional[Sequence[ScalarExpr]] = None
) -> MiuraInvariants:
    """Eigenvalue series of s, refined root by root.

    The p = 0 eigenvalues must be pairwise distinct as canonical forms;
    each is then corrected by Newton steps on the characteristic
    polynomial, doubling the valid p order per step.
    """
    ctx = s.ctx
    cap = s.trunc
    if cap is None:
        cap = max(
            (len(cell) - 1 for row in s.entries for cell in row if cell), default=0
        )
    if leading is None:
        lead = _leading_roots(ctx, s.leading())
    else:
        lead = [ctx.scalar(v) for v in leading]
        if len(lead) != s.n:
            raise MiuraError("one leading eigenvalue per row required")
    for i in range(len(lead)):
        for j in range(i + 1, len(lead)):
            if (lead[i] - lead[j]).is_zero:
                raise DegenerateLeadingSpectrum(
                    f"leading eigenvalues {lead[i]} and {lead[j]} coincide"
                )
    chi = _char_poly(ctx, s, cap)
    dchi = [
        _ps_mul(ctx, _ps_scalar(ctx, k), c, cap) for k, c in enumerate(chi)
    ][1:]
    series = []
    for root in lead:
        x: PSeries = _ps_trim(ctx, (root,))
        steps = max(1, (cap + 1).bit_length())
        for _ in range(steps):
            num = _ps_eval(ctx, chi, x, cap)
            if not num:
                break
            den = _ps_eval(ctx, dchi, x, cap)
            x = _ps_add(ctx, x, _ps_neg(ctx, _ps_div(ctx, num, den, cap)))
        if _ps_eval(ctx, chi, x, cap):
            raise MiuraError("root refinement failed to converge")
        series.append(x)
    return MiuraInvariants(ctx, series, cap)


def _char_poly(ctx: Context, s: MiuraMatrix, cap: int) -> List[PSeries]:
    """det(s - lambda Id) as a list of PSeries by lambda power."""
    none: List[PSeries] = []
    one = _ps_scalar(ctx, 1)

    def lp_add(a, b):
        n = max(len(a), len(b))
        return [
            _ps_add(ctx, a[k] if k < len(a) else (), b[k] if k < len(b) else ())
            for k in range(n)
        ]

    def lp_mul(a, b):
        out: List[PSeries] = [()] * (len(a) + len(b) - 1) if a and b else []
        for i, ca in enumerate(a):
            for j, cb in enumerate(b):
                out[i + j] = _ps_add(ctx, out[i + j], _ps_mul(ctx, ca, cb, cap))
        return out

    cells = [
        [
            [s.entries[i][j], _ps_neg(ctx, one)] if i == j else [s.entries[i][j]]
            for j in range(s.n)
        ]
        for i in range(s.n)
    ]

    def det(rows, cols):
        if len(cols) == 1:
            return cells[rows[0]][cols[0]]
        out = none
        for idx, c in enumerate(cols):
            minor = det(rows[1:], cols[:idx] + cols[idx + 1:])
            piece = lp_mul(cells[rows[0]][c], minor)
            if idx % 2:
                piece = [_ps_neg(ctx, x) for x in piece]
            out = lp_add(out, piece)
        return out

    return det(list(range(s.n)), list(range(s.n)))


def _ps_eval(ctx: Context, coeffs: Sequence[PSeries], x: PSeries, cap: int) -> PSeries:
    out: PSeries = ()
    for c in reversed(coeffs):
        out = _ps_add(ctx, _ps_mul(ctx, out, x, cap), c)
    return out
