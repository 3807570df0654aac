"""Calibrations and the principal hierarchy of a flat F-manifold.

A calibration is a family of matrices X_d, d = -1, 0, 1, ..., solving the
recursion  d X_{d+1} / d t^gamma = C_gamma X_d  in flat coordinates with
X_{-1} = Id.  Integration constants are fixed by the standard-type
conditions (the unit contraction of X_0 equals the coordinate vector) and,
when Euler data is supplied, by the homogeneity equation

    E^mu d_mu X_d = (d+1) X_d + [X_d, Q] + sum_{i>=1} X_{d-i} R_i

level by level, with constant input matrices R_i satisfying [Q, R_i] = i R_i.
The hierarchy flows are the x-gradients of the calibration entries read as
functions on the loop space.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .scalar import Context, ScalarExpr, ScalarLike
from .jet import DiffPoly, LocalVectorField
from .fmanifold import FManifoldError, VectorPotential, EulerData, structure_constants, check_wdvv
from .linsolve import reduce_system

__all__ = [
    "NotIntegrable",
    "NormalizationIncomplete",
    "Calibration",
    "compute_calibration",
    "PrincipalFlows",
    "principal_flows",
]


class NotIntegrable(FManifoldError):
    """The gradient system has no solution in the coefficient field."""


class NormalizationIncomplete(FManifoldError):
    """Integration constants are not pinned down by the requested conditions."""

    def __init__(self, message: str, free: Sequence[str] = ()):
        super().__init__(message)
        self.free = tuple(free)


# -- term decomposition ------------------------------------------------------
#
# Every expression handled here is a finite sum of Laurent monomials in the
# coordinates and generators with coefficients in the parameter subfield.
# Integration is done by matching an ansatz spanned by such monomials, so we
# need the decomposition explicitly.


def _jet_positions(ctx: Context) -> List[int]:
    n = len(ctx.coordinates)
    p = len(ctx.params)
    g = len(ctx.generators)
    return list(range(n)) + list(range(n + p, n + p + g))


def _qq_fraction(ctx: Context, c) -> Fraction:
    q = ctx.field.domain.to_sympy(c)
    return Fraction(int(q.p), int(q.q))


def _param_monomial(ctx: Context, monom: Tuple[int, ...], jet: Sequence[int]) -> ScalarExpr:
    jetset = set(jet)
    out = ctx.one
    for pos, e in enumerate(monom):
        if e and pos not in jetset:
            out = out * ctx.symbol(ctx._names[pos]) ** e
    return out


def _split_terms(expr: ScalarExpr) -> List[Tuple[ScalarExpr, Tuple[int, ...]]]:
    """Write expr as sum of coeff(params) * monomial(coordinates, generators)."""
    ctx = expr.ctx
    jet = _jet_positions(ctx)
    denom = expr.fr.denom
    dmonos = denom.monoms()
    dvec = tuple(dmonos[0][pos] for pos in jet) if dmonos else ()
    for m in dmonos[1:]:
        if tuple(m[pos] for pos in jet) != dvec:
            raise NotIntegrable(
                "expression does not split into monomials over the coordinate span"
            )
    dparam = ctx.zero
    for m, c in denom.terms():
        dparam = dparam + ctx.rational(_qq_fraction(ctx, c)) * _param_monomial(ctx, m, jet)
    acc: Dict[Tuple[int, ...], ScalarExpr] = {}
    for m, c in expr.fr.numer.terms():
        coeff = ctx.rational(_qq_fraction(ctx, c)) * _param_monomial(ctx, m, jet) / dparam
        tvec = tuple(m[pos] - d for pos, d in zip(jet, dvec))
        acc[tvec] = acc.get(tvec, ctx.zero) + coeff
    return [(c, t) for t, c in acc.items() if not c.is_zero]


def _mono_expr(ctx: Context, tvec: Tuple[int, ...]) -> ScalarExpr:
    jet = _jet_positions(ctx)
    out = ctx.one
    for pos, e in zip(jet, tvec):
        if e:
            out = out * ctx.symbol(ctx._names[pos]) ** e
    return out


def _shift(tvec: Tuple[int, ...], pos: int, by: int = 1) -> Tuple[int, ...]:
    out = list(tvec)
    out[pos] += by
    return tuple(out)


def _integrate_gradient(ctx: Context, grads: Sequence[ScalarExpr]) -> ScalarExpr:
    """Find phi with d phi / d t^gamma = grads[gamma] and no constant term."""
    n = len(ctx.coordinates)
    for g in range(n):
        for d in range(g + 1, n):
            mixed = grads[g].derive(ctx.coordinates[d]) - grads[d].derive(ctx.coordinates[g])
            if not mixed.is_zero:
                raise NotIntegrable(
                    f"mixed partials differ between {ctx.coordinates[g]} and "
                    f"{ctx.coordinates[d]}: residue {mixed}"
                )

    jet = _jet_positions(ctx)
    gen_off = n
    logs = []  # jet-local positions of generators behaving like a logarithm
    for i, gen in enumerate(ctx.generators):
        for coord, _text in gen.derivatives:
            rule = ctx._dtable[gen.name, coord]
            if (rule * ctx.symbol(coord)).is_rational:
                logs.append(gen_off + i)
                break

    targets: List[List[Tuple[ScalarExpr, Tuple[int, ...]]]] = [
        _split_terms(g) for g in grads
    ]
    candidates = set()
    for g in range(n):
        for _c, tvec in targets[g]:
            # Generators mixing with t^g make the image triangular in the
            # power of t^g, so offer every lower power down to zero as well.
            lo = min(0, tvec[g])
            for j in range(lo, tvec[g] + 2):
                vv = list(tvec)
                vv[g] = j
                candidates.add(tuple(vv))
                for lp in logs:
                    candidates.add(_shift(tuple(vv), lp))

    zero_vec = tuple(0 for _ in jet)
    for _attempt in range(3):
        candidates.discard(zero_vec)
        cols = sorted(candidates)
        col_of = {t: i for i, t in enumerate(cols)}
        rows = []
        rhs = []
        row_of = {}

        def _row(key):
            if key not in row_of:
                row_of[key] = len(rows)
                rows.append({})
                rhs.append(ctx.zero)
            return row_of[key]

        for g in range(n):
            coord = ctx.coordinates[g]
            for j, tvec in enumerate(cols):
                image = ctx.derive(_mono_expr(ctx, tvec), coord)
                for c, ivec in _split_terms(image):
                    r = _row((g, ivec))
                    rows[r][j] = rows[r].get(j, ctx.zero) + c
            for c, ivec in targets[g]:
                r = _row((g, ivec))
                rhs[r] = rhs[r] + c

        red = reduce_system(ctx, rows, rhs, ncols=len(cols))
        sol = red.solve()
        if sol is not None:
            out = ctx.zero
            for j, x in enumerate(sol.particular):
                if not x.is_zero:
                    out = out + x * _mono_expr(ctx, cols[j])
            return out
        widened = set(candidates)
        for t in candidates:
            for g in range(n):
                widened.add(_shift(t, g))
                if t[g] > 0:
                    widened.add(_shift(t, g, -1))
            for lp in logs:
                widened.add(_shift(t, lp))
        candidates = widened
    raise NotIntegrable("no antiderivative in the monomial span of the context")


# -- small dense matrix helpers ---------------------------------------------


Matrix = Tuple[Tuple[ScalarExpr, ...], ...]


def _identity(ctx: Context, n: int) -> Matrix:
    return tuple(
        tuple(ctx.one if i == j else ctx.zero for j in range(n)) for i in range(n)
    )


def _mat(ctx: Context, n: int, fn) -> Matrix:
    return tuple(tuple(ctx.scalar(fn(i, j)) for j in range(n)) for i in range(n))


def _mat_mul(ctx: Context, a: Matrix, b: Matrix) -> Matrix:
    n = len(a)
    return _mat(ctx, n, lambda i, j: sum((a[i][k] * b[k][j] for k in range(n)), ctx.zero))


def _mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def _is_constant(expr: ScalarExpr) -> bool:
    ctx = expr.ctx
    live = set(ctx.coordinates) | {g.name for g in ctx.generators}
    return not (expr.symbols() & live)


class Calibration:
    """Matrices X_d for d = -1 .. dmax plus the data that pinned them down."""

    __slots__ = ("ctx", "matrices", "dmax", "unit", "rtilde", "euler")

    def __init__(self, ctx: Context, matrices: Sequence[Matrix], unit: Sequence[ScalarExpr],
                 rtilde: Sequence[Matrix] = (), euler: Optional[EulerData] = None):
        self.ctx = ctx
        self.matrices = tuple(matrices)
        self.dmax = len(self.matrices) - 2
        self.unit = tuple(unit)
        self.rtilde = tuple(rtilde)
        self.euler = euler

    def matrix(self, d: int) -> Matrix:
        if d < -1 or d > self.dmax:
            raise FManifoldError(f"level {d} outside -1..{self.dmax}")
        return self.matrices[d + 1]

    def entry(self, alpha: int, beta: int, d: int) -> ScalarExpr:
        """X^alpha_{beta,d} with 1-based component indices."""
        return self.matrix(d)[alpha - 1][beta - 1]

    def unit_column(self, d: int) -> Tuple[ScalarExpr, ...]:
        """The unit contraction sum_mu A^mu X^alpha_{mu,d}."""
        m = self.matrix(d)
        n = len(m)
        return tuple(
            sum((self.unit[mu] * m[a][mu] for mu in range(n)), self.ctx.zero)
            for a in range(n)
        )

    def verify(self, v: VectorPotential) -> Dict[Tuple[int, int, int, int], ScalarExpr]:
        """Back-substitution residuals d X_{d+1}/d t^gamma - C_gamma X_d; {} if exact."""
        ctx = self.ctx
        n = ctx.n_components
        c = structure_constants(v)
        bad = {}
        for d in range(0, self.dmax + 1):
            cur, prev = self.matrix(d), self.matrix(d - 1)
            for g in range(n):
                for a in range(n):
                    for b in range(n):
                        res = cur[a][b].derive(ctx.coordinates[g]) - sum(
                            (c[a][g][mu] * prev[mu][b] for mu in range(n)), ctx.zero
                        )
                        if not res.is_zero:
                            bad[(a + 1, b + 1, g + 1, d)] = res
        return bad

    def to_json(self) -> dict:
        return {
            "context": self.ctx.name,
            "dmax": self.dmax,
            "unit": [str(a) for a in self.unit],
            "matrices": {
                str(d): [[str(e) for e in row] for row in self.matrix(d)]
                for d in range(-1, self.dmax + 1)
            },
            "rtilde": [[[str(e) for e in row] for row in m] for m in self.rtilde],
        }

    def __repr__(self):
        return f"Calibration({self.ctx.name!r}, dmax={self.dmax})"


def compute_calibration(
    v: VectorPotential,
    e: Optional[EulerData] = None,
    dmax: int = 3,
    rtilde: Sequence[Sequence[Sequence[ScalarLike]]] = (),
) -> Calibration:
    """Solve the calibration recursion with standard-type normalization.

    With Euler data the homogeneity equation fixes the integration constants
    (jointly with the standard-type condition at level 0); without it the
    remaining constants are set to zero.
    """
    ctx = v.ctx
    n = ctx.n_components
    axioms = check_wdvv(v)
    if not axioms.passed:
        raise NotIntegrable("potential fails the unit or associativity axioms; "
                            "the gradient recursion is obstructed")
    c = structure_constants(v)
    rmats = [
        tuple(tuple(ctx.scalar(x) for x in row) for row in m) for m in rtilde
    ]
    q = e.q if e is not None else None
    if e is not None:
        for i, rm in enumerate(rmats, start=1):
            comm = _mat_sub(_mat_mul(ctx, q, rm), _mat_mul(ctx, rm, q))
            want = tuple(tuple(ctx.rational(i) * x for x in row) for row in rm)
            if any(not (x - y).is_zero for ra, rb in zip(comm, want) for x, y in zip(ra, rb)):
                raise FManifoldError(f"R_{i} violates [Q, R_{i}] = {i} R_{i}")
        evec = e.components()

    mats: List[Matrix] = [_identity(ctx, n)]
    for d in range(0, dmax + 1):
        prev = mats[-1]
        part = [[ctx.zero] * n for _ in range(n)]
        for a in range(n):
            for b in range(n):
                grads = [
                    sum((c[a][g][mu] * prev[mu][b] for mu in range(n)), ctx.zero)
                    for g in range(n)
                ]
                part[a][b] = _integrate_gradient(ctx, grads)

        # Constant correction K, one unknown per matrix slot (row-major).
        rows: List[Dict[int, ScalarExpr]] = []
        rhs: List[ScalarExpr] = []
        if e is not None:
            bsum = [[ctx.zero] * n for _ in range(n)]
            for i, rm in enumerate(rmats, start=1):
                if d - i < -1:
                    break
                xd = mats[d - i + 1]
                for a in range(n):
                    for b in range(n):
                        bsum[a][b] = bsum[a][b] + sum(
                            (xd[a][mu] * rm[mu][b] for mu in range(n)), ctx.zero
                        )
            for a in range(n):
                for b in range(n):
                    lhs = sum(
                        (evec[g] * part[a][b].derive(ctx.coordinates[g]) for g in range(n)),
                        ctx.zero,
                    )
                    lhs = lhs - ctx.rational(d + 1) * part[a][b]
                    lhs = lhs - sum((part[a][mu] * q[mu][b] for mu in range(n)), ctx.zero)
                    lhs = lhs + sum((q[a][mu] * part[mu][b] for mu in range(n)), ctx.zero)
                    resid = lhs - bsum[a][b]
                    if not _is_constant(resid):
                        raise NormalizationIncomplete(
                            f"homogeneity defect of X^{a + 1}_({b + 1},{d}) is not "
                            f"constant: {resid}; Euler data does not match the potential"
                        )
                    row = {a * n + b: ctx.rational(d + 1)}
                    for mu in range(n):
                        row[a * n + mu] = row.get(a * n + mu, ctx.zero) + q[mu][b]
                        row[mu * n + b] = row.get(mu * n + b, ctx.zero) - q[a][mu]
                    rows.append(row)
                    rhs.append(resid)
        if d == 0:
            for a in range(n):
                defect = ctx.symbol(ctx.coordinates[a]) - sum(
                    (v.unit[mu] * part[a][mu] for mu in range(n)), ctx.zero
                )
                if not _is_constant(defect):
                    raise NormalizationIncomplete(
                        f"unit contraction of X^{a + 1}_(.,0) differs from t^{a + 1} "
                        f"by a non-constant: {defect}"
                    )
                rows.append({a * n + mu: v.unit[mu] for mu in range(n)})
                rhs.append(defect)

        if rows:
            red = reduce_system(ctx, rows, rhs, ncols=n * n)
            if not red.consistent:
                raise NormalizationIncomplete(
                    f"normalization conditions at level {d} are inconsistent; "
                    f"residuals {[str(r) for r in red.residuals]} "
                    f"(a different R matrix choice is required)"
                )
            sol = red.solve()
            if e is not None and sol.free_cols:
                free = [f"X^{f // n + 1}_({f % n + 1},{d})" for f in sol.free_cols]
                raise NormalizationIncomplete(
                    f"integration constants not fixed by homogeneity at level {d}",
                    free=free,
                )
            korr = sol.particular
        else:
            korr = [ctx.zero] * (n * n)
        mats.append(
            tuple(
                tuple(part[a][b] + korr[a * n + b] for b in range(n)) for a in range(n)
            )
        )

    cal = Calibration(ctx, mats, v.unit, rmats, e)
    bad = cal.verify(v)
    if bad:
        key = next(iter(bad))
        raise NotIntegrable(f"back-substitution failed at {key}: {bad[key]}")
    return cal


class PrincipalFlows:
    """Current densities P^alpha_{beta,d} of the dispersionless hierarchy."""

    __slots__ = ("ctx", "calibration", "densities")

    def __init__(self, calibration: Calibration):
        self.ctx = calibration.ctx
        self.calibration = calibration
        self.densities: Dict[Tuple[int, int], Tuple[DiffPoly, ...]] = {}
        n = self.ctx.n_components
        for d in range(0, calibration.dmax + 1):
            m = calibration.matrix(d)
            for b in range(n):
                self.densities[(b + 1, d)] = tuple(
                    DiffPoly.from_scalar(self.ctx, m[a][b]) for a in range(n)
                )

    @property
    def dmax(self) -> int:
        return self.calibration.dmax

    def density(self, beta: int, d: int) -> Tuple[DiffPoly, ...]:
        """Densities (P^1_{beta,d}, ..., P^N_{beta,d}); the flow is their dx."""
        try:
            return self.densities[(beta, d)]
        except KeyError:
            raise FManifoldError(f"no flow ({beta},{d}); have beta=1..{self.ctx.n_components}, "
                                 f"d=0..{self.dmax}") from None

    def density_unit(self, d: int) -> Tuple[DiffPoly, ...]:
        """Unit-contracted densities sum_mu A^mu P^alpha_{mu,d}."""
        n = self.ctx.n_components
        acc = [DiffPoly.zero(self.ctx) for _ in range(n)]
        for mu in range(n):
            w = self.calibration.unit[mu]
            if w.is_zero:
                continue
            for a, p in enumerate(self.density(mu + 1, d)):
                acc[a] = acc[a] + p * DiffPoly.from_scalar(self.ctx, w)
        return tuple(acc)

    def vector_field(self, beta: int, d: int) -> LocalVectorField:
        return LocalVectorField(self.ctx, [p.dx() for p in self.density(beta, d)])

    def string_defects(self) -> Dict[Tuple[int, int, int], DiffPoly]:
        """Residuals of d P_{beta,d+1} / d u^unit = P_{beta,d} (with P_{beta,-1} = Id)."""
        ctx = self.ctx
        n = ctx.n_components
        out = {}
        for (b, d), ps in self.densities.items():
            for a in range(n):
                lower = ps[a].partial_even(1, 0) * DiffPoly.from_scalar(ctx, self.calibration.unit[0])
                for mu in range(1, n):
                    w = self.calibration.unit[mu]
                    if not w.is_zero:
                        lower = lower + ps[a].partial_even(mu + 1, 0) * DiffPoly.from_scalar(ctx, w)
                if d == 0:
                    want = DiffPoly.from_scalar(ctx, ctx.one if a + 1 == b else ctx.zero)
                else:
                    want = self.density(b, d - 1)[a]
                res = lower - want
                if not res.is_zero:
                    out[(a + 1, b, d)] = res
        return out

    def dilaton_defects(self) -> Dict[Tuple[int, int], DiffPoly]:
        """Residuals of d P^alpha_{unit,1} / d u^beta = D P^alpha_{beta,0}."""
        ctx = self.ctx
        n = ctx.n_components
        out = {}
        if self.dmax < 1:
            return out
        punit = self.density_unit(1)
        for a in range(n):
            for b in range(n):
                res = punit[a].partial_even(b + 1, 0) - self.density(b + 1, 0)[a].apply_D()
                if not res.is_zero:
                    out[(a + 1, b + 1)] = res
        return out

    def to_json(self) -> dict:
        from .jet import print_diffpoly

        return {
            "context": self.ctx.name,
            "dmax": self.dmax,
            "densities": {
                f"{b},{d}": [print_diffpoly(p) for p in ps]
                for (b, d), ps in sorted(self.densities.items())
            },
        }


def principal_flows(calibration: Calibration) -> PrincipalFlows:
    """Dispersionless flows du^alpha/dt^beta_d = dx P^alpha_{beta,d}."""
    return PrincipalFlows(calibration)
