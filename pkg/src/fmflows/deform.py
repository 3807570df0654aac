"""Order-by-order classification of dispersive deformations.

A deformation ansatz attaches unknown constants to a basis of
differential monomials at each power of eps, either on the level-zero
densities plus the unit-contracted level-one density of a rank-N
hierarchy ("conditions" mode) or on a single rank-1 flow governed by
the double ramification recursion ("dr" mode).  Constraints come from
pairwise commutativity, the string and dilaton equations, homogeneity
under the degree-counting Euler field, or the recursion solvability
obstructions; solving proceeds stage by stage in the eps grading,
where every system is linear in the unknowns of its stage.

Pivot choices on expressions that involve earlier free constants fork
the computation into branches (the generic branch records the pivot as
nonzero, the sibling imposes it to vanish), so the returned families
jointly cover the whole solution set within the ansatz bounds.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .scalar import (
    Context, DenominatorVanishes, ScalarExpr, ScalarError, transfer_scalar,
)
from .jet import (
    DiffPoly,
    LocalVectorField,
    print_diffpoly,
    transfer_diffpoly,
)
from .bracket import schouten_density, lie_bracket
from .linsolve import reduce_system
from .fmanifold import CatalogEntry, catalog_entry
from .principal import compute_calibration
from .operators import DiffOperator, series_exp, series_mul
from .fixtures import DeformationFixture, fixture

__all__ = [
    "DeformError",
    "EmptyBasis",
    "NonlinearAtStage",
    "MissingIngredient",
    "UnresolvedBranch",
    "SymbolWeights",
    "symbol_weights",
    "jet_monomials",
    "coefficient_monomials",
    "Ansatz",
    "ConstraintSystem",
    "SolutionFamily",
    "SlotSet",
    "build_ansatz",
    "assemble_constraints",
    "solve_family",
    "verify_fixture",
    "verify_burgers",
    "check_genus0_recursion",
    "FixtureReport",
    "BurgersReport",
    "RecursionReport",
]


class DeformError(ScalarError):
    pass


class EmptyBasis(DeformError):
    """No ansatz monomial survives the filter within the exponent bounds."""


class NonlinearAtStage(DeformError):
    """A stage equation is not linear in the unknowns of its stage."""


class MissingIngredient(DeformError):
    """A requested condition needs data the ansatz does not carry."""


class UnresolvedBranch(DeformError):
    """A vanishing condition could not be solved for any unknown."""


# ---------------------------------------------------------------------------
# symbol weights for the homogeneity filter
# ---------------------------------------------------------------------------


class SymbolWeights:
    """Diagonal scaling weights of coordinates and generators.

    The Euler derivation acts on each symbol as E(s) = w(s) s + rest
    where the rest must carry the same weight w(s); that keeps weight
    filtering valid for the triangular families the rest couples.
    Contexts violating this set ``valid`` False with a reason.
    """

    __slots__ = ("weights", "valid", "reason")

    def __init__(self, weights: Dict[str, ScalarExpr], valid: bool, reason: str = ""):
        self.weights = dict(weights)
        self.valid = valid
        self.reason = reason


def _monomial_weight(ctx: Context, expr: ScalarExpr,
                     weights: Mapping[str, ScalarExpr]) -> Optional[ScalarExpr]:
    """Common scaling weight of all monomials of expr, None if mixed."""
    den_terms = list(expr.fr.denom.terms())
    if len(den_terms) != 1:
        return None
    dmon = den_terms[0][0]
    seen: Optional[ScalarExpr] = None
    for monom, _c in expr.fr.numer.terms():
        w = ctx.zero
        for name, e, d in zip(ctx._names, monom, dmon):
            net = e - d
            if net and name in weights:
                w = w + weights[name] * net
        if seen is None:
            seen = w
        elif not (seen - w).is_zero:
            return None
    return seen if seen is not None else ctx.zero


def symbol_weights(ctx: Context, qmat, rvec) -> SymbolWeights:
    n = ctx.n_components
    q = [[ctx.scalar(qmat[i][j]) for j in range(n)] for i in range(n)]
    r = [ctx.scalar(rvec[i]) for i in range(n)]
    pnames = {p.name for p in ctx.params}
    weights: Dict[str, ScalarExpr] = {}
    for a, name in enumerate(ctx.coordinates):
        weights[name] = ctx.one - q[a][a]
    # the affine and off-diagonal parts of E must not shift weights
    for a, name in enumerate(ctx.coordinates):
        wa = weights[name]
        if not r[a].is_zero and not wa.is_zero:
            return SymbolWeights(weights, False,
                                 f"translation in {name} with nonzero weight")
        for m, other in enumerate(ctx.coordinates):
            if m != a and not q[a][m].is_zero and not (weights[other] - wa).is_zero:
                return SymbolWeights(weights, False,
                                     f"off-diagonal q couples {name} and {other}")
    evec = []
    for a in range(n):
        e = r[a]
        for m in range(n):
            w = (ctx.one if a == m else ctx.zero) - q[a][m]
            e = e + w * ctx.symbol(ctx.coordinates[m])
        evec.append(e)
    for g in ctx.generators:
        gs = ctx.symbol(g.name)
        z = ctx.zero
        for a, cname in enumerate(ctx.coordinates):
            z = z + evec[a] * ctx.derive(gs, cname)
        ratio = z / gs
        if not (ratio.symbols() - pnames):
            weights[g.name] = ratio
            continue
        lin = ScalarExpr(ctx, z.fr.diff(ctx._gens[g.name]))
        if lin.symbols() - pnames:
            return SymbolWeights(weights, False,
                                 f"generator {g.name} scales non-diagonally")
        rest = z - lin * gs
        weights[g.name] = lin
        wrest = _monomial_weight(ctx, rest, weights) if not rest.is_zero else lin
        if wrest is None or not (wrest - lin).is_zero:
            return SymbolWeights(weights, False,
                                 f"generator {g.name} has an off-weight affine part")
    return SymbolWeights(weights, True)


# ---------------------------------------------------------------------------
# ansatz bases
# ---------------------------------------------------------------------------

JetMono = Tuple[Tuple[Tuple[int, int], int], ...]


def jet_monomials(ctx: Context, degree: int) -> List[JetMono]:
    """Products of u[a,k] (k >= 1) of total x-degree ``degree``.

    Returned as sorted ((a, k), power) tuples; degree 0 gives the
    empty product.
    """
    n = ctx.n_components
    slots = [(k, a) for k in range(1, degree + 1) for a in range(1, n + 1)]
    out: List[JetMono] = []

    def rec(i: int, rem: int, acc):
        if rem == 0:
            out.append(tuple(sorted(acc)))
            return
        if i == len(slots):
            return
        k, a = slots[i]
        rec(i + 1, rem, acc)
        for mult in range(1, rem // k + 1):
            rec(i + 1, rem - k * mult, acc + [((a, k), mult)])

    rec(0, degree, [])
    return sorted(set(out))


def _jet_poly(ctx: Context, mono: JetMono, trunc: Optional[int]) -> DiffPoly:
    p = DiffPoly.from_scalar(ctx, 1, trunc)
    for (a, k), power in mono:
        for _ in range(power):
            p = p * DiffPoly.even_var(ctx, a, k)
    return p


def coefficient_monomials(ctx: Context,
                          bounds: Mapping[str, Tuple[int, int]]) -> List[ScalarExpr]:
    """Products of symbol powers within the per-symbol exponent bounds."""
    grading = set(ctx.coordinates) | {g.name for g in ctx.generators}
    names = [n for n in ctx._names if n in grading]
    ranges = []
    for n in names:
        lo, hi = bounds.get(n, (0, 0))
        ranges.append(range(lo, hi + 1))
    out = []
    for combo in itertools.product(*ranges):
        m = ctx.one
        for n, e in zip(names, combo):
            if e:
                m = m * ctx.symbol(n) ** e
        out.append(m)
    return out


def _default_bounds(ctx: Context,
                    weights: Optional[Mapping[str, ScalarExpr]] = None,
                    eps_max: int = 2) -> Dict[str, Tuple[int, int]]:
    """Power windows for the correction coefficients.

    Coordinates feeding a generator derivative table admit negative
    powers (they sit under logs and fractional powers); weight-zero
    generators never exceed the eps order, the others get one extra
    power to balance a jet variable.
    """
    table_coords = set()
    for (_gname, coord), val in ctx._dtable.items():
        if coord in val.symbols():
            table_coords.add(coord)
    span = max(2, eps_max)
    bounds: Dict[str, Tuple[int, int]] = {}
    for c in ctx.coordinates:
        bounds[c] = (-2 * span, span) if c in table_coords else (0, span)
    for g in ctx.generators:
        w = None if weights is None else weights.get(g.name)
        if w is not None and w.is_zero:
            bounds[g.name] = (0, span)
        else:
            bounds[g.name] = (-(span + 1), span + 1)
    return bounds


def _widen(bounds: Mapping[str, Tuple[int, int]]) -> Dict[str, Tuple[int, int]]:
    return {n: (lo - 1 if lo < 0 else lo, hi + 1)
            for n, (lo, hi) in bounds.items()}


# ---------------------------------------------------------------------------
# the ansatz
# ---------------------------------------------------------------------------

SlotKey = Union[Tuple[int, int], str]


class Ansatz:
    """Deformation unknowns attached to basis monomials.

    ``mode`` is "conditions" (rank-N level-zero slots plus the
    unit-contracted level-one slot) or "dr" (a single rank-1 flow).
    The context carries every unknown as an extra param; ``stage_of``
    maps unknown names to their eps power.
    """

    __slots__ = ("mode", "ctx", "base", "eps_max", "report_max", "parity",
                 "stages", "unknowns", "stage_of", "P0", "PU", "X", "unit",
                 "qmat", "rvec", "rtilde", "gamma", "basis_count", "bounds",
                 "zmax")

    def __init__(self, **kw):
        for k in self.__slots__:
            setattr(self, k, kw.get(k))

    @property
    def n(self) -> int:
        return self.ctx.n_components

    def stage_unknowns(self, stage: int) -> List[str]:
        return [u for u in self.unknowns if self.stage_of[u] == stage]

    def slot_items(self) -> List[Tuple[SlotKey, Tuple[DiffPoly, ...]]]:
        if self.mode == "dr":
            return [("X", (self.X,))]
        out: List[Tuple[SlotKey, Tuple[DiffPoly, ...]]] = []
        if self.P0 is not None:
            for beta in range(1, self.n + 1):
                out.append(((beta, 0), tuple(self.P0[beta - 1])))
        if self.PU is not None:
            out.append(("unit", tuple(self.PU)))
        return out

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "eps_max": self.eps_max,
            "report_max": self.report_max,
            "parity": self.parity,
            "unknowns": len(self.unknowns),
            "stages": {str(s): len(self.stage_unknowns(s)) for s in self.stages},
            "basis": {str(k): v for k, v in sorted(self.basis_count.items(),
                                                   key=lambda kv: str(kv[0]))},
        }


def _entry_of(source) -> CatalogEntry:
    if isinstance(source, CatalogEntry):
        return source
    if isinstance(source, str):
        return catalog_entry(source)
    raise DeformError(f"cannot build an ansatz from {source!r}")


def build_ansatz(
    source,
    eps_max: int = 2,
    parity: str = "even",
    gamma=None,
    weight_filter: str = "auto",
    bounds: Optional[Mapping[str, Tuple[int, int]]] = None,
    widen: int = 2,
    orders: Sequence[int] = (0, 1),
    zmax: int = 3,
    extra_params: Sequence[str] = (),
    probe: int = 0,
) -> Ansatz:
    """Attach unknown constants to filtered monomial bases.

    ``source`` is a catalog entry or id for conditions mode, or the
    token "rank1" for the double ramification flow ansatz.  ``gamma``
    may be an index into the entry's conformal dimensions, an
    expression string over the entry params, or None (then the weight
    filter and the homogeneity condition are unavailable).  ``parity``
    "even" restricts to even eps powers, "all" admits every power.
    ``orders`` selects the deformed slots: 0 for the level-zero
    densities, 1 for the unit-contracted level-one density.

    ``probe`` carries the ansatz and the imposed conditions ``probe``
    extra eps orders past ``eps_max``.  Constraints on a coefficient
    can first show up in deeper stages, where the extra slots absorb
    what is genuinely new there; reporting then truncates back to
    ``eps_max``.
    """
    if parity not in ("even", "all"):
        raise DeformError("parity must be 'even' or 'all'")
    if probe < 0:
        raise DeformError("probe must be nonnegative")
    full_max = eps_max + probe
    stages = [s for s in range(1, full_max + 1) if parity == "all" or s % 2 == 0]
    if not stages:
        raise DeformError("eps_max admits no deformation stage")
    if source == "rank1":
        return _build_rank1_dr(eps_max, full_max, stages, bounds, zmax,
                               extra_params)

    entry = _entry_of(source)
    base = entry.ctx
    bad_orders = [o for o in orders if o not in (0, 1)]
    if bad_orders:
        raise DeformError(f"unsupported deformation orders {bad_orders}")

    gexpr: Optional[ScalarExpr] = None
    if gamma is not None:
        if isinstance(gamma, int):
            gexpr = entry.euler.gamma[gamma]
        elif isinstance(gamma, ScalarExpr):
            base.check_same(gamma.ctx)
            gexpr = gamma
        else:
            gexpr = base.scalar(gamma)

    n = base.n_components

    weights = None
    if gexpr is not None and weight_filter != "none":
        sw = symbol_weights(base, entry.euler.q, entry.euler.r)
        if sw.valid:
            weights = sw.weights
        elif weight_filter == "require":
            raise DeformError(f"weight filter unavailable: {sw.reason}")

    use_bounds = (dict(bounds) if bounds is not None
                  else _default_bounds(base, weights, full_max))

    qdiag = [base.scalar(entry.euler.q[a][a]) for a in range(n)]
    half = base.rational(Fraction(1, 2))

    def slot_target(alpha: int, key: SlotKey) -> ScalarExpr:
        d = 1 if key == "unit" else key[1]
        qb = base.zero if key == "unit" else qdiag[key[0] - 1]
        return base.rational(d + 1) + qb - qdiag[alpha - 1]

    slot_keys: List[SlotKey] = [(b, 0) for b in range(1, n + 1)] if 0 in orders else []
    if 1 in orders:
        slot_keys.append("unit")

    def build_bases(cur_bounds):
        coeffs = coefficient_monomials(base, cur_bounds)
        bases: Dict[Tuple[SlotKey, int, int], List] = {}
        total = 0
        for key in slot_keys:
            for alpha in range(1, n + 1):
                target = slot_target(alpha, key)
                for s in stages:
                    items = []
                    for jm in jet_monomials(base, s):
                        jw = base.zero
                        if weights is not None:
                            for (a, _k), power in jm:
                                jw = jw + weights[base.coordinates[a - 1]] * power
                        for cm in coeffs:
                            if weights is not None:
                                cw = _monomial_weight(base, cm, weights)
                                if cw is None:
                                    continue
                                wtot = (base.one - gexpr) * half * s + cw + jw
                                if not (wtot - target).is_zero:
                                    continue
                            items.append((cm, jm))
                    bases[(key, alpha, s)] = items
                    total += len(items)
        return bases, total

    bases, total = build_bases(use_bounds)
    rounds = 0
    while total == 0 and rounds < widen:
        use_bounds = _widen(use_bounds)
        bases, total = build_bases(use_bounds)
        rounds += 1
    if total == 0:
        raise EmptyBasis(
            "no ansatz monomial satisfies the homogeneity weight within bounds")

    ordered = sorted(bases.items(), key=lambda kv: str(kv[0]))
    names: List[str] = []
    stage_of: Dict[str, int] = {}
    allocation: List[Tuple[Tuple[SlotKey, int], str, ScalarExpr, JetMono]] = []
    for (key, alpha, s), items in ordered:
        for cm, jm in items:
            nm = f"a{s}_{len(names)}"
            names.append(nm)
            stage_of[nm] = s
            allocation.append(((key, alpha), nm, cm, jm))

    ctx = base.extended(tuple(extra_params) + tuple(names),
                        name=f"{base.name}+ansatz")
    trunc = full_max

    def lift(expr) -> ScalarExpr:
        return transfer_scalar(expr, ctx)

    corr: Dict[Tuple[SlotKey, int], DiffPoly] = {}
    for (slot, nm, cm, jm) in allocation:
        p = corr.get(slot, DiffPoly.zero(ctx, trunc))
        mono = _jet_poly(ctx, jm, trunc) * DiffPoly.eps(ctx, stage_of[nm])
        corr[slot] = p + mono * (lift(cm) * ctx.symbol(nm))

    cal = compute_calibration(entry.potential, entry.euler, dmax=1,
                              rtilde=entry.rtilde)
    unit = tuple(lift(a) for a in entry.potential.unit)
    qmat = tuple(tuple(lift(entry.euler.q[i][j]) for j in range(n))
                 for i in range(n))
    rvec = tuple(lift(entry.euler.r[i]) for i in range(n))
    rtilde = tuple(tuple(tuple(lift(e) for e in row) for row in mat)
                   for mat in entry.rtilde)
    gammax = lift(gexpr) if gexpr is not None else None

    P0: Optional[List[List[DiffPoly]]] = None
    PU: Optional[List[DiffPoly]] = None
    if 0 in orders:
        P0 = []
        for beta in range(1, n + 1):
            row = []
            for alpha in range(1, n + 1):
                disp = DiffPoly.from_scalar(ctx, lift(cal.entry(alpha, beta, 0)),
                                            trunc)
                row.append(disp + corr.get(((beta, 0), alpha),
                                           DiffPoly.zero(ctx, trunc)))
            P0.append(row)
    if 1 in orders:
        PU = []
        for alpha in range(1, n + 1):
            disp = ctx.zero
            for mu in range(n):
                disp = disp + unit[mu] * lift(cal.entry(alpha, mu + 1, 1))
            PU.append(DiffPoly.from_scalar(ctx, disp, trunc)
                      + corr.get(("unit", alpha), DiffPoly.zero(ctx, trunc)))

    basis_count = {(str(k), a, s): len(v) for (k, a, s), v in bases.items()}
    return Ansatz(
        mode="conditions", ctx=ctx, base=entry, eps_max=full_max,
        report_max=eps_max, parity=parity,
        stages=tuple(stages), unknowns=tuple(names), stage_of=stage_of,
        P0=P0, PU=PU, X=None, unit=unit, qmat=qmat, rvec=rvec, rtilde=rtilde,
        gamma=gammax, basis_count=basis_count, bounds=use_bounds, zmax=zmax,
    )


def _build_rank1_dr(report_max, eps_max, stages, bounds, zmax,
                    extra_params) -> Ansatz:
    base = Context("rank1", ("u",))
    use_bounds = dict(bounds) if bounds is not None else {"u": (0, 3)}
    names: List[str] = []
    stage_of: Dict[str, int] = {}
    bases: Dict[int, List] = {}
    coeffs = coefficient_monomials(base, use_bounds)
    for s in stages:
        items = [(cm, jm) for jm in jet_monomials(base, s + 1) for cm in coeffs]
        bases[s] = items
        for _ in items:
            nm = f"a{s}_{len(names)}"
            names.append(nm)
            stage_of[nm] = s
    if not names:
        raise EmptyBasis("rank-1 flow ansatz is empty")
    ctx = base.extended(tuple(extra_params) + tuple(names), name="rank1+ansatz")
    trunc = eps_max
    X = (DiffPoly.from_scalar(ctx, ctx.symbol("u"), trunc)
         * DiffPoly.even_var(ctx, 1, 1))
    it = iter(names)
    for s in stages:
        for cm, jm in bases[s]:
            nm = next(it)
            X = X + (_jet_poly(ctx, jm, trunc) * DiffPoly.eps(ctx, s)
                     * (transfer_scalar(cm, ctx) * ctx.symbol(nm)))
    basis_count = {("X", 1, s): len(bases[s]) for s in stages}
    return Ansatz(
        mode="dr", ctx=ctx, base=None, eps_max=eps_max, report_max=report_max,
        parity="even" if all(s % 2 == 0 for s in stages) else "all",
        stages=tuple(stages), unknowns=tuple(names), stage_of=stage_of,
        P0=None, PU=None, X=X, unit=None, qmat=None, rvec=None, rtilde=None,
        gamma=None, basis_count=basis_count, bounds=use_bounds, zmax=zmax,
    )


# ---------------------------------------------------------------------------
# condition residuals on a slot set
# ---------------------------------------------------------------------------


class SlotSet:
    """Concrete or unknown-bearing densities entering the conditions."""

    __slots__ = ("ctx", "n", "P0", "PU", "unit", "qmat", "rvec", "rtilde",
                 "gamma", "trunc")

    def __init__(self, ctx, P0, PU, unit, qmat, rvec, rtilde, gamma, trunc):
        self.ctx = ctx
        self.n = ctx.n_components
        self.P0 = [list(row) for row in P0] if P0 is not None else None
        self.PU = list(PU) if PU is not None else None
        self.unit = tuple(unit)
        self.qmat = qmat
        self.rvec = rvec
        self.rtilde = rtilde
        self.gamma = gamma
        self.trunc = trunc


Residual = Tuple[str, DiffPoly]


def _need_level0(S: SlotSet, what: str):
    if S.P0 is None:
        raise MissingIngredient(f"{what} needs the level-zero slots")


def cond_string(S: SlotSet) -> List[Residual]:
    """d/dt-unit of the level pyramid: unit-derivative steps down a level."""
    _need_level0(S, "the string equation")
    out: List[Residual] = []
    for beta in range(1, S.n + 1):
        for alpha in range(1, S.n + 1):
            acc = DiffPoly.zero(S.ctx, S.trunc)
            for mu in range(1, S.n + 1):
                acc = acc + S.P0[beta - 1][alpha - 1].partial_even(mu, 0) * S.unit[mu - 1]
            if alpha == beta:
                acc = acc - DiffPoly.from_scalar(S.ctx, 1, S.trunc)
            out.append((f"string[{alpha},{beta},d=-1]", acc))
    if S.PU is not None:
        for alpha in range(1, S.n + 1):
            acc = DiffPoly.zero(S.ctx, S.trunc)
            for mu in range(1, S.n + 1):
                acc = acc + S.PU[alpha - 1].partial_even(mu, 0) * S.unit[mu - 1]
            for beta in range(1, S.n + 1):
                acc = acc - S.P0[beta - 1][alpha - 1] * S.unit[beta - 1]
            out.append((f"string[{alpha},unit,d=0]", acc))
    return out


def cond_dilaton(S: SlotSet) -> List[Residual]:
    _need_level0(S, "the dilaton equation")
    if S.PU is None:
        raise MissingIngredient("the dilaton equation needs the unit level-one slot")
    out: List[Residual] = []
    for beta in range(1, S.n + 1):
        for alpha in range(1, S.n + 1):
            res = (S.PU[alpha - 1].partial_even(beta, 0)
                   - S.P0[beta - 1][alpha - 1].apply_D())
            out.append((f"dilaton[{alpha},{beta}]", res))
    return out


def default_pairs(S: SlotSet) -> List[Tuple[SlotKey, SlotKey]]:
    pairs: List[Tuple[SlotKey, SlotKey]] = []
    if S.P0 is not None:
        for b1 in range(1, S.n + 1):
            for b2 in range(b1 + 1, S.n + 1):
                pairs.append(((b1, 0), (b2, 0)))
        if S.PU is not None:
            for b in range(1, S.n + 1):
                pairs.append(("unit", (b, 0)))
    return pairs


def _slot_components(S: SlotSet, key: SlotKey) -> List[DiffPoly]:
    if key == "unit":
        if S.PU is None:
            raise MissingIngredient("unit slot not present")
        return S.PU
    _need_level0(S, "commutativity")
    return S.P0[key[0] - 1]


def cond_commutativity(S: SlotSet,
                       pairs: Optional[Sequence[Tuple[SlotKey, SlotKey]]] = None
                       ) -> List[Residual]:
    if pairs is None:
        pairs = default_pairs(S)
    out: List[Residual] = []
    fields: Dict[SlotKey, LocalVectorField] = {}

    def field(key: SlotKey) -> LocalVectorField:
        if key not in fields:
            fields[key] = LocalVectorField(
                S.ctx, [p.dx() for p in _slot_components(S, key)])
        return fields[key]

    for k1, k2 in pairs:
        defect = lie_bracket(field(k1), field(k2), cross_check=False)
        for alpha, comp in enumerate(defect.components, start=1):
            out.append((f"commute[{k1}x{k2},{alpha}]", comp))
    return out


def cond_homogeneity(S: SlotSet) -> List[Residual]:
    """Defects of the conformal grading of the deformed densities.

    Level zero:  E P = P + P q - q P + R1.  Unit-contracted level one
    (q annihilates the unit):  E PU = 2 PU - q PU + P0 (R1 A) + R2 A.
    """
    if S.gamma is None:
        raise MissingIngredient("the homogeneity condition needs gamma")
    ctx = S.ctx
    n = S.n
    out: List[Residual] = []
    rt1 = S.rtilde[0] if S.rtilde else None
    rt2 = S.rtilde[1] if S.rtilde and len(S.rtilde) > 1 else None
    if S.P0 is not None:
        for beta in range(1, n + 1):
            for alpha in range(1, n + 1):
                p = S.P0[beta - 1][alpha - 1]
                res = p.apply_E_gamma(S.qmat, S.rvec, S.gamma) - p
                for mu in range(1, n + 1):
                    res = res - S.P0[mu - 1][alpha - 1] * S.qmat[mu - 1][beta - 1]
                    res = res + S.P0[beta - 1][mu - 1] * S.qmat[alpha - 1][mu - 1]
                if rt1 is not None:
                    res = res - DiffPoly.from_scalar(ctx, rt1[alpha - 1][beta - 1],
                                                     S.trunc)
                out.append((f"homogeneity[{alpha},{beta},d=0]", res))
    if S.PU is not None:
        for alpha in range(1, n + 1):
            p = S.PU[alpha - 1]
            res = p.apply_E_gamma(S.qmat, S.rvec, S.gamma) - p - p
            for mu in range(1, n + 1):
                res = res + S.PU[mu - 1] * S.qmat[alpha - 1][mu - 1]
            if rt1 is not None:
                _need_level0(S, "the level-one homogeneity condition")
                for mu in range(1, n + 1):
                    w = ctx.zero
                    for nu in range(1, n + 1):
                        w = w + rt1[mu - 1][nu - 1] * S.unit[nu - 1]
                    res = res - S.P0[mu - 1][alpha - 1] * w
            if rt2 is not None:
                w = ctx.zero
                for nu in range(1, n + 1):
                    w = w + rt2[alpha - 1][nu - 1] * S.unit[nu - 1]
                res = res - DiffPoly.from_scalar(ctx, w, S.trunc)
            out.append((f"homogeneity[{alpha},unit,d=1]", res))
    return out


_CONDITIONS = {
    "commutativity": cond_commutativity,
    "string": cond_string,
    "dilaton": cond_dilaton,
    "homogeneity": cond_homogeneity,
}


# ---------------------------------------------------------------------------
# constraint systems
# ---------------------------------------------------------------------------


class ConstraintSystem:
    """Either a static list of staged equations or a recursion plan."""

    __slots__ = ("ansatz", "which", "equations", "pairs")

    def __init__(self, ansatz, which, equations, pairs):
        self.ansatz = ansatz
        self.which = tuple(which)
        self.equations = equations  # list of (stage, expr, tag), or None for dr
        self.pairs = pairs

    def to_json(self) -> dict:
        d = {"which": list(self.which), "mode": self.ansatz.mode}
        if self.equations is not None:
            d["equations"] = len(self.equations)
            d["stages"] = sorted({s for s, _e, _t in self.equations})
        return d


def _slotset_of(ansatz: Ansatz) -> SlotSet:
    return SlotSet(ansatz.ctx, ansatz.P0, ansatz.PU, ansatz.unit, ansatz.qmat,
                   ansatz.rvec, ansatz.rtilde, ansatz.gamma, ansatz.eps_max)


def assemble_constraints(ansatz: Ansatz,
                         which: Optional[Sequence[str]] = None,
                         pairs=None) -> ConstraintSystem:
    """Expand the requested conditions into per-stage coefficient equations.

    For the dr mode the recursion obstructions depend on partial
    solutions, so the system stays lazy and is expanded inside
    solve_family.
    """
    if ansatz.mode == "dr":
        which = tuple(which) if which is not None else ("dr_type(a)", "dr_type(b)")
        bad = [w for w in which if w not in ("dr_type(a)", "dr_type(b)")]
        if bad:
            raise MissingIngredient(f"dr ansatz does not support {bad}")
        return ConstraintSystem(ansatz, which, None, None)

    which = tuple(which) if which is not None else (
        "commutativity", "string", "dilaton", "homogeneity")
    bad = [w for w in which if w not in _CONDITIONS]
    if bad:
        raise MissingIngredient(f"unknown conditions {bad}")
    S = _slotset_of(ansatz)
    residuals: List[Residual] = []
    for w in which:
        if w == "commutativity":
            residuals.extend(cond_commutativity(S, pairs))
        else:
            residuals.extend(_CONDITIONS[w](S))
    equations: List[Tuple[int, ScalarExpr, str]] = []
    for tag, res in residuals:
        for key, coeff in res.terms.items():
            stage = key[2]
            if stage == 0:
                if not coeff.is_zero:
                    raise DeformError(
                        f"dispersionless defect in {tag} at {key}: {coeff}")
                continue
            equations.append((stage, coeff, tag))
    return ConstraintSystem(ansatz, which, equations, pairs)


# ---------------------------------------------------------------------------
# solution families and the branching solver
# ---------------------------------------------------------------------------


class SolutionFamily:
    """One branch of the solved deformation space.

    ``substitutions`` sends every unknown to an expression in the free
    ones; ``zero`` lists the imposed vanishing conditions of the
    branch and ``nonzero`` the genericity assumptions it relies on.
    """

    __slots__ = ("system", "substitutions", "free", "zero", "nonzero", "note")

    def __init__(self, system, substitutions, free, zero, nonzero, note=""):
        self.system = system
        self.substitutions = dict(substitutions)
        self.free = tuple(free)
        self.zero = tuple(zero)
        self.nonzero = tuple(nonzero)
        self.note = note

    @property
    def dimension(self) -> int:
        return len(self.free)

    @property
    def is_trivial(self) -> bool:
        return not self.free and all(
            v.is_zero for k, v in self.substitutions.items())

    def resolve(self, p: DiffPoly) -> DiffPoly:
        return p.map_coefficients(lambda c: c.substitute(self.substitutions))

    def densities(self) -> Dict[SlotKey, Tuple[DiffPoly, ...]]:
        a = self.system.ansatz
        return {key: tuple(self.resolve(p) for p in comps)
                for key, comps in a.slot_items()}

    def reported_free(self) -> Tuple[str, ...]:
        """Free constants of the reported stages, probe scaffolding dropped."""
        a = self.system.ansatz
        cut = a.report_max if a.report_max is not None else a.eps_max
        return tuple(f for f in self.free if a.stage_of[f] <= cut)

    def flow(self, trunc: Optional[int] = None) -> DiffPoly:
        a = self.system.ansatz
        if a.mode != "dr":
            raise DeformError("flow() is only defined for the dr ansatz")
        out = self.resolve(a.X)
        cut = trunc if trunc is not None else (
            a.report_max if a.report_max is not None else a.eps_max)
        if cut < a.eps_max:
            out = DiffPoly(out.ctx,
                           {k: c for k, c in out.terms.items() if k[2] <= cut},
                           out.trunc)
        return out

    def verify(self) -> bool:
        """Back-substitute the family into every branch equation."""
        sys = self.system
        if sys.equations is None:
            fams = solve_family(sys, fork=False, _presubs=self.substitutions,
                                _prezero=self.zero)
            return bool(fams)
        for _s, expr, _t in sys.equations:
            if not expr.substitute(self.substitutions).is_zero:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "free": list(self.free),
            "reported_free": list(self.reported_free()),
            "zero": [str(z) for z in self.zero],
            "nonzero": [str(z) for z in self.nonzero],
            "substitutions": {k: str(v) for k, v in self.substitutions.items()
                              if k not in self.free},
            "densities": {
                str(k): [print_diffpoly(p) for p in comps]
                for k, comps in self.densities().items()
            },
            "note": self.note,
        }

    def __repr__(self):
        return (f"SolutionFamily(dim={self.dimension}, zero={len(self.zero)}, "
                f"nonzero={len(self.nonzero)})")


def _factors(expr: ScalarExpr) -> List[ScalarExpr]:
    ctx = expr.ctx
    try:
        _coef, parts = expr.fr.numer.factor_list()
        return [ScalarExpr(ctx, ctx.field(poly)) for poly, _m in parts] or [expr]
    except Exception:
        return [expr]


def _linear_solve_for(expr: ScalarExpr, candidates: Sequence[str]
                      ) -> Optional[Tuple[str, ScalarExpr]]:
    """Solve expr == 0 for the first candidate that appears linearly."""
    ctx = expr.ctx
    present = [c for c in candidates if c in expr.symbols()]
    for name in present:
        a = ctx.derive_param(expr, name)
        if a.is_zero or name in a.symbols():
            continue
        b = expr.substitute({name: 0})
        return name, -b / a
    return None


def _close_subs(subs: Dict[str, ScalarExpr]) -> Dict[str, ScalarExpr]:
    out = dict(subs)
    for _ in range(len(out) + 1):
        changed = False
        for k, v in list(out.items()):
            used = v.symbols() & set(out)
            if used:
                nv = v.substitute({u: out[u] for u in used})
                if not (nv - v).is_zero:
                    out[k] = nv
                    changed = True
        if not changed:
            return out
    raise UnresolvedBranch("cyclic branch substitutions")


def _stage_rows(ctx, expr, cols, col_index, tag, stage):
    """Linear rows of a stage equation, split per coordinate monomial.

    The unknowns are constants, so a coefficient must vanish separately
    for every monomial in the coordinates and generators; otherwise the
    elimination could fabricate point-dependent solutions.
    """
    if expr.is_zero:
        return []
    fr = expr.fr
    names = ctx._names
    colset = set(cols)
    jet_index = set()
    for n in ctx.coordinates:
        jet_index.add(ctx._gen_index[n])
    for g in ctx.generators:
        jet_index.add(ctx._gen_index[g.name])
    for monom in fr.denom.monoms():
        for i, e in enumerate(monom):
            if e and names[i] in colset:
                raise NonlinearAtStage(f"{tag} is nonlinear at eps^{stage}")
    ring = fr.numer.ring
    groups: Dict[tuple, Dict[Optional[str], dict]] = {}
    for monom, coeff in fr.numer.terms():
        sig = tuple(e if i in jet_index else 0 for i, e in enumerate(monom))
        rest = list(monom)
        for i in jet_index:
            rest[i] = 0
        hit = None
        deg = 0
        for i, e in enumerate(rest):
            if e and names[i] in colset:
                hit = names[i]
                deg += e
        if deg > 1:
            raise NonlinearAtStage(f"{tag} is nonlinear at eps^{stage}")
        if hit is not None:
            rest[ctx._gen_index[hit]] = 0
        acc = groups.setdefault(sig, {}).setdefault(hit, {})
        key = tuple(rest)
        acc[key] = acc.get(key, 0) + coeff
    out = []
    for sig in sorted(groups):
        row: Dict[int, ScalarExpr] = {}
        const = ctx.zero
        for hit, acc in groups[sig].items():
            poly = ring.from_dict({m: c for m, c in acc.items() if c})
            if not poly:
                continue
            val = ScalarExpr(ctx, ctx.field(poly))
            if hit is None:
                const = const + val
            else:
                row[col_index[hit]] = val
        if row or not const.is_zero:
            out.append((row, -const))
    return out


class _StageReduction:
    __slots__ = ("consistent", "assumptions", "residuals", "free_cols",
                 "particular", "nullspace")


def _reduce_stage(ctx, rows, rhs, ncols) -> _StageReduction:
    """reduce_system over a context trimmed to the symbols that occur.

    After _stage_rows the entries involve constants only; shrinking the
    coefficient field keeps the elimination gcds off the big jet ring.
    """
    names = set()
    for row in rows:
        for e in row.values():
            names |= e.symbols()
    for b in rhs:
        names |= b.symbols()
    pointish = set(ctx.coordinates) | {g.name for g in ctx.generators}
    if names & pointish:
        raise DeformError("internal: point-dependent entries in a stage system")
    small = Context("stage", ("_w",), tuple(sorted(names)))
    red = reduce_system(
        small,
        [{c: transfer_scalar(e, small) for c, e in row.items()} for row in rows],
        [transfer_scalar(b, small) for b in rhs],
        ncols=ncols,
    )
    out = _StageReduction()
    out.consistent = red.consistent
    out.assumptions = tuple(transfer_scalar(e, ctx) for e in red.assumptions)
    out.residuals = tuple(transfer_scalar(e, ctx) for e in red.residuals)
    out.free_cols = red.free_cols
    out.particular = None
    out.nullspace = None
    if red.consistent:
        sol = red.solve()
        out.particular = [transfer_scalar(e, ctx) for e in sol.particular]
        out.nullspace = [[transfer_scalar(e, ctx) for e in vec]
                         for vec in sol.nullspace]
    return out


def _run_conditions_branch(system, zsubs, zero_conds, collect_forks,
                           prenonzero=()):
    """Staged linear elimination; returns a SolutionFamily or None."""
    ansatz = system.ansatz
    ctx = ansatz.ctx
    pinned: Dict[str, ScalarExpr] = dict(zsubs)
    frees: List[str] = []
    nonzero: List[ScalarExpr] = list(prenonzero)
    unknown_set = set(ansatz.unknowns)
    stage_list = sorted({s for s, _e, _t in system.equations})

    for stage in stage_list:
        cols = [u for u in ansatz.stage_unknowns(stage) if u not in pinned]
        col_index = {u: i for i, u in enumerate(cols)}
        rows, rhs = [], []
        for s, expr, tag in system.equations:
            if s != stage:
                continue
            binds = {k: pinned[k] for k in expr.symbols() & set(pinned)}
            e = expr.substitute(binds) if binds else expr
            for row, b in _stage_rows(ctx, e, cols, col_index, tag, stage):
                rows.append(row)
                rhs.append(b)
        red = _reduce_stage(ctx, rows, rhs, ncols=len(cols))
        for expr in red.assumptions:
            if expr.symbols() & (unknown_set | set(frees)):
                collect_forks(expr, zsubs, zero_conds)
            nonzero.append(expr)
        if not red.consistent:
            for resid in red.residuals:
                for f in _factors(resid):
                    if f.symbols():
                        collect_forks(f, zsubs, zero_conds)
            return None
        for i, u in enumerate(cols):
            if i in red.free_cols:
                frees.append(u)
                continue
            e = red.particular[i]
            for fc, vec in zip(red.free_cols, red.nullspace):
                e = e + ctx.symbol(cols[fc]) * vec[i]
            pinned[u] = e

    substitutions = dict(pinned)
    for f in frees:
        substitutions[f] = ctx.symbol(f)
    return SolutionFamily(system, substitutions, frees, zero_conds, nonzero)


def solve_family(system: ConstraintSystem, fork: bool = True,
                 max_branches: int = 24, _presubs=None, _prezero=None
                 ) -> List[SolutionFamily]:
    """All solution branches of the constraint system.

    The generic branch assumes every symbolic pivot nonzero; when a
    pivot or a consistency residual involves unknowns or earlier free
    constants, a sibling branch with that factor set to zero is solved
    as well.  Families are sorted with the generic branch first.
    """
    ansatz = system.ansatz
    runner = _run_dr_branch if ansatz.mode == "dr" else _run_conditions_branch
    seen = set()
    out: List[SolutionFamily] = []
    work = [(dict(_presubs) if _presubs else {},
             tuple(_prezero) if _prezero else (), ())]
    # pin the deepest slots first so earlier coefficients stay free
    unknowns = sorted(
        ansatz.unknowns,
        key=lambda u: (-ansatz.stage_of[u], -int(u.rsplit("_", 1)[1])))

    while work:
        zsubs, zconds, znonzero = work.pop(0)
        key = frozenset((k, str(v)) for k, v in zsubs.items())
        if key in seen:
            continue
        seen.add(key)
        if len(seen) > max_branches:
            break
        forks: List[Tuple[Dict[str, ScalarExpr], Tuple, Tuple]] = []

        def collect(expr, cur_subs, cur_conds):
            if not fork:
                return
            hit = _linear_solve_for(expr, unknowns)
            if hit is None:
                return
            name, val = hit
            ns = dict(cur_subs)
            ns[name] = val
            try:
                closed = _close_subs(ns)
            except (DenominatorVanishes, UnresolvedBranch):
                # the pin contradicts a division made by an earlier fork;
                # that locus is reached through other factor branches
                return
            nz = list(znonzero)
            den = val.fr.denom
            if not den.is_ground:
                vctx = val.ctx
                try:
                    _c, parts = den.factor_list()
                    fs = [ScalarExpr(vctx, vctx.field(p)) for p, _m in parts]
                except Exception:
                    fs = [ScalarExpr(vctx, vctx.field(den))]
                for f in fs:
                    if f.symbols() and all(str(f) != str(g) for g in nz):
                        nz.append(f)
            forks.append((closed, cur_conds + (expr,), tuple(nz)))

        fam = runner(system, zsubs, zconds, collect, znonzero)
        if fam is not None:
            out.append(fam)
        work.extend(forks)

    out.sort(key=lambda f: (len(f.zero), -f.dimension))
    return out


# ---------------------------------------------------------------------------
# the rank-1 double ramification recursion
# ---------------------------------------------------------------------------


def _slot_equations(p: DiffPoly, stage: int) -> List[ScalarExpr]:
    """Coefficients at eps^stage; lower slots must already vanish."""
    out = []
    for key, c in p.terms.items():
        if key[2] < stage and not c.is_zero:
            raise DeformError("a lower eps slot failed to clear in the recursion")
        if key[2] == stage:
            out.append(c)
    return out


def _d_minus_one_inverse(p: DiffPoly) -> Tuple[DiffPoly, List[ScalarExpr]]:
    """(D-1)^{-1} p, plus the obstructing weight-one coefficients."""
    ctx = p.ctx
    out = DiffPoly.zero(ctx, p.trunc)
    obstruction: List[ScalarExpr] = []
    for w, part in p.d_eigen_split():
        shift = w - ctx.one
        if shift.is_zero:
            obstruction.extend(part.terms.values())
            continue
        out = out + part.map_coefficients(lambda c, s=shift: c / s)
    return out, obstruction


def _run_dr_branch(system, zsubs, zero_conds, collect_forks, prenonzero=()):
    ansatz = system.ansatz
    ctx = ansatz.ctx
    want_a = "dr_type(a)" in system.which
    want_b = "dr_type(b)" in system.which
    pinned: Dict[str, ScalarExpr] = dict(zsubs)
    frees: List[str] = []
    nonzero: List[ScalarExpr] = list(prenonzero)
    unknown_set = set(ansatz.unknowns)
    u0 = DiffPoly.from_scalar(ctx, ctx.symbol("u"))
    th1 = DiffPoly.odd_var(ctx, 1, 1)

    for stage in ansatz.stages:
        cols = [u for u in ansatz.stage_unknowns(stage) if u not in pinned]
        col_index = {u: i for i, u in enumerate(cols)}
        lower = dict(pinned)
        # work modulo eps^(stage+1): higher stages stay unconstrained
        X = ansatz.X.map_coefficients(
            lambda c: c.substitute({k: lower[k] for k in c.symbols() & set(lower)}))
        X = DiffPoly(ctx, {k: c for k, c in X.terms.items() if k[2] <= stage},
                     stage)
        xbar = X * DiffPoly.odd_var(ctx, 1, 0)

        rows: List[Dict[int, ScalarExpr]] = []
        rhs: List[ScalarExpr] = []
        cur_map: Dict[str, ScalarExpr] = {u: ctx.symbol(u) for u in cols}
        cur_free: List[str] = list(cols)

        def resolve(p: DiffPoly) -> DiffPoly:
            return p.map_coefficients(
                lambda c: c.substitute({k: cur_map[k]
                                        for k in c.symbols() & set(cur_map)}))

        def add_equations(exprs) -> bool:
            """Extend the cumulative stage system; False on inconsistency."""
            nonlocal cur_map, cur_free
            added = False
            for e in exprs:
                for row, b in _stage_rows(ctx, e, cols, col_index,
                                          "recursion obstruction", stage):
                    rows.append(row)
                    rhs.append(b)
                    added = True
            if not added:
                return True
            red = _reduce_stage(ctx, rows, rhs, ncols=len(cols))
            for expr in red.assumptions:
                if expr.symbols() & (unknown_set | set(frees)):
                    collect_forks(expr, zsubs, zero_conds)
                nonzero.append(expr)
            if not red.consistent:
                for resid in red.residuals:
                    for f in _factors(resid):
                        if f.symbols():
                            collect_forks(f, zsubs, zero_conds)
                return False
            cur_map = {}
            for i, u in enumerate(cols):
                e = red.particular[i]
                for fc, vec in zip(red.free_cols, red.nullspace):
                    e = e + ctx.symbol(cols[fc]) * vec[i]
                cur_map[u] = e
            cur_free = [cols[fc] for fc in red.free_cols]
            return True

        ok = True
        if want_b:
            w = resolve(xbar).var_der_even(1) + u0 * th1
            _h, res = w.dx_preimage()
            ok = add_equations(_slot_equations(res, stage))
            if ok:
                h, _res = resolve(w).dx_preimage()
                _h2, res2 = h.dx_preimage()
                ok = add_equations(_slot_equations(res2, stage))
        if ok and want_a:
            y = DiffPoly(ctx, (-th1).terms, stage)
            for _d in range(ansatz.zmax):
                w = schouten_density(resolve(xbar), y)
                _h, res = w.dx_preimage()
                if not add_equations(_slot_equations(res, stage)):
                    ok = False
                    break
                h, _res = resolve(w).dx_preimage()
                _ynext, obstruction = _d_minus_one_inverse(h)
                if obstruction and not add_equations(obstruction):
                    ok = False
                    break
                y, _obs = _d_minus_one_inverse(resolve(h))
        if not ok:
            return None
        for u in cols:
            if u in cur_free:
                frees.append(u)
            else:
                pinned[u] = cur_map[u]

    substitutions = dict(pinned)
    for f in frees:
        substitutions[f] = ctx.symbol(f)
    return SolutionFamily(system, substitutions, frees, zero_conds, nonzero)


# ---------------------------------------------------------------------------
# verification entry points
# ---------------------------------------------------------------------------


class ConditionReport:
    __slots__ = ("name", "passed", "defects")

    def __init__(self, name, passed, defects):
        self.name = name
        self.passed = passed
        self.defects = tuple(defects)

    def to_json(self):
        return {
            "condition": self.name,
            "pass": self.passed,
            "defects": [{"tag": t, "density": print_diffpoly(p)}
                        for t, p in self.defects],
        }


class FixtureReport:
    __slots__ = ("case", "conditions", "trunc")

    def __init__(self, case, conditions, trunc):
        self.case = case
        self.conditions = tuple(conditions)
        self.trunc = trunc

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def to_json(self):
        return {
            "case": self.case,
            "modulo": f"eps^{self.trunc + 1}",
            "pass": self.passed,
            "conditions": [c.to_json() for c in self.conditions],
        }

    def __repr__(self):
        flags = ", ".join(f"{c.name}={'ok' if c.passed else 'FAIL'}"
                          for c in self.conditions)
        return f"FixtureReport({self.case}: {flags})"


def _fixture_slotset(fx: DeformationFixture, trunc: int) -> SlotSet:
    entry = fx.entry()
    ctx = fx.context()
    n = entry.ctx.n_components
    cal = compute_calibration(entry.potential, entry.euler, dmax=1,
                              rtilde=entry.rtilde)

    def lift(expr):
        return transfer_scalar(expr, ctx)

    dens = fx.densities(ctx)
    P0 = []
    for beta in range(1, n + 1):
        if (beta, 0) in dens:
            row = [DiffPoly(ctx, p.terms, trunc) for p in dens[(beta, 0)]]
        else:
            row = [DiffPoly.from_scalar(ctx, lift(cal.entry(a, beta, 0)), trunc)
                   for a in range(1, n + 1)]
        P0.append(row)
    PU = [DiffPoly(ctx, p.terms, trunc) for p in dens["unit"]]
    unit = tuple(lift(a) for a in entry.potential.unit)
    qmat = tuple(tuple(lift(entry.euler.q[i][j]) for j in range(n))
                 for i in range(n))
    rvec = tuple(lift(entry.euler.r[i]) for i in range(n))
    rtilde = tuple(tuple(tuple(lift(e) for e in row) for row in mat)
                   for mat in entry.rtilde)
    return SlotSet(ctx, P0, PU, unit, qmat, rvec, rtilde, fx.gamma(ctx), trunc)


def verify_fixture(case: str,
                   which: Optional[Sequence[str]] = None,
                   trunc: int = 3) -> FixtureReport:
    """Check a recorded deformation family modulo eps^(trunc+1)."""
    fx = fixture(case)
    which = tuple(which) if which is not None else (
        "commutativity", "string", "dilaton", "homogeneity")
    S = _fixture_slotset(fx, trunc)
    reports = []
    for w in which:
        if w not in _CONDITIONS:
            raise MissingIngredient(f"unknown condition {w!r}")
        residuals = _CONDITIONS[w](S)
        defects = [(t, p) for t, p in residuals if not p.is_zero]
        reports.append(ConditionReport(w, not defects, defects))
    return FixtureReport(case, reports, trunc)


def match_family(family: SolutionFamily, case: str
                 ) -> Optional[Dict[str, ScalarExpr]]:
    """Pin the family's free constants so it equals a recorded fixture.

    Every deformed slot of the family is compared with the fixture's
    slot set; the returned map sends each free constant to an
    expression in the fixture constants (None when no assignment
    works).  Leftover freedom stays symbolic in the values.
    """
    fx = fixture(case)
    a = family.system.ansatz
    if a.mode != "conditions":
        raise DeformError("fixture matching needs a conditions-mode family")
    if a.base is None or a.base.id != fx.catalog:
        built = a.base.id if a.base is not None else None
        raise DeformError(
            f"family was built over {built!r}, fixture {case} is over "
            f"{fx.catalog!r}")
    cut = a.report_max if a.report_max is not None else a.eps_max
    S = _fixture_slotset(fx, cut)
    merged = a.base.ctx.extended(
        tuple(fx.constants) + tuple(family.free),
        name=f"{a.base.ctx.name}+match")
    dens = family.densities()
    cols = list(family.free)
    col_index = {u: i for i, u in enumerate(cols)}

    def cap(p: DiffPoly) -> DiffPoly:
        return DiffPoly(p.ctx,
                        {k: c for k, c in p.terms.items() if k[2] <= cut},
                        cut)

    pairs: List[Tuple[DiffPoly, DiffPoly]] = []
    for beta in range(1, S.n + 1):
        if (beta, 0) in dens:
            for al in range(S.n):
                pairs.append((dens[(beta, 0)][al], S.P0[beta - 1][al]))
    if "unit" in dens:
        for al in range(S.n):
            pairs.append((dens["unit"][al], S.PU[al]))

    rows: List[Dict[int, ScalarExpr]] = []
    rhs: List[ScalarExpr] = []
    for mine, theirs in pairs:
        d = (transfer_diffpoly(cap(mine), merged)
             - transfer_diffpoly(cap(theirs), merged))
        for _key, coeff in d.terms.items():
            for row, b in _stage_rows(merged, coeff, cols, col_index,
                                      "fixture match", _key[2]):
                rows.append(row)
                rhs.append(b)
    red = _reduce_stage(merged, rows, rhs, ncols=len(cols))
    if not red.consistent:
        return None
    out: Dict[str, ScalarExpr] = {}
    for i, u in enumerate(cols):
        e = red.particular[i]
        for fc, vec in zip(red.free_cols, red.nullspace):
            e = e + merged.symbol(cols[fc]) * vec[i]
        out[u] = e
    return out


class BurgersReport:
    __slots__ = ("zmax", "epsmax", "initial_ok", "level_zero_ok",
                 "recursion_ok", "gradient_ok", "defects")

    def __init__(self, **kw):
        for k in self.__slots__:
            setattr(self, k, kw.get(k))

    @property
    def passed(self):
        return (self.initial_ok and self.level_zero_ok and self.recursion_ok
                and self.gradient_ok)

    def to_json(self):
        return {
            "zmax": self.zmax,
            "epsmax": self.epsmax,
            "initial": self.initial_ok,
            "level_zero": self.level_zero_ok,
            "recursion": self.recursion_ok,
            "gradient": self.gradient_ok,
            "pass": self.passed,
            "defects": self.defects,
        }

    def __repr__(self):
        return (f"BurgersReport(initial={self.initial_ok}, "
                f"level_zero={self.level_zero_ok}, "
                f"recursion={self.recursion_ok}, gradient={self.gradient_ok})")


def verify_burgers(zmax: int = 3, epsmax: int = 3) -> BurgersReport:
    """Exact recursion solution for the viscous rank-1 flow.

    The operator series  -exp(z eps dx) o exp(z (u - 2 eps dx)) o dx,
    normal ordered modulo z^(zmax+1) and eps^(epsmax+1), provides the
    densities; the report checks the initial density, the level-zero
    density, every recursion slot  dx (D-1) Y_d = [Xbar, Y_{d-1}], and
    the gradient condition on Xbar itself.
    """
    ctx = Context("viscous", ("u",))
    trunc = epsmax
    u = DiffPoly.from_scalar(ctx, ctx.symbol("u"), trunc)
    eps = DiffPoly.eps(ctx)
    X = u * DiffPoly.even_var(ctx, 1, 1) + eps * DiffPoly.even_var(ctx, 1, 2)
    xbar = X * DiffPoly.odd_var(ctx, 1, 0)

    dxop = DiffOperator.dx_power(ctx, 1, trunc)
    zero = DiffOperator.zero(ctx)
    a = [zero, dxop.scale(eps)] + [zero] * (zmax - 1)
    b = [zero, DiffOperator.from_poly(u) - dxop.scale(eps * 2)] + [zero] * (zmax - 1)
    series = series_mul(series_exp(a, zmax, trunc), series_exp(b, zmax, trunc), zmax)
    series = series_mul(series, [dxop] + [zero] * zmax, zmax)
    Y = [(-op).density(1) for op in series]  # slot d holds Y_{d-1}

    defects = []
    th1 = DiffPoly.odd_var(ctx, 1, 1)
    want0 = -(u * th1) + eps * DiffPoly.odd_var(ctx, 1, 2)
    initial_ok = (Y[0] + th1).is_zero
    if not initial_ok:
        defects.append({"slot": "initial", "density": print_diffpoly(Y[0])})
    level_zero_ok = (Y[1] - want0).is_zero
    if not level_zero_ok:
        defects.append({"slot": "level0", "density": print_diffpoly(Y[1])})

    recursion_ok = True
    for d in range(1, zmax + 1):
        lhs = (Y[d].apply_D() - Y[d]).dx()
        rhs = schouten_density(xbar, Y[d - 1])
        if not (lhs - rhs).is_zero:
            recursion_ok = False
            defects.append({"slot": f"recursion z^{d}",
                            "density": print_diffpoly(lhs - rhs)})

    grad = xbar.var_der_even(1) - want0
    gradient_ok = grad.is_zero
    if not gradient_ok:
        defects.append({"slot": "gradient", "density": print_diffpoly(grad)})

    return BurgersReport(zmax=zmax, epsmax=epsmax, initial_ok=initial_ok,
                         level_zero_ok=level_zero_ok, recursion_ok=recursion_ok,
                         gradient_ok=gradient_ok, defects=defects)


class RecursionReport:
    __slots__ = ("case", "d_range", "defects")

    def __init__(self, case, d_range, defects):
        self.case = case
        self.d_range = tuple(d_range)
        self.defects = dict(defects)

    @property
    def passed(self):
        return not self.defects

    def to_json(self):
        return {
            "case": self.case,
            "levels": list(self.d_range),
            "pass": self.passed,
            "defects": [{"slot": list(k), "density": print_diffpoly(p)}
                        for k, p in sorted(self.defects.items())],
        }

    def __repr__(self):
        return f"RecursionReport({self.case}, pass={self.passed})"


def check_genus0_recursion(source, d_range: Sequence[int] = (-1, 0, 1),
                           gamma_index: int = 0) -> RecursionReport:
    """Dispersionless one-point recursion against the calibration.

    The first-order operator R built from the unit-contracted
    level-one densities must raise the level of every calibration
    column:

      R^a_m P^m_{b,d} = sum_m [(d + (3-gamma)/2) delta^m_b + q^m_b]
                        dx(P^a_{m,d+1})
                        + dx(P^a_{m,d}) (R1)^m_b,         P_{b,-1} = Id

    with  R^a_b = E_gamma(d_b g^a) dx + sum_m [(1-gamma)/2 delta^m_b
    + q^m_b] dx(d_m g^a)  and  g^a  the vector potential (the unique
    density with second derivatives c^a_bg, up to irrelevant affine
    terms).  Defects are reported per (a, b, d) slot.
    """
    entry = _entry_of(source)
    if entry.euler is None:
        raise MissingIngredient("the recursion needs conformal data")
    ctx = entry.ctx
    n = ctx.n_components
    dmax = max(d_range) + 1
    cal = compute_calibration(entry.potential, entry.euler, dmax=dmax,
                              rtilde=entry.rtilde)
    gamma = entry.euler.gamma[gamma_index]
    q = [[ctx.scalar(entry.euler.q[i][j]) for j in range(n)] for i in range(n)]
    half = ctx.rational(Fraction(1, 2))
    rt1 = (entry.rtilde[0] if entry.rtilde
           else [[ctx.zero] * n for _ in range(n)])
    rt1 = [[ctx.scalar(rt1[i][j]) for j in range(n)] for i in range(n)]

    g0 = list(entry.potential.potentials)

    def scalar_poly(expr) -> DiffPoly:
        return DiffPoly.from_scalar(ctx, expr)

    def delta(i, j) -> ScalarExpr:
        return ctx.one if i == j else ctx.zero

    dxop = DiffOperator.dx_power(ctx, 1, None)
    R: List[List[DiffOperator]] = []
    for a in range(n):
        row = []
        for b in range(n):
            lead = scalar_poly(ctx.derive(g0[a], ctx.coordinates[b]))
            lead = lead.apply_E_gamma(entry.euler.q, entry.euler.r, gamma)
            mid = ctx.zero
            for mu in range(n):
                wmu = half * (ctx.one - gamma) * delta(mu, b) + q[mu][b]
                mid = mid + wmu * ctx.derive(g0[a], ctx.coordinates[mu])
            row.append(DiffOperator.from_poly(lead) * dxop
                       + DiffOperator.from_poly(scalar_poly(mid).dx()))
        R.append(row)

    def cal_or_id(alpha, beta, d) -> DiffPoly:
        if d >= 0:
            return scalar_poly(cal.entry(alpha, beta, d))
        return scalar_poly(delta(alpha, beta))

    defects = {}
    for d in d_range:
        for b in range(1, n + 1):
            for a in range(1, n + 1):
                lhs = DiffPoly.zero(ctx)
                for mu in range(1, n + 1):
                    lhs = lhs + R[a - 1][mu - 1].apply(cal_or_id(mu, b, d))
                rhs = DiffPoly.zero(ctx)
                for mu in range(1, n + 1):
                    w = ((ctx.rational(d) + half * (ctx.rational(3) - gamma))
                         * delta(mu, b) + q[mu - 1][b - 1])
                    rhs = rhs + scalar_poly(cal.entry(a, mu, d + 1)).dx() * w
                    rhs = rhs + cal_or_id(a, mu, d).dx() * rt1[mu - 1][b - 1]
                diff = lhs - rhs
                if not diff.is_zero:
                    defects[(a, b, d)] = diff
    return RecursionReport(entry.id, d_range, defects)
