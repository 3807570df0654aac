"""Flat F-manifold data in flat coordinates.

A flat F-manifold on an open subset of C^N is encoded by a vector
potential: N functions F^a whose second derivatives are the structure
constants of the tangent multiplications, together with the constant
coefficients A^a of the unit field.  The axioms are the unit condition

    A^mu d^2 F^a / dt^mu dt^b = delta^a_b

and associativity in the oriented form

    (d^2 F^a / dt^b dt^mu)(d^2 F^mu / dt^g dt^d) symmetric in b <-> g.

Homogeneity is governed by an Euler field E^a = (delta - q)^a_b t^b + r^a
with constant q and r: E F^a must equal (2 delta - q)^a_b F^b up to an
affine function of the coordinates, and [e, E] = e.

The module ships the rank-2 semisimple homogeneous catalog in flat
coordinates (u, v), organised in three families selected by the rotation
coefficient data, each with its vector of conformal dimensions and the
normalization matrices of its homogeneous calibration.  Exotic powers
such as u^m, e^{-v} or ln u enter as field generators with declared
derivative tables, so all axiom checks stay exact.
"""

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .scalar import Context, Generator, ScalarError, ScalarExpr, ScalarLike

__all__ = [
    "FManifoldError",
    "CatalogError",
    "VectorPotential",
    "EulerData",
    "AxiomReport",
    "EulerReport",
    "CatalogEntry",
    "structure_constants",
    "check_wdvv",
    "check_euler_homogeneity",
    "catalog_2d",
    "catalog_entry",
    "CATALOG_IDS",
]


class FManifoldError(ScalarError):
    pass


class CatalogError(FManifoldError):
    """Unknown or excluded catalog id."""


class VectorPotential:
    """N potentials F^a and the unit coefficients A^a."""

    __slots__ = ("ctx", "potentials", "unit")

    def __init__(self, ctx: Context, potentials: Sequence[ScalarLike], unit: Sequence[ScalarLike]):
        n = ctx.n_components
        if len(potentials) != n or len(unit) != n:
            raise FManifoldError("one potential and one unit coefficient per coordinate")
        self.ctx = ctx
        self.potentials = tuple(ctx.scalar(p) for p in potentials)
        self.unit = tuple(ctx.scalar(a) for a in unit)

    def __repr__(self):
        return f"VectorPotential({list(map(str, self.potentials))}, unit={list(map(str, self.unit))})"


def structure_constants(v: VectorPotential) -> List[List[List[ScalarExpr]]]:
    """C^a_bg = d^2 F^a / dt^b dt^g, indexed [a-1][b-1][g-1]."""
    ctx = v.ctx
    coords = ctx.coordinates
    out = []
    for f in v.potentials:
        first = [f.derive(b) for b in coords]
        out.append([[fb.derive(g) for g in coords] for fb in first])
    return out


class AxiomReport:
    """Residuals of the unit and associativity axioms; empty means pass."""

    __slots__ = ("unit", "associativity")

    def __init__(self, unit: Dict[Tuple[int, int], ScalarExpr],
                 associativity: Dict[Tuple[int, int, int, int], ScalarExpr]):
        self.unit = dict(unit)
        self.associativity = dict(associativity)

    @property
    def passed(self) -> bool:
        return not self.unit and not self.associativity

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "unit": [{"slot": list(k), "residual": str(r)} for k, r in sorted(self.unit.items())],
            "associativity": [
                {"slot": list(k), "residual": str(r)} for k, r in sorted(self.associativity.items())
            ],
        }

    def __repr__(self):
        return f"AxiomReport(passed={self.passed})"


def check_wdvv(v: VectorPotential) -> AxiomReport:
    """Unit axiom and oriented associativity residuals for a potential."""
    ctx = v.ctx
    n = ctx.n_components
    c = structure_constants(v)
    unit: Dict[Tuple[int, int], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            res = -ctx.one if a == b else ctx.zero
            for mu in range(n):
                res = res + v.unit[mu] * c[a][mu][b]
            if not res.is_zero:
                unit[(a + 1, b + 1)] = res
    assoc: Dict[Tuple[int, int, int, int], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            for g in range(b + 1, n):
                for d in range(n):
                    res = ctx.zero
                    for mu in range(n):
                        res = res + c[a][b][mu] * c[mu][g][d] - c[a][g][mu] * c[mu][b][d]
                    if not res.is_zero:
                        assoc[(a + 1, b + 1, g + 1, d + 1)] = res
    return AxiomReport(unit, assoc)


class EulerData:
    """Constant matrix q, vector r, and the conformal dimension vector.

    The Euler field is E^a = (delta - q)^a_b t^b + r^a.
    """

    __slots__ = ("ctx", "q", "r", "gamma")

    def __init__(self, ctx: Context, q: Sequence[Sequence[ScalarLike]],
                 r: Sequence[ScalarLike], gamma: Sequence[ScalarLike]):
        n = ctx.n_components
        if len(q) != n or any(len(row) != n for row in q):
            raise FManifoldError("q must be N x N")
        if len(r) != n or len(gamma) != n:
            raise FManifoldError("r and gamma must have one entry per coordinate")
        self.ctx = ctx
        self.q = tuple(tuple(ctx.scalar(e) for e in row) for row in q)
        self.r = tuple(ctx.scalar(e) for e in r)
        self.gamma = tuple(ctx.scalar(e) for e in gamma)

    def components(self) -> List[ScalarExpr]:
        """E^a as scalar expressions in the flat coordinates."""
        ctx = self.ctx
        out = []
        for a in range(ctx.n_components):
            e = self.r[a]
            for b, coord in enumerate(ctx.coordinates):
                w = (ctx.one if a == b else ctx.zero) - self.q[a][b]
                if not w.is_zero:
                    e = e + w * ctx.symbol(coord)
            out.append(e)
        return out

    def __repr__(self):
        q = [[str(e) for e in row] for row in self.q]
        return f"EulerData(q={q}, r={[str(e) for e in self.r]}, gamma={[str(e) for e in self.gamma]})"


class EulerReport:
    """Residuals of the homogeneity condition; empty means pass."""

    __slots__ = ("affine", "unit_bracket")

    def __init__(self, affine: Dict[Tuple[int, int, int], ScalarExpr],
                 unit_bracket: Dict[int, ScalarExpr]):
        self.affine = dict(affine)
        self.unit_bracket = dict(unit_bracket)

    @property
    def passed(self) -> bool:
        return not self.affine and not self.unit_bracket

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "affine": [{"slot": list(k), "residual": str(r)} for k, r in sorted(self.affine.items())],
            "unit_bracket": [
                {"component": k, "residual": str(r)} for k, r in sorted(self.unit_bracket.items())
            ],
        }

    def __repr__(self):
        return f"EulerReport(passed={self.passed})"


def check_euler_homogeneity(v: VectorPotential, e: EulerData) -> EulerReport:
    """E F^a - (2 delta - q)^a_b F^b affine in t, and [e, E] = e.

    Affinity is decided by vanishing of all second coordinate derivatives
    of the residual; the bracket condition reduces to q A = 0 for constant
    unit coefficients.
    """
    ctx = v.ctx
    n = ctx.n_components
    coords = ctx.coordinates
    comps = e.components()
    affine: Dict[Tuple[int, int, int], ScalarExpr] = {}
    for a in range(n):
        res = ctx.zero
        for mu in range(n):
            res = res + comps[mu] * v.potentials[a].derive(coords[mu])
        for b in range(n):
            w = (ctx.rational(2) if a == b else ctx.zero) - e.q[a][b]
            res = res - w * v.potentials[b]
        for b in range(n):
            rb = res.derive(coords[b])
            for g in range(b, n):
                second = rb.derive(coords[g])
                if not second.is_zero:
                    affine[(a + 1, b + 1, g + 1)] = second
    unit_bracket: Dict[int, ScalarExpr] = {}
    for a in range(n):
        res = ctx.zero
        for mu in range(n):
            res = res + e.q[a][mu] * v.unit[mu]
        if not res.is_zero:
            unit_bracket[a + 1] = res
    return EulerReport(affine, unit_bracket)


class CatalogEntry:
    """One family of the rank-2 homogeneous catalog."""

    __slots__ = ("id", "ctx", "potential", "euler", "rtilde", "note")

    def __init__(self, id: str, ctx: Context, potential: VectorPotential,
                 euler: EulerData, rtilde: Sequence[Sequence[Sequence[ScalarLike]]] = (),
                 note: str = ""):
        self.id = id
        self.ctx = ctx
        self.potential = potential
        self.euler = euler
        self.rtilde = tuple(
            tuple(tuple(ctx.scalar(e) for e in row) for row in mat) for mat in rtilde
        )
        self.note = note

    def __repr__(self):
        return f"CatalogEntry({self.id!r})"


def _value_token(token: str, letter: str) -> Tuple[str, Optional[Fraction]]:
    """A catalog slot is either the symbolic letter or an exact rational."""
    token = token.strip()
    if token == letter:
        return letter, None
    try:
        val = Fraction(token)
    except (ValueError, ZeroDivisionError) as exc:
        raise CatalogError(f"bad value {token!r} for {letter}") from exc
    return _frac_text(val), val


def _frac_text(v: Fraction) -> str:
    return f"({v.numerator}/{v.denominator})" if v.denominator != 1 else f"({v.numerator})"


def _entry_case_i(mtok: str, ctok: str) -> CatalogEntry:
    m, mval = _value_token(mtok, "m")
    c, cval = _value_token(ctok, "c")
    if mval is not None:
        if mval in (0, 1):
            raise CatalogError("family I needs m outside {0, 1}")
        if mval == Fraction(-1):
            return _entry_case_i_log(ctok)
        if mval == Fraction(1, 2):
            return _entry_case_i_half(ctok)
        if mval.numerator in (1, -1):
            raise CatalogError("family I excludes 1/m integer (calibration not unique)")
    params = [p for p, val in (("m", mval), ("c", cval)) if val is None]
    gens = [
        Generator.make("P", {"u": f"{m}*P/u"}, note=f"u^{m}"),
        Generator.make("G", {"u": f"({c}*({m}-1)/2)*G/u"}, note=f"u^({c}*({m}-1)/2)"),
    ]
    ctx = Context(f"I:{mtok},{ctok}", ("u", "v"), params, gens)
    pot = VectorPotential(
        ctx,
        [
            f"u*v - 2*{c}*u*P/({m}+1)",
            f"v^2/2 + (4-{c}^2)*{m}*P^2/(2*(2*{m}-1))",
        ],
        ["0", "1"],
    )
    euler = EulerData(
        ctx,
        [[f"({m}-1)/{m}", "0"], ["0", "0"]],
        ["0", "0"],
        [f"(2-{c})*({m}-1)/(2*{m})", f"(2+{c})*({m}-1)/(2*{m})"],
    )
    return CatalogEntry(f"I:{mtok},{ctok}", ctx, pot, euler, (),
                        note="power-law family; generators P = u^m, G = u^(c(m-1)/2)")


def _entry_case_i_log(ctok: str) -> CatalogEntry:
    c, _ = _value_token(ctok, "c")
    params = ["c"] if c == "c" else []
    gens = [
        Generator.make("L", {"u": "1/u"}, note="ln u"),
        Generator.make("G", {"u": f"-{c}*G/u"}, note=f"u^(-{c})"),
    ]
    ctx = Context(f"I:-1,{ctok}", ("u", "v"), params, gens)
    pot = VectorPotential(
        ctx,
        [f"u*v - 2*{c}*L", f"v^2/2 + (4-{c}^2)/(6*u^2)"],
        ["0", "1"],
    )
    euler = EulerData(
        ctx,
        [["2", "0"], ["0", "0"]],
        ["0", "0"],
        [f"2-{c}", f"2+{c}"],
    )
    return CatalogEntry(f"I:-1,{ctok}", ctx, pot, euler, (),
                        note="m = -1 variant with logarithmic potential")


def _entry_case_i_half(ctok: str) -> CatalogEntry:
    c, _ = _value_token(ctok, "c")
    params = ["c"] if c == "c" else []
    gens = [
        Generator.make("S", {"u": "S/(2*u)"}, note="u^(1/2)"),
        Generator.make("L", {"u": "1/u"}, note="ln u"),
        Generator.make("G", {"u": f"-({c}/4)*G/u"}, note=f"u^(-{c}/4)"),
    ]
    ctx = Context(f"I:1/2,{ctok}", ("u", "v"), params, gens)
    pot = VectorPotential(
        ctx,
        [f"u*v - 4*{c}*u*S/3", f"v^2/2 + (4-{c}^2)/4*u*L"],
        ["0", "1"],
    )
    euler = EulerData(
        ctx,
        [["-1", "0"], ["0", "0"]],
        ["0", "0"],
        [f"-(2-{c})/2", f"-(2+{c})/2"],
    )
    return CatalogEntry(f"I:1/2,{ctok}", ctx, pot, euler, (),
                        note="m = 1/2 variant with u log u potential")


def _entry_case_ii(ctok: str) -> CatalogEntry:
    c, cval = _value_token(ctok, "c")
    if cval == 0:
        return _entry_case_ii_zero()
    params = ["c"] if cval is None else []
    gens = [
        Generator.make("Ev", {"v": "-Ev"}, note="e^(-v)"),
        Generator.make("Hc", {"v": f"{c}*Hc"}, note=f"e^({c}*v)"),
    ]
    ctx = Context(f"II:{ctok}", ("u", "v"), params, gens)
    pot = VectorPotential(
        ctx,
        [f"{c}/2*u^2 + (1-{c})/4*Ev^2", f"{c}*u*v + (2*{c}-1)*Ev"],
        [f"1/{c}", "0"],
    )
    euler = EulerData(
        ctx,
        [["0", "0"], ["0", "1"]],
        ["0", "-1"],
        [f"2-2*{c}", f"2*{c}"],
    )
    rt1 = [["0", "0"], [f"-{c}", "0"]]
    return CatalogEntry(f"II:{ctok}", ctx, pot, euler, (rt1,),
                        note="exponential family; generators Ev = e^(-v), Hc = e^(cv)")


def _entry_case_ii_zero() -> CatalogEntry:
    # The degenerate member is isomorphic to the c = 1 member with the
    # exponential generator flipped in sign (a shift of v by i pi), which
    # keeps all coefficients in the rational field.
    gens = [Generator.make("Ev", {"v": "-Ev"}, note="e^(-v)")]
    ctx = Context("II:0", ("u", "v"), [], gens)
    pot = VectorPotential(ctx, ["u^2/2", "u*v - Ev"], ["1", "0"])
    euler = EulerData(ctx, [["0", "0"], ["0", "1"]], ["0", "-1"], ["0", "2"])
    rt1 = [["0", "0"], ["-1", "0"]]
    return CatalogEntry("II:0", ctx, pot, euler, (rt1,),
                        note="sign-flipped image of the c = 1 member")


def _entry_case_iii(ctok: str) -> CatalogEntry:
    c, cval = _value_token(ctok, "c")
    if cval == 0:
        return _entry_case_iii_zero()
    params = ["c"] if cval is None else []
    gens = [
        Generator.make("L", {"u": "1/u"}, note="ln u"),
        Generator.make("K", {"u": f"2*{c}*K/u"}, note=f"u^(2*{c})"),
    ]
    ctx = Context(f"III:{ctok}", ("u", "v"), params, gens)
    pot = VectorPotential(
        ctx,
        [
            f"{c}*u*v + u^2*(({c}+1)/2 - {c}*L)",
            f"{c}/2*v^2 + u^2*(-(3*{c}+1)/4 + ({c}+1)/2*L - {c}/2*L^2)",
        ],
        ["0", f"1/{c}"],
    )
    euler = EulerData(
        ctx,
        [["0", "0"], ["-1", "0"]],
        ["0", "0"],
        [f"-2*{c}", f"2*{c}"],
    )
    return CatalogEntry(f"III:{ctok}", ctx, pot, euler, (),
                        note="logarithmic family; generators L = ln u, K = u^(2c)")


def _entry_case_iii_zero() -> CatalogEntry:
    ctx = Context("III:0", ("u", "v"))
    pot = VectorPotential(ctx, ["u^2/2", "v^2/2"], ["1", "1"])
    euler = EulerData(ctx, [["0", "0"], ["0", "0"]], ["0", "0"], ["0", "0"])
    return CatalogEntry("III:0", ctx, pot, euler, (), note="uncoupled pair")


CATALOG_IDS = ("I:m,c", "I:-1,c", "I:1/2,c", "II:c", "II:0", "III:c", "III:0")


def catalog_entry(spec: str) -> CatalogEntry:
    """Load a catalog family by id, e.g. "I:m,c", "II:1/2", "III:0".

    A slot holding the family letter stays symbolic; a rational literal
    fixes it, switching to the logarithmic variants where the generic
    potential degenerates.
    """
    spec = spec.strip()
    if ":" not in spec:
        raise CatalogError(f"bad catalog id {spec!r}")
    case, _, rest = spec.partition(":")
    case = case.strip().upper()
    if case == "I":
        parts = [p.strip() for p in rest.split(",")]
        if len(parts) != 2:
            raise CatalogError("family I takes two slots: m,c")
        if parts[0] == "-1":
            return _entry_case_i_log(parts[1])
        if parts[0] == "1/2":
            return _entry_case_i_half(parts[1])
        return _entry_case_i(parts[0], parts[1])
    if case == "II":
        return _entry_case_ii(rest)
    if case == "III":
        return _entry_case_iii(rest)
    raise CatalogError(f"unknown catalog family {case!r}")


def catalog_2d() -> List[CatalogEntry]:
    """All shipped rank-2 families with symbolic parameters."""
    return [catalog_entry(spec) for spec in CATALOG_IDS]
