"""Frozen second-order deformation families for the rank-2 catalog.

Each fixture records, for one catalog entry and one admissible conformal
shift gamma, the known one- or two-parameter family of eps^2 deformations
of the principal densities, together with the framing pair that labels
the family.  Expressions are stored as density text in the entry's
generator notation (P = u^m, G = u^(c(m-1)/2), Ev = e^(-v), Hc = e^(cv),
L = ln u, K = u^(2c)) and are parsed on demand into an extended context
that carries the family constants as extra params.

The deformed slots are always the level-zero densities away from the
unit direction plus the unit-contracted level-one density; every other
density of the hierarchy stays at its dispersionless value through this
order.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

from .scalar import Context, ScalarError
from .jet import DiffPoly, parse_diffpoly
from .fmanifold import CatalogEntry, catalog_entry


class FixtureError(ScalarError):
    """Unknown fixture id or malformed fixture data."""


class DeformationFixture:
    """One printed deformation family.

    ``level0`` maps beta (1-based) to the pair of component texts of the
    deformed density P_{beta,0}; omitted betas are undeformed.  ``unit1``
    holds the component texts of the unit-contracted level-one density
    A^mu P_{mu,1}.  ``printed_slot`` records which plain slot (beta, 1)
    the source display used, together with the factor relating it to the
    contraction (None when the display is the contraction itself).
    """

    __slots__ = ("id", "catalog", "gamma_index", "constants", "level0",
                 "unit1", "printed_slot", "framing", "note")

    def __init__(self, id: str, catalog: str, gamma_index: int,
                 constants: Sequence[str],
                 level0: Dict[int, Tuple[str, str]],
                 unit1: Tuple[str, str],
                 printed_slot: Optional[Tuple[int, str]],
                 framing: Tuple[str, str],
                 note: str = ""):
        self.id = id
        self.catalog = catalog
        self.gamma_index = gamma_index
        self.constants = tuple(constants)
        self.level0 = dict(level0)
        self.unit1 = tuple(unit1)
        self.printed_slot = printed_slot
        self.framing = tuple(framing)
        self.note = note

    def entry(self) -> CatalogEntry:
        return catalog_entry(self.catalog)

    def context(self) -> Context:
        """Entry context extended by the family constants."""
        base = self.entry().ctx
        return base.extended(self.constants, name=f"{base.name}+{self.id}")

    def gamma(self, ctx: Context):
        from .scalar import transfer_scalar
        return transfer_scalar(self.entry().euler.gamma[self.gamma_index], ctx)

    def densities(self, ctx: Context) -> Dict[object, Tuple[DiffPoly, ...]]:
        """Parse the deformed slots: beta -> components, plus 'unit'."""
        out: Dict[object, Tuple[DiffPoly, ...]] = {}
        for beta, texts in sorted(self.level0.items()):
            out[(beta, 0)] = tuple(parse_diffpoly(ctx, t) for t in texts)
        out["unit"] = tuple(parse_diffpoly(ctx, t) for t in self.unit1)
        return out

    def framing_pair(self, ctx: Context) -> Tuple[DiffPoly, ...]:
        return tuple(parse_diffpoly(ctx, t) for t in self.framing)

    def __repr__(self):
        return f"DeformationFixture({self.id!r}, catalog={self.catalog!r})"


def _fixture_i1() -> DeformationFixture:
    e2 = "A*G^-1*eps^2"
    p110 = (
        "v - 2*c*P + " + e2 + "*("
        "m*(c-2)*(c*m-c-2*m+4)*P*u^-3*u[1,1]^2"
        " + m*(c-2)^2*P*u^-2*u[1,2] - c*u^-1*u[2,2])"
    )
    p210 = (
        "m^2*(4-c^2)/(2*m-1)*P^2*u^-1 + m*(c^2-4)*" + e2 + "*("
        "m*(c*m-c-4*m+6)*P^2*u^-4*u[1,1]^2"
        " + m*(c-4)*P^2*u^-3*u[1,2] - P*u^-2*u[2,2])"
    )
    p121 = (
        "u*v - 2*m*c/(m+1)*u*P + " + e2 + "*("
        "m*(c-2)*(c*m-c-2*m-2)*P*u^-2*u[1,1]^2"
        " + m*(c-2)*(c*m-c-2*m-2)/(m-1)*P*u^-1*u[1,2]"
        " - (c*m-c-4)/(m-1)*u[2,2])"
    )
    p221 = (
        "v^2/2 + m*(4-c^2)/2*P^2 + m*(c+2)*" + e2 + "*("
        "m*(c*m-c-4*m)*(c-2)*P^2*u^-3*u[1,1]^2"
        " + m*(c*m-c-4*m)*(c-2)/(m-1)*P^2*u^-2*u[1,2]"
        " - (c*m-c-2*m-2)/(m-1)*P*u^-1*u[2,2])"
    )
    return DeformationFixture(
        "I1", "I:m,c", 0, ("A",),
        {1: (p110, p210)},
        (p121, p221),
        (2, "1"),
        ("48*A/(m-1)*G^-1", "48*A*m*(c+2)/(m-1)*P*u^-1*G^-1"),
        note="power-law family at the first conformal shift",
    )


def _fixture_i2() -> DeformationFixture:
    e2 = "B*G*eps^2"
    p110 = (
        "v - 2*c*P + " + e2 + "*("
        "m*(c+2)*(c*m-c+2*m-4)*P*u^-3*u[1,1]^2"
        " + m*(c+2)^2*P*u^-2*u[1,2] - c*u^-1*u[2,2])"
    )
    p210 = (
        "m^2*(4-c^2)/(2*m-1)*P^2*u^-1 + m*(c^2-4)*" + e2 + "*("
        "m*(c*m-c+4*m-6)*P^2*u^-4*u[1,1]^2"
        " + m*(c+4)*P^2*u^-3*u[1,2] - P*u^-2*u[2,2])"
    )
    p121 = (
        "u*v - 2*m*c/(m+1)*u*P + " + e2 + "*("
        "m*(c+2)*(c*m-c+2*m+2)*P*u^-2*u[1,1]^2"
        " + m*(c+2)*(c*m-c+2*m+2)/(m-1)*P*u^-1*u[1,2]"
        " - (c*m-c+4)/(m-1)*u[2,2])"
    )
    p221 = (
        "v^2/2 + m*(4-c^2)/2*P^2 + m*(c-2)*" + e2 + "*("
        "m*(c*m-c+4*m)*(c+2)*P^2*u^-3*u[1,1]^2"
        " + m*(c*m-c+4*m)*(c+2)/(m-1)*P^2*u^-2*u[1,2]"
        " - (c*m-c+2*m+2)/(m-1)*P*u^-1*u[2,2])"
    )
    return DeformationFixture(
        "I2", "I:m,c", 1, ("B",),
        {1: (p110, p210)},
        (p121, p221),
        (2, "1"),
        ("-48*B/(m-1)*G", "-48*B*m*(c-2)/(m-1)*G*P*u^-1"),
        note="power-law family at the second conformal shift",
    )


def _fixture_ii1() -> DeformationFixture:
    e2 = "A*Hc^2*Ev^2*eps^2"
    # the vxx slope must be half the printed one or the unit-flow
    # commutator and the level-one homogeneity both pick up defects
    p120 = (
        "(c-1)/2*Ev^2 + (c-1)*" + e2 + "*("
        "u[1,2] - (2*c-3)/(2*c)*Ev*u[2,1]^2 + (2*c-3)/(2*c)*Ev*u[2,2])"
    )
    p220 = (
        "c*u - (2*c-1)*Ev + " + e2 + "*("
        "-(2*c-1)/2*Ev^-1*u[1,2] + (c-1)^2/c*u[2,1]^2 - (c-1)^2/c*u[2,2])"
    )
    p111 = (
        "c^2/2*u^2 + c*(c-1)/4*(2*v+1)*Ev^2 + " + e2 + "*("
        "c*((c-1)*v+1)*u[1,2]"
        " - (c-1)/2*((2*c-3)*v+3)*Ev*u[2,1]^2"
        " + (c-1)/2*((2*c-3)*v+2)*Ev*u[2,2])"
    )
    p211 = (
        "c^2*u*v - c*(2*c-1)*(v+1)*Ev + " + e2 + "*("
        "-c/2*((2*c-1)*v+2)*Ev^-1*u[1,2]"
        " + (c-1)/2*((2*c-2)*v+3)*u[2,1]^2 - (c-1)*((c-1)*v+1)*u[2,2])"
    )
    unit = (f"1/c*({p111})", f"1/c*({p211})")
    return DeformationFixture(
        "II1", "II:c", 0, ("A",),
        {2: (p120, p220)},
        unit,
        (1, "1/c"),
        ("12*A/c*Hc^2*Ev^2", "-12*A/c*Hc^2*Ev"),
        note="exponential family at the first conformal shift",
    )


def _fixture_ii2() -> DeformationFixture:
    e2 = "B*Hc^-2*eps^2"
    p120 = (
        "(c-1)/2*Ev^2 + (c-1)*" + e2 + "*("
        "-u[1,2] + (2*c+1)/(2*c)*Ev*u[2,1]^2 - (2*c+1)/(2*c)*Ev*u[2,2])"
    )
    p220 = (
        "c*u - (2*c-1)*Ev + " + e2 + "*("
        "(2*c-1)/2*Ev^-1*u[1,2] - c*u[2,1]^2 + c*u[2,2])"
    )
    p111 = (
        "c^2/2*u^2 + c*(c-1)/4*(2*v+1)*Ev^2 + (c-1)*" + e2 + "*("
        "-(c*v-1)*u[1,2]"
        " + 1/2*((2*c+1)*v-3)*Ev*u[2,1]^2 - 1/2*((2*c+1)*v-2)*Ev*u[2,2])"
    )
    p211 = (
        "c^2*u*v - c*(2*c-1)*(v+1)*Ev + c*" + e2 + "*("
        "1/2*((2*c-1)*v-2)*Ev^-1*u[1,2]"
        " - 1/2*(2*c*v-3)*u[2,1]^2 + (c*v-1)*u[2,2])"
    )
    unit = (f"1/c*({p111})", f"1/c*({p211})")
    return DeformationFixture(
        "II2", "II:c", 1, ("B",),
        {2: (p120, p220)},
        unit,
        (1, "1/c"),
        ("12*B*(c-1)/c^2*Hc^-2", "-12*B/c*Hc^-2*Ev^-1"),
        note="exponential family at the second conformal shift",
    )


def _fixture_iii1() -> DeformationFixture:
    e2 = "A*K^-1*u^-1*eps^2"
    p110 = (
        "u*(1-2*c*L) + c*v + " + e2 + "*("
        "-(c+1/2)*u^-1*u[1,1]^2 + c*u[2,2] + (3/2-c*(1+L))*u[1,2])"
    )
    p210 = (
        "u*(L-c*(1+L^2)) + " + e2 + "*("
        "-u^-1*((c+1/2)*L+c)*u[1,1]^2 + (c*(1+L)-1/2)*u[2,2]"
        " + (2*(1+L)-c*(1+L)^2-1/(2*c))*u[1,2])"
    )
    p121 = (
        "-c/2*u*(c*u*(1+2*L)-2*c*v-u) + " + e2 + "*("
        "c*(c-1)*u*u[2,2] + c*(1-c)*u[1,1]^2"
        " + u*(c*(1-c)*L-(c-1/2)*(c-2))*u[1,2])"
    )
    p221 = (
        "-c/4*u^2*(2*(c*L+c-1)*L+c-1) + c^2/2*v^2 + " + e2 + "*("
        "c*((1-c)*L+3/2-c)*u[1,1]^2 + c*u*((c-1)*L+c-3/2)*u[2,2]"
        " + u*(c*(1-c)*L^2-(2*c^2-4*c+1)*L-c^2+3*c-3/2)*u[1,2])"
    )
    unit = (f"1/c*({p121})", f"1/c*({p221})")
    return DeformationFixture(
        "III1", "III:c", 0, ("A",),
        {1: (p110, p210)},
        unit,
        (2, "1/c"),
        ("-12*A/c*K^-1", "-12*A/c*K^-1*(1+L)"),
        note="logarithmic family at the first conformal shift",
    )


def _fixture_iii2() -> DeformationFixture:
    e2 = "B*K*u^-1*eps^2"
    p110 = (
        "u*(1-2*c*L) + c*v + " + e2 + "*("
        "(c-1/2)*u^-1*u[1,1]^2 - c*u[2,2] + (c*L+c+1/2)*u[1,2])"
    )
    p210 = (
        "u*(L-c*(1+L^2)) + " + e2 + "*("
        "(1/2-c*(1+L))*u[2,2] + (c*(L+1)^2-1/(2*c))*u[1,2]"
        " + u^-1*((c-1/2)*L+c-1+1/(2*c))*u[1,1]^2)"
    )
    p121 = (
        "-c/2*u*(c*u*(1+2*L)-2*c*v-u) + c/2*" + e2 + "*("
        "2*(c+1)*u[1,1]^2 - 2*(c+1)*u*u[2,2] + u*(2*(c+1)*L+2*c+3)*u[1,2])"
    )
    # the -1 inside the L slope of the uxx term is forced by the dilaton
    # shift; dropping it leaves a B*L*K/c * uxx defect in the contraction
    p221 = (
        "-c/4*u^2*(2*(c*L+c-1)*L+c-1) + c^2/2*v^2 + " + e2 + "*("
        "(c^2+c/2-1+c*(c+1)*L)*u[1,1]^2 + u*(1-c/2-c^2-c*(c+1)*L)*u[2,2]"
        " + u*(c^2+c-3/2+(c*(c+1)*(L+2)-1)*L)*u[1,2])"
    )
    unit = (f"1/c*({p121})", f"1/c*({p221})")
    return DeformationFixture(
        "III2", "III:c", 1, ("B",),
        {1: (p110, p210)},
        unit,
        (2, "1/c"),
        ("-12*B/c*K", "12*B/c*K*(1/c-1-L)"),
        note="logarithmic family at the second conformal shift",
    )


def _fixture_iii3() -> DeformationFixture:
    return DeformationFixture(
        "III3", "III:0", 0, ("A", "B"),
        {},
        ("u^2/2 + A*eps^2*u[1,2]", "v^2/2 + B*eps^2*u[2,2]"),
        None,
        ("12*A", "12*B"),
        note="uncoupled pair; the contraction carries one constant per wave",
    )


_FIXTURES = {
    f.id: f
    for f in (
        _fixture_i1(), _fixture_i2(),
        _fixture_ii1(), _fixture_ii2(),
        _fixture_iii1(), _fixture_iii2(), _fixture_iii3(),
    )
}


def fixture_ids() -> List[str]:
    return sorted(_FIXTURES)


def fixture(id: str) -> DeformationFixture:
    try:
        return _FIXTURES[id]
    except KeyError:
        raise FixtureError(
            f"unknown fixture {id!r}; known: {', '.join(fixture_ids())}"
        ) from None
