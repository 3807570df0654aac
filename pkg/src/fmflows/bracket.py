"""Schouten-Nijenhuis brackets and compatibility of evolutionary flows.

The bracket of a local multivector field F (represented by a density taken
modulo x-derivatives) with a density g is

    [F, g] = sum_{a,k} dx^k(dF/dth_a) . dg/du[a,k]
           + (-1)^i sum_{a,k} dx^k(dF/du^a) . dg/dth[a,k]

with i the odd degree of F and d./dth_a, d./du^a the variational
derivatives.  Two special cases carry names of their own: for i = 1 and g
even the bracket is the derivative of g along the flow of F, and for two
vector fields it descends to the Lie bracket of the associated evolutionary
derivations.  Membership in the kernel of the bracket is always decided
through variational derivatives, never by attempted integration.
"""

from typing import Dict, List, Optional, Sequence, Tuple, Union

from .jet import DiffPoly, JetError, LocalVectorField

__all__ = [
    "BracketError",
    "MixedThetaDegree",
    "TruncationTooLow",
    "CrossCheckFailed",
    "schouten_density",
    "lie_bracket",
    "flows_commute",
    "is_conserved",
    "PairDefect",
    "CommutationReport",
    "ConservationReport",
]


class BracketError(JetError):
    pass


class MixedThetaDegree(BracketError):
    """The first bracket slot needs a single odd degree."""


class TruncationTooLow(BracketError):
    """A check was requested beyond the eps order the inputs carry."""


class CrossCheckFailed(BracketError):
    """The two independent bracket routes disagreed; indicates a bug."""


def _density_of(f: Union[LocalVectorField, DiffPoly]) -> DiffPoly:
    return f.density if isinstance(f, LocalVectorField) else f


def _homogeneous_theta_degree(f: DiffPoly) -> int:
    degs = set(f.theta_degrees())
    if len(degs) > 1:
        raise MixedThetaDegree(f"density mixes odd degrees {sorted(degs)}")
    return degs.pop() if degs else 0


def _slot_orders(g: DiffPoly) -> Tuple[Dict[int, int], Dict[int, int]]:
    """Highest jet order of g in each even and odd slot."""
    ev: Dict[int, int] = {a: 0 for a in range(1, g.ctx.n_components + 1)}
    od: Dict[int, int] = {}
    for even, odd, _ in g.terms:
        for (a, k), _p in even:
            ev[a] = max(ev[a], k)
        for a, k in odd:
            od[a] = max(od.get(a, -1), k)
    return ev, od


def schouten_density(
    fbar: Union[LocalVectorField, DiffPoly],
    g: DiffPoly,
    provenance: Optional[List[dict]] = None,
) -> DiffPoly:
    """Bracket density [fbar, g].

    ``fbar`` enters only through its variational derivatives, so any
    representative of the same local multivector field gives the same
    result.  The k = 0 even slot acts through coefficient derivation, so
    coordinate dependence hidden in coefficients is picked up.  When a list
    is passed as ``provenance`` it receives one record per contributing
    slot, tagging the produced monomials for debugging.
    """
    f = _density_of(fbar)
    ctx = f.ctx
    ctx.check_same(g.ctx)
    i = _homogeneous_theta_degree(f)
    sign = -1 if i % 2 else 1
    ev_max, od_max = _slot_orders(g)
    out = DiffPoly.zero(ctx, _common_trunc(f, g))
    for a in range(1, ctx.n_components + 1):
        dth = f.var_der_odd(a)
        if dth:
            cur = dth
            for k in range(ev_max[a] + 1):
                piece = g.partial_even(a, k)
                if piece:
                    part = cur * piece
                    out = out + part
                    _record(provenance, "theta", a, k, part)
                if k < ev_max[a]:
                    cur = cur.dx()
        du = f.var_der_even(a)
        if du and a in od_max:
            cur = du
            for k in range(od_max[a] + 1):
                piece = g.partial_odd(a, k)
                if piece:
                    part = (cur * piece) if sign > 0 else -(cur * piece)
                    out = out + part
                    _record(provenance, "even", a, k, part)
                if k < od_max[a]:
                    cur = cur.dx()
    return out


def _record(provenance: Optional[List[dict]], part: str, a: int, k: int, p: DiffPoly) -> None:
    if provenance is not None:
        provenance.append({"slot": part, "alpha": a, "k": k, "terms": p.to_json()["terms"]})


def _common_trunc(*ps: DiffPoly) -> Optional[int]:
    t: Optional[int] = None
    for p in ps:
        if p.trunc is not None:
            t = p.trunc if t is None else min(t, p.trunc)
    return t


def lie_bracket(
    x: LocalVectorField, y: LocalVectorField, cross_check: bool = True
) -> LocalVectorField:
    """Commutator of the evolutionary derivations of x and y.

    Components are evolve(y^a along x) - evolve(x^a along y).  With
    ``cross_check`` the same field is recomputed as the theta-variational
    derivative of the bracket density [x, y] and the two must agree.
    """
    x.ctx.check_same(y.ctx)
    comps = [
        yc.evolve(x.components) - xc.evolve(y.components)
        for xc, yc in zip(x.components, y.components)
    ]
    if cross_check:
        dens = schouten_density(x, y.density)
        for a, comp in enumerate(comps, start=1):
            if dens.var_der_odd(a) != comp:
                raise CrossCheckFailed(
                    f"bracket density route disagrees in component {a}"
                )
    return LocalVectorField(x.ctx, comps)


class PairDefect:
    """Commutator defect of one pair of flows, one DiffPoly per component."""

    __slots__ = ("left", "right", "components")

    def __init__(self, left: int, right: int, components: Sequence[DiffPoly]):
        self.left = left
        self.right = right
        self.components = tuple(components)

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def to_json(self) -> dict:
        return {
            "pair": [self.left, self.right],
            "zero": self.is_zero,
            "components": [
                {"alpha": a, "terms": c.to_json()["terms"]}
                for a, c in enumerate(self.components, start=1)
                if not c.is_zero
            ],
        }

    def __repr__(self):
        tag = "0" if self.is_zero else "nonzero"
        return f"PairDefect({self.left},{self.right}: {tag})"


class CommutationReport:
    __slots__ = ("pairs",)

    def __init__(self, pairs: Sequence[PairDefect]):
        self.pairs = tuple(pairs)

    @property
    def all_commute(self) -> bool:
        return all(p.is_zero for p in self.pairs)

    def to_json(self) -> dict:
        return {
            "all_commute": self.all_commute,
            "pairs": [p.to_json() for p in self.pairs],
        }

    def __repr__(self):
        bad = [p for p in self.pairs if not p.is_zero]
        return f"CommutationReport(pairs={len(self.pairs)}, failing={len(bad)})"


def flows_commute(
    flows: Sequence[Sequence[DiffPoly]],
    pairs: Optional[Sequence[Tuple[int, int]]] = None,
    order: Optional[int] = None,
    cross_check: bool = True,
) -> CommutationReport:
    """Pairwise commutator defects for flows du^a/dt_i = dx(flows[i][a-1]).

    Each flow is handed over through its current densities: the evolution of
    u^a is the x-derivative of the listed entry.  The defect of a pair is
    d/dt_i d/dt_j u^a - d/dt_j d/dt_i u^a, reported as a DiffPoly per
    component; all defects empty means the flows commute to the order
    carried by the inputs (or to ``order`` if that is tighter).
    """
    if not flows:
        return CommutationReport(())
    ctx = flows[0][0].ctx
    truncs = set()
    fields: List[LocalVectorField] = []
    for row in flows:
        comps = []
        for p in row:
            ctx.check_same(p.ctx)
            truncs.add(p.trunc)
            comps.append(p.dx())
        fields.append(LocalVectorField(ctx, comps))
    if len(truncs) > 1:
        raise BracketError("flows carry mixed eps truncations")
    trunc = truncs.pop()
    if order is not None:
        if trunc is not None and order > trunc:
            raise TruncationTooLow(
                f"check at eps^{order} requested but flows are exact only mod eps^{trunc + 1}"
            )
    if pairs is None:
        pairs = [(i, j) for i in range(len(flows)) for j in range(i + 1, len(flows))]
    defects = []
    for i, j in pairs:
        z = lie_bracket(fields[i], fields[j], cross_check=cross_check)
        comps = z.components
        if order is not None:
            comps = [c.mod_eps(order + 1) for c in comps]
        defects.append(PairDefect(i, j, comps))
    return CommutationReport(defects)


class ConservationReport:
    """Outcome of a conserved-density check, with per-slot defects."""

    __slots__ = ("conserved", "defects")

    def __init__(self, conserved: bool, defects: Dict[int, DiffPoly]):
        self.conserved = conserved
        self.defects = dict(defects)

    def __bool__(self) -> bool:
        return self.conserved

    def to_json(self) -> dict:
        return {
            "conserved": self.conserved,
            "defects": [
                {"alpha": a, "terms": d.to_json()["terms"]}
                for a, d in sorted(self.defects.items())
            ],
        }

    def __repr__(self):
        return f"ConservationReport(conserved={self.conserved})"


def is_conserved(
    g: DiffPoly, x: Union[LocalVectorField, DiffPoly]
) -> ConservationReport:
    """Whether the local functional of g is constant along the flow of x.

    Conservation means evolve(g) lands in the image of dx plus constants,
    which holds exactly when every even variational derivative of the
    evolved density vanishes.
    """
    if g.theta_degree() != 0:
        raise BracketError("conserved densities must be even")
    field = x if isinstance(x, LocalVectorField) else LocalVectorField.from_density(x)
    g.ctx.check_same(field.ctx)
    dot = g.evolve(field.components)
    defects: Dict[int, DiffPoly] = {}
    for a in range(1, g.ctx.n_components + 1):
        d = dot.var_der_even(a)
        if d:
            defects[a] = d
    return ConservationReport(not defects, defects)
