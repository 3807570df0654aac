"""Exact linear algebra over a Context's coefficient field.

Sparse Gaussian elimination with exact zero tests.  Whenever a pivot is
not a rational constant, dividing by it is only valid where it does not
vanish; such pivots are recorded as genericity assumptions so callers can
fork on the degenerate locus if they need to.
"""

from __future__ import annotations

from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .scalar import Context, ScalarExpr, ScalarError

__all__ = [
    "LinearSolveError",
    "LinearSolution",
    "Reduction",
    "reduce_system",
    "solve_linear",
]


class LinearSolveError(ScalarError):
    pass


RowLike = Union[Mapping[int, object], Sequence[object]]


class LinearSolution:
    """Particular solution plus a basis of the homogeneous solutions."""

    __slots__ = ("ctx", "particular", "nullspace", "pivot_cols", "free_cols", "assumptions")

    def __init__(self, ctx, particular, nullspace, pivot_cols, free_cols, assumptions):
        self.ctx = ctx
        self.particular = tuple(particular)
        self.nullspace = tuple(tuple(v) for v in nullspace)
        self.pivot_cols = tuple(pivot_cols)
        self.free_cols = tuple(free_cols)
        self.assumptions = tuple(assumptions)

    @property
    def unique(self) -> bool:
        return not self.nullspace

    def __repr__(self):
        return (
            f"LinearSolution(rank={len(self.pivot_cols)}, "
            f"free={len(self.free_cols)}, assumptions={len(self.assumptions)})"
        )


class Reduction:
    """Reduced row echelon data for A x = b.

    rows[i] is a sparse row {col: entry} with entry 1 at pivot_cols[i] and
    support only on free columns otherwise.  residuals holds the right hand
    sides of vanished rows that did not cancel: the system is consistent iff
    residuals is empty.
    """

    __slots__ = ("ctx", "ncols", "rows", "rhs", "pivot_cols", "free_cols",
                 "assumptions", "residuals")

    def __init__(self, ctx, ncols, rows, rhs, pivot_cols, free_cols, assumptions, residuals):
        self.ctx = ctx
        self.ncols = ncols
        self.rows = rows
        self.rhs = rhs
        self.pivot_cols = tuple(pivot_cols)
        self.free_cols = tuple(free_cols)
        self.assumptions = tuple(assumptions)
        self.residuals = tuple(residuals)

    @property
    def consistent(self) -> bool:
        return not self.residuals

    @property
    def rank(self) -> int:
        return len(self.pivot_cols)

    def solve(self) -> Optional[LinearSolution]:
        """Particular solution (free columns set to zero) and nullspace basis."""
        if not self.consistent:
            return None
        ctx = self.ctx
        particular = [ctx.zero] * self.ncols
        for i, col in enumerate(self.pivot_cols):
            particular[col] = self.rhs[i]
        nullspace = []
        for f in self.free_cols:
            vec = [ctx.zero] * self.ncols
            vec[f] = ctx.one
            for i, col in enumerate(self.pivot_cols):
                entry = self.rows[i].get(f)
                if entry is not None:
                    vec[col] = -entry
            nullspace.append(vec)
        return LinearSolution(ctx, particular, nullspace, self.pivot_cols,
                              self.free_cols, self.assumptions)


def _as_sparse_row(ctx: Context, row: RowLike, ncols: int) -> Dict[int, ScalarExpr]:
    out: Dict[int, ScalarExpr] = {}
    if isinstance(row, Mapping):
        items = row.items()
    else:
        items = enumerate(row)
    for col, value in items:
        col = int(col)
        if col < 0 or col >= ncols:
            raise LinearSolveError(f"column index {col} out of range 0..{ncols - 1}")
        e = ctx.scalar(value)
        if not e.is_zero:
            out[col] = e
    return out


def reduce_system(
    ctx: Context,
    rows: Sequence[RowLike],
    rhs: Optional[Sequence[object]] = None,
    ncols: Optional[int] = None,
) -> Reduction:
    """Bring A x = b to reduced row echelon form over the context field.

    rows may be dense sequences or sparse {col: entry} mappings; ncols is
    required when every row is sparse.
    """
    if ncols is None:
        width = 0
        for row in rows:
            if isinstance(row, Mapping):
                width = max([width] + [int(c) + 1 for c in row])
            else:
                width = max(width, len(row))
        ncols = width
    work: List[Tuple[Dict[int, ScalarExpr], ScalarExpr]] = []
    if rhs is None:
        rhs = [0] * len(rows)
    if len(rhs) != len(rows):
        raise LinearSolveError("need one right hand side entry per row")
    for row, b in zip(rows, rhs):
        work.append((_as_sparse_row(ctx, row, ncols), ctx.scalar(b)))

    echelon: List[Dict[int, ScalarExpr]] = []
    echelon_rhs: List[ScalarExpr] = []
    pivot_cols: List[int] = []
    assumptions: List[ScalarExpr] = []

    for col in range(ncols):
        pick = None
        for idx, (row, _) in enumerate(work):
            entry = row.get(col)
            if entry is None:
                continue
            if entry.is_rational:
                pick = idx
                break
            if pick is None:
                pick = idx
        if pick is None:
            continue
        row, b = work.pop(pick)
        entry = row.pop(col)
        if not entry.is_rational:
            assumptions.append(entry)
        if entry != 1:
            row = {c: v / entry for c, v in row.items()}
            b = b / entry
        row[col] = ctx.one

        def _clear(target: Dict[int, ScalarExpr], tb: ScalarExpr):
            factor = target.get(col)
            if factor is None:
                return target, tb
            del target[col]
            for c, v in row.items():
                if c == col:
                    continue
                acc = target.get(c, ctx.zero) - factor * v
                if acc.is_zero:
                    target.pop(c, None)
                else:
                    target[c] = acc
            return target, tb - factor * b

        work = [_clear(t, tb) for t, tb in work]
        for i in range(len(echelon)):
            echelon[i], echelon_rhs[i] = _clear(echelon[i], echelon_rhs[i])
        echelon.append(row)
        echelon_rhs.append(b)
        pivot_cols.append(col)

    residuals = [tb for t, tb in work if not tb.is_zero]
    free_cols = [c for c in range(ncols) if c not in set(pivot_cols)]
    return Reduction(ctx, ncols, echelon, echelon_rhs, pivot_cols, free_cols,
                     assumptions, residuals)


def solve_linear(
    ctx: Context,
    rows: Sequence[RowLike],
    rhs: Optional[Sequence[object]] = None,
    ncols: Optional[int] = None,
) -> Optional[LinearSolution]:
    """Solve A x = b; None when inconsistent (under the recorded assumptions)."""
    return reduce_system(ctx, rows, rhs, ncols).solve()
