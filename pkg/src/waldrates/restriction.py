"""Polynomial restriction systems: Jacobians, echelon forms, FRALD verdicts.

All functions are pure over immutable inputs.  Randomised rank testing takes
an explicit ``random.Random`` so callers control reproducibility.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .polycore import INF_DEGREE, MultiPoly, Scalar, _grlex_key


class NullViolatedError(ValueError):
    """The supplied point does not satisfy the restrictions exactly."""


class ZeroRowError(ValueError):
    """A Jacobian row is identically zero."""


class RankDeficientError(ValueError):
    """Row operations drove a row of the transformed Jacobian to zero."""


ScalarMatrix = tuple  # tuple[tuple[Scalar, ...], ...]


def scalar_identity(n: int) -> list[list[Scalar]]:
    return [[Scalar(1 if i == j else 0) for j in range(n)] for i in range(n)]


def scalar_mat_det(rows: Sequence[Sequence[Scalar]]) -> Scalar:
    """Exact determinant by Gaussian elimination over Q(sqrt(d))."""
    n = len(rows)
    work = [[Scalar.coerce(v) for v in row] for row in rows]
    det = Scalar(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if not work[r][col].is_zero()), None)
        if pivot is None:
            return Scalar(0)
        if pivot != col:
            work[col], work[pivot] = work[pivot], work[col]
            det = -det
        det = det * work[col][col]
        inv_row = work[col]
        for r in range(col + 1, n):
            if work[r][col].is_zero():
                continue
            f = work[r][col] / inv_row[col]
            work[r] = [a - f * b for a, b in zip(work[r], inv_row)]
    return det


def scalar_mat_rank(rows: Sequence[Sequence[Scalar]]) -> int:
    """Exact rank by Gaussian elimination over Q(sqrt(d))."""
    work = [[Scalar.coerce(v) for v in row] for row in rows]
    nrows = len(work)
    ncols = len(work[0]) if work else 0
    rank = 0
    row = 0
    for col in range(ncols):
        pivot = next((r for r in range(row, nrows) if not work[r][col].is_zero()), None)
        if pivot is None:
            continue
        work[row], work[pivot] = work[pivot], work[row]
        piv = work[row]
        for r in range(row + 1, nrows):
            if work[r][col].is_zero():
                continue
            f = work[r][col] / piv[col]
            work[r] = [a - f * b for a, b in zip(work[r], piv)]
        rank += 1
        row += 1
        if row == nrows:
            break
    return rank


class PolyMatrix:
    """Immutable rectangular matrix of MultiPoly entries sharing nvars."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, entries: Sequence[Sequence[MultiPoly]]):
        rows = len(entries)
        cols = len(entries[0]) if rows else 0
        grid = []
        nvars = None
        for row in entries:
            if len(row) != cols:
                raise ValueError("ragged rows in PolyMatrix")
            for p in row:
                if not isinstance(p, MultiPoly):
                    raise TypeError("PolyMatrix entries must be MultiPoly")
                if nvars is None:
                    nvars = p.nvars
                elif p.nvars != nvars:
                    raise ValueError("PolyMatrix entries must share nvars")
            grid.append(tuple(row))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "entries", tuple(grid))

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("PolyMatrix is immutable")

    @property
    def nvars(self) -> int:
        return self.entries[0][0].nvars

    def entry(self, i: int, j: int) -> MultiPoly:
        return self.entries[i][j]

    def row(self, i: int) -> tuple[MultiPoly, ...]:
        return self.entries[i]

    def transpose(self) -> "PolyMatrix":
        return PolyMatrix([[self.entries[i][j] for i in range(self.rows)]
                           for j in range(self.cols)])

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.rows != other.rows or self.cols != other.cols:
            raise ValueError("dimension mismatch")
        return PolyMatrix([[a + b for a, b in zip(r1, r2)]
                           for r1, r2 in zip(self.entries, other.entries)])

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.rows != other.rows or self.cols != other.cols:
            raise ValueError("dimension mismatch")
        return PolyMatrix([[a - b for a, b in zip(r1, r2)]
                           for r1, r2 in zip(self.entries, other.entries)])

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.cols != other.rows:
            raise ValueError("dimension mismatch in matrix product")
        nv = self.nvars
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = MultiPoly.zero(nv)
                for k in range(self.cols):
                    acc = acc + self.entries[i][k] * other.entries[k][j]
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def left_mul_scalars(self, S: Sequence[Sequence]) -> "PolyMatrix":
        """S @ self for a constant matrix S of scalars."""
        if len(S[0]) != self.rows:
            raise ValueError("dimension mismatch in scalar product")
        out = []
        for srow in S:
            row = []
            for j in range(self.cols):
                acc = MultiPoly.zero(self.nvars)
                for k in range(self.rows):
                    acc = acc + self.entries[k][j].scale(Scalar.coerce(srow[k]))
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def evaluate(self, point) -> list[list[Scalar]]:
        return [[p.evaluate(point) for p in row] for row in self.entries]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self.entries == other.entries

    __hash__ = None

    def __repr__(self) -> str:
        return f"PolyMatrix({self.rows}x{self.cols})"


@dataclass(frozen=True)
class RestrictionSystem:
    """q polynomial restrictions on a p-dimensional parameter with a null point."""

    var_names: tuple[str, ...]
    theta_bar: tuple[Scalar, ...]
    g: tuple[MultiPoly, ...]

    def __post_init__(self):
        object.__setattr__(self, "var_names", tuple(self.var_names))
        object.__setattr__(self, "theta_bar", tuple(Scalar.coerce(t) for t in self.theta_bar))
        object.__setattr__(self, "g", tuple(self.g))
        p, q = len(self.var_names), len(self.g)
        if len(self.theta_bar) != p:
            raise ValueError("theta_bar length must equal the number of variables")
        if q > p:
            raise ValueError(f"more restrictions ({q}) than parameters ({p})")
        for poly in self.g:
            if poly.nvars != p:
                raise ValueError("every restriction must use all declared variables")

    @property
    def p(self) -> int:
        return len(self.var_names)

    @property
    def q(self) -> int:
        return len(self.g)

    def null_residuals(self) -> list[Scalar]:
        return [poly.evaluate(self.theta_bar) for poly in self.g]

    def null_holds(self) -> bool:
        return all(r.is_zero() for r in self.null_residuals())


def recenter(sys: RestrictionSystem) -> RestrictionSystem:
    """Rewrite the system in deviation coordinates u = theta - theta_bar."""
    residuals = sys.null_residuals()
    bad = [i for i, r in enumerate(residuals) if not r.is_zero()]
    if bad:
        raise NullViolatedError(
            f"restrictions {bad} are nonzero at the null point: "
            + ", ".join(str(residuals[i]) for i in bad)
        )
    if all(t.is_zero() for t in sys.theta_bar):
        return sys
    shifted = tuple(poly.shift_origin(sys.theta_bar) for poly in sys.g)
    zero = tuple(Scalar(0) for _ in sys.var_names)
    return RestrictionSystem(sys.var_names, zero, shifted)


def jacobian(sys: RestrictionSystem) -> PolyMatrix:
    """q x p matrix of exact partial derivatives of the restrictions."""
    return PolyMatrix(
        [[poly.partial_derivative(k) for k in range(sys.p)] for poly in sys.g]
    )


def lowest_matrix(G: PolyMatrix) -> tuple[PolyMatrix, PolyMatrix, list]:
    """Row-wise minimal-degree decomposition G = low + rest.

    Each row contributes, entry by entry, its homogeneous component at the
    row's minimal degree (the minimum of the entries' lowest degrees).
    """
    low_rows = []
    degrees = []
    for i in range(G.rows):
        row = G.row(i)
        deg = min(p.lowest_degree() for p in row)
        if deg == INF_DEGREE:
            raise ZeroRowError(f"row {i} of the matrix is identically zero")
        deg = int(deg)
        low_rows.append([p.homogeneous_component(deg) for p in row])
        degrees.append(deg)
    low = PolyMatrix(low_rows)
    return low, G - low, degrees


@dataclass(frozen=True)
class EchelonForm:
    """Constant transformation S and the degree-sorted low-part structure of S@G."""

    S: ScalarMatrix                     # q x q, det != 0
    blocks: tuple[tuple[int, int], ...]  # (n_i, degree s_i), degrees strictly increasing
    low_matrix: PolyMatrix
    full_matrix: PolyMatrix             # S @ G
    row_degrees: tuple[int, ...]

    @property
    def q(self) -> int:
        return self.full_matrix.rows


def _row_low_vector(row: Sequence[MultiPoly]) -> tuple[int, dict]:
    """Lowest degree of a matrix row and its coefficient vector.

    The vector maps (column, monomial) to the exact coefficient of the row's
    minimal-degree homogeneous part, giving coordinates in a common monomial
    basis for dependence testing.
    """
    deg = min(p.lowest_degree() for p in row)
    if deg == INF_DEGREE:
        raise RankDeficientError("a transformed row vanished identically")
    deg = int(deg)
    vec = {}
    for j, p in enumerate(row):
        for mono, coeff in p.terms.items():
            if sum(mono) == deg:
                vec[(j, mono)] = coeff
    return deg, vec


def echelonize(G: PolyMatrix, max_passes: int | None = None) -> EchelonForm:
    """Find constant S with det(S) != 0 so the rows' lowest homogeneous parts
    are linearly independent and sorted by degree.

    Repeatedly: extract each row's lowest part, test real-linear dependence of
    these homogeneous row vectors by exact Gaussian elimination over the
    monomial basis, and cancel the lowest part of the highest-index dependent
    row with a combination of the earlier rows (strictly raising its degree).
    Terminates because each rewrite raises one row's degree, degrees being
    bounded by the largest entry degree; a row reaching zero means the input
    Jacobian was rank deficient.
    """
    q = G.rows
    sg = [list(G.row(i)) for i in range(q)]
    S = scalar_identity(q)
    max_deg = max((p.total_degree() for row in sg for p in row), default=0)
    if max_passes is None:
        max_passes = q * (int(max_deg) + 2) + 2

    for _ in range(max_passes):
        lows = [_row_low_vector(row) for row in sg]
        changed = False
        basis: list[tuple[tuple, dict, dict]] = []  # (pivot key, vector, expression)
        for i in range(q):
            _, vec = lows[i]
            vec = dict(vec)
            expr = {i: Scalar(1)}
            for pivot_key, bvec, bexpr in basis:
                f = vec.get(pivot_key)
                if f is None or f.is_zero():
                    continue
                f = f / bvec[pivot_key]
                for key, val in bvec.items():
                    new = vec.get(key, Scalar(0)) - f * val
                    if new.is_zero():
                        vec.pop(key, None)
                    else:
                        vec[key] = new
                for j, val in bexpr.items():
                    new = expr.get(j, Scalar(0)) - f * val
                    if new.is_zero():
                        expr.pop(j, None)
                    else:
                        expr[j] = new
            if vec:
                pivot_key = min(vec, key=lambda k: (k[0], _grlex_key(k[1])))
                basis.append((pivot_key, vec, expr))
                continue
            # dependency: low_i = -sum_j expr[j] * low_j (j < i), so adding
            # expr[j] * row_j cancels row i's lowest part
            old_deg = lows[i][0]
            for j, cj in expr.items():
                if j == i:
                    continue
                sg[i] = [a + b.scale(cj) for a, b in zip(sg[i], sg[j])]
                S[i] = [a + cj * b for a, b in zip(S[i], S[j])]
            new_deg, _ = _row_low_vector(sg[i])
            if new_deg <= old_deg:  # pragma: no cover - elimination guarantee
                raise RuntimeError("row rewrite did not raise the degree")
            changed = True
            break
        if not changed:
            break
    else:
        raise RankDeficientError("echelonization did not terminate")

    degrees = [_row_low_vector(row)[0] for row in sg]
    order = sorted(range(q), key=lambda i: (degrees[i], i))
    sg = [sg[i] for i in order]
    S = [S[i] for i in order]
    degrees = [degrees[i] for i in order]

    blocks = []
    for deg in degrees:
        if blocks and blocks[-1][1] == deg:
            blocks[-1] = (blocks[-1][0] + 1, deg)
        else:
            blocks.append((1, deg))

    full = PolyMatrix(sg)
    low, _, _ = lowest_matrix(full)
    return EchelonForm(
        S=tuple(tuple(row) for row in S),
        blocks=tuple(blocks),
        low_matrix=low,
        full_matrix=full,
        row_degrees=tuple(degrees),
    )


def poly_rank(M: PolyMatrix, trials: int = 3, rng: random.Random | None = None,
              coord_range: int = 10**6) -> int:
    """Probabilistic rank of a polynomial matrix.

    Evaluates at ``trials`` random rational points (numerators and
    denominators uniform over a range of size >= 10^6) and takes the maximum
    exact-arithmetic rank.  By Schwartz-Zippel the result is the true rank
    except with probability vanishing in the range size.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if rng is None:
        rng = random.Random(0)
    nvars = M.nvars
    best = 0
    for _ in range(trials):
        point = [
            Fraction(rng.randint(-coord_range, coord_range), rng.randint(1, coord_range))
            for _ in range(nvars)
        ]
        values = M.evaluate(point)
        best = max(best, scalar_mat_rank(values))
    return best


@dataclass(frozen=True)
class FraldVerdict:
    """Polynomial-matrix rank of the echelon low part and the FRALD-T flag."""

    rank_r: int
    frald_t_holds: bool
    echelon: EchelonForm


def frald_check(sys: RestrictionSystem, trials: int = 3,
                rng: random.Random | None = None) -> FraldVerdict:
    """Recenter, differentiate, echelonize, and rank the lowest-degree matrix."""
    centered = recenter(sys)
    G = jacobian(centered)
    ech = echelonize(G)
    r = poly_rank(ech.low_matrix, trials=trials, rng=rng)
    return FraldVerdict(rank_r=r, frald_t_holds=(r == sys.q), echelon=ech)


def transform(sys: RestrictionSystem, S: Sequence[Sequence]) -> RestrictionSystem:
    """Replace the restrictions g by S @ g for a constant q x q matrix S."""
    q = sys.q
    if len(S) != q or any(len(row) != q for row in S):
        raise ValueError("S must be q x q")
    new_g = []
    for row in S:
        acc = MultiPoly.zero(sys.p)
        for coeff, poly in zip(row, sys.g):
            acc = acc + poly.scale(Scalar.coerce(coeff))
        new_g.append(acc)
    return RestrictionSystem(sys.var_names, sys.theta_bar, tuple(new_g))
