"""Characteristic-polynomial degree analysis and divergence exponents.

Builds B(x, U) = G(x) U G(x)', extracts the characteristic-polynomial
coefficients a_k exactly through principal minors, reads off the minimal
degrees m_k(U), and derives the eigenvalue scaling exponents gamma_k / beta_k
and the predicted divergence exponent beta_bar from a grading of the
block-rescaled matrix.

Sign convention: the coefficients are those of det(lambda I - B), i.e.
a_k = (-1)^k * (sum of all k x k principal minors), so that the elementary
symmetric polynomials of the eigenvalues satisfy P_k = (-1)^k a_k exactly.
In particular det(B) = (-1)^q a_q.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .polycore import INF_DEGREE, MultiPoly, Scalar
from .restriction import (
    EchelonForm,
    PolyMatrix,
    RestrictionSystem,
    echelonize,
    frald_check,
    jacobian,
    recenter,
)

#: Principal-minor enumeration is exponential; stay exact and small.
MAX_Q = 8


class NonSpdError(ValueError):
    """Matrix is not exactly symmetric positive definite."""


class QTooLargeError(ValueError):
    """More restrictions than the exact minor enumeration supports."""


class NegativeTDegreeError(ValueError):
    """Block scaling produced a negative grading power (wrong echelon input)."""


class Covariance:
    """Exact symmetric positive-semidefinite p x p matrix of scalars.

    Certification is an exact LDL' factorisation: all pivots must be
    nonnegative, and a zero pivot must clear its whole column (otherwise the
    matrix is indefinite).  ``is_definite`` records whether every pivot was
    strictly positive; singular-but-semidefinite matrices are accepted because
    the degree analysis is meaningful on the boundary of the cone.
    """

    __slots__ = ("entries", "p", "is_definite")

    def __init__(self, rows: Sequence[Sequence]):
        p = len(rows)
        grid = tuple(tuple(Scalar.coerce(v) for v in row) for row in rows)
        if any(len(row) != p for row in grid):
            raise ValueError("covariance matrix must be square")
        for i in range(p):
            for j in range(i):
                if grid[i][j] != grid[j][i]:
                    raise NonSpdError(f"entries ({i},{j}) and ({j},{i}) differ")
        definite = _assert_positive_semidefinite(grid)
        object.__setattr__(self, "entries", grid)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "is_definite", definite)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("Covariance is immutable")

    @classmethod
    def identity(cls, p: int) -> "Covariance":
        return cls([[1 if i == j else 0 for j in range(p)] for i in range(p)])

    @classmethod
    def random_spd(cls, p: int, rng: random.Random) -> "Covariance":
        """Random exact SPD matrix L D L' with unit-lower-triangular L, D > 0."""
        L = [[Fraction(1) if i == j else Fraction(0) for j in range(p)] for i in range(p)]
        for i in range(p):
            for j in range(i):
                L[i][j] = Fraction(rng.randint(-4, 4), rng.randint(1, 4))
        D = [Fraction(rng.randint(1, 9), rng.randint(1, 4)) for _ in range(p)]
        rows = [[sum(L[i][k] * D[k] * L[j][k] for k in range(p)) for j in range(p)]
                for i in range(p)]
        return cls(rows)

    def entry(self, i: int, j: int) -> Scalar:
        return self.entries[i][j]

    def to_float(self):
        import numpy as np

        return np.array([[float(v) for v in row] for row in self.entries])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Covariance):
            return NotImplemented
        return self.entries == other.entries

    __hash__ = None

    def __repr__(self) -> str:
        return f"Covariance(p={self.p})"


def _assert_positive_semidefinite(grid) -> bool:
    """Exact LDL' certification; returns True when strictly definite.

    Raises NonSpdError on a negative pivot or on a zero pivot whose column is
    not identically zero (both mean the matrix is not PSD).
    """
    p = len(grid)
    L = [[Scalar(0)] * p for _ in range(p)]
    D: list[Scalar] = []
    definite = True
    for j in range(p):
        pivot = grid[j][j]
        for k in range(j):
            pivot = pivot - L[j][k] * L[j][k] * D[k]
        sign = pivot.sign()
        if sign < 0:
            raise NonSpdError(f"pivot {j} of the LDL' factorisation is negative")
        D.append(pivot)
        L[j][j] = Scalar(1)
        for i in range(j + 1, p):
            acc = grid[i][j]
            for k in range(j):
                acc = acc - L[i][k] * L[j][k] * D[k]
            if sign == 0:
                if not acc.is_zero():
                    raise NonSpdError(
                        f"zero pivot {j} with a nonzero column entry: not PSD"
                    )
                L[i][j] = Scalar(0)
            else:
                L[i][j] = acc / pivot
        if sign == 0:
            definite = False
    return definite


def build_B(G: PolyMatrix, U: Covariance) -> PolyMatrix:
    """Exact symmetric q x q matrix G U G'."""
    if G.cols != U.p:
        raise ValueError(f"G has {G.cols} columns but U is {U.p} x {U.p}")
    GU = PolyMatrix([
        [
            _dot_scale(G.row(i), [U.entry(k, j) for k in range(U.p)])
            for j in range(U.p)
        ]
        for i in range(G.rows)
    ])
    return GU @ G.transpose()


def _dot_scale(row: Sequence[MultiPoly], weights: Sequence[Scalar]) -> MultiPoly:
    acc = MultiPoly.zero(row[0].nvars)
    for poly, w in zip(row, weights):
        acc = acc + poly.scale(w)
    return acc


def _minor_det(B: PolyMatrix, rows: tuple, cols: tuple, memo: dict) -> MultiPoly:
    """Determinant of the (rows, cols) submatrix by memoised Laplace expansion."""
    if not rows:
        return MultiPoly.constant(1, B.nvars)
    key = (rows, cols)
    cached = memo.get(key)
    if cached is not None:
        return cached
    r0 = rows[0]
    rest_rows = rows[1:]
    acc = MultiPoly.zero(B.nvars)
    for idx, c in enumerate(cols):
        entry = B.entry(r0, c)
        if entry.is_zero():
            continue
        sub = _minor_det(B, rest_rows, cols[:idx] + cols[idx + 1 :], memo)
        term = entry * sub
        acc = acc + term if idx % 2 == 0 else acc - term
    memo[key] = acc
    return acc


def principal_minor_sum(B: PolyMatrix, k: int, memo: dict | None = None) -> MultiPoly:
    """Sum of the determinants of all k x k principal minors of B."""
    if B.rows != B.cols:
        raise ValueError("B must be square")
    if not 0 <= k <= B.rows:
        raise ValueError("minor size out of range")
    memo = {} if memo is None else memo
    acc = MultiPoly.zero(B.nvars)
    for subset in itertools.combinations(range(B.rows), k):
        acc = acc + _minor_det(B, subset, subset, memo)
    return acc


@dataclass(frozen=True)
class CharPolyCoeffs:
    """Coefficients a_1..a_q of det(lambda I - B) and their minimal degrees."""

    a: tuple[MultiPoly, ...]
    m: tuple  # int or INF_DEGREE per coefficient

    @property
    def q(self) -> int:
        return len(self.a)


def charpoly_coeffs(B: PolyMatrix) -> CharPolyCoeffs:
    """Exact characteristic-polynomial coefficients via principal minors."""
    q = B.rows
    if B.rows != B.cols:
        raise ValueError("B must be square")
    if q > MAX_Q:
        raise QTooLargeError(
            f"{q} restrictions exceed the exact minor-enumeration limit of {MAX_Q}"
        )
    memo: dict = {}
    a = []
    for k in range(1, q + 1):
        ek = principal_minor_sum(B, k, memo)
        a.append(ek if k % 2 == 0 else -ek)
    return CharPolyCoeffs(a=tuple(a), m=tuple(p.lowest_degree() for p in a))


def _lift_graded(p: MultiPoly, drop: int) -> MultiPoly:
    """Map p(x) to t^{-drop} p(t*y): new variable t at index 0, exponent
    |monomial| - drop.  Negative exponents mean the block degree was wrong."""
    terms = {}
    for mono, coeff in p.terms.items():
        tdeg = sum(mono) - drop
        if tdeg < 0:
            raise NegativeTDegreeError(
                f"monomial of degree {sum(mono)} under block scaling {drop}"
            )
        terms[(tdeg, *mono)] = coeff
    return MultiPoly(p.nvars + 1, terms)


def t_graded_coeffs(G: PolyMatrix, U: Covariance,
                    echelon: EchelonForm) -> list[Fraction | None]:
    """Grading exponents gamma_k of the block-rescaled characteristic polynomial.

    The grading variable t stands for T^{-1/2}: row i of the (already
    echelonized) matrix G is mapped to t^{-s_i} G_i(t*y) with s_i its block
    degree, so every entry has nonnegative t-degree.  gamma_k is half the
    minimal t-degree of the k-th coefficient; None marks an identically zero
    coefficient (exponent indeterminate from symmetric functions alone).
    """
    if G.rows != echelon.q:
        raise ValueError("G and echelon form disagree on the number of rows")
    lifted = PolyMatrix([
        [_lift_graded(p, echelon.row_degrees[i]) for p in G.row(i)]
        for i in range(G.rows)
    ])
    B = build_B(lifted, U)
    coeffs = charpoly_coeffs(B)
    gammas: list[Fraction | None] = []
    for poly in coeffs.a:
        if poly.is_zero():
            gammas.append(None)
        else:
            gammas.append(Fraction(min(mono[0] for mono in poly.terms), 2))
    return gammas


@dataclass(frozen=True)
class RateReport:
    """Scaling exponents behind the Wald-statistic divergence prediction.

    beta_bar is the predicted divergence exponent: the statistic grows at
    least like T^beta_bar when the echelon low matrix has rank below q.
    """

    rank_r: int
    gamma: tuple[Fraction, ...]
    beta: tuple[Fraction, ...]
    beta_bar: Fraction
    block_degrees: tuple[tuple[int, int], ...]
    indeterminate: tuple[int, ...]  # 1-based k where a_k vanished identically
    char_m: tuple                   # minimal degrees m_k(U) of the unscaled a_k
    echelon: EchelonForm

    @property
    def divergence_predicted(self) -> bool:
        return self.beta_bar > 0


def rate_report(sys: RestrictionSystem, U: Covariance, trials: int = 3,
                rng: random.Random | None = None) -> RateReport:
    """Full pipeline: FRALD check, grading exponents, beta recursion."""
    verdict = frald_check(sys, trials=trials, rng=rng)
    ech = verdict.echelon
    r, q = verdict.rank_r, sys.q

    raw_coeffs = charpoly_coeffs(build_B(jacobian(recenter(sys)), U))
    gammas_raw = t_graded_coeffs(ech.full_matrix, U, ech)

    gamma: list[Fraction] = []
    indeterminate = []
    prev = Fraction(0)
    for k, value in enumerate(gammas_raw, start=1):
        if value is None:
            indeterminate.append(k)
            value = prev  # conservative: inherit the previous exponent
        gamma.append(value)
        prev = value
    for k in range(r):
        if gamma[k] != 0:
            raise ValueError(
                f"grading exponent gamma_{k + 1} = {gamma[k]} nonzero at or below rank {r}"
            )

    beta = [Fraction(0)] * q
    for k in range(r, q):
        beta[k] = gamma[k] - (gamma[k - 1] if k > 0 else Fraction(0))
    beta_bar = max(beta[r:], default=Fraction(0)) if r < q else Fraction(0)

    return RateReport(
        rank_r=r,
        gamma=tuple(gamma),
        beta=tuple(beta),
        beta_bar=beta_bar,
        block_degrees=ech.blocks,
        indeterminate=tuple(indeterminate),
        char_m=raw_coeffs.m,
        echelon=ech,
    )


def min_degree_generic(sys: RestrictionSystem, k: int, samples: int = 5,
                       rng_seed: int = 0) -> int | float:
    """Estimate the generic minimal degree m_k over SPD covariances.

    Draws ``samples`` random exact SPD matrices (L D L' construction) and
    returns the smallest m_k(U) observed; almost every U attains the true
    minimum, so a handful of draws suffices.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 1 <= k <= sys.q:
        raise ValueError(f"k must be in 1..{sys.q}")
    G = jacobian(recenter(sys))
    rng = random.Random(rng_seed)
    best = INF_DEGREE
    for _ in range(samples):
        U = Covariance.random_spd(sys.p, rng)
        coeffs = charpoly_coeffs(build_B(G, U))
        best = min(best, coeffs.m[k - 1])
    return best
