"""Built-in demonstration systems used by the CLI checks and the test suite."""

from __future__ import annotations

from fractions import Fraction

from .polycore import MultiPoly, Scalar, parse_polynomial
from .rates import Covariance
from .restriction import RestrictionSystem

PRODUCT_PAIRS_VARS = ("x", "y", "z", "w")


def product_pairs_system() -> RestrictionSystem:
    """Three pairwise products (xy, xw, yz) at the null point (0, 0, 1, 1).

    The canonical divergent example: the echelon low matrix has rank 2 < 3,
    so FRALD-T fails and the Wald statistic grows linearly in T.
    """
    g = [parse_polynomial(s, PRODUCT_PAIRS_VARS) for s in ("x*y", "x*w", "y*z")]
    return RestrictionSystem(PRODUCT_PAIRS_VARS, (0, 0, 1, 1), tuple(g))


def surd_covariance() -> Covariance:
    """The boundary-PSD covariance with sqrt(0.98) = (7/10) sqrt(2) entries.

    Exactly singular (its last LDL' pivot is 0), and the degree of the last
    characteristic coefficient jumps from the generic 4 to 6, which slows the
    smallest eigenvalue by one full power of T.
    """
    s = Scalar(0, Fraction(7, 10), 2)
    h = Fraction(1, 10)
    return Covariance([
        [1, s, 0, 0],
        [s, 1, h, h],
        [0, h, 1, 0],
        [0, h, 0, 1],
    ])


def linear_system(q: int, p: int | None = None) -> RestrictionSystem:
    """q coordinate restrictions theta_1 = ... = theta_q = 0 in p parameters."""
    p = q if p is None else p
    names = tuple(f"x{i + 1}" for i in range(p))
    g = tuple(MultiPoly.variable(i, p) for i in range(q))
    return RestrictionSystem(names, (0,) * p, g)


def is_product_pairs(system: RestrictionSystem) -> bool:
    """True when the restrictions match the canonical product-pairs triple."""
    if system.p != 4 or system.q != 3:
        return False
    return tuple(system.g) == tuple(product_pairs_system().g)
