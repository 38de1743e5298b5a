"""Cross-module consistency checks runnable against any restriction system.

Each check pits two independently computed quantities against each other:
numeric eigenvalues against symbolic characteristic coefficients, the general
Wald path against a closed form, and the statistic before and after a linear
transformation of the restrictions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rates import Covariance, CharPolyCoeffs, build_B, charpoly_coeffs
from .restriction import RestrictionSystem, jacobian, recenter, transform
from .simulate import (
    compile_system,
    symmetric_eigenvalues,
    wald_closed_form_product_pairs,
    wald_statistic,
)
from .systems import is_product_pairs


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    skipped: bool = False


def _elementary_symmetric(values: np.ndarray, k: int) -> float:
    # e_k via the Newton-free product expansion: coefficients of prod (1 + v t)
    coeffs = np.zeros(values.size + 1)
    coeffs[0] = 1.0
    for v in values:
        coeffs[1:] = coeffs[1:] + v * coeffs[:-1]
    return float(coeffs[k])


def _random_box_fraction(rng: random.Random) -> Fraction:
    # magnitude in [1/2, 2], random sign: keeps all matrices O(1)-conditioned
    sign = rng.choice((-1, 1))
    return Fraction(sign * rng.randint(50, 200), 100)


def symmetric_polynomial_check(system: RestrictionSystem, npoints: int = 20,
                               seed: int = 42, rtol: float = 1e-8,
                               coeffs: CharPolyCoeffs | None = None) -> CheckResult:
    """P_k(eigenvalues of B) must equal (-1)^k a_k at random points/covariances.

    ``coeffs`` may be injected (e.g. deliberately corrupted) for negative
    controls; by default the exact coefficients are computed from the system.
    """
    rng = random.Random(seed)
    centered = recenter(system)
    G = jacobian(centered)
    worst = 0.0
    for _ in range(npoints):
        U = Covariance.random_spd(system.p, rng)
        B = build_B(G, U)
        cc = coeffs if coeffs is not None else charpoly_coeffs(B)
        point = [_random_box_fraction(rng) for _ in range(system.p)]
        B_num = np.array([[float(B.entry(i, j).evaluate(point))
                           for j in range(system.q)] for i in range(system.q)])
        lam = symmetric_eigenvalues(B_num)
        for k in range(1, system.q + 1):
            pk = _elementary_symmetric(lam, k)
            ak = (-1) ** k * float(cc.a[k - 1].evaluate(point))
            rel = abs(pk - ak) / max(abs(pk), abs(ak), 1e-300)
            worst = max(worst, rel)
    passed = worst <= rtol
    return CheckResult(
        name="symmetric-polynomial identity",
        passed=passed,
        detail=f"worst relative deviation {worst:.3e} over {npoints} points (tol {rtol:g})",
    )


def closed_form_check(system: RestrictionSystem, ndraws: int = 1000,
                      seed: int = 42, rtol: float = 1e-10) -> CheckResult:
    """General Wald path against the product-pairs closed form (identity V)."""
    if not is_product_pairs(system):
        return CheckResult(
            name="closed-form oracle",
            passed=True,
            detail="skipped: restrictions are not the product-pairs triple",
            skipped=True,
        )
    rng = np.random.default_rng([seed, 2718])
    comp = compile_system(system)
    worst = 0.0
    for _ in range(ndraws):
        theta = rng.uniform(0.5, 2.0, size=4) * rng.choice([-1.0, 1.0], size=4)
        T = int(rng.integers(1, 10_000))
        w_general = wald_statistic(theta, np.eye(4), comp, T)
        w_closed = wald_closed_form_product_pairs(theta, T)
        worst = max(worst, abs(w_general - w_closed) / max(abs(w_closed), 1e-300))
    return CheckResult(
        name="closed-form oracle",
        passed=worst <= rtol,
        detail=f"worst relative deviation {worst:.3e} over {ndraws} draws (tol {rtol:g})",
    )


def s_invariance_check(system: RestrictionSystem, n_transforms: int = 10,
                       ndraws: int = 20, seed: int = 42,
                       rtol: float = 1e-8) -> CheckResult:
    """W computed from S @ g must equal W from g pathwise at fixed draws."""
    rng = random.Random(seed)
    nprng = np.random.default_rng([seed, 31415])
    comp = compile_system(system)
    q, p = system.q, system.p
    worst = 0.0
    for _ in range(n_transforms):
        while True:
            S = [[_random_box_fraction(rng) for _ in range(q)] for _ in range(q)]
            if abs(np.linalg.det(np.array(S, dtype=float))) > 1e-3:
                break
        comp_s = compile_system(transform(system, S))
        for _ in range(ndraws):
            theta = nprng.uniform(0.5, 2.0, size=p) * nprng.choice([-1.0, 1.0], size=p)
            A = nprng.standard_normal((p, p))
            V_hat = A @ A.T + 0.5 * np.eye(p)
            w_plain = wald_statistic(theta, V_hat, comp, 100)
            w_trans = wald_statistic(theta, V_hat, comp_s, 100)
            worst = max(worst, abs(w_plain - w_trans) / max(abs(w_plain), 1e-300))
    passed = worst <= rtol
    return CheckResult(
        name="transformation invariance",
        passed=passed,
        detail=f"worst relative deviation {worst:.3e} over "
               f"{n_transforms}x{ndraws} draws (tol {rtol:g})",
    )


def run_all(system: RestrictionSystem, seed: int = 42) -> list[CheckResult]:
    return [
        symmetric_polynomial_check(system, seed=seed),
        closed_form_check(system, seed=seed),
        s_invariance_check(system, seed=seed),
    ]
