"""Seeded Monte Carlo engine for Wald-statistic divergence experiments.

Estimator draws follow the root-T asymptotic model: theta_hat = theta_bar +
T^{-1/2} L z with L the Cholesky factor of V and z standard normal.  Every
(T, replication) pair derives its own substream from (seed, T, rep), so
results are bit-identical across runs and independent of scheduling.

Wald statistics are evaluated from the exact symbolic Jacobian converted to
floats once per system; the q x q inner matrix is solved by Cholesky, never
inverted explicitly, and a draw whose inner matrix fails factorisation is
reported, not regularised away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .polycore import MultiPoly
from .rates import Covariance, RateReport, charpoly_coeffs, build_B, min_degree_generic
from .restriction import RestrictionSystem, jacobian, recenter

CONDITION_BOUND = 1e12


class CholeskyFailureError(ValueError):
    """Covariance (or perturbed covariance) is not usable as SPD."""


class SingularMetricError(ArithmeticError):
    """The q x q inner Wald matrix failed factorisation for a draw."""


class JacobiConvergenceError(ArithmeticError):
    """Cyclic Jacobi sweeps did not reach the off-diagonal tolerance."""


class ExcessiveSingularDrawsError(ArithmeticError):
    """More than the tolerated fraction of draws had singular inner matrices."""


class GenericCovarianceError(ValueError):
    """The covariance shows no degree degeneracy, so no vanishing is predicted."""


@dataclass(frozen=True)
class EstimatorModel:
    """Asymptotic estimator model: null point, covariance, and V-hat mode.

    ``vhat_mode`` is ``"exact"`` (V-hat = V) or ``"perturbed"`` (V-hat =
    V + scale * T^{-1/2} * W for a random symmetric W, re-drawn up to ten
    times until SPD).
    """

    theta_bar: np.ndarray
    V: np.ndarray
    vhat_mode: str = "exact"
    vhat_scale: float = 0.0

    def __post_init__(self):
        theta = np.asarray(self.theta_bar, dtype=float)
        V = np.asarray(self.V, dtype=float)
        object.__setattr__(self, "theta_bar", theta)
        object.__setattr__(self, "V", V)
        if V.shape != (theta.size, theta.size):
            raise ValueError("V must be p x p for a p-dimensional theta_bar")
        if not np.allclose(V, V.T, rtol=0, atol=1e-12 * max(1.0, np.abs(V).max())):
            raise CholeskyFailureError("V is not symmetric")
        if self.vhat_mode not in ("exact", "perturbed"):
            raise ValueError(f"unknown vhat_mode {self.vhat_mode!r}")
        try:
            L = np.linalg.cholesky(V)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailureError("V has no Cholesky factorisation") from exc
        if (np.diag(L) ** 2 <= 1e-12).any():
            raise CholeskyFailureError("V has a Cholesky pivot below tolerance")
        object.__setattr__(self, "_chol", L)

    @property
    def p(self) -> int:
        return self.theta_bar.size


def _substream(seed: int, T: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, T, rep])


def draw_estimate(model: EstimatorModel, T: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """One estimator draw: theta_hat and the covariance estimate V_hat."""
    if T < 1:
        raise ValueError("T must be >= 1")
    z = rng.standard_normal(model.p)
    theta_hat = model.theta_bar + model._chol @ z / math.sqrt(T)
    if model.vhat_mode == "exact":
        return theta_hat, model.V
    for _ in range(10):
        W = rng.standard_normal((model.p, model.p))
        W = (W + W.T) / 2.0
        V_hat = model.V + model.vhat_scale / math.sqrt(T) * W
        try:
            np.linalg.cholesky(V_hat)
        except np.linalg.LinAlgError:
            continue
        return theta_hat, V_hat
    raise CholeskyFailureError("perturbed V_hat stayed non-SPD after 10 retries")


class CompiledSystem:
    """Float evaluators for g and its Jacobian, compiled once per system.

    The Jacobian is the exact symbolic derivative converted to floats, so
    simulation carries no finite-difference error.
    """

    __slots__ = ("system", "p", "q", "_g", "_jac")

    def __init__(self, system: RestrictionSystem):
        self.system = system
        self.p = system.p
        self.q = system.q
        self._g = [_compile_poly(poly) for poly in system.g]
        G = jacobian(system)
        self._jac = [
            [_compile_poly(G.entry(i, j)) for j in range(self.p)]
            for i in range(self.q)
        ]

    def g_at(self, theta: np.ndarray) -> np.ndarray:
        return np.array([f(theta) for f in self._g])

    def jacobian_at(self, theta: np.ndarray) -> np.ndarray:
        return np.array([[f(theta) for f in row] for row in self._jac])


def _compile_poly(poly: MultiPoly):
    if poly.is_zero():
        return lambda theta: 0.0
    items = poly.sorted_terms()
    exps = np.array([mono for mono, _ in items], dtype=np.int64)
    coeffs = np.array([float(c) for _, c in items])

    def evaluate(theta: np.ndarray) -> float:
        return float(coeffs @ np.prod(theta[None, :] ** exps, axis=1))

    return evaluate


def compile_system(system: RestrictionSystem) -> CompiledSystem:
    return CompiledSystem(system)


def _as_compiled(sys_or_compiled) -> CompiledSystem:
    if isinstance(sys_or_compiled, CompiledSystem):
        return sys_or_compiled
    return CompiledSystem(sys_or_compiled)


def wald_statistic(theta_hat: Sequence[float], V_hat: np.ndarray,
                   sys: RestrictionSystem | CompiledSystem, T: int) -> float:
    """W = T g' [G V-hat G']^{-1} g evaluated at theta_hat.

    Precondition: the q x q inner matrix is numerically invertible (condition
    number within CONDITION_BOUND); divergence experiments deliberately probe
    matrices near that bound, so the only raised failure is an actual
    Cholesky breakdown (SingularMetricError) -- never silent regularisation.
    The SPD system is solved through its Cholesky factor, with no explicit
    inverse formed.
    """
    comp = _as_compiled(sys)
    theta = np.asarray(theta_hat, dtype=float)
    gv = comp.g_at(theta)
    G = comp.jacobian_at(theta)
    A = G @ np.asarray(V_hat, dtype=float) @ G.T
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError("inner Wald matrix failed Cholesky") from exc
    v = np.linalg.solve(L, gv)  # g' A^{-1} g = ||L^{-1} g||^2
    return float(T) * float(v @ v)


def wald_closed_form_product_pairs(theta_hat: Sequence[float], T: int) -> float:
    """Closed-form W for the product-pairs demo (xy, xw, yz) with V = I.

    Coordinates are (x, y, z, w); serves as an independent oracle for the
    general Wald path.  The formula is the continuous extension of the
    statistic off the null variety; on the variety itself (where the inner
    matrix is singular and the statistic is exactly zero) the extension is
    generally nonzero.
    """
    x, y, z, w = (float(v) for v in theta_hat)
    denom = w * w + x * x + y * y + z * z
    if denom == 0.0:
        return 0.0
    return T * (w * w + y * y) * (x * x + z * z) / denom


def symmetric_eigenvalues(M: np.ndarray, tol: float = 1e-12,
                          max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.

    Sweeps rotate every off-diagonal pair until the off-diagonal Frobenius
    norm falls below tol * ||M||.
    """
    A = np.asarray(M, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = np.linalg.norm(A)
    if scale > 0 and np.linalg.norm(A - A.T) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric to the required tolerance")
    A = (A + A.T) / 2.0
    if n == 1:
        return A[0, :1].copy()
    target = tol * max(scale, np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, (A * A).sum() - (np.diag(A) ** 2).sum()))
        if off <= target:
            return np.sort(np.diag(A))[::-1].copy()
        for i in range(n - 1):
            for j in range(i + 1, n):
                if A[i, j] == 0.0:
                    continue
                diff = A[j, j] - A[i, i]
                if abs(A[i, j]) < 1e-36 * abs(diff):
                    t = A[i, j] / diff
                else:
                    phi = diff / (2.0 * A[i, j])
                    t = 1.0 / (abs(phi) + math.sqrt(phi * phi + 1.0))
                    if phi < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[i, i] = R[j, j] = c
                R[i, j] = s
                R[j, i] = -s
                A = R.T @ A @ R
                A = (A + A.T) / 2.0
    raise JacobiConvergenceError(f"no convergence after {max_sweeps} sweeps")


@dataclass(frozen=True)
class SimResult:
    """Per-T Wald samples, fitted divergence slope, and scaling diagnostics."""

    t_grid: tuple[int, ...]
    wald_samples: tuple[np.ndarray, ...]
    median_log_slope: float
    slope_stderr: float
    eig_trajectories: tuple[np.ndarray, ...]  # per-T medians, descending
    mu_samples: tuple[float, ...]             # per-T median of the bound ratio
    singular_fraction: float
    bound_violations: int
    rank_r: int
    beta_bar: float
    seed: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimResult):
            return NotImplemented
        return (
            self.t_grid == other.t_grid
            and all(np.array_equal(a, b) for a, b in zip(self.wald_samples, other.wald_samples))
            and self.median_log_slope == other.median_log_slope
            and self.slope_stderr == other.slope_stderr
            and all(np.array_equal(a, b) for a, b in zip(self.eig_trajectories, other.eig_trajectories))
            and self.mu_samples == other.mu_samples
            and self.singular_fraction == other.singular_fraction
            and self.bound_violations == other.bound_violations
            and self.rank_r == other.rank_r
            and self.beta_bar == other.beta_bar
            and self.seed == other.seed
        )

    @property
    def median_wald(self) -> np.ndarray:
        return np.array([float(np.median(w[np.isfinite(w)])) for w in self.wald_samples])


def _regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) by series (x < a+1) or continued fraction, to ~1e-14."""
    if x < 0 or a <= 0:
        raise ValueError("require x >= 0 and a > 0")
    if x == 0.0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        n = a
        for _ in range(500):
            n += 1.0
            term *= x / n
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return total * math.exp(-x + a * math.log(x) - lg)
    # Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(-x + a * math.log(x) - lg) * h
    return 1.0 - q


def chi_square_median(q: int) -> float:
    """Median of the chi-square distribution with q degrees of freedom.

    Bisection on the regularized lower incomplete gamma P(q/2, x/2) = 1/2.
    """
    if q < 1:
        raise ValueError("degrees of freedom must be >= 1")
    lo, hi = 0.0, 10.0 * q + 10.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if _regularized_lower_gamma(q / 2.0, mid / 2.0) < 0.5:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def fit_loglog_slope(t_grid: Sequence[int], values: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(values) against log(T), with its stderr."""
    x = np.log(np.asarray(t_grid, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    n = x.size
    xc = x - x.mean()
    slope = float((xc @ (y - y.mean())) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = max(n - 2, 1)
    stderr = float(math.sqrt((resid @ resid) / dof / (xc @ xc)))
    return slope, stderr


def _validate_grid(t_grid: Sequence[int], reps: int) -> tuple[int, ...]:
    grid = tuple(int(t) for t in t_grid)
    if len(grid) < 4:
        raise ValueError("t_grid must contain at least 4 points")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("t_grid must be strictly increasing")
    if reps < 200:
        raise ValueError("reps must be >= 200")
    return grid


def _rate_data(sys: RestrictionSystem, model: EstimatorModel,
               report: RateReport | None) -> RateReport:
    if report is not None:
        return report
    from .rates import rate_report  # local import to avoid cycles at import time

    V_exact = [[Fraction(x) for x in row] for row in np.asarray(model.V)]
    return rate_report(sys, Covariance(V_exact))


def divergence_experiment(sys: RestrictionSystem, model: EstimatorModel,
                          t_grid: Sequence[int], reps: int, seed: int,
                          report: RateReport | None = None) -> SimResult:
    """Medians of W over replications per T, with the fitted log-log slope.

    Also tracks, per draw, the block-scaled eigenvalues and the lower-bound
    ratio mu_T = min_i [T^{(s_i+1)/2} (Sg)_i]^2 / max_i lambda_i of the
    doubly-scaled inner matrix, verifying W >= T^beta_bar * mu_T pathwise.
    Draws with singular inner matrices are skipped and reported as a
    fraction; above 5% the experiment fails.
    """
    grid = _validate_grid(t_grid, reps)
    report = _rate_data(sys, model, report)
    comp = compile_system(sys)
    ech = report.echelon
    q = sys.q
    S_float = np.array([[float(v) for v in row] for row in ech.S])
    s_deg = np.array(ech.row_degrees, dtype=float)
    beta = np.array([float(b) for b in report.beta])
    beta_bar = float(report.beta_bar)
    degenerate = report.rank_r < q

    wald_all: list[np.ndarray] = []
    eig_medians: list[np.ndarray] = []
    mu_medians: list[float] = []
    singular = 0
    violations = 0
    for T in grid:
        w_vals = np.full(reps, np.nan)
        eig_vals = np.full((reps, q), np.nan)
        mu_vals = np.full(reps, np.nan)
        delta = T ** (s_deg / 2.0)
        tilde = T ** (beta / 2.0)
        for rep in range(reps):
            rng = _substream(seed, T, rep)
            theta_hat, V_hat = draw_estimate(model, T, rng)
            try:
                W = wald_statistic(theta_hat, V_hat, comp, T)
            except SingularMetricError:
                singular += 1
                continue
            w_vals[rep] = W
            gv = comp.g_at(theta_hat)
            Gm = comp.jacobian_at(theta_hat)
            SG = S_float @ Gm
            Sg = S_float @ gv
            sigma_bar = (delta[:, None] * (SG @ V_hat @ SG.T)) * delta[None, :]
            eig_vals[rep] = symmetric_eigenvalues(sigma_bar)
            if degenerate:
                sigma_hat = (tilde[:, None] * sigma_bar) * tilde[None, :]
                lam = symmetric_eigenvalues(sigma_hat)
                scaled_g = T ** ((s_deg + 1.0) / 2.0) * Sg
                mu = float(np.min(scaled_g**2) / np.max(lam))
                mu_vals[rep] = mu
                if W < T**beta_bar * mu - 1e-9:
                    violations += 1
        wald_all.append(w_vals)
        eig_medians.append(np.nanmedian(eig_vals, axis=0))
        mu_medians.append(float(np.nanmedian(mu_vals)) if degenerate else 0.0)

    total = len(grid) * reps
    fraction = singular / total
    if fraction > 0.05:
        raise ExcessiveSingularDrawsError(
            f"singular inner matrix on {fraction:.1%} of draws (threshold 5%)"
        )
    medians = [float(np.nanmedian(w)) for w in wald_all]
    slope, stderr = fit_loglog_slope(grid, medians)
    return SimResult(
        t_grid=grid,
        wald_samples=tuple(wald_all),
        median_log_slope=slope,
        slope_stderr=stderr,
        eig_trajectories=tuple(eig_medians),
        mu_samples=tuple(mu_medians),
        singular_fraction=fraction,
        bound_violations=violations,
        rank_r=report.rank_r,
        beta_bar=beta_bar,
        seed=seed,
    )


@dataclass(frozen=True)
class EigTrajectories:
    """Per-T medians of block-scaled eigenvalues, raw and rate-rescaled."""

    t_grid: tuple[int, ...]
    raw_medians: np.ndarray      # shape (len(t_grid), q), descending per row
    scaled_medians: np.ndarray   # raw * T^{beta_l}
    beta: tuple


def scaled_eigen_trajectory(sys: RestrictionSystem, model: EstimatorModel,
                            report: RateReport, t_grid: Sequence[int],
                            reps: int, seed: int,
                            vhat: np.ndarray | None = None) -> EigTrajectories:
    """Track T^{beta_l} * eigenvalue_l of the block-scaled inner matrix.

    ``vhat`` overrides the model's covariance estimate with a fixed plug-in
    matrix; this admits boundary-PSD covariances the estimator model itself
    cannot draw with.
    """
    grid = tuple(int(t) for t in t_grid)
    comp = compile_system(sys)
    ech = report.echelon
    q = sys.q
    S_float = np.array([[float(v) for v in row] for row in ech.S])
    s_deg = np.array(ech.row_degrees, dtype=float)
    beta = np.array([float(b) for b in report.beta])
    raw = np.empty((len(grid), q))
    for ti, T in enumerate(grid):
        vals = np.full((reps, q), np.nan)
        delta = T ** (s_deg / 2.0)
        for rep in range(reps):
            rng = _substream(seed, T, rep)
            theta_hat, V_hat = draw_estimate(model, T, rng)
            if vhat is not None:
                V_hat = vhat
            SG = S_float @ comp.jacobian_at(theta_hat)
            sigma_bar = (delta[:, None] * (SG @ V_hat @ SG.T)) * delta[None, :]
            vals[rep] = symmetric_eigenvalues(sigma_bar)
        raw[ti] = np.nanmedian(vals, axis=0)
    scaled = raw * np.array(grid, dtype=float)[:, None] ** beta[None, :]
    return EigTrajectories(t_grid=grid, raw_medians=raw, scaled_medians=scaled,
                           beta=tuple(report.beta))


@dataclass(frozen=True)
class VanishingResult:
    """Raw and rate-rescaled eigenvalue medians of the unscaled inner matrix."""

    t_grid: tuple[int, ...]
    raw_medians: np.ndarray     # shape (len(t_grid), q), descending per row
    scaled_medians: np.ndarray  # raw * T^{beta_l}
    beta: tuple
    m_generic: tuple
    m_at_u: tuple
    k_star: int | None          # first 1-based k with m_k(U) above generic


def vanishing_rate_experiment(sys: RestrictionSystem, U: Covariance,
                              u_t_mode: str, t_grid: Sequence[int], reps: int,
                              seed: int, generic_samples: int = 5,
                              perturb_scale: float = 0.5,
                              check_degenerate: bool = True) -> VanishingResult:
    """Eigenvalue trajectories of G(theta_hat) U_T G(theta_hat)' (no block scaling).

    The rescaling exponents come from the generic minimal degrees:
    beta_l = (m_k - m_{k-1})/2 for l >= k at the first k where U's degree
    exceeds the generic one; the scaled medians then vanish for l >= k and
    stabilise otherwise.  ``u_t_mode`` is "exact" (U_T = U) or "perturbed"
    (U_T = U + scale * T^{-1/2} W).  Estimates are drawn with identity
    covariance: only the plug-in covariance U_T enters the analysed matrix.
    """
    if u_t_mode not in ("exact", "perturbed"):
        raise ValueError(f"unknown u_t_mode {u_t_mode!r}")
    grid = tuple(int(t) for t in t_grid)
    q, p = sys.q, sys.p
    coeffs_u = charpoly_coeffs(build_B(jacobian(recenter(sys)), U))
    m_at_u = coeffs_u.m
    m_generic = tuple(
        min_degree_generic(sys, k, samples=generic_samples, rng_seed=seed + 17 * k)
        for k in range(1, q + 1)
    )
    k_star = next((k for k in range(1, q + 1) if m_at_u[k - 1] > m_generic[k - 1]), None)
    if k_star is None and check_degenerate:
        raise GenericCovarianceError(
            "the covariance has generic minimal degrees; no eigenvalue vanishes"
        )

    betas = []
    prev = 0
    for k in range(1, q + 1):
        if k_star is not None and k >= k_star:
            lo, hi = m_generic[k_star - 2] if k_star >= 2 else 0, m_generic[k_star - 1]
            betas.append(Fraction(hi - lo, 2))
        else:
            betas.append(Fraction(m_generic[k - 1] - prev, 2))
        prev = m_generic[k - 1]

    comp = compile_system(sys)
    theta_bar = np.array([float(t) for t in sys.theta_bar])
    model = EstimatorModel(theta_bar, np.eye(p))
    U_float = U.to_float()
    raw = np.empty((len(grid), q))
    for ti, T in enumerate(grid):
        vals = np.full((reps, q), np.nan)
        for rep in range(reps):
            rng = _substream(seed, T, rep)
            theta_hat, _ = draw_estimate(model, T, rng)
            if u_t_mode == "exact":
                U_T = U_float
            else:
                # PSD perturbation: U may sit on the cone boundary, where a
                # signed perturbation would leave the admissible set
                A = rng.standard_normal((p, p))
                U_T = U_float + perturb_scale / math.sqrt(T) * (A @ A.T) / p
            Gm = comp.jacobian_at(theta_hat)
            vals[rep] = symmetric_eigenvalues(Gm @ U_T @ Gm.T)
        raw[ti] = np.nanmedian(vals, axis=0)
    beta_f = np.array([float(b) for b in betas])
    scaled = raw * np.array(grid, dtype=float)[:, None] ** beta_f[None, :]
    return VanishingResult(
        t_grid=grid,
        raw_medians=raw,
        scaled_medians=scaled,
        beta=tuple(betas),
        m_generic=m_generic,
        m_at_u=m_at_u,
        k_star=k_star,
    )
