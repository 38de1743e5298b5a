"""Symbolic-numeric toolkit for Wald tests of polynomial restrictions.

Given a vector of polynomial restrictions and a null parameter point, the
package decides the FRALD / FRALD-T property of the Jacobian, predicts the
divergence exponent of the Wald statistic from exact characteristic-polynomial
degree analysis, and verifies the prediction by seeded Monte Carlo simulation.
"""

__version__ = "0.1.0"

from .polycore import (
    INF_DEGREE,
    FieldMismatchError,
    HomogeneousDecomposition,
    MultiPoly,
    PolyParseError,
    Scalar,
    parse_polynomial,
    parse_scalar,
)
from .restriction import (
    EchelonForm,
    FraldVerdict,
    NullViolatedError,
    PolyMatrix,
    RankDeficientError,
    RestrictionSystem,
    ZeroRowError,
    echelonize,
    frald_check,
    jacobian,
    lowest_matrix,
    poly_rank,
    recenter,
    transform,
)
from .rates import (
    CharPolyCoeffs,
    Covariance,
    NegativeTDegreeError,
    NonSpdError,
    QTooLargeError,
    RateReport,
    build_B,
    charpoly_coeffs,
    min_degree_generic,
    principal_minor_sum,
    rate_report,
    t_graded_coeffs,
)
from .simulate import (
    CholeskyFailureError,
    CompiledSystem,
    EigTrajectories,
    EstimatorModel,
    ExcessiveSingularDrawsError,
    GenericCovarianceError,
    JacobiConvergenceError,
    SimResult,
    SingularMetricError,
    VanishingResult,
    chi_square_median,
    compile_system,
    divergence_experiment,
    draw_estimate,
    fit_loglog_slope,
    scaled_eigen_trajectory,
    symmetric_eigenvalues,
    vanishing_rate_experiment,
    wald_closed_form_product_pairs,
    wald_statistic,
)
from .systems import linear_system, product_pairs_system, surd_covariance

__all__ = [name for name in dir() if not name.startswith("_")]
