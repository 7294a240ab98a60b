"""Semiparametric hazard regression with noisy covariates.

Estimates theta = (beta, gamma) in the proportional-hazards intensity
eta_gamma(t) f_beta(Z) when the covariate Z is only observed through
U = Z + eps with known error law: weighted least-squares criteria evaluated
at the truth (oracle), at U (naive), through a deconvolution smoother
(theta_1), or through unbiased correction functions (theta_2), plus the
population theory, convergence-rate table, and a Monte-Carlo harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DimensionError,
    HazerrError,
    NonIntegrableError,
    OptimizationError,
    PositivityError,
    QuadratureError,
    SingularHessianError,
    StudyFailureError,
    UnsupportedPairError,
)
from .families import (
    AffineBaseline,
    Baseline,
    BumpWeight,
    CauchyError,
    CauchyRisk,
    ConstantBaseline,
    CosineRisk,
    ErrorDensity,
    ExponentialRisk,
    GaussianError,
    GaussianWeight,
    IndicatorRisk,
    LaplaceError,
    LaplaceKinkRisk,
    LogLinearBaseline,
    NoiseSmoothness,
    PolyGaussianWeight,
    PolygonalRisk,
    PolynomialRisk,
    RelativeRisk,
    ScaledCauchyRisk,
    ScaledCosineRisk,
    ScaledPolynomialRisk,
    SmoothnessClass,
    Theta,
    UnitWeight,
    WeightFunction,
    WeightedRiskSpec,
    classify_weighted_risk,
)
from .simulate import (
    CensorLaw,
    CovariateLaw,
    Dataset,
    ExpCensor,
    NoCensor,
    StudyConfig,
    TruncGaussianCovariate,
    TwoPointCovariate,
    UniformCensor,
    UniformCovariate,
    sample_dataset,
)
from .deconv import (
    DeconvKernelSpec,
    bias_variance_norms,
    deconv_smooth,
    default_bandwidth,
    kernel_smooth,
)
from .criteria import (
    EmpiricalCriterion,
    FourierCriterion,
    ModelSpec,
    naive_criterion,
    oracle_criterion,
    path_integrals,
    population_criterion,
    population_hessian,
    s1_criterion,
    s2_criterion,
)
from .estimate import (
    CorrectionFunctions,
    DeconvCorrections,
    EstimateResult,
    MgfCorrections,
    ThetaBox,
    TrigCorrections,
    build_corrections,
    default_box,
    estimate_naive,
    estimate_oracle,
    estimate_theta1,
    estimate_theta2,
    minimize,
    sandwich_covariance,
)
from .rates import (
    RateSpec,
    classify_rate,
    parametric_rate_predicate,
    rate_exponent_A,
    rate_lookup,
)
from .mc import (
    EstimatorSpec,
    NormalityReport,
    StudySummary,
    lemma_a1_check,
    normality_check,
    rate_regression,
    run_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
