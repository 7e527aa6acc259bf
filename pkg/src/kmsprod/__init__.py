"""Exact series statistics and performance metrics for the product of two
independent kappa-mu shadowed fading variables, with built-in quadrature and
Monte Carlo oracles."""

from .errors import (
    CaseMismatchError,
    DomainError,
    KmsprodError,
    MellinStripError,
    NonConvergenceError,
    ParameterError,
    PoleArgumentError,
    QuadratureError,
)
from .fading import (
    DerivedCoeffs,
    ShadowedParams,
    cdf_single,
    cdf_single_grid,
    derive_coeffs,
    mellin_single,
    pdf_single,
    pdf_single_many,
    sample_single,
)
from .metrics import (
    MetricReport,
    RelayModel,
    amount_of_fading,
    cascade_report,
    combine_min_outage,
    cqei,
    op_cascade,
    op_relay_variable_gain,
)
from .oracle import (
    EcdfSummary,
    cdf_by_convolution_grid,
    compare_ecdf,
    pdf_by_convolution,
    sample_product,
)
from .product import (
    GapCase,
    IllConditionedGapWarning,
    ProductModel,
    cdf_grid,
    cdf_product,
    coeff_A,
    coeff_B,
    coeff_C,
    coeff_D,
    mellin_product,
    mgf_product,
    moment_mixed,
    moment_product,
    pdf_grid,
    pdf_product,
)
from .specfun import (
    CANCELLATION_LIMIT,
    DEFAULT_POLICY,
    PrecisionLossWarning,
    SeriesValue,
    TruncationPolicy,
    digamma,
    gauss_2f1,
    gauss_2f1_db_at_neg_int,
    kummer_1f1,
    ln_gamma_signed,
    pochhammer,
)

__version__ = "0.1.0"

__all__ = [
    "CANCELLATION_LIMIT",
    "CaseMismatchError",
    "DEFAULT_POLICY",
    "DerivedCoeffs",
    "DomainError",
    "EcdfSummary",
    "GapCase",
    "IllConditionedGapWarning",
    "KmsprodError",
    "MellinStripError",
    "MetricReport",
    "NonConvergenceError",
    "ParameterError",
    "PoleArgumentError",
    "PrecisionLossWarning",
    "ProductModel",
    "QuadratureError",
    "RelayModel",
    "SeriesValue",
    "ShadowedParams",
    "TruncationPolicy",
    "amount_of_fading",
    "cascade_report",
    "cdf_by_convolution_grid",
    "cdf_grid",
    "cdf_product",
    "cdf_single",
    "cdf_single_grid",
    "coeff_A",
    "coeff_B",
    "coeff_C",
    "coeff_D",
    "combine_min_outage",
    "compare_ecdf",
    "cqei",
    "derive_coeffs",
    "digamma",
    "gauss_2f1",
    "gauss_2f1_db_at_neg_int",
    "kummer_1f1",
    "ln_gamma_signed",
    "mellin_product",
    "mellin_single",
    "mgf_product",
    "moment_mixed",
    "moment_product",
    "op_cascade",
    "op_relay_variable_gain",
    "pdf_by_convolution",
    "pdf_grid",
    "pdf_product",
    "pdf_single",
    "pdf_single_many",
    "pochhammer",
    "sample_product",
    "sample_single",
    "__version__",
]
