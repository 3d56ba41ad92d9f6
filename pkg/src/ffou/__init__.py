"""Forced fractional Ornstein-Uhlenbeck process: exact noise generators,
analytic moment kernels in two cross-checkable representations, path
simulation, and Monte Carlo first-passage-time estimation."""

from .fgn import (
    CholeskyStream,
    FgnSample,
    TimeGrid,
    fbm_covariance_matrix,
    fbm_from_increments,
    fgn_autocov,
    fgn_batch,
    fgn_covariance_matrix,
    simulate_fgn_circulant,
)
from .forcing import (
    Constant,
    Degenerate,
    ExpDecay,
    Exponential,
    HeavisideSum,
    Periodic,
    PositiveStable,
    Zero,
    activation_cdf,
    activation_pdf,
    activation_sample,
    activation_sf,
    forcing_cov,
    forcing_mean,
    sample_forcing_path,
)
from .fpt import FptConfig, FptResult, estimate_fpt, first_crossing, fpt_histogram
from .kernels import (
    ModelParams,
    QuadratureConfig,
    TailFit,
    c_h_constant,
    cov_expansion,
    cov_fou,
    cov_fou_harmonizable,
    cov_fou_quadrature,
    cov_limit_h0,
    cov_limit_h1,
    rho_stationary,
    tail_fit,
    var_asymptote,
)
from .sim import (
    MomentReport,
    PathEnsemble,
    cov_v,
    ensemble_stats,
    mean_v,
    simulate_ensemble,
    simulate_euler,
    simulate_trapezoid,
    trapezoid_coefficients,
    var_v,
)
from .validation import run_validation

__version__ = "0.1.0"
