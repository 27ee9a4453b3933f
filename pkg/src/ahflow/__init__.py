"""Numerical simulator and verification suite for the normalized, gauge-fixed
flow of rotationally symmetric, asymptotically hyperbolic metrics.

The evolved field is the orbit sectional curvature on a compactified radial
grid; everything else — the metric coefficient, the radial curvature, the
deviation-from-hyperbolic norm — is derived from it.  See README.md for the
command-line interface and the acceptance suite.
"""

from .errors import (
    AHFlowError,
    ConfigError,
    DegenerateFit,
    InadmissibleSpec,
    InsufficientSnapshots,
    IoError,
    MinimalSphereViolation,
    MissingColumn,
    NonpositiveMetric,
    StepUnderflow,
)
from .geometry import (
    CurvatureProfile,
    RadialGrid,
    bianchi_residual,
    f_from_lambda,
    gauge_vector_field,
    gauss_codazzi_residual,
    kappa_from_f,
    kappa_from_lambda,
    lambda_from_f,
    mean_curvature,
    nrf_to_rf_time,
    rm_plus_k_norm,
)
from .initial_data import (
    InitialDataSpec,
    ValidationReport,
    build_profile,
    evaluate_family,
    load_table,
    validate,
)
from .evolution import (
    FlowState,
    SolverConfig,
    Trajectory,
    rhs_lambda,
    rhs_lambda_direct,
    rhs_w,
    run,
    step,
)
from .diagnostics import (
    BoundCheckEntry,
    BoundCheckReport,
    DecayFit,
    DiagnosticsRecord,
    check_kappa_decay,
    check_lambda_lower_envelope,
    check_lambda_upper_envelopes,
    check_rm_decay,
    evolution_residuals,
    fit_decay,
    record,
)

__version__ = "0.1.0"
