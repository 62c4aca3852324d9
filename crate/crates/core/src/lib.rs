//! Continuous-time g-estimation of structural nested failure time models.
//!
//! The crate covers observed trajectories, infinitesimal shift functions and
//! the mimicking process `X_psi`, the Weibull initiation intensity, joint
//! estimation with sandwich variance, a score test of no treatment effect and
//! a data-generating process for validation.

// Negated float comparisons reject NaN; index loops walk parallel matrices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimation;
mod integrals;
pub mod intensity;
mod ode;
pub mod rng;
pub mod shift;
pub mod simulator;
pub mod special;
pub mod trajectory;

pub use error::{GestError, Result};
pub use estimation::{
    alpha_diagnostic, g_patient, parameter_names, psi_scan, sandwich, solve, stacked,
    stacked_jacobian, AlphaDiagnostic, Diagnostics, EstimationResult, GVector, Sandwich,
    SolveOptions, Stacked,
};
pub use intensity::{
    cumulative_weighted, lambda_eval, segment_primitive, weibull_mle, MleOptions, PrimitiveKind,
    WeibullFit, WeibullPh, Weight,
};
pub use rng::PatientStream;
pub use score_test::{
    confidence_region_by_inversion, inversion_scan, run_test, HExtra, TestOptions, TestResult,
};
pub use shift::{
    check_regularity, d_eval, dx_dpsi, x_closed_form, x_ode, x_ode_from, x_ode_path, CustomRate,
    RegularityReport, ShiftContext, ShiftModel, ShiftParams,
};
pub use simulator::{
    invert_piecewise_hazard, save_latents, simulate_cohort, simulate_cohort_replicate,
    simulate_patient, treated_outcome, write_latents, DgpConfig, HazardKind, HazardSegment,
    SimulatedPatient,
};
pub use special::{chi_square_sf, normal_quantile};
pub use trajectory::{Cohort, Covariates, Trajectory};
