//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use gest_core::{simulate_cohort, Cohort, CustomRate, DgpConfig, ShiftModel, Trajectory};

/// Simulated cohort with the default configuration.
pub fn cohort(n: usize, psi0: f64) -> Cohort {
    let cfg = DgpConfig {
        n,
        psi0,
        ..DgpConfig::default()
    };
    simulate_cohort(&cfg)
        .expect("default configuration is valid")
        .0
}

/// Treated patient with PCP before initiation.
pub fn trajectory() -> Trajectory {
    Trajectory::new("bench", true, Some(1.0), Some(2.0), 7.5, 10.0).expect("valid trajectory")
}

/// `D = -0.1 y` on treated time, which needs the general ODE path.
pub fn decay_model() -> ShiftModel {
    ShiftModel::Custom(CustomRate {
        name: "decay".into(),
        dim: 1,
        rate: Arc::new(|y, _t, ctx, _psi| if ctx.treated { -0.1 * y } else { 0.0 }),
        bound: 1.0,
        lipschitz_y: 0.1,
        lipschitz_t: 0.0,
    })
}
