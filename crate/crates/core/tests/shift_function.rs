mod common;

use std::sync::Arc;

use gest_core::{
    dx_dpsi, x_closed_form, x_ode, x_ode_from, CustomRate, ShiftModel, ShiftParams, Trajectory,
};
use proptest::prelude::*;

fn decay(rate: f64) -> ShiftModel {
    ShiftModel::Custom(CustomRate {
        name: "decay".into(),
        dim: 1,
        rate: Arc::new(move |y, _t, _ctx, _psi| -rate * y),
        bound: f64::INFINITY,
        lipschitz_y: rate,
        lipschitz_t: 0.0,
    })
}

proptest! {
    #[test]
    fn closed_form_matches_ode(traj in common::trajectory(10.0), psi in -2.0f64..2.0, f in 0.0f64..1.0) {
        let t = f * traj.tau;
        let p = ShiftParams::scalar(psi);
        let cf = x_closed_form(&traj, &p, &ShiftModel::SimpleAft, t).unwrap();
        let ode = x_ode(&traj, &p, &ShiftModel::SimpleAft, t, 1e-10).unwrap();
        prop_assert!((cf - ode).abs() <= 1e-8, "{} vs {}", cf, ode);
    }

    #[test]
    fn stratified_closed_form_matches_ode(
        traj in common::trajectory(10.0),
        psi in proptest::array::uniform3(-1.0f64..1.0),
        f in 0.0f64..1.0,
    ) {
        let t = f * traj.tau;
        let p = ShiftParams(psi.to_vec());
        let cf = x_closed_form(&traj, &p, &ShiftModel::StratifiedAft, t).unwrap();
        let ode = x_ode(&traj, &p, &ShiftModel::StratifiedAft, t, 1e-10).unwrap();
        prop_assert!((cf - ode).abs() <= 1e-8);
    }

    #[test]
    fn flow_property(traj in common::trajectory(10.0), psi in -1.5f64..1.5, f in 0.0f64..1.0, g in 0.0f64..1.0) {
        let p = ShiftParams::scalar(psi);
        let start = traj.tau.min(traj.y);
        let s = f * start;
        let t = g * s;
        for model in [ShiftModel::SimpleAft, decay(0.1)] {
            let direct = x_ode(&traj, &p, &model, t, 1e-11).unwrap();
            let mid = x_ode(&traj, &p, &model, s, 1e-11).unwrap();
            let composed = x_ode_from(&traj, &p, &model, s, mid, t, 1e-11).unwrap();
            prop_assert!((direct - composed).abs() <= 1e-8);
        }
    }

    #[test]
    fn gronwall_perturbation_bound(traj in common::trajectory(10.0), delta in -1.0f64..1.0, f in 0.0f64..1.0) {
        let p = ShiftParams::scalar(0.4);
        let start = traj.tau.min(traj.y);
        let t = f * start;
        for (model, lipschitz) in [(ShiftModel::SimpleAft, 0.0), (decay(0.1), 0.1)] {
            let x1 = x_ode_from(&traj, &p, &model, start, traj.y, t, 1e-11).unwrap();
            let x2 = x_ode_from(&traj, &p, &model, start, traj.y + delta, t, 1e-11).unwrap();
            let bound = delta.abs() * (lipschitz * (start - t)).exp();
            prop_assert!((x1 - x2).abs() <= bound + 1e-8);
        }
    }

    #[test]
    fn mimic_is_monotone_in_psi(traj in common::trajectory(10.0), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let x_lo = x_closed_form(&traj, &ShiftParams::scalar(lo), &ShiftModel::SimpleAft, 0.0).unwrap();
        let x_hi = x_closed_form(&traj, &ShiftParams::scalar(hi), &ShiftModel::SimpleAft, 0.0).unwrap();
        prop_assert!(x_lo <= x_hi);
    }

    #[test]
    fn derivative_matches_finite_difference(traj in common::trajectory(10.0), psi in -1.5f64..1.5, f in 0.0f64..1.0) {
        let t = f * traj.tau;
        let h = 1e-6;
        let m = ShiftModel::SimpleAft;
        let up = x_closed_form(&traj, &ShiftParams::scalar(psi + h), &m, t).unwrap();
        let down = x_closed_form(&traj, &ShiftParams::scalar(psi - h), &m, t).unwrap();
        let exact = dx_dpsi(&traj, &ShiftParams::scalar(psi), &m, t).unwrap()[0];
        prop_assert!((exact - (up - down) / (2.0 * h)).abs() <= 1e-6 * (1.0 + exact.abs()));
    }
}

#[test]
fn exponential_custom_rate_has_analytic_solution() {
    let traj = Trajectory::new("q", false, None, None, 2.0, 1.0).unwrap();
    let p = ShiftParams::scalar(0.0);
    let x = x_ode(&traj, &p, &decay(0.1), 0.0, 1e-10).unwrap();
    assert!((x - 2.0 * 0.1f64.exp()).abs() < 1e-8);
    // flow through an intermediate time
    let mid = x_ode(&traj, &p, &decay(0.1), 0.4, 1e-10).unwrap();
    assert!((mid - 2.0 * 0.06f64.exp()).abs() < 1e-8);
    let composed = x_ode_from(&traj, &p, &decay(0.1), 0.4, mid, 0.0, 1e-10).unwrap();
    assert!((composed - 2.0 * 0.1f64.exp()).abs() < 1e-8);
}

#[test]
fn window_restricted_matches_simple_when_window_is_wide() {
    let traj = Trajectory::new("p", true, Some(1.0), Some(2.0), 5.0, 10.0).unwrap();
    let wide = ShiftModel::WindowRestricted {
        window: 100.0,
        inner: Box::new(ShiftModel::SimpleAft),
    };
    let p = ShiftParams::scalar(std::f64::consts::LN_2);
    for t in [0.0, 1.0, 3.0, 6.0] {
        let a = x_ode(&traj, &p, &wide, t, 1e-10).unwrap();
        let b = x_closed_form(&traj, &p, &ShiftModel::SimpleAft, t).unwrap();
        assert!((a - b).abs() < 1e-8);
    }
    // a narrow window switches the shift off while X - t exceeds it
    let narrow = ShiftModel::WindowRestricted {
        window: 1.0,
        inner: Box::new(ShiftModel::SimpleAft),
    };
    // X(s) = 10 - s while on; X - s reaches 1 at s = 4.5, then X stays 5.5
    for t in [0.0, 3.0, 4.5] {
        let x = x_ode(&traj, &p, &narrow, t, 1e-10).unwrap();
        assert!((x - 5.5).abs() < 1e-8, "t={t}: {x}");
    }
    let x = x_ode(&traj, &p, &narrow, 4.8, 1e-10).unwrap();
    assert!((x - 5.2).abs() < 1e-8);
}
