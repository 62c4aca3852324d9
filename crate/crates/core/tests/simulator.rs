mod common;

use gest_core::{
    invert_piecewise_hazard, psi_scan, save_latents, simulate_cohort, simulate_cohort_replicate,
    solve, treated_outcome, weibull_mle, x_closed_form, Cohort, DgpConfig, HazardKind,
    HazardSegment, MleOptions, ShiftModel, ShiftParams, SolveOptions, WeibullPh,
};
use proptest::prelude::*;

fn cfg(n: usize, seed: u64, psi0: f64) -> DgpConfig {
    DgpConfig {
        n,
        seed,
        psi0,
        ..DgpConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patients_satisfy_the_outcome_transform(seed in any::<u64>(), psi0 in -1.0f64..1.5) {
        let c = cfg(50, seed, psi0);
        let (cohort, sims) = simulate_cohort(&c).unwrap();
        prop_assert_eq!(cohort.len(), 50);
        for s in &sims {
            let tr = &s.traj;
            match tr.treat_start {
                None => {
                    prop_assert_eq!(tr.y, s.y0);
                    prop_assert!(s.t_latent >= s.y0.min(c.tau));
                }
                Some(t) => {
                    prop_assert_eq!(t, s.t_latent);
                    prop_assert!(t < s.y0 && t < c.tau);
                    if psi0.exp() * (c.tau - t) >= s.y0 - t {
                        let expect = t + (-psi0).exp() * (s.y0 - t);
                        prop_assert!((tr.y - expect).abs() <= 1e-12 * expect);
                    }
                }
            }
            if let Some(p) = tr.pcp_time {
                prop_assert!(p <= tr.y);
            }
            // the mimicking process at the truth recovers the untreated outcome
            let x0 = x_closed_form(tr, &ShiftParams::scalar(psi0), &ShiftModel::SimpleAft, 0.0).unwrap();
            prop_assert!((x0 - s.y0).abs() <= 1e-12 * s.y0, "{} vs {}", x0, s.y0);
        }
    }
}

#[test]
fn mimic_equals_y0_exactly_at_zero_effect() {
    let (_, sims) = simulate_cohort(&cfg(2000, 3, 0.0)).unwrap();
    for s in &sims {
        assert_eq!(s.traj.y, s.y0);
    }
}

#[test]
fn doubled_residual_life_example() {
    assert_eq!(treated_outcome(2.0, 5.0, -(2f64.ln()), 10.0), 8.0);
}

#[test]
fn inversion_examples() {
    let seg = |a: f64, b: f64, kind| HazardSegment { a, b, kind };
    let one = [seg(0.0, f64::INFINITY, HazardKind::Constant(1.0))];
    assert!((invert_piecewise_hazard(&one, (-2f64).exp()).unwrap() - 2.0).abs() < 1e-14);
    let capped = [
        seg(0.0, 1.0, HazardKind::Constant(2.0)),
        seg(1.0, f64::INFINITY, HazardKind::Constant(0.0)),
    ];
    assert_eq!(
        invert_piecewise_hazard(&capped, (-3f64).exp()).unwrap(),
        f64::INFINITY
    );
    let weib = [seg(
        0.0,
        f64::INFINITY,
        HazardKind::Weibull {
            scale: 1.0,
            gamma: 2.0,
        },
    )];
    assert!((invert_piecewise_hazard(&weib, (-4f64).exp()).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn initiation_rate_matches_cumulative_hazard() {
    let c = cfg(100_000, 19, 2f64.ln());
    let (_, sims) = simulate_cohort(&c).unwrap();
    let n = sims.len() as f64;
    let observed = sims.iter().filter(|s| s.traj.initiated()).count() as f64 / n;
    let expected = sims
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d = common::redraw(&c, 0, i as u64);
            assert_eq!(d.u_death, s.u_death);
            1.0 - (-common::initiation_hazard(&c, &d, s.y0.min(c.tau))).exp()
        })
        .sum::<f64>()
        / n;
    let se = (expected * (1.0 - expected) / n).sqrt();
    assert!(
        (observed - expected).abs() <= 3.0 * se,
        "{observed} vs {expected}"
    );
}

#[test]
fn initiation_draw_is_independent_of_death_draw_within_strata() {
    let c = cfg(100_000, 29, 2f64.ln());
    let mut strata: [(Vec<f64>, Vec<f64>); 4] = Default::default();
    for i in 0..c.n as u64 {
        let d = common::redraw(&c, 0, i);
        // latent initiation time on the untreated path without the at-risk cap
        let target = -d.u_init.ln();
        let (mut lo, mut hi) = (0.0, 1.0);
        while common::initiation_hazard(&c, &d, hi) < target {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if common::initiation_hazard(&c, &d, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = usize::from(d.azt) * 2 + usize::from(d.pcp < hi);
        strata[k].0.push(hi);
        strata[k].1.push(d.u_death);
    }
    for (k, (t, u)) in strata.iter().enumerate() {
        let tau = common::kendall_tau(t, u);
        let se = common::kendall_se(t.len());
        assert!(tau.abs() <= 3.0 * se, "stratum {k}: tau {tau} se {se}");
    }
}

#[test]
fn initiation_never_ties_with_the_outcome() {
    let (_, sims) = simulate_cohort(&cfg(1_000_000, 47, 2f64.ln())).unwrap();
    assert!(sims.iter().all(|s| s.traj.treat_start != Some(s.traj.y)));
}

#[test]
fn cohorts_are_deterministic_and_seed_dependent() {
    let a = simulate_cohort(&cfg(500, 5, 2f64.ln())).unwrap();
    let b = simulate_cohort(&cfg(500, 5, 2f64.ln())).unwrap();
    let other = simulate_cohort(&cfg(500, 6, 2f64.ln())).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, other.0);
    let rep = simulate_cohort_replicate(&cfg(500, 5, 2f64.ln()), 1).unwrap();
    assert_ne!(a.0, rep.0);
    assert_eq!(a.0.patients()[0].id, "p1");
    assert!(simulate_cohort(&cfg(0, 5, 0.0)).unwrap().0.is_empty());
}

#[test]
fn confounding_biases_an_estimate_that_ignores_covariates() {
    let c = cfg(10_000, 53, 2f64.ln());
    let (cohort, _) = simulate_cohort(&c).unwrap();
    let proper = solve(
        &cohort,
        &ShiftModel::SimpleAft,
        &ShiftParams::scalar(0.0),
        &SolveOptions::default(),
    )
    .unwrap();
    assert!((proper.params[4] - c.psi0).abs() <= 3.0 * proper.se[4]);

    let opts = MleOptions {
        free: [true, true, false, false],
        ..MleOptions::default()
    };
    let naive_fit = weibull_mle(&cohort, &WeibullPh::new(0.1, 1.0, 0.0, 0.0), &opts).unwrap();
    let naive = naive_root(&cohort, &naive_fit.params);
    assert!(
        (naive - c.psi0).abs() > 3.0 * proper.se[4],
        "naive {naive} truth {} se {}",
        c.psi0,
        proper.se[4]
    );
}

fn naive_root(cohort: &Cohort, w: &WeibullPh) -> f64 {
    let scan = psi_scan(cohort, &ShiftModel::SimpleAft, w, -3.0, 3.0, 121).unwrap();
    let pair = scan
        .windows(2)
        .find(|p| p[0].1.signum() != p[1].1.signum())
        .expect("sign change");
    let ((a, fa), (b, fb)) = (pair[0], pair[1]);
    a - fa * (b - a) / (fb - fa)
}

#[test]
fn latents_are_written_with_header() {
    let (_, sims) = simulate_cohort(&cfg(20, 2, 2f64.ln())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("latents.csv");
    save_latents(&sims, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,y0,t_latent"));
    assert_eq!(lines.count(), 20);
    assert!(text.contains("inf"));
}
