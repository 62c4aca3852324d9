mod common;

use gest_core::{Cohort, Trajectory};
use proptest::prelude::*;

proptest! {
    #[test]
    fn duration_is_additive(traj in common::trajectory(10.0), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let mut pts = [a * 16.0, b * 16.0, c * 16.0];
        pts.sort_by(f64::total_cmp);
        let [t1, t2, t3] = pts;
        let whole = traj.duration_treated(t1, t3).unwrap();
        let split = traj.duration_treated(t1, t2).unwrap() + traj.duration_treated(t2, t3).unwrap();
        prop_assert!((whole - split).abs() < 1e-12);
        prop_assert!(whole >= 0.0 && whole <= t3 - t1 + 1e-12);
    }

    #[test]
    fn covariates_constant_between_grid_points(traj in common::trajectory(10.0)) {
        let grid = traj.segment_grid(0.0, traj.tau);
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let first = traj.covariates_at(a + 0.01 * (b - a)).unwrap();
            for frac in [0.25, 0.5, 0.99] {
                prop_assert_eq!(traj.covariates_at(a + frac * (b - a)).unwrap(), first);
            }
        }
    }

    #[test]
    fn csv_round_trip(trajs in proptest::collection::vec(common::trajectory(7.5), 0..20)) {
        let patients: Vec<Trajectory> = trajs
            .into_iter()
            .enumerate()
            .map(|(i, mut t)| { t.id = format!("id{i}"); t })
            .collect();
        let cohort = Cohort::new(patients).unwrap();
        let mut buf = Vec::new();
        cohort.to_writer(&mut buf).unwrap();
        let back = Cohort::from_reader(buf.as_slice()).unwrap();
        prop_assert_eq!(back, cohort);
    }
}

#[test]
fn save_and_load_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    let cohort = Cohort::new(vec![
        Trajectory::new("a", true, Some(0.1), Some(2.0), 5.0, 10.0).unwrap(),
        Trajectory::new("b", false, None, None, 12.5, 10.0).unwrap(),
    ])
    .unwrap();
    cohort.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("id,azt,pcp_time,treat_start,y,tau\n"));
    assert_eq!(Cohort::load(&path).unwrap(), cohort);
}
