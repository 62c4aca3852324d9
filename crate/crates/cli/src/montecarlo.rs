//! Replicated simulate, estimate and test runs with aggregate summaries.
//!
//! Replicate `r` simulates from streams `(seed, r, i)`, so every record is a
//! pure function of `(config, r)`. Records are collected in replicate order
//! and summaries are accumulated in that order, which keeps the summary
//! byte-identical for any pool width.

use std::path::Path;
use std::time::{Duration, Instant};

use gest_core::{
    alpha_diagnostic, normal_quantile, parameter_names, run_test, simulate_cohort_replicate, solve,
    Cohort, DgpConfig, HExtra, ShiftParams, TestOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{fractions, parse_h_extra, write_json};
use crate::config::{Check, EstimationConfig, Model, RunConfig, TestConfig};
use crate::error::{io_context, CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub ok: bool,
    pub error: Option<String>,
    pub initiated_fraction: f64,
    pub death_fraction: f64,
    /// Empty unless the estimate check ran.
    pub params: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    /// Largest entry of the `theta`-`psi` block of the sandwich covariance.
    pub max_theta_psi_cov: Option<f64>,
    pub test_statistic: Option<f64>,
    pub test_p_value: Option<f64>,
    /// p-value of the test of `D = D_psi0`.
    pub inversion_p_value: Option<f64>,
    /// `(alpha, se)` with the mimicking process at the true `psi`.
    pub alpha_truth: Option<(f64, f64)>,
    /// `(alpha, se)` with the mimicking process at `psi = 0`.
    pub alpha_null: Option<(f64, f64)>,
}

/// True parameter vector `(xi, gamma, theta1, theta2, psi...)`; `psi` is
/// unknown for the window model.
pub fn truth(dgp: &DgpConfig, model: &Model) -> (Vec<f64>, Option<ShiftParams>) {
    let mut v = vec![dgp.xi0, dgp.gamma0, dgp.theta0[0], dgp.theta0[1]];
    let psi = match model {
        Model::Simple => Some(ShiftParams::scalar(dgp.psi0)),
        Model::Stratified => Some(ShiftParams(vec![dgp.psi0, 0.0, 0.0])),
        Model::Window(_) => None,
    };
    if let Some(p) = &psi {
        v.extend_from_slice(&p.0);
    }
    (v, psi)
}

pub fn run_replicate(cfg: &RunConfig, rep: usize) -> RepRecord {
    let mut rec = RepRecord {
        rep,
        ok: true,
        error: None,
        initiated_fraction: f64::NAN,
        death_fraction: f64::NAN,
        params: Vec::new(),
        se: Vec::new(),
        ci: Vec::new(),
        max_theta_psi_cov: None,
        test_statistic: None,
        test_p_value: None,
        inversion_p_value: None,
        alpha_truth: None,
        alpha_null: None,
    };
    if let Err(e) = fill(cfg, rep, &mut rec) {
        rec.ok = false;
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill(cfg: &RunConfig, rep: usize, rec: &mut RepRecord) -> Result<()> {
    let (cohort, _) = simulate_cohort_replicate(&cfg.dgp, rep as u64)?;
    (rec.initiated_fraction, rec.death_fraction) = fractions(&cohort);
    let model = cfg.estimation.model.shift_model();
    let (_, psi_true) = truth(&cfg.dgp, &cfg.estimation.model);
    let checks = &cfg.mc.checks;
    if checks.contains(&Check::Estimate) {
        let r = solve(
            &cohort,
            &model,
            &ShiftParams::zeros(model.dim()),
            &cfg.estimation.solve_options(),
        )?;
        let p = r.params.len();
        let block = (0..4)
            .flat_map(|a| (4..p).map(move |b| (a, b)))
            .map(|(a, b)| r.cov[a][b].abs().max(r.cov[b][a].abs()))
            .fold(0.0, f64::max);
        rec.max_theta_psi_cov = Some(block);
        rec.params = r.params;
        rec.se = r.se;
        rec.ci = r.ci;
    }
    let opts = TestOptions {
        level: cfg.test.level,
        ..TestOptions::default()
    };
    if checks.contains(&Check::Test) {
        let h = parse_h_extra(&cfg.test.h_extra, &cfg.estimation.model)?;
        let t = run_test(&cohort, &h, &opts)?;
        rec.test_statistic = Some(t.statistic);
        rec.test_p_value = Some(t.p_value);
    }
    if let (true, Some(psi)) = (checks.contains(&Check::Inversion), &psi_true) {
        let h = HExtra::Mimic {
            model: model.clone(),
            psi: psi.clone(),
        };
        rec.inversion_p_value = Some(run_test(&cohort, &h, &opts)?.p_value);
    }
    if checks.contains(&Check::Alpha) {
        if let Some(psi) = &psi_true {
            let a = alpha_diagnostic(&cohort, psi, &model)?;
            rec.alpha_truth = Some((a.alpha, a.se));
        }
        let a = alpha_diagnostic(&cohort, &ShiftParams::zeros(model.dim()), &model)?;
        rec.alpha_null = Some((a.alpha, a.se));
    }
    Ok(())
}

/// All replicates on a pool of `mc.parallel_width` threads, in replicate order.
pub fn run_replications(cfg: &RunConfig) -> Result<Vec<RepRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.mc.parallel_width)
        .build()
        .map_err(|e| CliError::Input(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..cfg.mc.replications)
            .into_par_iter()
            .map(|r| run_replicate(cfg, r))
            .collect()
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rate {
    pub count: usize,
    pub denominator: usize,
    pub rate: f64,
}

impl Rate {
    fn of(flags: impl Iterator<Item = bool>) -> Option<Rate> {
        let (mut count, mut denominator) = (0, 0);
        for f in flags {
            denominator += 1;
            count += usize::from(f);
        }
        (denominator > 0).then(|| Rate {
            count,
            denominator,
            rate: count as f64 / denominator as f64,
        })
    }

    /// Binomial standard error of the rate.
    pub fn se(&self) -> f64 {
        (self.rate * (1.0 - self.rate) / self.denominator as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: Option<f64>,
    pub mean: f64,
    pub bias: Option<f64>,
    pub empirical_sd: f64,
    pub mean_se: f64,
    pub sd_over_mean_se: f64,
    /// Wald interval coverage over converged replicates.
    pub coverage: Option<Rate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileCheck {
    pub probability: f64,
    pub normal_quantile: f64,
    pub fraction_below: f64,
    /// Binomial three-sigma band around `probability`.
    pub band: (f64, f64),
    pub within_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Correlation {
    pub name: String,
    pub correlation: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub truth_mean_z: Option<f64>,
    pub truth_rejection: Option<Rate>,
    pub null_rejection: Option<Rate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub dgp: DgpConfig,
    pub estimation: EstimationConfig,
    pub test: TestConfig,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McSummary {
    pub replications: usize,
    pub converged: usize,
    pub failed: usize,
    pub settings: Settings,
    pub initiated_fraction: f64,
    pub death_fraction: f64,
    pub parameters: Vec<ParameterSummary>,
    /// Standardized `(psi_hat - psi0) / se` of the first `psi` component
    /// against normal quantiles.
    pub psi_quantiles: Vec<QuantileCheck>,
    /// Empirical correlation of each nuisance estimate with the first `psi`.
    pub theta_psi_correlation: Vec<Correlation>,
    pub max_theta_psi_cov: Option<f64>,
    /// Rejections of the configured test at `test.level`.
    pub test_rejection: Option<Rate>,
    /// Non-rejection of `D = D_psi0`, i.e. coverage of the inverted region.
    pub inversion_coverage: Option<Rate>,
    pub alpha: Option<AlphaSummary>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn summarize(cfg: &RunConfig, records: &[RepRecord]) -> McSummary {
    let ok: Vec<&RepRecord> = records.iter().filter(|r| r.ok).collect();
    let model = &cfg.estimation.model;
    let (truth_vec, psi_true) = truth(&cfg.dgp, model);
    let names = parameter_names(&model.shift_model());
    let estimated: Vec<&RepRecord> = ok
        .iter()
        .copied()
        .filter(|r| !r.params.is_empty())
        .collect();

    let mut parameters = Vec::new();
    let mut psi_quantiles = Vec::new();
    let mut theta_psi_correlation = Vec::new();
    if !estimated.is_empty() {
        let column = |i: usize| estimated.iter().map(|r| r.params[i]).collect::<Vec<_>>();
        for (i, name) in names.iter().enumerate() {
            let est = column(i);
            let ses: Vec<f64> = estimated.iter().map(|r| r.se[i]).collect();
            let t = truth_vec.get(i).copied();
            let (m, s, mse) = (mean(&est), sd(&est), mean(&ses));
            parameters.push(ParameterSummary {
                name: name.clone(),
                truth: t,
                mean: m,
                bias: t.map(|t| m - t),
                empirical_sd: s,
                mean_se: mse,
                sd_over_mean_se: s / mse,
                coverage: t.and_then(|t| {
                    Rate::of(estimated.iter().map(|r| r.ci[i].0 <= t && t <= r.ci[i].1))
                }),
            });
        }
        let psi_hat = column(4);
        if let Some(psi0) = psi_true.as_ref().map(|p| p.0[0]) {
            let z: Vec<f64> = estimated
                .iter()
                .map(|r| (r.params[4] - psi0) / r.se[4])
                .collect();
            let n = z.len() as f64;
            for p in [0.1, 0.5, 0.9] {
                let q = normal_quantile(p).unwrap_or(f64::NAN);
                let frac = z.iter().filter(|&&v| v <= q).count() as f64 / n;
                let half = 3.0 * (p * (1.0 - p) / n).sqrt();
                psi_quantiles.push(QuantileCheck {
                    probability: p,
                    normal_quantile: q,
                    fraction_below: frac,
                    band: (p - half, p + half),
                    within_band: (frac - p).abs() <= half,
                });
            }
        }
        for (i, name) in names.iter().take(4).enumerate() {
            theta_psi_correlation.push(Correlation {
                name: name.clone(),
                correlation: correlation(&column(i), &psi_hat),
                se: 1.0 / (estimated.len() as f64).sqrt(),
            });
        }
    }
    let max_theta_psi_cov = ok
        .iter()
        .filter_map(|r| r.max_theta_psi_cov)
        .reduce(f64::max);
    let level = cfg.test.level;
    let test_rejection = Rate::of(ok.iter().filter_map(|r| r.test_p_value).map(|p| p < level));
    let inversion_coverage = Rate::of(
        ok.iter()
            .filter_map(|r| r.inversion_p_value)
            .map(|p| p >= level),
    );
    let alpha = cfg.mc.checks.contains(&Check::Alpha).then(|| {
        let zt: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.alpha_truth)
            .map(|(a, s)| a / s)
            .collect();
        AlphaSummary {
            truth_mean_z: (!zt.is_empty()).then(|| mean(&zt)),
            truth_rejection: Rate::of(zt.iter().map(|z| z.abs() > 3.0)),
            null_rejection: Rate::of(
                ok.iter()
                    .filter_map(|r| r.alpha_null)
                    .map(|(a, s)| (a / s).abs() > 3.0),
            ),
        }
    });
    let frac = |f: fn(&RepRecord) -> f64| {
        let v: Vec<f64> = records.iter().map(f).filter(|v| v.is_finite()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            mean(&v)
        }
    };
    McSummary {
        replications: records.len(),
        converged: ok.len(),
        failed: records.len() - ok.len(),
        settings: Settings {
            dgp: cfg.dgp.clone(),
            estimation: cfg.estimation.clone(),
            test: cfg.test.clone(),
            checks: cfg.mc.checks.clone(),
        },
        initiated_fraction: frac(|r| r.initiated_fraction),
        death_fraction: frac(|r| r.death_fraction),
        parameters,
        psi_quantiles,
        theta_psi_correlation,
        max_theta_psi_cov,
        test_rejection,
        inversion_coverage,
        alpha,
    }
}

pub fn write_per_rep(cfg: &RunConfig, records: &[RepRecord], path: &Path) -> Result<()> {
    let names = parameter_names(&cfg.estimation.model.shift_model());
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec![
        "rep".to_string(),
        "status".into(),
        "initiated_fraction".into(),
        "death_fraction".into(),
    ];
    for n in &names {
        header.extend([
            n.clone(),
            format!("{n}_se"),
            format!("{n}_ci_lower"),
            format!("{n}_ci_upper"),
        ]);
    }
    header.extend(
        [
            "max_theta_psi_cov",
            "test_statistic",
            "test_p_value",
            "inversion_p_value",
            "alpha_truth",
            "alpha_truth_se",
            "alpha_null",
            "alpha_null_se",
            "error",
        ]
        .map(String::from),
    );
    wtr.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let mut rec = vec![
            r.rep.to_string(),
            if r.ok { "ok" } else { "failed" }.to_string(),
            r.initiated_fraction.to_string(),
            r.death_fraction.to_string(),
        ];
        for i in 0..names.len() {
            if r.params.is_empty() {
                rec.extend(std::iter::repeat_n(String::new(), 4));
            } else {
                rec.extend([
                    r.params[i].to_string(),
                    r.se[i].to_string(),
                    r.ci[i].0.to_string(),
                    r.ci[i].1.to_string(),
                ]);
            }
        }
        rec.extend([
            opt(r.max_theta_psi_cov),
            opt(r.test_statistic),
            opt(r.test_p_value),
            opt(r.inversion_p_value),
            opt(r.alpha_truth.map(|a| a.0)),
            opt(r.alpha_truth.map(|a| a.1)),
            opt(r.alpha_null.map(|a| a.0)),
            opt(r.alpha_null.map(|a| a.1)),
            r.error.clone().unwrap_or_default(),
        ]);
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(io_context("writing per_rep.csv"))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub parallel_width: usize,
}

/// Run, summarize and write `mc_summary.json`, `per_rep.csv` and
/// `mc_timing.json`. Fails with exit code 3 when more than 10% of the
/// replicates failed, after the files are written.
pub fn montecarlo(cfg: &RunConfig) -> Result<(McSummary, Duration)> {
    let start = Instant::now();
    let records = run_replications(cfg)?;
    let summary = summarize(cfg, &records);
    let elapsed = start.elapsed();
    let dir = &cfg.io.out_dir;
    std::fs::create_dir_all(dir).map_err(io_context(format!("creating {}", dir.display())))?;
    write_json(&dir.join("mc_summary.json"), &summary)?;
    write_json(
        &dir.join("mc_timing.json"),
        &Timing {
            wall_seconds: elapsed.as_secs_f64(),
            parallel_width: cfg.mc.parallel_width,
        },
    )?;
    if cfg.io.csv() {
        write_per_rep(cfg, &records, &dir.join("per_rep.csv"))?;
    }
    if summary.failed * 10 > summary.replications {
        return Err(CliError::TooManyFailures {
            failed: summary.failed,
            total: summary.replications,
        });
    }
    Ok((summary, elapsed))
}

/// Cohort of replicate `rep`, as seen by the harness.
pub fn replicate_cohort(cfg: &RunConfig, rep: usize) -> Result<Cohort> {
    Ok(simulate_cohort_replicate(&cfg.dgp, rep as u64)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dgp.n = 300;
        cfg.mc.replications = 3;
        cfg.mc.parallel_width = 2;
        cfg
    }

    #[test]
    fn single_replicate_is_a_single_run() {
        let mut cfg = small();
        cfg.mc.replications = 1;
        let recs = run_replications(&cfg).unwrap();
        assert_eq!(recs.len(), 1);
        let direct = solve(
            &replicate_cohort(&cfg, 0).unwrap(),
            &cfg.estimation.model.shift_model(),
            &ShiftParams::zeros(1),
            &cfg.estimation.solve_options(),
        )
        .unwrap();
        assert_eq!(recs[0].params, direct.params);
        let s = summarize(&cfg, &recs);
        assert_eq!(s.converged + s.failed, s.replications);
        assert_eq!(s.parameters[4].mean, direct.params[4]);
    }

    #[test]
    fn records_are_in_replicate_order() {
        let recs = run_replications(&small()).unwrap();
        assert_eq!(
            recs.iter().map(|r| r.rep).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(recs.iter().all(|r| r.ok));
    }

    #[test]
    fn failures_are_recorded() {
        let mut cfg = small();
        // no initiations: every replicate fails
        cfg.dgp.xi0 = 1e-300;
        cfg.mc.replications = 2;
        let recs = run_replications(&cfg).unwrap();
        assert!(recs.iter().all(|r| !r.ok && r.error.is_some()));
        let s = summarize(&cfg, &recs);
        assert_eq!((s.converged, s.failed), (0, 2));
        assert!(s.parameters.is_empty());
    }

    #[test]
    fn rates_count_their_denominator() {
        let r = Rate::of([true, false, true, true].into_iter()).unwrap();
        assert_eq!((r.count, r.denominator), (3, 4));
        assert_eq!(r.rate, 0.75);
        assert!(Rate::of(std::iter::empty()).is_none());
    }
}
