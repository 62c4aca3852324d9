//! Subcommands: each returns a serializable report and writes its files
//! under `io.out_dir`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gest_core::{
    dx_dpsi, psi_scan, run_test, save_latents, simulate_cohort, solve, weibull_mle, x_closed_form,
    x_ode, Cohort, EstimationResult, GestError, HExtra, MleOptions, ShiftParams, TestOptions,
    TestResult, WeibullPh,
};
use serde::Serialize;

use crate::config::{Model, RunConfig};
use crate::error::{io_context, CliError, Result};

const ODE_TOL: f64 = 1e-10;

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_context(format!("writing {}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.io.out_dir.clone();
    fs::create_dir_all(&dir).map_err(io_context(format!("creating {}", dir.display())))?;
    Ok(dir)
}

pub fn load_cohort(path: &Path) -> Result<Cohort> {
    match Cohort::load(path) {
        Err(GestError::Io(e)) => Err(CliError::Io {
            context: format!("reading {}", path.display()),
            source: e,
        }),
        other => Ok(other?),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateReport {
    pub n: usize,
    pub initiated_fraction: f64,
    /// Fraction with `y < tau`.
    pub death_fraction: f64,
    pub cohort: PathBuf,
    pub latents: PathBuf,
}

pub fn simulate(cfg: &RunConfig) -> Result<SimulateReport> {
    let (cohort, sims) = simulate_cohort(&cfg.dgp)?;
    let dir = out_dir(cfg)?;
    let (cohort_path, latents_path) = (dir.join("cohort.csv"), dir.join("latents.csv"));
    cohort.save(&cohort_path)?;
    save_latents(&sims, &latents_path)?;
    let (initiated_fraction, death_fraction) = fractions(&cohort);
    Ok(SimulateReport {
        n: cohort.len(),
        initiated_fraction,
        death_fraction,
        cohort: cohort_path,
        latents: latents_path,
    })
}

/// Initiated and died-before-tau fractions; NaN for an empty cohort.
pub fn fractions(cohort: &Cohort) -> (f64, f64) {
    let n = cohort.len() as f64;
    let p = cohort.patients();
    (
        p.iter().filter(|t| t.initiated()).count() as f64 / n,
        p.iter().filter(|t| t.y < t.tau).count() as f64 / n,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub model: String,
    pub n: usize,
    pub events: usize,
    pub ci_level: f64,
    pub parameters: Vec<ParameterRow>,
    pub result: EstimationResult,
}

impl EstimateReport {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>14} {:>12} {:>14} {:>14}\n",
            "parameter",
            "estimate",
            "se",
            format!("{}% lower", self.ci_level * 100.0),
            "upper"
        );
        for r in &self.parameters {
            s.push_str(&format!(
                "{:<10} {:>14.6} {:>12.6} {:>14.6} {:>14.6}\n",
                r.name, r.estimate, r.se, r.ci_lower, r.ci_upper
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanArgs {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// Solve the estimating equations for the cohort at `cohort_path`. With a
/// scan, `psi_scan.csv` is written first (at the intensity MLE) so it is
/// available even when the solver fails.
pub fn estimate(
    cfg: &RunConfig,
    cohort_path: &Path,
    scan: Option<ScanArgs>,
) -> Result<EstimateReport> {
    let cohort = load_cohort(cohort_path)?;
    if cohort.is_empty() {
        return Err(GestError::EmptyCohort.into());
    }
    let model = cfg.estimation.model.shift_model();
    let dir = out_dir(cfg)?;
    if let Some(s) = scan {
        let fit = weibull_mle(
            &cohort,
            &WeibullPh::initial_guess(&cohort),
            &MleOptions::default(),
        )?;
        let rows = psi_scan(&cohort, &model, &fit.params, s.lo, s.hi, s.steps)?;
        let mut wtr = csv::Writer::from_path(dir.join("psi_scan.csv"))?;
        wtr.write_record(["psi", "residual"])?;
        for (psi, r) in rows {
            wtr.write_record([psi.to_string(), r.to_string()])?;
        }
        wtr.flush().map_err(io_context("writing psi_scan.csv"))?;
    }
    let init = ShiftParams::zeros(model.dim());
    let result = solve(&cohort, &model, &init, &cfg.estimation.solve_options())?;
    let parameters = result
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| ParameterRow {
            name: name.clone(),
            estimate: result.params[i],
            se: result.se[i],
            ci_lower: result.ci[i].0,
            ci_upper: result.ci[i].1,
        })
        .collect();
    let report = EstimateReport {
        model: cfg.estimation.model.to_string(),
        n: cohort.len(),
        events: cohort.events(),
        ci_level: result.ci_level,
        parameters,
        result,
    };
    if cfg.io.json() {
        write_json(&dir.join("result.json"), &report)?;
    }
    if cfg.io.csv() {
        let mut wtr = csv::Writer::from_path(dir.join("result.csv"))?;
        wtr.write_record(["parameter", "estimate", "se", "ci_lower", "ci_upper"])?;
        for r in &report.parameters {
            wtr.write_record([
                r.name.clone(),
                r.estimate.to_string(),
                r.se.to_string(),
                r.ci_lower.to_string(),
                r.ci_upper.to_string(),
            ])?;
        }
        wtr.flush().map_err(io_context("writing result.csv"))?;
    }
    Ok(report)
}

/// `outcome`, or `mimic:<psi>[,<psi>...]` under the configured model.
pub fn parse_h_extra(name: &str, model: &Model) -> Result<HExtra> {
    if name == "outcome" {
        return Ok(HExtra::Outcome);
    }
    if let Some(values) = name.strip_prefix("mimic:") {
        let psi: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::Input(format!("cannot parse psi values in `{name}`")))?;
        if psi.len() != model.dim() {
            return Err(CliError::Input(format!(
                "`{name}` has {} values but model {model} has {} parameters",
                psi.len(),
                model.dim()
            )));
        }
        return Ok(HExtra::Mimic {
            model: model.shift_model(),
            psi: ShiftParams(psi),
        });
    }
    Err(CliError::Input(format!(
        "unknown h-extra `{name}` (outcome or mimic:<psi>)"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub n: usize,
    pub events: usize,
    pub level: f64,
    pub reject: bool,
    #[serde(flatten)]
    pub result: TestResult,
}

pub fn test(cfg: &RunConfig, cohort_path: &Path, h_extra: Option<&str>) -> Result<TestReport> {
    let cohort = load_cohort(cohort_path)?;
    let name = h_extra.unwrap_or(&cfg.test.h_extra);
    let h = parse_h_extra(name, &cfg.estimation.model)?;
    let opts = TestOptions {
        level: cfg.test.level,
        ..TestOptions::default()
    };
    let result = run_test(&cohort, &h, &opts)?;
    let report = TestReport {
        n: cohort.len(),
        events: cohort.events(),
        level: cfg.test.level,
        reject: result.p_value < cfg.test.level,
        result,
    };
    let dir = out_dir(cfg)?;
    if cfg.io.json() {
        write_json(&dir.join("test.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XpsiRow {
    pub t: f64,
    pub x: f64,
    /// NaN for models without a closed form.
    pub closed_form: f64,
    pub ode: f64,
    pub dx_dpsi: Vec<f64>,
}

/// Path of `X_psi` for one patient on `grid` (default: eleven points on
/// `[0, tau]`); writes `xpsi_<id>.csv`.
pub fn xpsi(
    cfg: &RunConfig,
    cohort_path: &Path,
    id: &str,
    psi: &[f64],
    grid: Option<&[f64]>,
) -> Result<Vec<XpsiRow>> {
    let cohort = load_cohort(cohort_path)?;
    let traj = cohort
        .get(id)
        .ok_or_else(|| CliError::Input(format!("no patient with id `{id}`")))?;
    let model = cfg.estimation.model.shift_model();
    let psi = ShiftParams(psi.to_vec());
    let default: Vec<f64> = (0..=10).map(|i| traj.tau * i as f64 / 10.0).collect();
    let grid = grid.unwrap_or(&default);
    let rows = grid
        .iter()
        .map(|&t| {
            let ode = x_ode(traj, &psi, &model, t, ODE_TOL)?;
            let closed_form = match x_closed_form(traj, &psi, &model, t) {
                Ok(v) => v,
                Err(GestError::Unsupported(_)) => f64::NAN,
                Err(e) => return Err(e.into()),
            };
            Ok(XpsiRow {
                t,
                x: if closed_form.is_nan() {
                    ode
                } else {
                    closed_form
                },
                closed_form,
                ode,
                dx_dpsi: dx_dpsi(traj, &psi, &model, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(cfg)?;
    let path = dir.join(format!("xpsi_{id}.csv"));
    let file =
        fs::File::create(&path).map_err(io_context(format!("creating {}", path.display())))?;
    write_xpsi(&rows, file)?;
    Ok(rows)
}

pub fn write_xpsi(rows: &[XpsiRow], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let k = rows.first().map_or(1, |r| r.dx_dpsi.len());
    let mut header = vec![
        "t".to_string(),
        "x".into(),
        "closed_form".into(),
        "ode".into(),
    ];
    if k == 1 {
        header.push("dx_dpsi".into());
    } else {
        header.extend((1..=k).map(|j| format!("dx_dpsi{j}")));
    }
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.t.to_string(),
            r.x.to_string(),
            r.closed_form.to_string(),
            r.ode.to_string(),
        ];
        rec.extend(r.dx_dpsi.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(io_context("writing xpsi table"))?;
    Ok(())
}
