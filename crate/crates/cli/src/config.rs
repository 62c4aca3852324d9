//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Lists are comma
//! separated. Every key is optional; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gest_core::{DgpConfig, ShiftModel, SolveOptions};
use serde::Serialize;

use crate::error::{io_context, CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Simple,
    Stratified,
    /// Simple model switched off when `y - t` exceeds the window.
    Window(f64),
}

impl Model {
    pub fn shift_model(&self) -> ShiftModel {
        match self {
            Model::Simple => ShiftModel::SimpleAft,
            Model::Stratified => ShiftModel::StratifiedAft,
            Model::Window(w) => ShiftModel::WindowRestricted {
                window: *w,
                inner: Box::new(ShiftModel::SimpleAft),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.shift_model().dim()
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simple" => Ok(Model::Simple),
            "stratified" => Ok(Model::Stratified),
            _ => match s.strip_prefix("window:").map(str::parse::<f64>) {
                Some(Ok(w)) if w > 0.0 => Ok(Model::Window(w)),
                _ => Err(format!(
                    "unknown model `{s}` (simple, stratified or window:<width>)"
                )),
            },
        }
    }
}

impl Serialize for Model {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Simple => f.write_str("simple"),
            Model::Stratified => f.write_str("stratified"),
            Model::Window(w) => write!(f, "window:{w}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Estimate,
    Test,
    Inversion,
    Alpha,
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "estimate" => Ok(Check::Estimate),
            "test" => Ok(Check::Test),
            "inversion" => Ok(Check::Inversion),
            "alpha" => Ok(Check::Alpha),
            _ => Err(format!(
                "unknown check `{s}` (estimate, test, inversion, alpha)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationConfig {
    pub model: Model,
    pub psi_bracket: (f64, f64),
    pub tol: f64,
    pub max_iter: usize,
    pub ci_level: f64,
    pub scan_points: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        EstimationConfig {
            model: Model::Simple,
            psi_bracket: d.psi_bracket,
            tol: d.tol,
            max_iter: d.max_iter,
            ci_level: d.ci_level,
            scan_points: d.scan_points,
        }
    }
}

impl EstimationConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            psi_bracket: self.psi_bracket,
            tol: self.tol,
            max_iter: self.max_iter,
            ci_level: self.ci_level,
            scan_points: self.scan_points,
            nuisance_init: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestConfig {
    pub level: f64,
    pub h_extra: String,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            level: 0.05,
            h_extra: "outcome".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConfig {
    pub replications: usize,
    pub parallel_width: usize,
    pub checks: Vec<Check>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replications: 100,
            parallel_width: std::thread::available_parallelism().map_or(1, |n| n.get()),
            checks: vec![Check::Estimate, Check::Test, Check::Inversion],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Any of `json` and `csv`.
    pub formats: Vec<String>,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            out_dir: PathBuf::from("."),
            formats: vec!["json".into(), "csv".into()],
        }
    }
}

impl IoConfig {
    pub fn json(&self) -> bool {
        self.formats.iter().any(|f| f == "json")
    }

    pub fn csv(&self) -> bool {
        self.formats.iter().any(|f| f == "csv")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub dgp: DgpConfig,
    pub estimation: EstimationConfig,
    pub test: TestConfig,
    pub mc: McConfig,
    pub io: IoConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{value}`")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn pair(key: &str, value: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = list(key, value)?;
    v.try_into().map_err(|_| {
        CliError::Config(format!(
            "key `{key}` needs two comma-separated numbers, got `{value}`"
        ))
    })
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(io_context(format!("reading {}", path.display())))?;
        text.parse()
    }

    /// Set one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let d = &mut self.dgp;
        match key {
            "dgp.n" => d.n = parse(key, value)?,
            "dgp.seed" => d.seed = parse(key, value)?,
            "dgp.tau" => d.tau = parse(key, value)?,
            "dgp.psi0" => d.psi0 = parse(key, value)?,
            "dgp.xi0" => d.xi0 = parse(key, value)?,
            "dgp.gamma0" => d.gamma0 = parse(key, value)?,
            "dgp.theta0" => d.theta0 = pair(key, value)?,
            "dgp.rho_pcp" => d.rho_pcp = parse(key, value)?,
            "dgp.beta_pcp_azt" => d.beta_pcp_azt = parse(key, value)?,
            "dgp.mu0" => d.mu0 = parse(key, value)?,
            "dgp.beta_death" => d.beta_death = pair(key, value)?,
            "dgp.p_azt" => d.p_azt = parse(key, value)?,
            "estimation.model" => {
                self.estimation.model = value
                    .parse()
                    .map_err(|e| CliError::Config(format!("key `{key}`: {e}")))?
            }
            "estimation.psi_bracket" => {
                let [lo, hi] = pair(key, value)?;
                self.estimation.psi_bracket = (lo, hi);
            }
            "estimation.tol" => self.estimation.tol = parse(key, value)?,
            "estimation.max_iter" => self.estimation.max_iter = parse(key, value)?,
            "estimation.ci_level" => self.estimation.ci_level = parse(key, value)?,
            "estimation.scan_points" => self.estimation.scan_points = parse(key, value)?,
            "test.level" => self.test.level = parse(key, value)?,
            "test.h_extra" => self.test.h_extra = value.to_string(),
            "mc.replications" => self.mc.replications = parse(key, value)?,
            "mc.parallel_width" => self.mc.parallel_width = parse(key, value)?,
            "mc.checks" => {
                self.mc.checks = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|v| {
                        v.parse()
                            .map_err(|e| CliError::Config(format!("key `{key}`: {e}")))
                    })
                    .collect::<Result<_>>()?
            }
            "io.out_dir" => self.io.out_dir = PathBuf::from(value),
            "io.formats" => self.io.formats = list(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        let e = &self.estimation;
        if !(e.ci_level > 0.0 && e.ci_level < 1.0) {
            return Err(CliError::Config(format!(
                "estimation.ci_level = {} outside (0, 1)",
                e.ci_level
            )));
        }
        if !(e.psi_bracket.0 < e.psi_bracket.1) {
            return Err(CliError::Config(
                "estimation.psi_bracket must be increasing".into(),
            ));
        }
        if !(e.tol > 0.0) || e.max_iter == 0 || e.scan_points < 2 {
            return Err(CliError::Config(
                "estimation.tol, estimation.max_iter and estimation.scan_points must be positive (scan_points at least 2)"
                    .into(),
            ));
        }
        if !(self.test.level > 0.0 && self.test.level < 1.0) {
            return Err(CliError::Config(format!(
                "test.level = {} outside (0, 1)",
                self.test.level
            )));
        }
        if self.mc.replications == 0 {
            return Err(CliError::Config(
                "mc.replications must be at least 1".into(),
            ));
        }
        if self.mc.parallel_width == 0 {
            return Err(CliError::Config(
                "mc.parallel_width must be at least 1".into(),
            ));
        }
        if let Some(f) = self.io.formats.iter().find(|f| *f != "json" && *f != "csv") {
            return Err(CliError::Config(format!(
                "io.formats: unknown format `{f}` (json, csv)"
            )));
        }
        Ok(())
    }
}

impl FromStr for RunConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!(
                    "line {}: key `{key}` set twice",
                    i + 1
                )));
            }
            cfg.set(key, value).map_err(|e| {
                CliError::Config(format!(
                    "line {}: {}",
                    i + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
