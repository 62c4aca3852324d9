//! Observed-data model: one patient's path and a cohort of independent patients.
//!
//! A patient carries a time-constant AZT arm indicator, the first PCP time,
//! the prophylaxis initiation time `T` (the single jump of the treatment
//! counting process `N`), the observed outcome `Y` and the end of the
//! treatment-observation window `tau`. Indicator covariates use left limits
//! (`event < t`), so every integrand against `dN` or `lambda dt` is
//! predictable.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, GestError, Result};

/// Column order of the cohort CSV file.
pub const COHORT_HEADER: [&str; 6] = ["id", "azt", "pcp_time", "treat_start", "y", "tau"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub azt: bool,
    pub pcp_time: Option<f64>,
    pub treat_start: Option<f64>,
    pub y: f64,
    pub tau: f64,
}

/// Left-limit covariate values at a time point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Covariates {
    pub azt: bool,
    /// PCP strictly before `t`.
    pub pcp: bool,
    /// Treatment initiated strictly before `t`.
    pub treated: bool,
    /// Alive, untreated and before `tau`: eligible for initiation.
    pub at_risk: bool,
}

impl Trajectory {
    pub fn new(
        id: impl Into<String>,
        azt: bool,
        pcp_time: Option<f64>,
        treat_start: Option<f64>,
        y: f64,
        tau: f64,
    ) -> Result<Self> {
        let traj = Trajectory {
            id: id.into(),
            azt,
            pcp_time,
            treat_start,
            y,
            tau,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(GestError::InvalidTrajectory {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !self.y.is_finite() || !self.tau.is_finite() {
            return bad("y and tau must be finite");
        }
        if self.y <= 0.0 {
            return bad("y must be positive");
        }
        if self.tau <= 0.0 {
            return bad("tau must be positive");
        }
        if let Some(t) = self.treat_start {
            if !t.is_finite() || t < 0.0 {
                return bad("treat_start must be a finite nonnegative time");
            }
            if t >= self.y {
                return bad("treat_start >= y");
            }
            if t >= self.tau {
                return bad("treat_start >= tau");
            }
        }
        if let Some(p) = self.pcp_time {
            if !p.is_finite() || p < 0.0 {
                return bad("pcp_time must be a finite nonnegative time");
            }
            if p > self.y {
                return bad("pcp_time > y");
            }
        }
        Ok(())
    }

    /// Whether the treatment counting process jumps in `[0, tau)`.
    pub fn initiated(&self) -> bool {
        self.treat_start.is_some()
    }

    pub fn covariates_at(&self, t: f64) -> Result<Covariates> {
        if !(0.0..=self.tau).contains(&t) {
            return domain(format!("t = {t} outside [0, tau = {}]", self.tau));
        }
        Ok(Covariates {
            azt: self.azt,
            pcp: self.pcp_time.is_some_and(|p| p < t),
            treated: self.treat_start.is_some_and(|s| s < t),
            at_risk: t < self.risk_end(),
        })
    }

    /// End of the at-risk set `[0, risk_end)` for treatment initiation.
    pub fn risk_end(&self) -> f64 {
        self.treat_start
            .unwrap_or(f64::INFINITY)
            .min(self.y)
            .min(self.tau)
    }

    /// Length of `(t1, t2)` spent on treatment. Treatment runs from `T` until
    /// the end of the observation window `tau`, after which it is stopped.
    pub fn duration_treated(&self, t1: f64, t2: f64) -> Result<f64> {
        if t1 > t2 {
            return domain(format!("duration_treated: t1 = {t1} > t2 = {t2}"));
        }
        Ok(match self.treat_start {
            Some(start) => (t2.min(self.tau) - t1.max(start)).max(0.0),
            None => 0.0,
        })
    }

    /// Sorted breakpoints `{a, b}` plus every recorded event time strictly
    /// inside `(a, b)`; indicator covariates are constant between neighbours.
    pub fn segment_grid(&self, a: f64, b: f64) -> Vec<f64> {
        let mut grid = vec![a];
        let mut inner: Vec<f64> = [self.pcp_time, self.treat_start, Some(self.y)]
            .into_iter()
            .flatten()
            .filter(|&e| e > a && e < b)
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        grid.extend(inner);
        if b > a {
            grid.push(b);
        }
        grid
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    patients: Vec<Trajectory>,
}

impl Cohort {
    pub fn new(patients: Vec<Trajectory>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(patients.len());
        for p in &patients {
            p.validate()?;
            if !ids.insert(p.id.as_str()) {
                return Err(GestError::InvalidTrajectory {
                    id: p.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        if let Some(first) = patients.first() {
            if let Some(p) = patients.iter().find(|p| p.tau != first.tau) {
                return Err(GestError::InvalidTrajectory {
                    id: p.id.clone(),
                    reason: format!("tau {} differs from cohort tau {}", p.tau, first.tau),
                });
            }
        }
        Ok(Cohort { patients })
    }

    pub fn patients(&self) -> &[Trajectory] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn tau(&self) -> Option<f64> {
        self.patients.first().map(|p| p.tau)
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.patients.iter().find(|p| p.id == id)
    }

    pub fn into_inner(self) -> Vec<Trajectory> {
        self.patients
    }

    pub fn events(&self) -> usize {
        self.patients.iter().filter(|p| p.initiated()).count()
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(GestError::EmptyCohort)
        } else {
            Ok(())
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(File::create(path)?)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut columns = [0usize; 6];
        for (slot, name) in columns.iter_mut().zip(COHORT_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| GestError::Parse {
                    line: 1,
                    field: name.to_string(),
                    reason: "missing column".into(),
                })?;
        }

        let mut patients = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let field = |k: usize| record.get(columns[k]).unwrap_or("");
            let err = |k: usize, reason: String| GestError::Parse {
                line,
                field: COHORT_HEADER[k].to_string(),
                reason,
            };
            let number = |k: usize| -> Result<f64> {
                let raw = field(k);
                let v: f64 = raw
                    .parse()
                    .map_err(|_| err(k, format!("`{raw}` is not a number")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(err(k, format!("`{raw}` is not a finite nonnegative time")));
                }
                Ok(v)
            };
            let optional = |k: usize| -> Result<Option<f64>> {
                if field(k).is_empty() {
                    Ok(None)
                } else {
                    number(k).map(Some)
                }
            };

            let id = field(0).to_string();
            if id.is_empty() {
                return Err(err(0, "empty id".into()));
            }
            let azt = match field(1) {
                "0" => false,
                "1" => true,
                other => return Err(err(1, format!("`{other}` is not 0 or 1"))),
            };
            let pcp_time = optional(2)?;
            let treat_start = optional(3)?;
            let y = number(4)?;
            let tau = number(5)?;
            let traj = Trajectory {
                id,
                azt,
                pcp_time,
                treat_start,
                y,
                tau,
            };
            if let Err(GestError::InvalidTrajectory { reason, .. }) = traj.validate() {
                let k = if reason.starts_with("treat_start") {
                    3
                } else if reason.starts_with("pcp_time") {
                    2
                } else if reason.starts_with("tau") {
                    5
                } else {
                    4
                };
                return Err(err(k, reason));
            }
            patients.push(traj);
        }
        Cohort::new(patients)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(COHORT_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.patients {
            wtr.write_record([
                p.id.clone(),
                if p.azt { "1" } else { "0" }.to_string(),
                opt(p.pcp_time),
                opt(p.treat_start),
                p.y.to_string(),
                p.tau.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
