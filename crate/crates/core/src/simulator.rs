//! Data-generating process with a known shift parameter.
//!
//! Per patient: AZT arm, an exogenous PCP time, the untreated outcome `y0`
//! from a piecewise-constant death hazard, and a latent initiation time from
//! the Weibull intensity along the untreated covariate path. Initiation at
//! `T` rescales the remaining untreated lifetime: treated time runs at rate
//! `e^psi0` relative to untreated time until `tau`, after which treatment is
//! stopped. The mechanism is rank preserving, so `X_psi0(0) = y0` exactly.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::PatientStream;
use crate::trajectory::{Cohort, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub seed: u64,
    pub tau: f64,
    pub psi0: f64,
    pub xi0: f64,
    pub gamma0: f64,
    /// AZT and PCP coefficients of the initiation intensity.
    pub theta0: [f64; 2],
    pub rho_pcp: f64,
    pub beta_pcp_azt: f64,
    pub mu0: f64,
    /// AZT and PCP log-hazard ratios of untreated death.
    pub beta_death: [f64; 2],
    pub p_azt: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 2000,
            seed: 1,
            tau: 10.0,
            psi0: std::f64::consts::LN_2,
            xi0: 0.1,
            gamma0: 1.2,
            theta0: [0.5, 0.8],
            rho_pcp: 0.15,
            beta_pcp_azt: -0.5,
            mu0: 0.08,
            beta_death: [0.3, 1.0],
            p_azt: 0.5,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("xi0", self.xi0),
            ("gamma0", self.gamma0),
            ("rho_pcp", self.rho_pcp),
            ("mu0", self.mu0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("dgp.{name} must be positive and finite, got {v}"));
            }
        }
        let finite = [
            ("psi0", self.psi0),
            ("theta0", self.theta0[0]),
            ("theta0", self.theta0[1]),
            ("beta_pcp_azt", self.beta_pcp_azt),
            ("beta_death", self.beta_death[0]),
            ("beta_death", self.beta_death[1]),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return domain(format!("dgp.{name} must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_azt) {
            return domain(format!("dgp.p_azt must lie in [0, 1], got {}", self.p_azt));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulatedPatient {
    pub traj: Trajectory,
    /// Untreated outcome `Y^(0)`.
    pub y0: f64,
    /// Latent initiation time; infinite when the intensity never fires
    /// before `min(y0, tau)`.
    pub t_latent: f64,
    /// Uniform driving the `y0` inversion.
    pub u_death: f64,
    /// Uniform driving the initiation inversion.
    pub u_init: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HazardKind {
    /// Constant rate.
    Constant(f64),
    /// Cumulative hazard `scale (t^gamma - a^gamma)` on the segment.
    Weibull { scale: f64, gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HazardSegment {
    pub a: f64,
    /// May be infinite for the last segment.
    pub b: f64,
    pub kind: HazardKind,
}

impl HazardSegment {
    fn cumulative(&self, t: f64) -> f64 {
        match self.kind {
            HazardKind::Constant(rate) => {
                if rate == 0.0 {
                    0.0
                } else {
                    rate * (t - self.a)
                }
            }
            HazardKind::Weibull { scale, gamma } => {
                if scale == 0.0 {
                    0.0
                } else {
                    scale * (t.powf(gamma) - self.a.powf(gamma))
                }
            }
        }
    }

    fn solve(&self, h: f64) -> f64 {
        match self.kind {
            HazardKind::Constant(rate) => self.a + h / rate,
            HazardKind::Weibull { scale, gamma } => {
                (self.a.powf(gamma) + h / scale).powf(1.0 / gamma)
            }
        }
    }
}

/// Time `t` with cumulative hazard `H(t) = -log u`, or infinity when the
/// total hazard falls short.
pub fn invert_piecewise_hazard(segments: &[HazardSegment], u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return domain(format!("inversion needs u in (0, 1), got {u}"));
    }
    let mut expected_start = 0.0;
    for s in segments {
        if s.a != expected_start || !(s.b >= s.a) || s.a.is_nan() {
            return domain(format!(
                "hazard segments must be contiguous from 0; got [{}, {}] where {expected_start} was expected",
                s.a, s.b
            ));
        }
        let ok = match s.kind {
            HazardKind::Constant(r) => r >= 0.0 && r.is_finite(),
            HazardKind::Weibull { scale, gamma } => {
                scale >= 0.0 && scale.is_finite() && gamma > 0.0
            }
        };
        if !ok {
            return domain("hazard segment with a negative rate or nonpositive shape");
        }
        expected_start = s.b;
    }
    let target = -u.ln();
    let mut cum = 0.0;
    for s in segments {
        let total = if s.b.is_infinite() {
            if s.cumulative(s.a + 1.0) > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            s.cumulative(s.b)
        };
        if cum + total >= target {
            return Ok(s.solve(target - cum).min(s.b));
        }
        cum += total;
    }
    Ok(f64::INFINITY)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Observed outcome after initiation at `t` for untreated outcome `y0`:
/// untreated time is consumed at rate `e^psi0` on `[t, tau)` and at rate 1
/// afterwards.
pub fn treated_outcome(t: f64, y0: f64, psi0: f64, tau: f64) -> f64 {
    let speed = psi0.exp();
    let residual = y0 - t;
    // written as corrections to y0 so that psi0 = 0 returns y0 exactly
    if speed * (tau - t) >= residual {
        y0 + residual * (1.0 / speed - 1.0)
    } else {
        y0 + (1.0 - speed) * (tau - t)
    }
}

/// Draws `u_azt, u_pcp, u_death, u_init` from the stream in that order.
pub fn simulate_patient(
    cfg: &DgpConfig,
    stream: &mut PatientStream,
    id: String,
) -> Result<SimulatedPatient> {
    let u_azt = stream.uniform();
    let u_pcp = stream.uniform();
    let u_death = stream.uniform();
    let u_init = stream.uniform();

    let azt = u_azt < cfg.p_azt;
    let a = indicator(azt);
    let pcp = -u_pcp.ln() / (cfg.rho_pcp * (cfg.beta_pcp_azt * a).exp());

    let death_rate = |pcp_on: bool| {
        cfg.mu0 * (cfg.beta_death[0] * a + cfg.beta_death[1] * indicator(pcp_on)).exp()
    };
    let death = [
        HazardSegment {
            a: 0.0,
            b: pcp,
            kind: HazardKind::Constant(death_rate(false)),
        },
        HazardSegment {
            a: pcp,
            b: f64::INFINITY,
            kind: HazardKind::Constant(death_rate(true)),
        },
    ];
    let y0 = invert_piecewise_hazard(&death, u_death)?;

    let window = y0.min(cfg.tau);
    let init_scale =
        |pcp_on: bool| cfg.xi0 * (cfg.theta0[0] * a + cfg.theta0[1] * indicator(pcp_on)).exp();
    let mut init = Vec::with_capacity(3);
    if pcp < window {
        init.push(HazardSegment {
            a: 0.0,
            b: pcp,
            kind: HazardKind::Weibull {
                scale: init_scale(false),
                gamma: cfg.gamma0,
            },
        });
        init.push(HazardSegment {
            a: pcp,
            b: window,
            kind: HazardKind::Weibull {
                scale: init_scale(true),
                gamma: cfg.gamma0,
            },
        });
    } else {
        init.push(HazardSegment {
            a: 0.0,
            b: window,
            kind: HazardKind::Weibull {
                scale: init_scale(false),
                gamma: cfg.gamma0,
            },
        });
    }
    let t_latent = invert_piecewise_hazard(&init, u_init)?;

    let (treat_start, y) = if t_latent < window {
        (
            Some(t_latent),
            treated_outcome(t_latent, y0, cfg.psi0, cfg.tau),
        )
    } else {
        (None, y0)
    };
    let traj = Trajectory::new(id, azt, (pcp <= y).then_some(pcp), treat_start, y, cfg.tau)?;
    Ok(SimulatedPatient {
        traj,
        y0,
        t_latent,
        u_death,
        u_init,
    })
}

pub fn simulate_cohort(cfg: &DgpConfig) -> Result<(Cohort, Vec<SimulatedPatient>)> {
    simulate_cohort_replicate(cfg, 0)
}

/// Cohort for Monte Carlo replicate `replicate`; patient `i` uses the stream
/// `(cfg.seed, replicate, i)` and id `p{i+1}`.
pub fn simulate_cohort_replicate(
    cfg: &DgpConfig,
    replicate: u64,
) -> Result<(Cohort, Vec<SimulatedPatient>)> {
    cfg.validate()?;
    let sims = (0..cfg.n)
        .map(|i| {
            let mut stream = PatientStream::new(cfg.seed, replicate, i as u64);
            simulate_patient(cfg, &mut stream, format!("p{}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let cohort = Cohort::new(sims.iter().map(|s| s.traj.clone()).collect())?;
    Ok((cohort, sims))
}

pub const LATENTS_HEADER: [&str; 3] = ["id", "y0", "t_latent"];

fn format_time(t: f64) -> String {
    if t.is_infinite() {
        "inf".into()
    } else {
        t.to_string()
    }
}

pub fn write_latents(sims: &[SimulatedPatient], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(LATENTS_HEADER)?;
    for s in sims {
        wtr.write_record([
            s.traj.id.clone(),
            format_time(s.y0),
            format_time(s.t_latent),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_latents(sims: &[SimulatedPatient], path: impl AsRef<Path>) -> Result<()> {
    write_latents(sims, File::create(path)?)
}
