//! Time-dependent Weibull proportional-hazards intensity for treatment
//! initiation,
//! `lambda(t) = 1{at risk} xi gamma t^(gamma-1) exp(theta1 I_AZT + theta2 I_PCP(t) + alpha X(t))`,
//! its exact segment integrals and the maximum-likelihood fit of `(xi, gamma, theta)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, GestError, Result};
use crate::integrals::{terms, Mark, Prepared, MAXP, NUISANCE};
use crate::trajectory::{Cohort, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullPh {
    pub xi: f64,
    pub gamma: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Coefficient on the mimicking process; zero except in the augmented
    /// diagnostic fit.
    #[serde(default)]
    pub alpha: f64,
}

impl WeibullPh {
    pub fn new(xi: f64, gamma: f64, theta1: f64, theta2: f64) -> Self {
        WeibullPh {
            xi,
            gamma,
            theta1,
            theta2,
            alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) || !(self.gamma > 0.0 && self.gamma.is_finite())
        {
            return domain(format!(
                "Weibull parameters need xi > 0 and gamma > 0, got xi = {}, gamma = {}",
                self.xi, self.gamma
            ));
        }
        if !self.theta1.is_finite() || !self.theta2.is_finite() || !self.alpha.is_finite() {
            return domain("Weibull coefficients must be finite");
        }
        Ok(())
    }

    /// `(xi, gamma, theta1, theta2)`.
    pub fn nuisance(&self) -> [f64; 4] {
        [self.xi, self.gamma, self.theta1, self.theta2]
    }

    pub fn from_nuisance(v: &[f64]) -> Self {
        WeibullPh::new(v[0], v[1], v[2], v[3])
    }

    /// Exponential-rate starting point: `gamma = 1`, `theta = 0` and
    /// `xi = events / total time at risk`.
    pub fn initial_guess(cohort: &Cohort) -> Self {
        let exposure: f64 = cohort.patients().iter().map(Trajectory::risk_end).sum();
        let events = cohort.events() as f64;
        let xi = if events > 0.0 && exposure > 0.0 {
            events / exposure
        } else {
            1.0
        };
        WeibullPh::new(xi, 1.0, 0.0, 0.0)
    }
}

pub fn lambda_eval(p: &WeibullPh, t: f64, traj: &Trajectory, x_at_t: Option<f64>) -> Result<f64> {
    p.validate()?;
    if !(t > 0.0) {
        return domain(format!(
            "the Weibull intensity is evaluated only at t > 0, got {t}"
        ));
    }
    let x = match (p.alpha != 0.0, x_at_t) {
        (true, Some(x)) => x,
        (true, None) => return domain("alpha != 0 requires the value of X at t"),
        (false, _) => 0.0,
    };
    let cov = traj.covariates_at(t)?;
    if !cov.at_risk {
        return Ok(0.0);
    }
    let linear = p.theta1 * f64::from(u8::from(cov.azt))
        + p.theta2 * f64::from(u8::from(cov.pcp))
        + p.alpha * x;
    Ok(p.xi * p.gamma * t.powf(p.gamma - 1.0) * linear.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    /// `int_a^b gamma t^(gamma-1) dt = b^gamma - a^gamma`.
    Plain,
    /// `int_a^b (1/gamma + log t) gamma t^(gamma-1) dt = b^gamma log b - a^gamma log a`.
    LogWeight,
    /// `int_a^b (1/gamma + log t)^2 gamma t^(gamma-1) dt`
    /// `= [t^gamma (1/gamma^2 + log^2 t)]_a^b`.
    LogWeightSquared,
}

fn antiderivative(gamma: f64, t: f64, kind: PrimitiveKind) -> f64 {
    if t == 0.0 {
        // t^gamma log^k t -> 0 for gamma > 0
        return 0.0;
    }
    let tg = t.powf(gamma);
    match kind {
        PrimitiveKind::Plain => tg,
        PrimitiveKind::LogWeight => tg * t.ln(),
        PrimitiveKind::LogWeightSquared => {
            let l = t.ln();
            tg * (1.0 / (gamma * gamma) + l * l)
        }
    }
}

pub fn segment_primitive(gamma: f64, a: f64, b: f64, kind: PrimitiveKind) -> Result<f64> {
    if !(gamma > 0.0) {
        return domain(format!("gamma must be positive, got {gamma}"));
    }
    if !(a >= 0.0 && b >= a) {
        return domain(format!("segment needs 0 <= a <= b, got a = {a}, b = {b}"));
    }
    if a == b {
        return Ok(0.0);
    }
    Ok(antiderivative(gamma, b, kind) - antiderivative(gamma, a, kind))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    One,
    InvXi,
    /// `1/gamma + log t`.
    ScoreGamma,
    Azt,
    Pcp,
    /// A constant on the at-risk set, such as `X_psi` under the AFT models.
    Const(f64),
}

/// `int_0^risk_end w(t) lambda(t) dt`, exact per covariate segment. With
/// `alpha != 0` the weight must be `Const(x)` and `x` enters the exponent.
pub fn cumulative_weighted(p: &WeibullPh, traj: &Trajectory, weight: Weight) -> Result<f64> {
    p.validate()?;
    let x = match (p.alpha != 0.0, weight) {
        (false, _) => 0.0,
        (true, Weight::Const(c)) => c,
        (true, _) => return domain("alpha != 0 needs the constant X value as the weight"),
    };
    let grid = traj.segment_grid(0.0, traj.risk_end());
    let mut total = 0.0;
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pcp = traj.pcp_time.is_some_and(|t| t <= a);
        let c = p.xi
            * (p.theta1 * f64::from(u8::from(traj.azt))
                + p.theta2 * f64::from(u8::from(pcp))
                + p.alpha * x)
                .exp();
        let (kind, factor) = match weight {
            Weight::One => (PrimitiveKind::Plain, 1.0),
            Weight::InvXi => (PrimitiveKind::Plain, 1.0 / p.xi),
            Weight::ScoreGamma => (PrimitiveKind::LogWeight, 1.0),
            Weight::Azt => (PrimitiveKind::Plain, f64::from(u8::from(traj.azt))),
            Weight::Pcp => (PrimitiveKind::Plain, f64::from(u8::from(pcp))),
            Weight::Const(v) => (PrimitiveKind::Plain, v),
        };
        total += factor * c * segment_primitive(p.gamma, a, b, kind)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Which of `(xi, gamma, theta1, theta2)` are estimated; the rest stay at
    /// their initial values.
    pub free: [bool; 4],
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            tol: 1e-10,
            max_iter: 100,
            free: [true; 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeibullFit {
    pub params: WeibullPh,
    pub iterations: usize,
    /// Max-norm of the free score components (cohort means).
    pub residual: f64,
    /// Mean score components at the returned parameters.
    pub score: Vec<f64>,
    /// Mean observed information `-d score / d params` in natural
    /// parameters, over all components.
    pub information: Vec<Vec<f64>>,
}

pub fn weibull_mle(cohort: &Cohort, init: &WeibullPh, opts: &MleOptions) -> Result<WeibullFit> {
    cohort.require_nonempty()?;
    if init.alpha != 0.0 {
        return domain("weibull_mle fits the model without the X term; alpha must be 0");
    }
    let pats = Prepared::all(cohort.patients())?;
    let mut free = [false; 5];
    free[..4].copy_from_slice(&opts.free);
    fit(&pats, None, init, free, opts.tol, opts.max_iter)
}

/// Mean score and Jacobian (natural parameters) of the first `q` components.
pub(crate) struct System {
    pub score: [f64; MAXP],
    pub jacobian: [[f64; MAXP]; MAXP],
}

pub(crate) fn nuisance_system(
    pats: &[Prepared],
    marks: Option<&[Mark]>,
    params: &WeibullPh,
    q: usize,
) -> System {
    let extra = q - NUISANCE;
    let mut score = [0.0; MAXP];
    let mut jacobian = [[0.0; MAXP]; MAXP];
    let mut excess = 0.0;
    for (i, pat) in pats.iter().enumerate() {
        let mark = marks.map(|m| &m[i]);
        let t = terms(pat, params, mark, extra, true);
        for a in 0..q {
            score[a] += t.g(a);
            for b in 0..q {
                jacobian[a][b] -= t.outer[a][b];
            }
        }
        excess += f64::from(u8::from(t.event)) - t.cum_hazard;
    }
    jacobian[0][0] -= excess / (params.xi * params.xi);
    jacobian[1][1] -= excess / (params.gamma * params.gamma);
    let n = pats.len() as f64;
    for a in 0..q {
        score[a] /= n;
        for b in 0..q {
            jacobian[a][b] /= n;
        }
    }
    System { score, jacobian }
}

fn to_params(beta: &[f64; 5]) -> WeibullPh {
    WeibullPh {
        xi: beta[0].exp(),
        gamma: beta[1].exp(),
        theta1: beta[2],
        theta2: beta[3],
        alpha: beta[4],
    }
}

const MAX_HALVINGS: usize = 30;

/// Damped Newton on the score equations with `(log xi, log gamma)`
/// internally. With `marks` the fifth component (the `alpha` score) is
/// included.
pub(crate) fn fit(
    pats: &[Prepared],
    marks: Option<&[Mark]>,
    init: &WeibullPh,
    free: [bool; 5],
    tol: f64,
    max_iter: usize,
) -> Result<WeibullFit> {
    init.validate()?;
    if pats.iter().all(|p| p.event.is_none()) {
        return Err(GestError::NoEvents);
    }
    let q = if marks.is_some() { 5 } else { 4 };
    let idx: Vec<usize> = (0..q).filter(|&i| free[i]).collect();
    let mut beta = [
        init.xi.ln(),
        init.gamma.ln(),
        init.theta1,
        init.theta2,
        init.alpha,
    ];
    let norm = |s: &[f64; MAXP]| idx.iter().map(|&i| s[i].abs()).fold(0.0, f64::max);

    let mut sys = nuisance_system(pats, marks, &to_params(&beta), q);
    let mut res = norm(&sys.score);
    let mut iterations = 0;
    while res > tol || !res.is_finite() {
        if iterations >= max_iter || !res.is_finite() {
            return Err(GestError::NoConvergence {
                iterations,
                residual: res,
                last: beta[..q].to_vec(),
            });
        }
        iterations += 1;
        let p = to_params(&beta);
        let chain = [p.xi, p.gamma, 1.0, 1.0, 1.0];
        let m = idx.len();
        let jac = DMatrix::from_fn(m, m, |r, c| sys.jacobian[idx[r]][idx[c]] * chain[idx[c]]);
        let rhs = DVector::from_fn(m, |r, _| -sys.score[idx[r]]);
        let step = jac.lu().solve(&rhs).ok_or_else(|| {
            GestError::Singular("Jacobian of the intensity score equations".into())
        })?;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = beta;
            for (r, &i) in idx.iter().enumerate() {
                trial[i] += scale * step[r];
            }
            let trial_sys = nuisance_system(pats, marks, &to_params(&trial), q);
            let trial_res = norm(&trial_sys.score);
            if trial_res.is_finite() && trial_res < res {
                beta = trial;
                sys = trial_sys;
                res = trial_res;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            if res <= tol * 100.0 {
                // already at rounding level
                break;
            }
            return Err(GestError::NoConvergence {
                iterations,
                residual: res,
                last: beta[..q].to_vec(),
            });
        }
    }
    let params = to_params(&beta);
    Ok(WeibullFit {
        params,
        iterations,
        residual: res,
        score: sys.score[..q].to_vec(),
        information: (0..q)
            .map(|a| (0..q).map(|b| -sys.jacobian[a][b]).collect())
            .collect(),
    })
}
