//! Joint g-estimation of the Weibull intensity parameters and the shift
//! parameters `psi` from the stacked estimating function
//! `int (1/xi, 1/gamma + log t, I_AZT, I_PCP(t), X_psi(t) e(t)) (dN - lambda dt)`,
//! where `e(t)` is `1` for one-dimensional `psi` and `(1, I_PCP(t), I_AZT)`
//! for the stratified model.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{domain, GestError, Result};
use crate::integrals::{psi_derivative, terms, Mark, Prepared, MAXP, NUISANCE};
use crate::intensity::{fit, weibull_mle, MleOptions, WeibullPh};
use crate::shift::{ShiftModel, ShiftParams};
use crate::special::normal_quantile;
use crate::trajectory::{Cohort, Trajectory};

/// Tolerance of the backward ODE wherever `X_psi` has no closed form.
pub const ODE_TOL: f64 = 1e-10;

/// Per-patient estimating function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GVector {
    pub components: Vec<f64>,
    /// `h_T` at the initiation time, zero when never initiated.
    pub jump_part: Vec<f64>,
    /// `int h lambda dt` over the at-risk set.
    pub drift_part: Vec<f64>,
    /// `int h_j^2 lambda dt`, the predictable variation of each component.
    pub quadratic: Vec<f64>,
}

fn check_weibull(weibull: &WeibullPh) -> Result<()> {
    weibull.validate()?;
    if weibull.alpha != 0.0 {
        return domain(
            "the estimating function uses the intensity without the X term; alpha must be 0",
        );
    }
    Ok(())
}

pub fn g_patient(
    traj: &Trajectory,
    weibull: &WeibullPh,
    psi: &ShiftParams,
    model: &ShiftModel,
) -> Result<GVector> {
    check_weibull(weibull)?;
    model.check_params(psi)?;
    let pat = Prepared::new(traj)?;
    let mark = Mark::mimic(traj, &pat, model, psi, ODE_TOL)?;
    let t = terms(&pat, weibull, Some(&mark), psi.dim(), true);
    let p = t.p;
    Ok(GVector {
        components: (0..p).map(|i| t.g(i)).collect(),
        jump_part: t.jump[..p].to_vec(),
        drift_part: t.drift[..p].to_vec(),
        quadratic: (0..p).map(|i| t.outer[i][i]).collect(),
    })
}

/// Cohort mean of the estimating function with the per-patient vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stacked {
    pub mean: Vec<f64>,
    pub per_patient: Vec<Vec<f64>>,
}

impl Stacked {
    /// Monte Carlo standard error of each component of the mean.
    pub fn standard_errors(&self) -> Vec<f64> {
        let n = self.per_patient.len() as f64;
        (0..self.mean.len())
            .map(|j| {
                let ss: f64 = self
                    .per_patient
                    .iter()
                    .map(|g| (g[j] - self.mean[j]).powi(2))
                    .sum();
                (ss / (n - 1.0) / n).sqrt()
            })
            .collect()
    }
}

/// Patients prepared once for repeated evaluation over `psi`.
struct Problem<'a> {
    trajs: &'a [Trajectory],
    pats: Vec<Prepared>,
    model: &'a ShiftModel,
}

impl<'a> Problem<'a> {
    fn new(cohort: &'a Cohort, model: &'a ShiftModel) -> Result<Self> {
        cohort.require_nonempty()?;
        Ok(Problem {
            trajs: cohort.patients(),
            pats: Prepared::all(cohort.patients())?,
            model,
        })
    }

    fn n(&self) -> f64 {
        self.pats.len() as f64
    }

    fn marks(&self, psi: &ShiftParams) -> Result<Vec<Mark>> {
        self.model.check_params(psi)?;
        self.trajs
            .iter()
            .zip(&self.pats)
            .map(|(traj, pat)| Mark::mimic(traj, pat, self.model, psi, ODE_TOL))
            .collect()
    }

    /// Mean of the extra components at fixed nuisance parameters.
    fn extra_mean(&self, weibull: &WeibullPh, psi: &ShiftParams) -> Result<Vec<f64>> {
        let k = psi.dim();
        let marks = self.marks(psi)?;
        let mut mean = vec![0.0; k];
        for (pat, mark) in self.pats.iter().zip(&marks) {
            let t = terms(pat, weibull, Some(mark), k, false);
            for (j, m) in mean.iter_mut().enumerate() {
                *m += t.g(NUISANCE + j);
            }
        }
        Ok(mean.into_iter().map(|v| v / self.n()).collect())
    }

    fn full_mean(&self, weibull: &WeibullPh, psi: &ShiftParams) -> Result<Vec<f64>> {
        let k = psi.dim();
        let marks = self.marks(psi)?;
        let mut mean = vec![0.0; NUISANCE + k];
        for (pat, mark) in self.pats.iter().zip(&marks) {
            let t = terms(pat, weibull, Some(mark), k, false);
            for (j, m) in mean.iter_mut().enumerate() {
                *m += t.g(j);
            }
        }
        Ok(mean.into_iter().map(|v| v / self.n()).collect())
    }

    /// `d (extra mean) / d psi` at fixed nuisance parameters.
    fn psi_jacobian(&self, weibull: &WeibullPh, psi: &ShiftParams) -> Result<Vec<Vec<f64>>> {
        let k = psi.dim();
        let marks = self.marks(psi)?;
        let mut jac = vec![vec![0.0; k]; k];
        for (pat, mark) in self.pats.iter().zip(&marks) {
            let rows = psi_derivative(pat, weibull, mark, k);
            for j in 0..k {
                for l in 0..k {
                    jac[j][l] += rows[j][l];
                }
            }
        }
        Ok(jac
            .into_iter()
            .map(|r| r.into_iter().map(|v| v / self.n()).collect())
            .collect())
    }
}

pub fn stacked(
    cohort: &Cohort,
    weibull: &WeibullPh,
    psi: &ShiftParams,
    model: &ShiftModel,
) -> Result<Stacked> {
    check_weibull(weibull)?;
    let problem = Problem::new(cohort, model)?;
    let marks = problem.marks(psi)?;
    let k = psi.dim();
    let mut mean = vec![0.0; NUISANCE + k];
    let mut per_patient = Vec::with_capacity(problem.pats.len());
    for (pat, mark) in problem.pats.iter().zip(&marks) {
        let t = terms(pat, weibull, Some(mark), k, false);
        let g: Vec<f64> = (0..t.p).map(|i| t.g(i)).collect();
        for (m, v) in mean.iter_mut().zip(&g) {
            *m += v;
        }
        per_patient.push(g);
    }
    let n = problem.n();
    Ok(Stacked {
        mean: mean.into_iter().map(|v| v / n).collect(),
        per_patient,
    })
}

/// Analytic Jacobian of the stacked mean in `(xi, gamma, theta1, theta2, psi)`.
pub fn stacked_jacobian(
    cohort: &Cohort,
    weibull: &WeibullPh,
    psi: &ShiftParams,
    model: &ShiftModel,
) -> Result<Vec<Vec<f64>>> {
    check_weibull(weibull)?;
    let problem = Problem::new(cohort, model)?;
    let k = psi.dim();
    let p = NUISANCE + k;
    let marks = problem.marks(psi)?;
    let mut jac = vec![vec![0.0; p]; p];
    let mut excess = 0.0;
    for (pat, mark) in problem.pats.iter().zip(&marks) {
        let t = terms(pat, weibull, Some(mark), k, true);
        for a in 0..p {
            for b in 0..NUISANCE {
                jac[a][b] -= t.outer[a][b];
            }
        }
        let rows = psi_derivative(pat, weibull, mark, k);
        for j in 0..k {
            for l in 0..k {
                jac[NUISANCE + j][NUISANCE + l] += rows[j][l];
            }
        }
        excess += f64::from(u8::from(t.event)) - t.cum_hazard;
    }
    jac[0][0] -= excess / (weibull.xi * weibull.xi);
    jac[1][1] -= excess / (weibull.gamma * weibull.gamma);
    let n = problem.n();
    Ok(jac
        .into_iter()
        .map(|r| r.into_iter().map(|v| v / n).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    pub psi_bracket: (f64, f64),
    /// Max-norm tolerance on the stacked estimating function.
    pub tol: f64,
    pub max_iter: usize,
    pub ci_level: f64,
    /// Grid points used to bracket sign changes of the `psi` equation.
    pub scan_points: usize,
    /// Starting value for the intensity fit; the exponential-rate guess when absent.
    pub nuisance_init: Option<WeibullPh>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            psi_bracket: (-3.0, 3.0),
            tol: 1e-8,
            max_iter: 100,
            ci_level: 0.95,
            scan_points: 25,
            nuisance_init: None,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.psi_bracket;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return domain(format!(
                "psi bracket [{lo}, {hi}] must be a finite interval"
            ));
        }
        if !(self.tol > 0.0) {
            return domain("solver tolerance must be positive");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return domain(format!("ci level {} outside (0, 1)", self.ci_level));
        }
        if self.scan_points < 2 {
            return domain("at least two scan points are needed");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `profile` (bracketed root in psi), `profile_newton` (Newton in psi at
    /// the fitted intensity) or `joint_newton` (fallback).
    pub method: String,
    pub nuisance_iterations: usize,
    pub psi_iterations: usize,
    /// Max-norm of the stacked estimating function at the estimate.
    pub residual: f64,
    /// Every sign-change bracket found by the scan; more than one flags
    /// multiple roots.
    pub brackets: Vec<(f64, f64)>,
    pub n: usize,
    pub events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationResult {
    pub model: String,
    pub names: Vec<String>,
    /// `(xi, gamma, theta1, theta2, psi...)`.
    pub params: Vec<f64>,
    pub weibull: WeibullPh,
    pub psi: ShiftParams,
    pub v0: Vec<Vec<f64>>,
    pub w0: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub ci_level: f64,
    pub diagnostics: Diagnostics,
}

pub fn parameter_names(model: &ShiftModel) -> Vec<String> {
    let mut names: Vec<String> = ["xi", "gamma", "theta1", "theta2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if model.dim() == 1 {
        names.push("psi".into());
    } else {
        names.extend((1..=model.dim()).map(|j| format!("psi{j}")));
    }
    names
}

struct PsiRoot {
    psi: ShiftParams,
    iterations: usize,
    method: &'static str,
    brackets: Vec<(f64, f64)>,
}

pub fn solve(
    cohort: &Cohort,
    model: &ShiftModel,
    init: &ShiftParams,
    opts: &SolveOptions,
) -> Result<EstimationResult> {
    opts.validate()?;
    model.check_params(init)?;
    let (lo, hi) = opts.psi_bracket;
    if init.0.iter().any(|v| *v < lo || *v > hi) {
        return domain(format!(
            "initial psi {:?} outside the parameter box [{lo}, {hi}]",
            init.0
        ));
    }
    if model.dim() + NUISANCE > MAXP {
        return domain(format!(
            "at most {} shift parameters are supported",
            MAXP - NUISANCE
        ));
    }
    let problem = Problem::new(cohort, model)?;
    let start = opts
        .nuisance_init
        .unwrap_or_else(|| WeibullPh::initial_guess(cohort));
    let nuisance = fit(
        &problem.pats,
        None,
        &start,
        [true, true, true, true, false],
        opts.tol.min(MleOptions::default().tol),
        opts.max_iter,
    )?;
    let weibull = nuisance.params;

    let mut trace = Vec::new();
    let root = if model.dim() == 1 {
        profile_root(&problem, &weibull, init, opts, &mut trace)
    } else {
        profile_newton(&problem, &weibull, init, opts, &mut trace)
    };
    let (weibull, root) = match root {
        Ok(r) => (weibull, r),
        Err(_) => joint_newton(&problem, &weibull, init, opts, &mut trace).map_err(|_| {
            GestError::NoRoot {
                trace: trace.clone(),
            }
        })?,
    };

    let full = problem.full_mean(&weibull, &root.psi)?;
    let residual = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(residual <= opts.tol) {
        return Err(GestError::NoConvergence {
            iterations: root.iterations,
            residual,
            last: weibull
                .nuisance()
                .iter()
                .chain(&root.psi.0)
                .copied()
                .collect(),
        });
    }

    let sw = sandwich_prepared(&problem, &weibull, &root.psi)?;
    let params: Vec<f64> = weibull
        .nuisance()
        .iter()
        .chain(&root.psi.0)
        .copied()
        .collect();
    let z = normal_quantile(0.5 + 0.5 * opts.ci_level)?;
    let se: Vec<f64> = (0..params.len())
        .map(|i| sw.cov[i][i].max(0.0).sqrt())
        .collect();
    let ci = params
        .iter()
        .zip(&se)
        .map(|(p, s)| (p - z * s, p + z * s))
        .collect();
    Ok(EstimationResult {
        model: model.name(),
        names: parameter_names(model),
        params,
        weibull,
        psi: root.psi,
        v0: sw.v0,
        w0: sw.w0,
        cov: sw.cov,
        se,
        ci,
        ci_level: opts.ci_level,
        diagnostics: Diagnostics {
            method: root.method.into(),
            nuisance_iterations: nuisance.iterations,
            psi_iterations: root.iterations,
            residual,
            brackets: root.brackets,
            n: cohort.len(),
            events: cohort.events(),
        },
    })
}

/// Scan the bracket for sign changes, then refine the one nearest `init`
/// by secant steps safeguarded with bisection.
fn profile_root(
    problem: &Problem<'_>,
    weibull: &WeibullPh,
    init: &ShiftParams,
    opts: &SolveOptions,
    trace: &mut Vec<(f64, f64)>,
) -> Result<PsiRoot> {
    let mut f = |psi: f64| -> Result<f64> {
        let v = problem.extra_mean(weibull, &ShiftParams::scalar(psi))?[0];
        trace.push((psi, v));
        Ok(v)
    };
    let (lo, hi) = opts.psi_bracket;
    let m = opts.scan_points;
    let grid: Vec<f64> = (0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect();
    let values = grid.iter().map(|&p| f(p)).collect::<Result<Vec<_>>>()?;
    let mut brackets = Vec::new();
    for i in 0..m - 1 {
        if values[i] == 0.0 {
            brackets.push((grid[i], grid[i]));
        } else if values[i] * values[i + 1] < 0.0 {
            brackets.push((grid[i], grid[i + 1]));
        }
    }
    if values[m - 1] == 0.0 {
        brackets.push((grid[m - 1], grid[m - 1]));
    }
    let target = init.0[0];
    let &(mut a, mut b) = brackets
        .iter()
        .min_by(|x, y| {
            let dx = (0.5 * (x.0 + x.1) - target).abs();
            let dy = (0.5 * (y.0 + y.1) - target).abs();
            dx.total_cmp(&dy)
        })
        .ok_or(GestError::NoRoot { trace: Vec::new() })?;
    if a == b {
        return Ok(PsiRoot {
            psi: ShiftParams::scalar(a),
            iterations: 0,
            method: "profile",
            brackets,
        });
    }
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    let mut iterations = 0;
    // secant steps, with bisection whenever the step leaves the bracket or
    // the previous step failed to halve it
    let mut last_width = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let secant = b - fb * (b - a) / (fb - fa);
        let slow = b - a > 0.5 * last_width;
        let c = if !slow && secant > a && secant < b {
            secant
        } else {
            0.5 * (a + b)
        };
        last_width = b - a;
        let fc = f(c)?;
        if fc.abs() <= opts.tol || b - a <= 4.0 * f64::EPSILON * (1.0 + c.abs()) {
            return Ok(PsiRoot {
                psi: ShiftParams::scalar(c),
                iterations,
                method: "profile",
                brackets,
            });
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
    }
    Err(GestError::NoRoot { trace: Vec::new() })
}

/// Damped Newton in `psi` at the fitted intensity, with the analytic Jacobian.
fn profile_newton(
    problem: &Problem<'_>,
    weibull: &WeibullPh,
    init: &ShiftParams,
    opts: &SolveOptions,
    trace: &mut Vec<(f64, f64)>,
) -> Result<PsiRoot> {
    let k = init.dim();
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut psi = init.clone();
    let mut f = problem.extra_mean(weibull, &psi)?;
    let mut res = norm(&f);
    trace.push((psi.0[0], res));
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(GestError::NoRoot { trace: Vec::new() });
        }
        iterations += 1;
        let jac = problem.psi_jacobian(weibull, &psi)?;
        let jm = DMatrix::from_fn(k, k, |r, c| jac[r][c]);
        let step = jm
            .lu()
            .solve(&DVector::from_fn(k, |r, _| -f[r]))
            .ok_or_else(|| GestError::Singular("psi block of the estimating equations".into()))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = ShiftParams(
                psi.0
                    .iter()
                    .zip(step.iter())
                    .map(|(p, s)| p + scale * s)
                    .collect(),
            );
            let ft = problem.extra_mean(weibull, &trial)?;
            let rt = norm(&ft);
            trace.push((trial.0[0], rt));
            if rt < res {
                psi = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(GestError::NoRoot { trace: Vec::new() });
        }
    }
    Ok(PsiRoot {
        psi,
        iterations,
        method: "profile_newton",
        brackets: Vec::new(),
    })
}

/// Damped Newton on all equations in `(log xi, log gamma, theta, psi)` with a
/// forward-difference Jacobian.
fn joint_newton(
    problem: &Problem<'_>,
    weibull: &WeibullPh,
    init: &ShiftParams,
    opts: &SolveOptions,
    trace: &mut Vec<(f64, f64)>,
) -> Result<(WeibullPh, PsiRoot)> {
    let k = init.dim();
    let p = NUISANCE + k;
    let unpack = |z: &[f64]| {
        (
            WeibullPh::new(z[0].exp(), z[1].exp(), z[2], z[3]),
            ShiftParams(z[NUISANCE..].to_vec()),
        )
    };
    let eval = |z: &[f64]| -> Result<Vec<f64>> {
        let (w, psi) = unpack(z);
        problem.full_mean(&w, &psi)
    };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut z: Vec<f64> = vec![
        weibull.xi.ln(),
        weibull.gamma.ln(),
        weibull.theta1,
        weibull.theta2,
    ];
    z.extend(&init.0);
    let mut f = eval(&z)?;
    let mut res = norm(&f);
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter || !res.is_finite() {
            return Err(GestError::NoRoot { trace: Vec::new() });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(p, p);
        for c in 0..p {
            let h = 1e-6 * (1.0 + z[c].abs());
            let mut zc = z.clone();
            zc[c] += h;
            let fc = eval(&zc)?;
            for r in 0..p {
                jac[(r, c)] = (fc[r] - f[r]) / h;
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_fn(p, |r, _| -f[r]))
            .ok_or_else(|| GestError::Singular("finite-difference Jacobian".into()))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial: Vec<f64> = z
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + scale * s)
                .collect();
            if let Ok(ft) = eval(&trial) {
                let rt = norm(&ft);
                trace.push((trial[NUISANCE], rt));
                if rt < res {
                    z = trial;
                    f = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(GestError::NoRoot { trace: Vec::new() });
        }
    }
    let (w, psi) = unpack(&z);
    Ok((
        w,
        PsiRoot {
            psi,
            iterations,
            method: "joint_newton",
            brackets: Vec::new(),
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sandwich {
    pub v0: Vec<Vec<f64>>,
    pub w0: Vec<Vec<f64>>,
    /// `V0^-1 W0 V0^-T / n`, symmetrized.
    pub cov: Vec<Vec<f64>>,
}

/// Plug-in sandwich at `(weibull, psi)`: `W0 = P_n int h h^T lambda dt`; the
/// nuisance columns of `V0` are `-P_n int h s_theta^T lambda dt`, the
/// nuisance rows have zero `psi` columns, and the `psi` block is
/// `P_n int e dX_psi/dpsi (dN - lambda dt)`.
pub fn sandwich(
    cohort: &Cohort,
    weibull: &WeibullPh,
    psi: &ShiftParams,
    model: &ShiftModel,
) -> Result<Sandwich> {
    check_weibull(weibull)?;
    let problem = Problem::new(cohort, model)?;
    sandwich_prepared(&problem, weibull, psi)
}

fn sandwich_prepared(
    problem: &Problem<'_>,
    weibull: &WeibullPh,
    psi: &ShiftParams,
) -> Result<Sandwich> {
    let k = psi.dim();
    let p = NUISANCE + k;
    let marks = problem.marks(psi)?;
    let mut w0 = DMatrix::<f64>::zeros(p, p);
    let mut v0 = DMatrix::<f64>::zeros(p, p);
    for (pat, mark) in problem.pats.iter().zip(&marks) {
        let t = terms(pat, weibull, Some(mark), k, true);
        for a in 0..p {
            for b in 0..p {
                w0[(a, b)] += t.outer[a][b];
            }
        }
        let rows = psi_derivative(pat, weibull, mark, k);
        for j in 0..k {
            for l in 0..k {
                v0[(NUISANCE + j, NUISANCE + l)] += rows[j][l];
            }
        }
    }
    let n = problem.n();
    w0 /= n;
    v0 /= n;
    for a in 0..p {
        for b in 0..NUISANCE {
            v0[(a, b)] = -w0[(a, b)];
        }
    }
    let inv = v0.clone().try_inverse().filter(|m| m.iter().all(|v| v.is_finite())).ok_or_else(|| {
        GestError::Singular(
            "V0 is not invertible; the asymptotic theory requires a nonsingular derivative of the expected estimating function"
                .into(),
        )
    })?;
    let mut cov = &inv * &w0 * inv.transpose() / n;
    let sym = 0.5 * (&cov + cov.transpose());
    cov = sym;
    let to_rows = |m: &DMatrix<f64>| {
        (0..p)
            .map(|r| (0..p).map(|c| m[(r, c)]).collect())
            .collect()
    };
    Ok(Sandwich {
        v0: to_rows(&v0),
        w0: to_rows(&w0),
        cov: to_rows(&cov),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaDiagnostic {
    pub alpha: f64,
    pub se: f64,
    /// Intensity parameters of the augmented fit.
    pub weibull: WeibullPh,
    pub iterations: usize,
}

impl AlphaDiagnostic {
    pub fn z(&self) -> f64 {
        self.alpha / self.se
    }
}

/// Fit the intensity augmented with `alpha X_psi(t)` at fixed `psi`; at the
/// true `psi` the mimicking process carries no information on initiation.
pub fn alpha_diagnostic(
    cohort: &Cohort,
    psi: &ShiftParams,
    model: &ShiftModel,
) -> Result<AlphaDiagnostic> {
    let problem = Problem::new(cohort, model)?;
    if cohort.events() == 0 {
        return Err(GestError::NoEvents);
    }
    let base = weibull_mle(
        cohort,
        &WeibullPh::initial_guess(cohort),
        &MleOptions::default(),
    )?;
    let marks = problem.marks(psi)?;
    let fitted = fit(
        &problem.pats,
        Some(&marks),
        &base.params,
        [true; 5],
        1e-10,
        100,
    )?;
    let info = DMatrix::from_fn(5, 5, |r, c| fitted.information[r][c]);
    let inv = info.try_inverse().ok_or_else(|| {
        GestError::Singular("information matrix of the augmented intensity".into())
    })?;
    let var = inv[(4, 4)] / problem.n();
    if !(var > 0.0) {
        return Err(GestError::Singular(
            "information matrix of the augmented intensity".into(),
        ));
    }
    Ok(AlphaDiagnostic {
        alpha: fitted.params.alpha,
        se: var.sqrt(),
        weibull: fitted.params,
        iterations: fitted.iterations,
    })
}

/// `(psi, mean of the psi component)` on an even grid of `steps` points,
/// with the intensity at `weibull` (one-dimensional models only).
pub fn psi_scan(
    cohort: &Cohort,
    model: &ShiftModel,
    weibull: &WeibullPh,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    check_weibull(weibull)?;
    if model.dim() != 1 {
        return domain("psi scan needs a one-dimensional shift model");
    }
    if !(lo <= hi) || steps == 0 {
        return domain(format!(
            "invalid scan range [{lo}, {hi}] with {steps} steps"
        ));
    }
    let problem = Problem::new(cohort, model)?;
    (0..steps)
        .map(|i| {
            let psi = if steps == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            };
            Ok((
                psi,
                problem.extra_mean(weibull, &ShiftParams::scalar(psi))?[0],
            ))
        })
        .collect()
}
