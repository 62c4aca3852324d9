//! Infinitesimal shift functions `D_psi(y, t; Z_t)` and the mimicking process
//! `X_psi(t)`, the continuous solution of `X' = D(X, t)` with `X(tau) = Y`.
//!
//! Treatment, once started at `T`, runs until death or the end of the
//! observation window `tau`, whichever comes first; it is stopped at `tau`.
//! `D` vanishes once the patient is dead, so `X(t) = Y` for `t >= Y`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, GestError, Result};
use crate::ode::integrate_segment;
use crate::trajectory::Trajectory;

/// Relative step for central-difference derivatives in `psi`.
pub const FD_REL_STEP: f64 = 1e-6;

/// Integrator tolerance used when `X_psi` feeds finite differences.
const FD_ODE_TOL: f64 = 1e-12;

/// Treatment and covariate state on an interval where the observed path is
/// constant, handed to rate functions.
#[derive(Clone, Copy, Debug)]
pub struct ShiftContext<'a> {
    pub traj: &'a Trajectory,
    pub alive: bool,
    pub treated: bool,
    /// PCP at or before `t`.
    pub pcp: bool,
    /// PCP at or before `t` and before treatment started.
    pub pcp_before_treatment: bool,
}

impl<'a> ShiftContext<'a> {
    /// Right-continuous state at `t`.
    pub fn at(traj: &'a Trajectory, t: f64) -> Self {
        let alive = t < traj.y;
        let pcp = traj.pcp_time.is_some_and(|p| p <= t);
        ShiftContext {
            traj,
            alive,
            treated: traj
                .treat_start
                .is_some_and(|s| s <= t && alive && t < traj.tau),
            pcp,
            pcp_before_treatment: pcp
                && match (traj.pcp_time, traj.treat_start) {
                    (Some(p), Some(s)) => p < s,
                    _ => true,
                },
        }
    }
}

/// User-supplied rate `d(y, t, context, psi)` with its declared regularity.
pub type RateFn = dyn Fn(f64, f64, &ShiftContext<'_>, &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct CustomRate {
    pub name: String,
    pub dim: usize,
    pub rate: Arc<RateFn>,
    /// Declared sup-norm bound of the rate.
    pub bound: f64,
    /// Declared Lipschitz constant in `y`.
    pub lipschitz_y: f64,
    /// Declared Lipschitz constant in `t` between jump times of the path.
    pub lipschitz_t: f64,
}

impl fmt::Debug for CustomRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRate")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .field("lipschitz_y", &self.lipschitz_y)
            .field("lipschitz_t", &self.lipschitz_t)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum ShiftModel {
    /// `(1 - e^psi) 1{treated at t}`.
    SimpleAft,
    /// `(1 - e^(psi1 + psi2 P(t) + psi3 I_AZT)) 1{treated at t}`.
    StratifiedAft,
    /// Wraps another model and switches it off when `y - t > window`.
    WindowRestricted {
        window: f64,
        inner: Box<ShiftModel>,
    },
    Custom(CustomRate),
}

impl ShiftModel {
    pub fn dim(&self) -> usize {
        match self {
            ShiftModel::SimpleAft => 1,
            ShiftModel::StratifiedAft => 3,
            ShiftModel::WindowRestricted { inner, .. } => inner.dim(),
            ShiftModel::Custom(c) => c.dim,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ShiftModel::SimpleAft => "simple_aft".into(),
            ShiftModel::StratifiedAft => "stratified_aft".into(),
            ShiftModel::WindowRestricted { window, inner } => {
                format!("window_restricted({window}, {})", inner.name())
            }
            ShiftModel::Custom(c) => format!("custom({})", c.name),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self, ShiftModel::SimpleAft | ShiftModel::StratifiedAft)
    }

    /// Whether `D` is zero whenever the patient is untreated, which makes
    /// `X_psi` constant on the at-risk set.
    pub fn vanishes_untreated(&self) -> bool {
        match self {
            ShiftModel::SimpleAft | ShiftModel::StratifiedAft => true,
            ShiftModel::WindowRestricted { inner, .. } => inner.vanishes_untreated(),
            ShiftModel::Custom(_) => false,
        }
    }

    pub(crate) fn check_params(&self, psi: &ShiftParams) -> Result<()> {
        if psi.dim() != self.dim() {
            return domain(format!(
                "{} expects {} shift parameter(s), got {}",
                self.name(),
                self.dim(),
                psi.dim()
            ));
        }
        if psi.0.iter().any(|v| !v.is_finite()) {
            return domain("shift parameters must be finite");
        }
        if let ShiftModel::WindowRestricted { window, inner } = self {
            if !(*window > 0.0) {
                return domain(format!("window {window} must be positive"));
            }
            if !inner.rate_below_one() {
                return domain(format!(
                    "{} needs an inner rate bounded below 1 so that the window switches off at most once",
                    self.name()
                ));
            }
        }
        Ok(())
    }

    /// `D < 1` everywhere, from the model form or the declared bound.
    fn rate_below_one(&self) -> bool {
        match self {
            ShiftModel::SimpleAft | ShiftModel::StratifiedAft => true,
            ShiftModel::WindowRestricted { inner, .. } => inner.rate_below_one(),
            ShiftModel::Custom(c) => c.bound < 1.0,
        }
    }

    fn rate(&self, psi: &[f64], y: f64, t: f64, ctx: &ShiftContext<'_>) -> f64 {
        if !ctx.alive {
            return 0.0;
        }
        match self {
            ShiftModel::SimpleAft => {
                if ctx.treated {
                    1.0 - psi[0].exp()
                } else {
                    0.0
                }
            }
            ShiftModel::StratifiedAft => {
                if ctx.treated {
                    1.0 - stratified_exponent(psi, ctx.pcp_before_treatment, ctx.traj.azt).exp()
                } else {
                    0.0
                }
            }
            ShiftModel::WindowRestricted { window, inner } => {
                if y - t > *window {
                    0.0
                } else {
                    inner.rate(psi, y, t, ctx)
                }
            }
            ShiftModel::Custom(c) => (c.rate)(y, t, ctx, psi),
        }
    }
}

fn stratified_exponent(psi: &[f64], p: bool, azt: bool) -> f64 {
    psi[0] + psi[1] * f64::from(u8::from(p)) + psi[2] * f64::from(u8::from(azt))
}

/// Shift-model parameter vector; all zeros means no treatment effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams(pub Vec<f64>);

impl ShiftParams {
    pub fn scalar(psi: f64) -> Self {
        ShiftParams(vec![psi])
    }

    pub fn zeros(dim: usize) -> Self {
        ShiftParams(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn d_eval(
    model: &ShiftModel,
    psi: &ShiftParams,
    y: f64,
    t: f64,
    traj: &Trajectory,
) -> Result<f64> {
    model.check_params(psi)?;
    if !(0.0..=traj.tau).contains(&t) {
        return domain(format!("t = {t} outside [0, tau = {}]", traj.tau));
    }
    Ok(model.rate(&psi.0, y, t, &ShiftContext::at(traj, t)))
}

/// Multiplier `e^eta` applied to treated time, for the closed-form models.
fn treated_time_factor(
    model: &ShiftModel,
    psi: &[f64],
    traj: &Trajectory,
) -> Option<(f64, [f64; 3])> {
    match model {
        ShiftModel::SimpleAft => Some((psi[0].exp(), [1.0, 0.0, 0.0])),
        ShiftModel::StratifiedAft => {
            let p = match (traj.pcp_time, traj.treat_start) {
                (Some(pcp), Some(start)) => pcp < start,
                _ => false,
            };
            let basis = [1.0, f64::from(u8::from(p)), f64::from(u8::from(traj.azt))];
            Some((stratified_exponent(psi, p, traj.azt).exp(), basis))
        }
        _ => None,
    }
}

/// `X_psi(t) = Y + (e^eta - 1) DUR(t, Y)` for the AFT models.
pub fn x_closed_form(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    t: f64,
) -> Result<f64> {
    model.check_params(psi)?;
    if !(0.0..=traj.tau).contains(&t) {
        return domain(format!("t = {t} outside [0, tau = {}]", traj.tau));
    }
    let (factor, _) = treated_time_factor(model, &psi.0, traj)
        .ok_or_else(|| GestError::Unsupported(model.name()))?;
    if t >= traj.y {
        return Ok(traj.y);
    }
    Ok(traj.y + (factor - 1.0) * traj.duration_treated(t, traj.y)?)
}

/// Solve `X' = D(X, s)` backward from `X(tau) = Y` down to `t`.
pub fn x_ode(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    t: f64,
    tol: f64,
) -> Result<f64> {
    Ok(x_ode_path(traj, psi, model, &[t], tol)?[0])
}

/// `X_psi` at several time points from a single backward sweep.
pub fn x_ode_path(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    times: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    // Before Y the patient is alive and X(tau) = Y; after Y, D = 0.
    let start = traj.tau.min(traj.y);
    backward_sweep(traj, psi, model, start, traj.y, times, tol)
}

/// Solve backward from an arbitrary final condition `x(t_final) = x_final`.
pub fn x_ode_from(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    t_final: f64,
    x_final: f64,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if t > t_final {
        return domain(format!("target t = {t} after final time {t_final}"));
    }
    Ok(backward_sweep(traj, psi, model, t_final, x_final, &[t], tol)?[0])
}

fn backward_sweep(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    start: f64,
    x_start: f64,
    times: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    model.check_params(psi)?;
    if !(tol > 0.0) {
        return domain("ODE tolerance must be positive");
    }
    if let Some(&bad) = times.iter().find(|t| !(0.0..=traj.tau).contains(*t)) {
        return domain(format!("t = {bad} outside [0, tau = {}]", traj.tau));
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[j].total_cmp(&times[i]));
    let lowest = times[*order.last().unwrap()].min(start);

    let mut stops = traj.segment_grid(lowest, start);
    stops.extend(times.iter().copied().filter(|&t| t < start && t > lowest));
    stops.sort_by(|a, b| b.total_cmp(a));
    stops.dedup();

    let mut out = vec![0.0; times.len()];
    let mut next = 0;
    while next < order.len() && times[order[next]] >= start {
        out[order[next]] = x_start;
        next += 1;
    }
    let mut x = x_start;
    for pair in stops.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        let ctx = ShiftContext::at(traj, 0.5 * (hi + lo));
        x = advance(model, &psi.0, &ctx, x, hi, lo, tol)?;
        while next < order.len() && times[order[next]] >= lo {
            out[order[next]] = x;
            next += 1;
        }
    }
    Ok(out)
}

/// Integrate backward over `[lo, hi]`, where the observed path is constant.
///
/// A window switches the rate off once `x - s > window`. Going backward in
/// time `x - s` grows at rate `1 - D_inner`, so for inner rates below one the
/// state crosses the switching surface at most once per segment; the crossing
/// is located by bisection and the state is frozen beyond it.
fn advance(
    model: &ShiftModel,
    psi: &[f64],
    ctx: &ShiftContext<'_>,
    x: f64,
    hi: f64,
    lo: f64,
    tol: f64,
) -> Result<f64> {
    match model {
        ShiftModel::WindowRestricted { window, inner } => {
            let off = |x: f64, s: f64| x - s > *window;
            if off(x, hi) {
                return Ok(x);
            }
            let end = advance(inner, psi, ctx, x, hi, lo, tol)?;
            if !off(end, lo) {
                return Ok(end);
            }
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-15 * (1.0 + hi.abs()) {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if off(advance(inner, psi, ctx, x, hi, m, tol)?, m) {
                    a = m;
                } else {
                    b = m;
                }
            }
            advance(inner, psi, ctx, x, hi, b, tol)
        }
        _ => integrate_segment(|y, s| model.rate(psi, y, s, ctx), x, hi, lo, tol),
    }
}

/// Gradient of `X_psi(t)` in `psi`.
pub fn dx_dpsi(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    t: f64,
) -> Result<Vec<f64>> {
    model.check_params(psi)?;
    if !(0.0..=traj.tau).contains(&t) {
        return domain(format!("t = {t} outside [0, tau = {}]", traj.tau));
    }
    if let Some((factor, basis)) = treated_time_factor(model, &psi.0, traj) {
        let dur = traj.duration_treated(t.min(traj.y), traj.y)?;
        return Ok(basis[..model.dim()]
            .iter()
            .map(|b| b * factor * dur)
            .collect());
    }
    Ok(fd_gradient(traj, psi, model, &[t])?.remove(0))
}

/// Central-difference gradients of `X_psi` at several times; `out[i][j]` is
/// the derivative at `times[i]` in direction `psi_j`.
pub(crate) fn fd_gradient(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let k = psi.dim();
    let mut grads = vec![vec![0.0; k]; times.len()];
    for j in 0..k {
        let h = FD_REL_STEP * (1.0 + psi.0[j].abs());
        let mut up = psi.clone();
        up.0[j] += h;
        let mut down = psi.clone();
        down.0[j] -= h;
        let xu = x_ode_path(traj, &up, model, times, FD_ODE_TOL)?;
        let xd = x_ode_path(traj, &down, model, times, FD_ODE_TOL)?;
        for (g, (u, d)) in grads.iter_mut().zip(xu.iter().zip(&xd)) {
            g[j] = (u - d) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Value and `psi`-gradient of `X_psi` on the at-risk set, when the model
/// makes it constant there (it then equals `X_psi(risk_end)`).
pub(crate) fn x_constant_on_risk_set(
    traj: &Trajectory,
    psi: &ShiftParams,
    model: &ShiftModel,
    ode_tol: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    if !model.vanishes_untreated() {
        return Ok(None);
    }
    let end = traj.risk_end();
    if model.has_closed_form() {
        return Ok(Some((
            x_closed_form(traj, psi, model, end)?,
            dx_dpsi(traj, psi, model, end)?,
        )));
    }
    let value = x_ode(traj, psi, model, end, ode_tol)?;
    let grad = fd_gradient(traj, psi, model, &[end])?.remove(0);
    Ok(Some((value, grad)))
}

/// Empirical regularity constants of `D` on a lattice.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub bound: f64,
    pub lipschitz_y: f64,
    pub lipschitz_t: f64,
    pub violations: Vec<String>,
}

/// Probe `|D|` and its difference quotients on a `grid_n x grid_n` lattice
/// over `[0, tau] x [0, 2Y]`. Time quotients across a jump of the observed
/// path are skipped.
pub fn check_regularity(
    model: &ShiftModel,
    psi: &ShiftParams,
    traj: &Trajectory,
    grid_n: usize,
) -> Result<RegularityReport> {
    model.check_params(psi)?;
    if grid_n < 2 {
        return domain("grid_n must be at least 2");
    }
    let ts: Vec<f64> = (0..grid_n)
        .map(|i| traj.tau * i as f64 / (grid_n - 1) as f64)
        .collect();
    let ys: Vec<f64> = (0..grid_n)
        .map(|j| 2.0 * traj.y * j as f64 / (grid_n - 1) as f64)
        .collect();
    let jumps: Vec<f64> = [traj.pcp_time, traj.treat_start, Some(traj.y)]
        .into_iter()
        .flatten()
        .collect();

    let mut values = vec![vec![0.0; grid_n]; grid_n];
    let mut violations = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let ctx = ShiftContext::at(traj, t);
        for (j, &y) in ys.iter().enumerate() {
            let v = model.rate(&psi.0, y, t, &ctx);
            if !v.is_finite() {
                violations.push(format!("non-finite D({y}, {t}) = {v}"));
            }
            values[i][j] = v;
        }
    }

    let finite_max = |acc: f64, v: f64| if v.is_finite() { acc.max(v) } else { acc };
    let bound = values
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0, finite_max);
    let mut lipschitz_y: f64 = 0.0;
    let mut lipschitz_t: f64 = 0.0;
    for i in 0..grid_n {
        for j in 0..grid_n - 1 {
            let q = (values[i][j + 1] - values[i][j]).abs() / (ys[j + 1] - ys[j]);
            lipschitz_y = finite_max(lipschitz_y, q);
        }
    }
    for i in 0..grid_n - 1 {
        // the state is right-continuous, so a jump at ts[i+1] itself also counts
        if jumps.iter().any(|&e| e > ts[i] && e <= ts[i + 1]) {
            continue;
        }
        for j in 0..grid_n {
            let q = (values[i + 1][j] - values[i][j]).abs() / (ts[i + 1] - ts[i]);
            lipschitz_t = finite_max(lipschitz_t, q);
        }
    }

    if let ShiftModel::Custom(c) = model {
        let slack = |declared: f64| declared * (1.0 + 1e-9) + 1e-12;
        if bound > slack(c.bound) {
            violations.push(format!("bound {bound} exceeds declared {}", c.bound));
        }
        if lipschitz_y > slack(c.lipschitz_y) {
            violations.push(format!(
                "Lipschitz constant in y {lipschitz_y} exceeds declared {}",
                c.lipschitz_y
            ));
        }
        if lipschitz_t > slack(c.lipschitz_t) {
            violations.push(format!(
                "Lipschitz constant in t {lipschitz_t} exceeds declared {}",
                c.lipschitz_t
            ));
        }
    }
    Ok(RegularityReport {
        bound,
        lipschitz_y,
        lipschitz_t,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn treated() -> Trajectory {
        Trajectory::new("p", true, None, Some(2.0), 5.0, 10.0).unwrap()
    }

    fn untreated() -> Trajectory {
        Trajectory::new("u", false, Some(1.0), None, 5.0, 10.0).unwrap()
    }

    fn linear_decay() -> ShiftModel {
        ShiftModel::Custom(CustomRate {
            name: "decay".into(),
            dim: 1,
            rate: Arc::new(|y, _t, _ctx, _psi| -0.1 * y),
            bound: 1.0,
            lipschitz_y: 0.1,
            lipschitz_t: 0.0,
        })
    }

    #[test]
    fn window_needs_inner_rate_below_one() {
        let psi = ShiftParams::scalar(0.0);
        let wrap = |inner| ShiftModel::WindowRestricted {
            window: 2.0,
            inner: Box::new(inner),
        };
        assert!(x_ode(&treated(), &psi, &wrap(linear_decay()), 0.0, 1e-10).is_err());
        assert!(x_ode(&treated(), &psi, &wrap(ShiftModel::SimpleAft), 0.0, 1e-10).is_ok());
        let zero = ShiftModel::WindowRestricted {
            window: 0.0,
            inner: Box::new(ShiftModel::SimpleAft),
        };
        assert!(x_ode(&treated(), &psi, &zero, 0.0, 1e-10).is_err());
    }

    #[test]
    fn d_eval_examples() {
        let p = treated();
        let simple = ShiftModel::SimpleAft;
        assert_eq!(
            d_eval(&simple, &ShiftParams::scalar(0.0), 3.0, 1.0, &p).unwrap(),
            0.0
        );
        assert_eq!(
            d_eval(&simple, &ShiftParams::scalar(0.0), 3.0, 3.0, &p).unwrap(),
            0.0
        );
        let v = d_eval(&simple, &ShiftParams::scalar(LN_2), 3.0, 3.0, &p).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        // untreated before T, dead after Y
        assert_eq!(
            d_eval(&simple, &ShiftParams::scalar(LN_2), 3.0, 1.0, &p).unwrap(),
            0.0
        );
        assert_eq!(
            d_eval(&simple, &ShiftParams::scalar(LN_2), 3.0, 6.0, &p).unwrap(),
            0.0
        );

        let q = Trajectory::new("q", true, Some(1.0), Some(2.0), 5.0, 10.0).unwrap();
        let v = d_eval(
            &ShiftModel::StratifiedAft,
            &ShiftParams(vec![LN_2, 0.0, 0.0]),
            3.0,
            3.0,
            &q,
        )
        .unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        assert!(d_eval(&simple, &ShiftParams(vec![0.1, 0.2]), 3.0, 3.0, &p).is_err());
    }

    #[test]
    fn window_switches_off_far_outcomes() {
        let model = ShiftModel::WindowRestricted {
            window: 5.0,
            inner: Box::new(ShiftModel::SimpleAft),
        };
        let p = treated();
        let psi = ShiftParams::scalar(LN_2);
        assert_eq!(d_eval(&model, &psi, 9.0, 3.0, &p).unwrap(), 0.0);
        assert!((d_eval(&model, &psi, 7.0, 3.0, &p).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        let p = treated();
        let psi = ShiftParams::scalar(LN_2);
        let m = ShiftModel::SimpleAft;
        assert!((x_closed_form(&p, &psi, &m, 0.0).unwrap() - 8.0).abs() < 1e-12);
        assert!((x_closed_form(&p, &psi, &m, 3.0).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(x_closed_form(&p, &psi, &m, 6.0).unwrap(), 5.0);
        for t in [0.0, 1.0, 2.5, 4.0, 9.0] {
            assert_eq!(
                x_closed_form(&p, &ShiftParams::scalar(0.0), &m, t).unwrap(),
                5.0
            );
            assert_eq!(x_closed_form(&untreated(), &psi, &m, t).unwrap(), 5.0);
        }
        let err = x_closed_form(&p, &psi, &linear_decay(), 0.0).unwrap_err();
        assert!(matches!(err, GestError::Unsupported(_)));
    }

    #[test]
    fn ode_examples() {
        let p = treated();
        let m = ShiftModel::SimpleAft;
        assert_eq!(
            x_ode(&p, &ShiftParams::scalar(0.0), &m, 0.0, 1e-10).unwrap(),
            5.0
        );
        let x = x_ode(&p, &ShiftParams::scalar(LN_2), &m, 0.0, 1e-10).unwrap();
        assert!((x - 8.0).abs() < 1e-8);

        let q = Trajectory::new("q", false, None, None, 2.0, 1.0).unwrap();
        let x = x_ode(&q, &ShiftParams::scalar(0.0), &linear_decay(), 0.0, 1e-10).unwrap();
        assert!((x - 2.0 * 0.1f64.exp()).abs() < 1e-8);
        assert!((x - 2.210_341_8).abs() < 1e-7);
    }

    #[test]
    fn ode_path_matches_pointwise() {
        let p = Trajectory::new("q", true, Some(1.0), Some(2.0), 5.0, 10.0).unwrap();
        let psi = ShiftParams(vec![0.4, -0.3, 0.2]);
        let m = ShiftModel::StratifiedAft;
        let times = [3.0, 0.0, 9.0, 2.0, 1.5];
        let path = x_ode_path(&p, &psi, &m, &times, 1e-11).unwrap();
        for (t, x) in times.iter().zip(path) {
            let cf = x_closed_form(&p, &psi, &m, *t).unwrap();
            assert!((x - cf).abs() < 1e-9, "t={t}: {x} vs {cf}");
        }
    }

    #[test]
    fn treatment_stops_at_tau() {
        // Y beyond tau: treated time is [2, 10), untreated after
        let p = Trajectory::new("p", false, None, Some(2.0), 14.0, 10.0).unwrap();
        let psi = ShiftParams::scalar(LN_2);
        let cf = x_closed_form(&p, &psi, &ShiftModel::SimpleAft, 0.0).unwrap();
        assert!((cf - (2.0 + 2.0 * 8.0 + 4.0)).abs() < 1e-12);
        let ode = x_ode(&p, &psi, &ShiftModel::SimpleAft, 0.0, 1e-10).unwrap();
        assert!((cf - ode).abs() < 1e-9);
    }

    #[test]
    fn dx_dpsi_examples() {
        let p = treated();
        let psi = ShiftParams::scalar(LN_2);
        let m = ShiftModel::SimpleAft;
        assert!((dx_dpsi(&p, &psi, &m, 0.0).unwrap()[0] - 6.0).abs() < 1e-12);
        assert!((dx_dpsi(&p, &psi, &m, 3.0).unwrap()[0] - 4.0).abs() < 1e-12);
        assert_eq!(dx_dpsi(&untreated(), &psi, &m, 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn finite_difference_gradient_agrees_with_closed_form() {
        let p = Trajectory::new("q", true, Some(1.0), Some(2.0), 5.0, 10.0).unwrap();
        let psi = ShiftParams(vec![0.4, -0.3, 0.2]);
        let exact = dx_dpsi(&p, &psi, &ShiftModel::StratifiedAft, 0.5).unwrap();
        let fd = fd_gradient(&p, &psi, &ShiftModel::StratifiedAft, &[0.5]).unwrap();
        for (a, b) in exact.iter().zip(&fd[0]) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn regularity_examples() {
        let p = treated();
        let r =
            check_regularity(&ShiftModel::SimpleAft, &ShiftParams::scalar(LN_2), &p, 41).unwrap();
        assert!((r.bound - 1.0).abs() < 1e-12);
        assert_eq!(r.lipschitz_y, 0.0);
        assert_eq!(r.lipschitz_t, 0.0);
        assert!(r.violations.is_empty());

        let r =
            check_regularity(&ShiftModel::SimpleAft, &ShiftParams::scalar(0.0), &p, 11).unwrap();
        assert_eq!(r.bound, 0.0);

        let r = check_regularity(&linear_decay(), &ShiftParams::scalar(0.0), &p, 21).unwrap();
        assert!((r.bound - 1.0).abs() < 1e-12);
        assert!((r.lipschitz_y - 0.1).abs() < 1e-12);
        assert!(r.violations.is_empty());
        assert!(check_regularity(&linear_decay(), &ShiftParams::scalar(0.0), &p, 1).is_err());
    }

    #[test]
    fn regularity_flags_declared_constant_breaches() {
        let liar = ShiftModel::Custom(CustomRate {
            name: "liar".into(),
            dim: 1,
            rate: Arc::new(|y, _, _, _| -0.5 * y),
            bound: 1.0,
            lipschitz_y: 0.1,
            lipschitz_t: 0.0,
        });
        let r = check_regularity(&liar, &ShiftParams::scalar(0.0), &treated(), 11).unwrap();
        assert_eq!(r.violations.len(), 2);
    }

    #[test]
    fn psi_zero_gives_zero_rate_for_builtin_models() {
        let p = Trajectory::new("q", true, Some(1.0), Some(2.0), 5.0, 10.0).unwrap();
        let window = ShiftModel::WindowRestricted {
            window: 2.0,
            inner: Box::new(ShiftModel::StratifiedAft),
        };
        for model in [ShiftModel::SimpleAft, ShiftModel::StratifiedAft, window] {
            let psi = ShiftParams::zeros(model.dim());
            for t in [0.0, 1.0, 2.0, 3.0, 4.9, 7.0] {
                for y in [0.5, 3.0, 8.0] {
                    assert_eq!(d_eval(&model, &psi, y, t, &p).unwrap(), 0.0);
                }
            }
        }
    }
}
