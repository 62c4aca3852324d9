#![allow(dead_code)]

use gest_core::{DgpConfig, PatientStream, Trajectory};
use proptest::prelude::*;

/// Random valid trajectory on a window of length `tau`.
pub fn trajectory(tau: f64) -> impl Strategy<Value = Trajectory> {
    (
        any::<bool>(),
        0.05f64..15.0,
        proptest::option::of(0.0f64..1.0),
        proptest::option::of(0.0f64..1.0),
    )
        .prop_map(move |(azt, y, pcp_frac, t_frac)| {
            let pcp = pcp_frac.map(|f| f * y);
            let treat = t_frac.map(|f| f * y.min(tau)).filter(|&t| t < y && t < tau);
            Trajectory::new("r", azt, pcp, treat, y, tau).unwrap()
        })
}

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// `int_a^b g(t) gamma t^(gamma-1) dt` by Simpson after substituting
/// `u = t^gamma`, which removes the power singularity at zero.
pub fn weibull_integral(g: &dyn Fn(f64) -> f64, gamma: f64, a: f64, b: f64) -> f64 {
    let lo = if a == 0.0 { 1e-24 } else { a.powf(gamma) };
    let h = |u: f64| g(u.powf(1.0 / gamma));
    simpson(&h, lo, b.powf(gamma), 1e-12)
}

/// Kendall's tau for continuous data without ties, by merge-sort counting.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    fn count(v: &mut [f64], buf: &mut [f64]) -> u64 {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = count(&mut v[..mid], &mut buf[..mid]) + count(&mut v[mid..], &mut buf[mid..]);
        let (mut i, mut j, mut k) = (0, mid, 0);
        while i < mid && j < n {
            if v[i] <= v[j] {
                buf[k] = v[i];
                i += 1;
            } else {
                buf[k] = v[j];
                inv += (mid - i) as u64;
                j += 1;
            }
            k += 1;
        }
        buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
        let k2 = k + mid - i;
        buf[k2..n].copy_from_slice(&v[j..n]);
        v.copy_from_slice(&buf[..n]);
        inv
    }
    let discordant = count(&mut ys, &mut buf) as f64;
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    1.0 - 2.0 * discordant / pairs
}

/// Standard error of Kendall's tau under independence.
pub fn kendall_se(n: usize) -> f64 {
    let n = n as f64;
    (2.0 * (2.0 * n + 5.0) / (9.0 * n * (n - 1.0))).sqrt()
}

/// Primitive draws of one simulated patient, reproduced from the published
/// stream layout: `(azt, pcp_time, u_death, u_init)`.
pub struct Draws {
    pub azt: bool,
    pub pcp: f64,
    pub u_death: f64,
    pub u_init: f64,
}

pub fn redraw(cfg: &DgpConfig, replicate: u64, index: u64) -> Draws {
    let mut s = PatientStream::new(cfg.seed, replicate, index);
    let (u_azt, u_pcp, u_death, u_init) = (s.uniform(), s.uniform(), s.uniform(), s.uniform());
    let azt = u_azt < cfg.p_azt;
    let a = if azt { 1.0 } else { 0.0 };
    Draws {
        azt,
        pcp: -u_pcp.ln() / (cfg.rho_pcp * (cfg.beta_pcp_azt * a).exp()),
        u_death,
        u_init,
    }
}

/// Cumulative initiation hazard along the untreated path up to `t`.
pub fn initiation_hazard(cfg: &DgpConfig, d: &Draws, t: f64) -> f64 {
    let a = if d.azt { 1.0 } else { 0.0 };
    let base = cfg.xi0 * (cfg.theta0[0] * a).exp();
    let g = cfg.gamma0;
    if t <= d.pcp {
        base * t.powf(g)
    } else {
        base * (d.pcp.powf(g) + cfg.theta0[1].exp() * (t.powf(g) - d.pcp.powf(g)))
    }
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
