//! Per-patient integrals against the Weibull intensity `lambda(t) dt` and the
//! jump of `N`, for the score vector
//! `s(t) = (1/xi, 1/gamma + log t, I_AZT, I_PCP(t), m(t) e(t))`
//! where `m` is an optional mark (the mimicking process or another outcome
//! function) and `e(t)` is the basis `(1, I_PCP(t), I_AZT)` cut to the
//! number of extra components.
//!
//! The at-risk set `[0, risk_end)` splits into at most two pieces on which the
//! indicator covariates are constant. When the mark is constant there, every
//! integral is an exact antiderivative difference; otherwise a graded
//! Gauss–Legendre rule is used.

use std::sync::OnceLock;

use crate::error::{domain, Result};
use crate::intensity::{segment_primitive, PrimitiveKind, WeibullPh};
use crate::shift::{fd_gradient, x_constant_on_risk_set, x_ode_path, ShiftModel, ShiftParams};
use crate::trajectory::Trajectory;

/// Upper bound on `4 + extra components`.
pub(crate) const MAXP: usize = 7;
pub(crate) const NUISANCE: usize = 4;

const GL_ORDER: usize = 8;
const GRADING_RATIO: f64 = 0.5;
const GRADING_LEVELS: i32 = 30;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Piece {
    pub a: f64,
    pub b: f64,
    pub pcp: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Event {
    pub t: f64,
    pub pcp: bool,
}

/// At-risk pieces and the initiation event of one patient.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    pub azt: bool,
    pub pieces: Vec<Piece>,
    pub event: Option<Event>,
}

impl Prepared {
    pub fn new(traj: &Trajectory) -> Result<Self> {
        let end = traj.risk_end();
        let grid = traj.segment_grid(0.0, end);
        let pcp_by = |t: f64| traj.pcp_time.is_some_and(|p| p <= t);
        let pieces = grid
            .windows(2)
            .map(|w| Piece {
                a: w[0],
                b: w[1],
                pcp: pcp_by(w[0]),
            })
            .collect();
        let event = match traj.treat_start {
            Some(t) if t <= 0.0 => {
                return domain(format!(
                    "patient `{}` initiates treatment at t = 0, where the Weibull intensity has no density",
                    traj.id
                ))
            }
            Some(t) => Some(Event {
                t,
                pcp: traj.pcp_time.is_some_and(|p| p < t),
            }),
            None => None,
        };
        Ok(Prepared {
            azt: traj.azt,
            pieces,
            event,
        })
    }

    pub fn all(trajs: &[Trajectory]) -> Result<Vec<Prepared>> {
        trajs.iter().map(Prepared::new).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Node {
    /// Sample time of the mark.
    pub t: f64,
    /// Quadrature weight; for a head node, the upper end of `[0, w]`.
    pub w: f64,
    pub piece: usize,
    /// The mark is held at its value at `t` over `[0, w]` and the time
    /// dependence is integrated exactly.
    pub head: bool,
}

/// Values of the extra mark `m(t)` on the at-risk set and at the event.
#[derive(Clone, Debug)]
pub(crate) enum Mark {
    Constant {
        value: f64,
        grad: Vec<f64>,
    },
    Sampled {
        nodes: Vec<Node>,
        values: Vec<f64>,
        grads: Vec<Vec<f64>>,
        at_event: f64,
        grad_at_event: Vec<f64>,
    },
}

impl Mark {
    pub fn constant(value: f64) -> Self {
        Mark::Constant {
            value,
            grad: Vec::new(),
        }
    }

    /// `X_psi` on the at-risk set, with its gradient in `psi`.
    pub fn mimic(
        traj: &Trajectory,
        pat: &Prepared,
        model: &ShiftModel,
        psi: &ShiftParams,
        ode_tol: f64,
    ) -> Result<Self> {
        if let Some((value, grad)) = x_constant_on_risk_set(traj, psi, model, ode_tol)? {
            return Ok(Mark::Constant { value, grad });
        }
        let nodes = quadrature_nodes(&pat.pieces);
        let mut times: Vec<f64> = nodes.iter().map(|n| n.t).collect();
        if let Some(ev) = pat.event {
            times.push(ev.t);
        }
        let mut values = x_ode_path(traj, psi, model, &times, ode_tol)?;
        let mut grads = fd_gradient(traj, psi, model, &times)?;
        let (at_event, grad_at_event) = if pat.event.is_some() {
            (values.pop().unwrap(), grads.pop().unwrap())
        } else {
            (0.0, vec![0.0; psi.dim()])
        };
        Ok(Mark::Sampled {
            nodes,
            values,
            grads,
            at_event,
            grad_at_event,
        })
    }

    /// An arbitrary function of `(trajectory, t)`, sampled at quadrature nodes.
    pub fn sampled(traj: &Trajectory, pat: &Prepared, f: impl Fn(&Trajectory, f64) -> f64) -> Self {
        let nodes = quadrature_nodes(&pat.pieces);
        let values = nodes.iter().map(|n| f(traj, n.t)).collect::<Vec<_>>();
        let grads = vec![Vec::new(); nodes.len()];
        let at_event = pat.event.map_or(0.0, |ev| f(traj, ev.t));
        Mark::Sampled {
            nodes,
            values,
            grads,
            at_event,
            grad_at_event: Vec::new(),
        }
    }

    pub fn at_event(&self) -> f64 {
        match self {
            Mark::Constant { value, .. } => *value,
            Mark::Sampled { at_event, .. } => *at_event,
        }
    }

    pub fn grad_at_event(&self) -> &[f64] {
        match self {
            Mark::Constant { grad, .. } => grad,
            Mark::Sampled { grad_at_event, .. } => grad_at_event,
        }
    }
}

fn gauss_legendre() -> &'static [(f64, f64); GL_ORDER] {
    static RULE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = [(0.0, 0.0); GL_ORDER];
        for (i, slot) in rule.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn push_panel(nodes: &mut Vec<Node>, a: f64, b: f64, piece: usize) {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    for &(x, w) in gauss_legendre() {
        nodes.push(Node {
            t: mid + half * x,
            w: half * w,
            piece,
            head: false,
        });
    }
}

/// Composite rule over the pieces, geometrically graded towards `t = 0`
/// where `t^(gamma - 1)` and `log t` are singular; the innermost panel is a
/// head node integrated in closed form.
pub(crate) fn quadrature_nodes(pieces: &[Piece]) -> Vec<Node> {
    let mut nodes = Vec::new();
    for (k, piece) in pieces.iter().enumerate() {
        // panels [lo, hi] with lo >= hi / 2 keep the singularity at 0 far
        // enough away for the 8-point rule
        let mut hi = piece.b;
        let mut levels = 0;
        while hi > piece.a {
            let lo = (hi * GRADING_RATIO).max(piece.a);
            if piece.a == 0.0 && levels == GRADING_LEVELS {
                nodes.push(Node {
                    t: 0.5 * hi,
                    w: hi,
                    piece: k,
                    head: true,
                });
                break;
            }
            push_panel(&mut nodes, lo, hi, k);
            hi = lo;
            levels += 1;
        }
    }
    nodes
}

/// Jump, drift and second-moment integrals of the score vector for one patient.
#[derive(Clone, Debug)]
pub(crate) struct Terms {
    pub p: usize,
    pub event: bool,
    /// `s(T)` when initiated, zero otherwise.
    pub jump: [f64; MAXP],
    /// `int s lambda dt`.
    pub drift: [f64; MAXP],
    /// `int s s^T lambda dt`, filled only when requested.
    pub outer: [[f64; MAXP]; MAXP],
    /// `int lambda dt`.
    pub cum_hazard: f64,
}

impl Terms {
    fn zero(p: usize) -> Self {
        Terms {
            p,
            event: false,
            jump: [0.0; MAXP],
            drift: [0.0; MAXP],
            outer: [[0.0; MAXP]; MAXP],
            cum_hazard: 0.0,
        }
    }

    pub fn g(&self, i: usize) -> f64 {
        self.jump[i] - self.drift[i]
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn extra_basis(j: usize, pcp: bool, azt: bool) -> f64 {
    match j {
        0 => 1.0,
        1 => indicator(pcp),
        _ => indicator(azt),
    }
}

/// Non-`log t` part `A` of `s = A + (1/gamma + log t) e_2` on a piece.
fn base_vector(p: &WeibullPh, pcp: bool, azt: bool, mark: f64, extra: usize) -> [f64; MAXP] {
    let mut a = [0.0; MAXP];
    a[0] = 1.0 / p.xi;
    a[2] = indicator(azt);
    a[3] = indicator(pcp);
    for j in 0..extra {
        a[NUISANCE + j] = mark * extra_basis(j, pcp, azt);
    }
    a
}

/// Exact integrals of `s = a + (1/gamma + log t) e_2` against
/// `c gamma t^(gamma-1) dt` over `[lo, hi]`, upper triangle of the outer part.
fn add_segment(
    out: &mut Terms,
    gamma: f64,
    lo: f64,
    hi: f64,
    c: f64,
    a: &[f64; MAXP],
    with_outer: bool,
) {
    let dim = out.p;
    let primitive = |kind| {
        c * segment_primitive(gamma, lo, hi, kind).expect("segments are ordered and nonnegative")
    };
    let p0 = primitive(PrimitiveKind::Plain);
    let p1 = primitive(PrimitiveKind::LogWeight);
    out.cum_hazard += p0;
    for i in 0..dim {
        out.drift[i] += a[i] * p0;
    }
    out.drift[1] += p1;
    if with_outer {
        let p2 = primitive(PrimitiveKind::LogWeightSquared);
        for i in 0..dim {
            for j in i..dim {
                out.outer[i][j] += a[i] * a[j] * p0;
            }
            // (a e2^T + e2 a^T) P1, upper triangle
            if i <= 1 {
                out.outer[i][1] += a[i] * p1;
            }
            if i >= 1 {
                out.outer[1][i] += a[i] * p1;
            }
        }
        out.outer[1][1] += p2;
    }
}

pub(crate) fn terms(
    pat: &Prepared,
    params: &WeibullPh,
    mark: Option<&Mark>,
    extra: usize,
    with_outer: bool,
) -> Terms {
    debug_assert!(extra == 0 || mark.is_some());
    debug_assert!(params.alpha == 0.0 || mark.is_some());
    let dim = NUISANCE + extra;
    let mut out = Terms::zero(dim);
    let (xi, gamma) = (params.xi, params.gamma);
    let linear = |pcp: bool| params.theta1 * indicator(pat.azt) + params.theta2 * indicator(pcp);

    if let Some(ev) = pat.event {
        out.event = true;
        let m = mark.map_or(0.0, Mark::at_event);
        out.jump = base_vector(params, ev.pcp, pat.azt, m, extra);
        out.jump[1] = 1.0 / gamma + ev.t.ln();
    }

    match mark {
        None | Some(Mark::Constant { .. }) => {
            let m = mark.map_or(0.0, Mark::at_event);
            for piece in &pat.pieces {
                let c = xi * (linear(piece.pcp) + params.alpha * m).exp();
                let a = base_vector(params, piece.pcp, pat.azt, m, extra);
                add_segment(&mut out, gamma, piece.a, piece.b, c, &a, with_outer);
            }
        }
        Some(Mark::Sampled { nodes, values, .. }) => {
            for (node, &m) in nodes.iter().zip(values) {
                let piece = &pat.pieces[node.piece];
                let c = xi * (linear(piece.pcp) + params.alpha * m).exp();
                let mut s = base_vector(params, piece.pcp, pat.azt, m, extra);
                if node.head {
                    add_segment(&mut out, gamma, 0.0, node.w, c, &s, with_outer);
                    continue;
                }
                let w = node.w * c * gamma * node.t.powf(gamma - 1.0);
                s[1] = 1.0 / gamma + node.t.ln();
                out.cum_hazard += w;
                for i in 0..dim {
                    out.drift[i] += w * s[i];
                }
                if with_outer {
                    for i in 0..dim {
                        for j in i..dim {
                            out.outer[i][j] += w * s[i] * s[j];
                        }
                    }
                }
            }
        }
    }
    if with_outer {
        for i in 0..dim {
            for j in 0..i {
                out.outer[i][j] = out.outer[j][i];
            }
        }
    }
    out
}

/// `d/dpsi_l` of the extra components: `rows[j][l] = int e_j dm/dpsi_l (dN - lambda dt)`.
pub(crate) fn psi_derivative(
    pat: &Prepared,
    params: &WeibullPh,
    mark: &Mark,
    extra: usize,
) -> [[f64; 3]; 3] {
    let mut rows = [[0.0; 3]; 3];
    let linear = |pcp: bool| params.theta1 * indicator(pat.azt) + params.theta2 * indicator(pcp);
    let k = mark.grad_at_event().len();
    if let Some(ev) = pat.event {
        for (j, row) in rows.iter_mut().enumerate().take(extra) {
            let e = extra_basis(j, ev.pcp, pat.azt);
            for (l, g) in mark.grad_at_event().iter().enumerate() {
                row[l] += e * g;
            }
        }
    }
    match mark {
        Mark::Constant { value, grad } => {
            for piece in &pat.pieces {
                let c = params.xi * (linear(piece.pcp) + params.alpha * value).exp();
                let p0 =
                    c * segment_primitive(params.gamma, piece.a, piece.b, PrimitiveKind::Plain)
                        .expect("pieces are ordered and nonnegative");
                for (j, row) in rows.iter_mut().enumerate().take(extra) {
                    let e = extra_basis(j, piece.pcp, pat.azt);
                    for l in 0..k {
                        row[l] -= e * grad[l] * p0;
                    }
                }
            }
        }
        Mark::Sampled {
            nodes,
            values,
            grads,
            ..
        } => {
            for ((node, m), grad) in nodes.iter().zip(values).zip(grads) {
                let piece = &pat.pieces[node.piece];
                let c = params.xi * (linear(piece.pcp) + params.alpha * m).exp();
                let w = if node.head {
                    c * node.w.powf(params.gamma)
                } else {
                    node.w * c * params.gamma * node.t.powf(params.gamma - 1.0)
                };
                for (j, row) in rows.iter_mut().enumerate().take(extra) {
                    let e = extra_basis(j, piece.pcp, pat.azt);
                    for l in 0..grad.len() {
                        row[l] -= e * grad[l] * w;
                    }
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre();
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        // degree 15 is exact for eight nodes
        let m14: f64 = rule.iter().map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn sampled_and_constant_marks_agree() {
        let traj = Trajectory::new("p", true, Some(1.3), Some(3.1), 6.0, 10.0).unwrap();
        let pat = Prepared::new(&traj).unwrap();
        let params = WeibullPh {
            xi: 0.3,
            gamma: 0.7,
            theta1: 0.4,
            theta2: -0.6,
            alpha: 0.05,
        };
        let constant = Mark::constant(4.5);
        let sampled = Mark::sampled(&traj, &pat, |_, _| 4.5);
        let a = terms(&pat, &params, Some(&constant), 3, true);
        let b = terms(&pat, &params, Some(&sampled), 3, true);
        assert!((a.cum_hazard - b.cum_hazard).abs() < 1e-9 * a.cum_hazard);
        for i in 0..7 {
            assert!((a.jump[i] - b.jump[i]).abs() < 1e-12);
            assert!(
                (a.drift[i] - b.drift[i]).abs() < 1e-8 * (1.0 + a.drift[i].abs()),
                "drift {i}"
            );
            for j in 0..7 {
                let scale = 1.0 + a.outer[i][j].abs();
                assert!(
                    (a.outer[i][j] - b.outer[i][j]).abs() < 1e-8 * scale,
                    "outer {i},{j}"
                );
            }
        }
    }
}
