//! Classic fourth-order Runge–Kutta on a single smooth segment, run backward
//! in time with step halving until two successive refinements agree.

use crate::error::{GestError, Result};

const MAX_REFINEMENTS: u32 = 22;

fn rk4_sweep(f: &impl Fn(f64, f64) -> f64, x_from: f64, from: f64, to: f64, steps: usize) -> f64 {
    let h = (to - from) / steps as f64;
    let mut x = x_from;
    for i in 0..steps {
        let s = from + h * i as f64;
        let k1 = f(x, s);
        let k2 = f(x + 0.5 * h * k1, s + 0.5 * h);
        let k3 = f(x + 0.5 * h * k2, s + 0.5 * h);
        let k4 = f(x + h * k3, s + h);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

/// Integrate `x' = f(x, s)` from `(from, x_from)` to `to`. The right-hand side
/// must be smooth on the open interval between the two times.
pub(crate) fn integrate_segment(
    f: impl Fn(f64, f64) -> f64,
    x_from: f64,
    from: f64,
    to: f64,
    tol: f64,
) -> Result<f64> {
    if from == to {
        return Ok(x_from);
    }
    let fail = |reason: String| GestError::Ode {
        a: from.min(to),
        b: from.max(to),
        reason,
    };
    let mut steps = 1usize;
    let mut coarse = rk4_sweep(&f, x_from, from, to, steps);
    if !coarse.is_finite() {
        return Err(fail(format!("non-finite state {coarse}")));
    }
    for _ in 0..MAX_REFINEMENTS {
        steps *= 2;
        let fine = rk4_sweep(&f, x_from, from, to, steps);
        if !fine.is_finite() {
            return Err(fail(format!("non-finite state {fine}")));
        }
        if (fine - coarse).abs() <= tol {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(fail(format!(
        "step halving did not reach tolerance {tol:e} with {steps} steps"
    )))
}
