//! Exponentially weighted integrals on sampled data.
//!
//! Integrals of the form `e^{-p(t)} int_0^t e^{p(s)} beta(s) ds` with `p`
//! growing without bound overflow if evaluated naively. The recursion below
//! only ever multiplies by `e^{-(p_{k+1} - p_k)} <= 1`, and it integrates
//! each panel exactly when `p` and `beta` are linear on it.

use crate::schedule::Schedule;

/// `int_0^1 e^{-x v} dv` and `int_0^1 e^{-x v} v dv` for `x >= 0`.
#[inline]
fn panel_moments(x: f64) -> (f64, f64) {
    if x < 1e-3 {
        let x2 = x * x;
        (
            1.0 - x / 2.0 + x2 / 6.0 - x2 * x / 24.0,
            0.5 - x / 3.0 + x2 / 8.0 - x2 * x / 30.0,
        )
    } else {
        let one_minus = -(-x).exp_m1();
        let i0 = one_minus / x;
        let i1 = (one_minus - x * (-x).exp()) / (x * x);
        (i0, i1)
    }
}

/// `E_k = e^{-p_k} int_{t_0}^{t_k} e^{p(s)} beta(s) ds` on the grid `t`,
/// with `p` and `beta` linear between samples. `p` must be nondecreasing.
pub fn damped_integral(t: &[f64], p: &[f64], beta: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), p.len());
    assert_eq!(t.len(), beta.len());
    let mut out = Vec::with_capacity(t.len());
    if t.is_empty() {
        return out;
    }
    let mut e = 0.0;
    out.push(e);
    for k in 0..t.len() - 1 {
        let tau = t[k + 1] - t[k];
        let x = (p[k + 1] - p[k]).max(0.0);
        let (i0, i1) = panel_moments(x);
        // Substituting v = (t_{k+1} - s)/tau: beta_{k+1} weighs (1 - v),
        // beta_k weighs v.
        let panel = tau * (beta[k + 1] * (i0 - i1) + beta[k] * i1);
        e = (-x).exp() * e + panel;
        out.push(e);
    }
    out
}

/// Cumulative trapezoid `int_{t_0}^{t_k} alpha`.
pub fn cumulative_trapezoid(t: &[f64], alpha: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), alpha.len());
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (alpha[k] + alpha[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Grid on `[0, t_end]` with `Delta phi <= dphi` and relative steps at most
/// `rel * (1 + t)`, where `phi` is the integral of the schedule.
pub fn phi_grid(schedule: &Schedule, t_end: f64, dphi: f64, rel: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    let mut t = 0.0;
    while t < t_end {
        let step = (dphi / schedule.a(t)).min(rel * (1.0 + t));
        t = (t + step).min(t_end);
        g.push(t);
    }
    g
}

/// Merges extra points (e.g. checkpoints) into a sorted grid.
pub fn merge_points(mut grid: Vec<f64>, extra: &[f64]) -> Vec<f64> {
    grid.extend_from_slice(extra);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}
