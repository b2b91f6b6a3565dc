use thiserror::Error;

use crate::quadrature::{cumulative_trapezoid, damped_integral};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GronwallError {
    #[error("grid, g, alpha and beta must have equal nonzero length")]
    Length,
    #[error("grid must be strictly increasing")]
    Grid,
    #[error("{0} must be nonnegative")]
    Negative(&'static str),
}

/// Samples of `g`, `alpha`, `beta` for the envelope
/// `g(t) <= g(0) e^{-A(t)} + e^{-A(t)} int_0^t e^{A(s)} beta(s) ds`,
/// `A = int alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallInstance {
    grid: Vec<f64>,
    g: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl GronwallInstance {
    pub fn new(
        grid: Vec<f64>,
        g: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self, GronwallError> {
        let n = grid.len();
        if n == 0 || g.len() != n || alpha.len() != n || beta.len() != n {
            return Err(GronwallError::Length);
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GronwallError::Grid);
        }
        for (name, v) in [("g", &g), ("alpha", &alpha), ("beta", &beta)] {
            if v.iter().any(|x| !(*x >= 0.0)) {
                return Err(GronwallError::Negative(name));
            }
        }
        Ok(Self {
            grid,
            g,
            alpha,
            beta,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Copy with `g` scaled, for negative controls.
    pub fn with_g_scaled(&self, factor: f64) -> Self {
        Self {
            g: self.g.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }
}

/// Envelope evaluated at every grid point.
pub fn gronwall_bound(inst: &GronwallInstance) -> Vec<f64> {
    let a = cumulative_trapezoid(&inst.grid, &inst.alpha);
    bound_with_exponent(&inst.grid, inst.g[0], &a, &inst.beta)
}

/// Same envelope with the exponent `A(t)` supplied directly (for example
/// from a closed-form schedule integral).
pub fn bound_with_exponent(grid: &[f64], g0: f64, exponent: &[f64], beta: &[f64]) -> Vec<f64> {
    let e = damped_integral(grid, exponent, beta);
    exponent
        .iter()
        .zip(&e)
        .map(|(p, ei)| g0 * (-(p - exponent[0])).exp() + ei)
        .collect()
}

/// Outcome of a falsifiable numeric check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    /// First violation: time, measured value, bound.
    Fail {
        t: f64,
        lhs: f64,
        rhs: f64,
    },
    /// Preconditions not met; nothing was checked.
    Refused(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    /// `lhs[i] <= rhs[i] (1 + tol)` at every index.
    pub fn from_pairs(t: &[f64], lhs: &[f64], rhs: &[f64], tol: f64) -> Self {
        for i in 0..t.len() {
            if !(lhs[i] <= rhs[i] * (1.0 + tol)) {
                return Verdict::Fail {
                    t: t[i],
                    lhs: lhs[i],
                    rhs: rhs[i],
                };
            }
        }
        Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub verdict: Verdict,
    /// Largest `g / bound` on the grid (0 where the bound vanishes with g).
    pub max_ratio: f64,
}

/// Checks `g <= bound (1 + tol)` on the grid.
pub fn gronwall_check(inst: &GronwallInstance, tol: f64) -> GronwallReport {
    let bound = gronwall_bound(inst);
    let max_ratio = ratio_max(&inst.g, &bound);
    GronwallReport {
        verdict: Verdict::from_pairs(&inst.grid, &inst.g, &bound, tol),
        max_ratio,
    }
}

pub(crate) fn ratio_max(lhs: &[f64], rhs: &[f64]) -> f64 {
    lhs.iter()
        .zip(rhs)
        .map(|(l, r)| {
            if *r > 0.0 {
                l / r
            } else if *l > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
