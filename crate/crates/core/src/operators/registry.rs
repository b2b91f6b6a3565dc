//! Named test problems.
//!
//! Every shipped problem has `||y|| = 0.05` and uses a start point of all
//! `-1`, which keeps the discrepancy-principle stopping times inside the
//! default horizon down to `delta = 1e-4`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{MonotoneProblem, ProblemError};
use crate::space::{HVector, Weights};

pub const LABELS: [&str; 5] = ["identity", "psd5", "psd-singular", "holder075", "composite"];

/// Problems used in discrepancy-principle acceptance sweeps.
pub const SWEEP_LABELS: [&str; 4] = ["identity", "psd5", "holder075", "composite"];

pub const SOLUTION_NORM: f64 = 0.05;

/// Coordinate value of the default start point.
pub const DEFAULT_START: f64 = -1.0;

pub fn lookup(label: &str) -> Result<MonotoneProblem, ProblemError> {
    match label {
        "identity" => identity(),
        "psd5" => psd5(),
        "psd-singular" => psd_singular(),
        "holder075" => holder075(),
        "composite" => composite(),
        other => Err(ProblemError::UnknownLabel(other.to_string())),
    }
}

fn scaled_to(w: &Weights, coords: Vec<f64>, target: f64) -> Result<HVector, ProblemError> {
    let v = HVector::new(coords, w.clone())?;
    Ok(v.scale(target / v.norm()))
}

pub fn identity() -> Result<MonotoneProblem, ProblemError> {
    let w = Weights::ones(1)?;
    let y = HVector::new(vec![SOLUTION_NORM], w)?;
    Ok(MonotoneProblem::identity(1, Some(y))?.with_label("identity"))
}

/// Hilbert matrix `1/(i+j-1)` of order 5 with its two smallest eigenvalues
/// set to zero.
pub fn truncated_hilbert5() -> DMatrix<f64> {
    let h = DMatrix::from_fn(5, 5, |i, j| 1.0 / (i + j + 1) as f64);
    let eig = SymmetricEigen::new(h);
    let mut vals = eig.eigenvalues.clone();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    vals[order[0]] = 0.0;
    vals[order[1]] = 0.0;
    let q = &eig.eigenvectors;
    let a = q * DMatrix::from_diagonal(&vals) * q.transpose();
    0.5 * (&a + a.transpose())
}

/// Rank-3 PSD kernel; `y` lies in the range so it is the minimal-norm
/// solution.
pub fn psd5() -> Result<MonotoneProblem, ProblemError> {
    let w = Weights::uniform(5)?;
    let a = truncated_hilbert5();
    let ones = nalgebra::DVector::from_element(5, 1.0);
    let y = scaled_to(&w, (&a * ones).iter().copied().collect(), SOLUTION_NORM)?;
    Ok(MonotoneProblem::psd_linear(a, y)?.with_label("psd5"))
}

/// `A = diag(1, 0)` with shift point `(0, 5)`; the closest solution to the
/// shift is `(0.05, 5)`.
pub fn psd_singular() -> Result<MonotoneProblem, ProblemError> {
    let w = Weights::ones(2)?;
    let a = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
    let y = HVector::new(vec![SOLUTION_NORM, 0.0], w.clone())?;
    let ubar = HVector::new(vec![0.0, 5.0], w)?;
    MonotoneProblem::psd_linear(a, y)?
        .with_label("psd-singular")
        .with_ubar(ubar)
}

pub fn holder075() -> Result<MonotoneProblem, ProblemError> {
    let w = Weights::uniform(5)?;
    let y = scaled_to(&w, vec![1.5, -1.0, 1.2, -0.8, 1.0], SOLUTION_NORM)?;
    Ok(MonotoneProblem::pointwise_holder(0.75, y)?.with_label("holder075"))
}

/// Scaled Neumann Laplacian (singular, PSD) plus the `alpha = 0.75`
/// pointwise map.
pub fn composite() -> Result<MonotoneProblem, ProblemError> {
    let n = 5;
    let w = Weights::uniform(n)?;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let v = if i == j {
            if i == 0 || i == n - 1 {
                1.0
            } else {
                2.0
            }
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        };
        0.25 * v
    });
    let y = scaled_to(&w, vec![1.0, -0.6, 0.9, -1.1, 0.7], SOLUTION_NORM)?;
    Ok(MonotoneProblem::composite(a, 0.75, y)?.with_label("composite"))
}

/// Default start point for `problem`.
pub fn default_start(problem: &MonotoneProblem) -> HVector {
    HVector::filled(problem.weights(), DEFAULT_START)
}
