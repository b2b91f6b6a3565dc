//! Monotone operators and desk-scale test problems.
//!
//! An operator maps coordinates to coordinates; the space (weights) it is
//! monotone in belongs to the [`MonotoneProblem`] that carries it.

mod checks;
mod noise;
mod problem;
pub mod registry;

use std::fmt;

use nalgebra::DMatrix;

use crate::space::Weights;

pub use checks::{check_holder, check_monotone, HolderReport, MonotonicityReport, SampleBall};
pub use noise::{perturb, NoisyData};
pub use problem::{MonotoneProblem, ProblemError};

/// Declared Hölder metadata `||F(u) - F(v)|| <= C_R ||u - v||^alpha` on a
/// ball of radius `radius` (`None` means global).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderInfo {
    pub exponent: f64,
    pub constant: Option<f64>,
    pub radius: Option<f64>,
}

/// A monotone map `F` acting on coordinate slices.
pub trait MonotoneOperator: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Writes `F(u)` into `out`. Both slices have length [`Self::dim`].
    fn apply_into(&self, u: &[f64], out: &mut [f64]);

    /// Hölder metadata with respect to the weighted norm.
    fn holder(&self, weights: &Weights) -> HolderInfo;

    /// Metadata only; the solvers never use derivatives.
    fn differentiable(&self) -> bool;

    /// Matrix of the operator when it is linear. Used by direct-solve
    /// cross-checks, never by the flow itself.
    fn matrix(&self) -> Option<&DMatrix<f64>> {
        None
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Identity {
    n: usize,
}

impl Identity {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl MonotoneOperator for Identity {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }

    fn holder(&self, _weights: &Weights) -> HolderInfo {
        HolderInfo {
            exponent: 1.0,
            constant: Some(1.0),
            radius: None,
        }
    }

    fn differentiable(&self) -> bool {
        true
    }
}

/// `F(u) = A u` for a symmetric positive semidefinite `A`.
#[derive(Debug, Clone)]
pub struct Linear {
    matrix: DMatrix<f64>,
    // Row-major copy for the hot matvec.
    rows: Vec<f64>,
}

impl Linear {
    pub(crate) fn new(matrix: DMatrix<f64>) -> Self {
        let n = matrix.nrows();
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rows.push(matrix[(i, j)]);
            }
        }
        Self { matrix, rows }
    }

    #[inline]
    fn matvec_add(&self, u: &[f64], out: &mut [f64], accumulate: bool) {
        let n = u.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.rows[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(u).map(|(a, x)| a * x).sum();
            if accumulate {
                *o += s;
            } else {
                *o = s;
            }
        }
    }

    /// Operator norm in the weighted space, `||W^{1/2} A W^{-1/2}||_2`.
    pub fn weighted_norm(&self, weights: &Weights) -> f64 {
        let w = weights.as_slice();
        let n = self.matrix.nrows();
        let scaled = DMatrix::from_fn(n, n, |i, j| w[i].sqrt() * self.matrix[(i, j)] / w[j].sqrt());
        scaled.singular_values().max()
    }
}

impl MonotoneOperator for Linear {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.matvec_add(u, out, false);
    }

    fn holder(&self, weights: &Weights) -> HolderInfo {
        HolderInfo {
            exponent: 1.0,
            constant: Some(self.weighted_norm(weights)),
            radius: None,
        }
    }

    fn differentiable(&self) -> bool {
        true
    }

    fn matrix(&self) -> Option<&DMatrix<f64>> {
        Some(&self.matrix)
    }
}

/// `F(u)_i = |u_i|^alpha sign(u_i)`: monotone, globally Hölder of order
/// `alpha`, not differentiable at zero for `alpha < 1`.
#[derive(Debug, Clone)]
pub struct PointwiseHolder {
    n: usize,
    alpha: f64,
}

impl PointwiseHolder {
    /// Any `alpha` in `(0, 1]` is accepted here; problem constructors used
    /// for DSM runs restrict it further.
    pub fn new(n: usize, alpha: f64) -> Result<Self, ProblemError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ProblemError::AlphaOutOfRange { alpha });
        }
        Ok(Self { n, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    fn map(&self, x: f64) -> f64 {
        x.abs().powf(self.alpha).copysign(x)
    }

    /// `2^{1-alpha} W^{(1-alpha)/2}` with `W` the total weight.
    pub fn global_constant(&self, weights: &Weights) -> f64 {
        let a = self.alpha;
        2f64.powf(1.0 - a) * weights.total().powf(0.5 * (1.0 - a))
    }
}

impl MonotoneOperator for PointwiseHolder {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = self.map(x);
        }
    }

    fn holder(&self, weights: &Weights) -> HolderInfo {
        HolderInfo {
            exponent: self.alpha,
            constant: Some(self.global_constant(weights)),
            radius: None,
        }
    }

    fn differentiable(&self) -> bool {
        self.alpha >= 1.0
    }
}

/// `F(u) = A u + |u|^alpha sign(u)`.
#[derive(Debug, Clone)]
pub struct Composite {
    linear: Linear,
    pointwise: PointwiseHolder,
}

/// Radius of the ball on which the composite operator's Hölder constant is
/// declared.
pub const COMPOSITE_HOLDER_RADIUS: f64 = 1.0;

impl Composite {
    pub(crate) fn new(linear: Linear, pointwise: PointwiseHolder) -> Self {
        Self { linear, pointwise }
    }

    pub fn linear(&self) -> &Linear {
        &self.linear
    }

    pub fn pointwise(&self) -> &PointwiseHolder {
        &self.pointwise
    }
}

impl MonotoneOperator for Composite {
    fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.pointwise.apply_into(u, out);
        self.linear.matvec_add(u, out, true);
    }

    fn holder(&self, weights: &Weights) -> HolderInfo {
        // ||A d|| <= ||A|| (2R)^{1-alpha} ||d||^alpha for ||d|| <= 2R.
        let a = self.pointwise.alpha;
        let r = COMPOSITE_HOLDER_RADIUS;
        let c = self.linear.weighted_norm(weights) * (2.0 * r).powf(1.0 - a)
            + self.pointwise.global_constant(weights);
        HolderInfo {
            exponent: a,
            constant: Some(c),
            radius: Some(r),
        }
    }

    fn differentiable(&self) -> bool {
        self.pointwise.differentiable()
    }
}

/// Wraps a closure as an operator. Monotonicity is the caller's claim and is
/// worth confirming with [`check_monotone`].
pub struct FnOperator<F> {
    n: usize,
    f: F,
    holder: HolderInfo,
    differentiable: bool,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(n: usize, holder: HolderInfo, differentiable: bool, f: F) -> Self {
        Self {
            n,
            f,
            holder,
            differentiable,
        }
    }
}

impl<F> fmt::Debug for FnOperator<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOperator")
            .field("n", &self.n)
            .field("holder", &self.holder)
            .finish()
    }
}

impl<F> MonotoneOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        (self.f)(u, out)
    }

    fn holder(&self, _weights: &Weights) -> HolderInfo {
        self.holder
    }

    fn differentiable(&self) -> bool {
        self.differentiable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_values() {
        let op = PointwiseHolder::new(2, 0.75).unwrap();
        assert_eq!(op.apply(&[1.0, -1.0]), vec![1.0, -1.0]);
        assert_eq!(op.apply(&[0.0, 0.0]), vec![0.0, 0.0]);
        let half = PointwiseHolder::new(1, 0.5).unwrap();
        assert_eq!(half.apply(&[0.25]), vec![0.5]);
    }

    #[test]
    fn pointwise_rejects_bad_alpha() {
        assert!(PointwiseHolder::new(1, 0.0).is_err());
        assert!(PointwiseHolder::new(1, 1.5).is_err());
        assert!(PointwiseHolder::new(1, f64::NAN).is_err());
    }

    #[test]
    fn composite_sums_parts() {
        let lin = Linear::new(DMatrix::identity(1, 1));
        let op = Composite::new(lin, PointwiseHolder::new(1, 0.75).unwrap());
        assert_eq!(op.apply(&[1.0]), vec![2.0]);

        let zero = Linear::new(DMatrix::zeros(2, 2));
        let op = Composite::new(zero, PointwiseHolder::new(2, 0.75).unwrap());
        assert_eq!(op.apply(&[1.0, -1.0]), vec![1.0, -1.0]);
    }

    #[test]
    fn weighted_norm_of_diagonal() {
        let lin = Linear::new(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 0.5]));
        let w = Weights::new(vec![0.3, 0.7]).unwrap();
        assert!((lin.weighted_norm(&w) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pointwise_constant_for_unit_measure() {
        let op = PointwiseHolder::new(4, 0.75).unwrap();
        let w = Weights::uniform(4).unwrap();
        assert!((op.global_constant(&w) - 2f64.powf(0.25)).abs() < 1e-15);
    }
}
