use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use super::{Composite, HolderInfo, Identity, Linear, MonotoneOperator, PointwiseHolder};
use crate::space::{HVector, SpaceError, Weights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator dimension {operator} does not match vector dimension {vector}")]
    DimensionMismatch { operator: usize, vector: usize },
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("matrix is indefinite (min Rayleigh quotient {min_eigenvalue:e})")]
    Indefinite { min_eigenvalue: f64 },
    #[error("y is not the minimal-norm solution: component {component:e} along the null space")]
    NotMinimalNorm { component: f64 },
    #[error("Hölder exponent {alpha} out of range")]
    AlphaOutOfRange { alpha: f64 },
    #[error("noise level must be positive and finite, got {delta}")]
    BadDelta { delta: f64 },
    #[error("noisy data violates ||f_delta - f|| <= delta ({distance:e} > {delta:e})")]
    NoiseTooLarge { distance: f64, delta: f64 },
    #[error("noise direction must be nonzero")]
    ZeroDirection,
    #[error("unknown problem label '{0}'")]
    UnknownLabel(String),
}

/// Relative tolerance under which an eigenvalue of a linear part counts as
/// zero.
const NULL_TOL: f64 = 1e-10;

/// `F(u) = f` together with its known minimal-norm solution.
#[derive(Debug, Clone)]
pub struct MonotoneProblem {
    label: String,
    operator: Arc<dyn MonotoneOperator>,
    weights: Weights,
    y: HVector,
    f: HVector,
    ubar: Option<HVector>,
    // Weighted-orthonormal basis of directions along which the solution set
    // extends; empty for problems with a unique solution.
    null_basis: Vec<HVector>,
}

impl MonotoneProblem {
    /// General constructor. `null_basis` documents the solution set
    /// `y + span(null_basis)`; it is orthonormalized here and `y` is checked
    /// to be orthogonal to it.
    pub fn new(
        label: impl Into<String>,
        operator: Arc<dyn MonotoneOperator>,
        y: HVector,
        null_basis: Vec<HVector>,
    ) -> Result<Self, ProblemError> {
        if operator.dim() != y.dim() {
            return Err(ProblemError::DimensionMismatch {
                operator: operator.dim(),
                vector: y.dim(),
            });
        }
        for z in &null_basis {
            y.check_compatible(z)?;
        }
        let weights = y.weights().clone();
        let null_basis = orthonormalize(&weights, null_basis);
        let ynorm = y.norm();
        for z in &null_basis {
            let component = weights.dot(y.coords(), z.coords());
            if component.abs() > 1e-9 * ynorm + 1e-14 {
                return Err(ProblemError::NotMinimalNorm { component });
            }
        }
        let f = y.with_coords(operator.apply(y.coords()));
        Ok(Self {
            label: label.into(),
            operator,
            weights,
            y,
            f,
            ubar: None,
            null_basis,
        })
    }

    /// `F = I`; `y` defaults to all ones with uniform weights.
    pub fn identity(n: usize, y: Option<HVector>) -> Result<Self, ProblemError> {
        let y = match y {
            Some(y) => y,
            None => HVector::filled(&Weights::uniform(n)?, 1.0),
        };
        Self::new("identity", Arc::new(Identity::new(n)), y, Vec::new())
    }

    /// `F(u) = A u` with `A` symmetric positive semidefinite. For singular
    /// `A` the null space is recorded and `y` must be orthogonal to it.
    pub fn psd_linear(matrix: DMatrix<f64>, y: HVector) -> Result<Self, ProblemError> {
        let null = validate_psd(&matrix, y.weights())?;
        let null_basis = null
            .into_iter()
            .map(|c| HVector::from_parts(c, y.weights()))
            .collect();
        Self::new("psd-linear", Arc::new(Linear::new(matrix)), y, null_basis)
    }

    /// `F(u)_i = |u_i|^alpha sign(u_i)` with `alpha` in `(1/2, 1)`.
    pub fn pointwise_holder(alpha: f64, y: HVector) -> Result<Self, ProblemError> {
        check_run_alpha(alpha)?;
        let op = PointwiseHolder::new(y.dim(), alpha)?;
        Self::new("pointwise-holder", Arc::new(op), y, Vec::new())
    }

    /// `F(u) = A u + |u|^alpha sign(u)`. Strictly monotone through the
    /// pointwise part, so the solution is unique.
    pub fn composite(matrix: DMatrix<f64>, alpha: f64, y: HVector) -> Result<Self, ProblemError> {
        check_run_alpha(alpha)?;
        validate_psd(&matrix, y.weights())?;
        let op = Composite::new(Linear::new(matrix), PointwiseHolder::new(y.dim(), alpha)?);
        Self::new("composite", Arc::new(op), y, Vec::new())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_ubar(mut self, ubar: HVector) -> Result<Self, ProblemError> {
        self.y.check_compatible(&ubar)?;
        self.ubar = Some(ubar);
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn operator(&self) -> &dyn MonotoneOperator {
        self.operator.as_ref()
    }

    pub fn operator_arc(&self) -> Arc<dyn MonotoneOperator> {
        Arc::clone(&self.operator)
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Minimal-norm solution.
    pub fn y(&self) -> &HVector {
        &self.y
    }

    pub fn f(&self) -> &HVector {
        &self.f
    }

    pub fn ubar(&self) -> Option<&HVector> {
        self.ubar.as_ref()
    }

    pub fn null_basis(&self) -> &[HVector] {
        &self.null_basis
    }

    pub fn holder(&self) -> HolderInfo {
        self.operator.holder(&self.weights)
    }

    /// Whether the problem qualifies for DSM acceptance runs (Hölder order
    /// above one half).
    pub fn acceptance_ready(&self) -> bool {
        self.holder().exponent > 0.5
    }

    /// Whether `F(u) = f` has exactly one solution.
    pub fn unique_solution(&self) -> bool {
        self.null_basis.is_empty()
    }

    pub fn apply(&self, u: &HVector) -> Result<HVector, ProblemError> {
        self.y.check_compatible(u)?;
        Ok(u.with_coords(self.operator.apply(u.coords())))
    }

    /// The solution closest to `anchor`: projection of `anchor` onto the
    /// affine solution set `y + span(null_basis)`.
    pub fn closest_solution(&self, anchor: &HVector) -> Result<HVector, ProblemError> {
        self.y.check_compatible(anchor)?;
        let w = &self.weights;
        let mut out = self.y.coords().to_vec();
        let diff: Vec<f64> = anchor
            .coords()
            .iter()
            .zip(self.y.coords())
            .map(|(a, b)| a - b)
            .collect();
        for z in &self.null_basis {
            let c = w.dot(&diff, z.coords());
            for (o, zi) in out.iter_mut().zip(z.coords()) {
                *o += c * zi;
            }
        }
        Ok(self.y.with_coords(out))
    }

    /// Target of the shifted flow: the solution closest to `ubar`, or `y`
    /// when no shift is set.
    pub fn y_star(&self) -> HVector {
        match &self.ubar {
            Some(ubar) => self
                .closest_solution(ubar)
                .expect("ubar is compatible by construction"),
            None => self.y.clone(),
        }
    }

    /// A few other members of the solution set, `y + s z` for each null
    /// direction `z`. Empty when the solution is unique.
    pub fn alternative_solutions(&self) -> Vec<HVector> {
        let mut out = Vec::new();
        for z in &self.null_basis {
            for s in [-1.0, 0.5, 2.0] {
                let c = self
                    .y
                    .coords()
                    .iter()
                    .zip(z.coords())
                    .map(|(y, z)| y + s * z)
                    .collect();
                out.push(self.y.with_coords(c));
            }
        }
        out
    }
}

fn check_run_alpha(alpha: f64) -> Result<(), ProblemError> {
    if alpha > 0.5 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ProblemError::AlphaOutOfRange { alpha })
    }
}

/// Checks symmetry and positive semidefiniteness in the weighted inner
/// product and returns a basis of the null space (raw coordinates).
fn validate_psd(matrix: &DMatrix<f64>, weights: &Weights) -> Result<Vec<Vec<f64>>, ProblemError> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(ProblemError::NotSquare { rows, cols });
    }
    if rows != weights.len() {
        return Err(ProblemError::DimensionMismatch {
            operator: rows,
            vector: weights.len(),
        });
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let max_asymmetry = (matrix - matrix.transpose()).amax();
    if max_asymmetry > 1e-12 * scale {
        return Err(ProblemError::NotSymmetric { max_asymmetry });
    }
    // Rayleigh quotients <Au, u>_w / <u, u>_w are the eigenvalues of
    // W^{1/2} A W^{-1/2}, symmetrized.
    let w = weights.as_slice();
    let n = rows;
    let scaled = DMatrix::from_fn(n, n, |i, j| {
        let a = w[i].sqrt() * matrix[(i, j)] / w[j].sqrt();
        let b = w[j].sqrt() * matrix[(j, i)] / w[i].sqrt();
        0.5 * (a + b)
    });
    let eig = SymmetricEigen::new(scaled);
    let min_eigenvalue = eig.eigenvalues.min();
    if min_eigenvalue < -1e-10 {
        return Err(ProblemError::Indefinite { min_eigenvalue });
    }

    let sym = 0.5 * (matrix + matrix.transpose());
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.amax();
    let mut null = Vec::new();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= NULL_TOL * top.max(f64::MIN_POSITIVE) {
            null.push(eig.eigenvectors.column(k).iter().copied().collect());
        }
    }
    Ok(null)
}

/// Weighted Gram-Schmidt; drops numerically dependent vectors.
fn orthonormalize(weights: &Weights, vectors: Vec<HVector>) -> Vec<HVector> {
    let mut basis: Vec<HVector> = Vec::new();
    for v in vectors {
        let mut c = v.coords().to_vec();
        // Two passes for stability.
        for _ in 0..2 {
            for b in &basis {
                let p = weights.dot(&c, b.coords());
                for (ci, bi) in c.iter_mut().zip(b.coords()) {
                    *ci -= p * bi;
                }
            }
        }
        let nrm = weights.norm_of(&c);
        if nrm > 1e-12 * v.norm().max(f64::MIN_POSITIVE) && nrm > 0.0 {
            for ci in &mut c {
                *ci /= nrm;
            }
            basis.push(v.with_coords(c));
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn ev(c: &[f64]) -> HVector {
        HVector::euclidean(c.to_vec()).unwrap()
    }

    #[test]
    fn identity_examples() {
        let p = MonotoneProblem::identity(1, Some(ev(&[1.0]))).unwrap();
        assert_eq!(p.f().coords(), &[1.0]);
        let p = MonotoneProblem::identity(2, Some(ev(&[3.0, 4.0]))).unwrap();
        assert_eq!(p.y().norm(), 5.0);
        assert_eq!(p.f().coords(), &[3.0, 4.0]);
        let p = MonotoneProblem::identity(3, None).unwrap();
        assert_eq!(p.y().coords(), &[1.0, 1.0, 1.0]);
        let h = p.holder();
        assert_eq!((h.exponent, h.constant), (1.0, Some(1.0)));
    }

    #[test]
    fn diag_singular_has_documented_null_space() {
        let a = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        let p = MonotoneProblem::psd_linear(a, ev(&[1.0, 0.0])).unwrap();
        assert_eq!(p.f().coords(), &[1.0, 0.0]);
        assert_eq!(p.null_basis().len(), 1);
        for z in p.alternative_solutions() {
            let fz = p.apply(&z).unwrap();
            assert!(fz.dist(p.f()).unwrap() < 1e-15);
            assert!(p.y().norm() <= z.norm());
        }
    }

    #[test]
    fn diag_identity_action() {
        let a = DMatrix::from_diagonal(&dvector![1.0, 1.0]);
        let p = MonotoneProblem::psd_linear(a, ev(&[2.0, 3.0])).unwrap();
        assert_eq!(p.f().coords(), &[2.0, 3.0]);
        assert!(p.unique_solution());
    }

    #[test]
    fn rejects_non_minimal_y() {
        let a = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        assert!(matches!(
            MonotoneProblem::psd_linear(a, ev(&[1.0, 0.3])),
            Err(ProblemError::NotMinimalNorm { .. })
        ));
    }

    #[test]
    fn rejects_bad_matrices() {
        let nonsym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            MonotoneProblem::psd_linear(nonsym, ev(&[1.0, 0.0])),
            Err(ProblemError::NotSymmetric { .. })
        ));
        let indef = DMatrix::from_diagonal(&dvector![1.0, -0.5]);
        assert!(matches!(
            MonotoneProblem::psd_linear(indef, ev(&[1.0, 0.0])),
            Err(ProblemError::Indefinite { .. })
        ));
        let rect = DMatrix::zeros(2, 3);
        assert!(matches!(
            MonotoneProblem::psd_linear(rect, ev(&[1.0, 0.0])),
            Err(ProblemError::NotSquare { .. })
        ));
    }

    #[test]
    fn holder_alpha_range_for_runs() {
        assert!(MonotoneProblem::pointwise_holder(0.5, ev(&[1.0])).is_err());
        assert!(MonotoneProblem::pointwise_holder(1.0, ev(&[1.0])).is_err());
        let p = MonotoneProblem::pointwise_holder(0.75, ev(&[1.0, -1.0])).unwrap();
        assert_eq!(p.f().coords(), &[1.0, -1.0]);
        assert!(p.acceptance_ready());
        assert!(!p.operator().differentiable());
    }

    #[test]
    fn closest_solution_projects_onto_solution_set() {
        let a = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        let p = MonotoneProblem::psd_linear(a, ev(&[1.0, 0.0]))
            .unwrap()
            .with_ubar(ev(&[0.0, 5.0]))
            .unwrap();
        assert_eq!(p.y_star().coords(), &[1.0, 5.0]);
    }

    #[test]
    fn monotonicity_is_checked_in_the_weighted_product() {
        // Symmetric and PSD in the plain product, but <Au, u>_w =
        // (w . u)(1 . u) is indefinite for unequal weights.
        let w = Weights::new(vec![0.25, 0.75]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let y = HVector::new(vec![1.0, 1.0], w.clone()).unwrap();
        assert!(matches!(
            MonotoneProblem::psd_linear(a, y),
            Err(ProblemError::Indefinite { .. })
        ));
        let a = DMatrix::from_diagonal(&dvector![2.0, 0.0]);
        let y = HVector::new(vec![1.0, 0.0], w).unwrap();
        let p = MonotoneProblem::psd_linear(a, y).unwrap();
        for z in p.alternative_solutions() {
            assert!(p.y().norm() <= z.norm());
        }
    }
}
