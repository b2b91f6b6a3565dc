//! Finite-dimensional model of a real Hilbert space.
//!
//! Vectors carry the quadrature weights that define the inner product
//! `<u, v> = sum_i w_i u_i v_i`, so a grid discretization of `L2[0, 1]` with
//! weights `1/n` reproduces continuum norms. Weights are shared behind an
//! [`Arc`], which keeps clones cheap and lets compatibility checks short-cut
//! on pointer equality.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("vector dimension must be at least 1")]
    Empty,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vectors live in spaces with different weights")]
    WeightMismatch,
    #[error("weight {index} is {value}; weights must be finite and strictly positive")]
    NonPositiveWeight { index: usize, value: f64 },
}

/// Quadrature weights of the discretized inner product.
#[derive(Clone)]
pub struct Weights(Arc<[f64]>);

impl Weights {
    pub fn new(weights: Vec<f64>) -> Result<Self, SpaceError> {
        if weights.is_empty() {
            return Err(SpaceError::Empty);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(SpaceError::NonPositiveWeight { index, value });
        }
        Ok(Self(weights.into()))
    }

    /// Uniform grid weights `1/n`.
    pub fn uniform(n: usize) -> Result<Self, SpaceError> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Plain Euclidean weights.
    pub fn ones(n: usize) -> Result<Self, SpaceError> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Sum of the weights (the "measure" of the discretized domain).
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn same_space(&self, other: &Weights) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }

    /// Weighted inner product of raw coordinate slices. Callers guarantee
    /// matching lengths.
    #[inline]
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.0.len());
        debug_assert_eq!(v.len(), self.0.len());
        self.0
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    #[inline]
    pub fn norm_of(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }

    /// `||u - v||` without allocating.
    #[inline]
    pub fn dist(&self, u: &[f64], v: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Debug for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl PartialEq for Weights {
    fn eq(&self, other: &Self) -> bool {
        self.same_space(other)
    }
}

/// Element of the discretized Hilbert space.
#[derive(Clone, PartialEq)]
pub struct HVector {
    coords: Vec<f64>,
    weights: Weights,
}

impl HVector {
    pub fn new(coords: Vec<f64>, weights: Weights) -> Result<Self, SpaceError> {
        if coords.len() != weights.len() {
            return Err(SpaceError::DimensionMismatch {
                left: coords.len(),
                right: weights.len(),
            });
        }
        Ok(Self { coords, weights })
    }

    /// Vector with Euclidean weights.
    pub fn euclidean(coords: Vec<f64>) -> Result<Self, SpaceError> {
        let w = Weights::ones(coords.len())?;
        Self::new(coords, w)
    }

    pub fn zeros(weights: &Weights) -> Self {
        Self {
            coords: vec![0.0; weights.len()],
            weights: weights.clone(),
        }
    }

    pub fn filled(weights: &Weights, value: f64) -> Self {
        Self {
            coords: vec![value; weights.len()],
            weights: weights.clone(),
        }
    }

    /// Builds a vector in the same space as `self` from raw coordinates.
    pub(crate) fn with_coords(&self, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), self.coords.len());
        Self {
            coords,
            weights: self.weights.clone(),
        }
    }

    pub(crate) fn from_parts(coords: Vec<f64>, weights: &Weights) -> Self {
        debug_assert_eq!(coords.len(), weights.len());
        Self {
            coords,
            weights: weights.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn check_compatible(&self, other: &HVector) -> Result<(), SpaceError> {
        if self.dim() != other.dim() {
            return Err(SpaceError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        if !self.weights.same_space(&other.weights) {
            return Err(SpaceError::WeightMismatch);
        }
        Ok(())
    }

    pub fn inner(&self, other: &HVector) -> Result<f64, SpaceError> {
        self.check_compatible(other)?;
        Ok(self.weights.dot(&self.coords, &other.coords))
    }

    pub fn norm(&self) -> f64 {
        self.weights.norm_of(&self.coords)
    }

    pub fn dist(&self, other: &HVector) -> Result<f64, SpaceError> {
        self.check_compatible(other)?;
        Ok(self.weights.dist(&self.coords, &other.coords))
    }

    pub fn sub(&self, other: &HVector) -> Result<HVector, SpaceError> {
        axpy(-1.0, other, self)
    }

    pub fn add(&self, other: &HVector) -> Result<HVector, SpaceError> {
        axpy(1.0, other, self)
    }

    pub fn scale(&self, alpha: f64) -> HVector {
        self.with_coords(self.coords.iter().map(|x| alpha * x).collect())
    }
}

impl fmt::Debug for HVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HVector")
            .field("coords", &self.coords)
            .field("weights", &self.weights)
            .finish()
    }
}

/// `<u, v> = sum_i w_i u_i v_i`.
pub fn inner(u: &HVector, v: &HVector) -> Result<f64, SpaceError> {
    u.inner(v)
}

pub fn norm(u: &HVector) -> f64 {
    u.norm()
}

/// `alpha * u + v`, keeping the weights of the operands.
pub fn axpy(alpha: f64, u: &HVector, v: &HVector) -> Result<HVector, SpaceError> {
    u.check_compatible(v)?;
    let coords = u
        .coords
        .iter()
        .zip(&v.coords)
        .map(|(a, b)| alpha * a + b)
        .collect();
    Ok(v.with_coords(coords))
}
