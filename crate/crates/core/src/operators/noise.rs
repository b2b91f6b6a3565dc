use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ProblemError;
use crate::space::HVector;

/// Noisy right-hand side with `||f_delta - f|| <= delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyData {
    f_delta: HVector,
    delta: f64,
}

impl NoisyData {
    /// Checks the noise bound against the exact data `f`.
    pub fn new(f: &HVector, f_delta: HVector, delta: f64) -> Result<Self, ProblemError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(ProblemError::BadDelta { delta });
        }
        let distance = f.dist(&f_delta)?;
        if distance > delta * (1.0 + 1e-12) {
            return Err(ProblemError::NoiseTooLarge { distance, delta });
        }
        Ok(Self { f_delta, delta })
    }

    /// `f + delta * e` with `e` the normalized `direction`.
    pub fn along(f: &HVector, delta: f64, direction: &HVector) -> Result<Self, ProblemError> {
        f.check_compatible(direction)?;
        let n = direction.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(ProblemError::ZeroDirection);
        }
        let coords = f
            .coords()
            .iter()
            .zip(direction.coords())
            .map(|(fi, ei)| fi + delta * ei / n)
            .collect();
        Self::new(f, f.with_coords(coords), delta)
    }

    pub fn f_delta(&self) -> &HVector {
        &self.f_delta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Seeded unit-norm noise: `f_delta = f + delta * e`, `||e|| = 1`. The same
/// seed yields the same direction for every `delta`.
pub fn perturb(f: &HVector, delta: f64, seed: u64) -> Result<NoisyData, ProblemError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ProblemError::BadDelta { delta });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let e: Vec<f64> = (0..f.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let e = f.with_coords(e);
        if e.norm() > 0.0 {
            return NoisyData::along(f, delta, &e);
        }
    }
}
