//! Sampled monotonicity and Hölder checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::MonotoneOperator;
use crate::exec::{map_collect, Execution};
use crate::space::Weights;

/// Region the sample pairs are drawn from.
#[derive(Debug, Clone)]
pub struct SampleBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl SampleBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn origin(n: usize, radius: f64) -> Self {
        Self::new(vec![0.0; n], radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub pairs: usize,
    /// Smallest `<F(u) - F(v), u - v>` seen.
    pub min_inner: f64,
    pub worst_pair: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport {
    pub pairs: usize,
    /// Largest `||F(u) - F(v)|| / ||u - v||^alpha` seen.
    pub max_ratio: f64,
    pub declared: Option<f64>,
    pub passed: bool,
}

pub const MONOTONE_TOL: f64 = -1e-10;

fn point_in_ball(rng: &mut ChaCha8Rng, w: &Weights, ball: &SampleBall) -> Vec<f64> {
    let n = ball.center.len();
    let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let nrm = w.norm_of(&dir).max(f64::MIN_POSITIVE);
    let r = ball.radius * rng.random::<f64>().powf(1.0 / n as f64);
    ball.center
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + r * d / nrm)
        .collect()
}

/// Half of the pairs are independent points; the other half are close
/// pairs at separations down to `1e-6 * radius`, which probes kinks.
fn sample_pair(w: &Weights, ball: &SampleBall, seed: u64, index: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let u = point_in_ball(&mut rng, w, ball);
    let v = if index.is_multiple_of(2) {
        point_in_ball(&mut rng, w, ball)
    } else {
        let scale = ball.radius * 10f64.powf(-6.0 * rng.random::<f64>());
        let near = SampleBall::new(u.clone(), scale);
        point_in_ball(&mut rng, w, &near)
    };
    (u, v)
}

pub fn check_monotone(
    op: &dyn MonotoneOperator,
    weights: &Weights,
    ball: &SampleBall,
    pairs: usize,
    seed: u64,
    exec: Execution,
) -> MonotonicityReport {
    let idx: Vec<u64> = (0..pairs as u64).collect();
    let vals = map_collect(exec, &idx, |&i| {
        let (u, v) = sample_pair(weights, ball, seed, i);
        let fu = op.apply(&u);
        let fv = op.apply(&v);
        let du: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a - b).collect();
        weights.dot(&df, &du)
    });
    let (worst_pair, min_inner) =
        vals.iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
            );
    MonotonicityReport {
        pairs,
        min_inner,
        worst_pair,
        passed: pairs == 0 || min_inner >= MONOTONE_TOL,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn check_holder(
    op: &dyn MonotoneOperator,
    weights: &Weights,
    ball: &SampleBall,
    alpha: f64,
    declared: Option<f64>,
    pairs: usize,
    seed: u64,
    exec: Execution,
) -> HolderReport {
    let idx: Vec<u64> = (0..pairs as u64).collect();
    let vals = map_collect(exec, &idx, |&i| {
        let (u, v) = sample_pair(weights, ball, seed, i);
        let d = weights.dist(&u, &v);
        if d == 0.0 {
            return 0.0;
        }
        weights.dist(&op.apply(&u), &op.apply(&v)) / d.powf(alpha)
    });
    let max_ratio = vals.iter().copied().fold(0.0, f64::max);
    let passed = match declared {
        Some(c) => max_ratio <= c * (1.0 + 1e-9),
        None => max_ratio.is_finite(),
    };
    HolderReport {
        pairs,
        max_ratio,
        declared,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{Identity, PointwiseHolder};

    #[derive(Debug)]
    struct Negate;
    impl MonotoneOperator for Negate {
        fn dim(&self) -> usize {
            2
        }
        fn apply_into(&self, u: &[f64], out: &mut [f64]) {
            out[0] = -u[0];
            out[1] = -u[1];
        }
        fn holder(&self, _: &Weights) -> super::super::HolderInfo {
            unreachable!()
        }
        fn differentiable(&self) -> bool {
            true
        }
    }

    #[test]
    fn identity_is_monotone() {
        let w = Weights::ones(3).unwrap();
        let r = check_monotone(
            &Identity::new(3),
            &w,
            &SampleBall::origin(3, 2.0),
            100,
            1,
            Execution::Sequential,
        );
        assert!(r.passed);
        assert!(r.min_inner >= 0.0);
    }

    #[test]
    fn negation_is_caught() {
        let w = Weights::ones(2).unwrap();
        let r = check_monotone(
            &Negate,
            &w,
            &SampleBall::origin(2, 1.0),
            50,
            1,
            Execution::Sequential,
        );
        assert!(!r.passed);
        assert!(r.min_inner < 0.0);
    }

    #[test]
    fn sampling_is_execution_independent() {
        let w = Weights::uniform(4).unwrap();
        let op = PointwiseHolder::new(4, 0.75).unwrap();
        let ball = SampleBall::origin(4, 1.0);
        let a = check_holder(&op, &w, &ball, 0.75, None, 200, 9, Execution::Sequential);
        let b = check_holder(&op, &w, &ball, 0.75, None, 200, 9, Execution::Parallel);
        assert_eq!(a, b);
    }
}
