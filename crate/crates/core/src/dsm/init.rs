//! Start-point diagnostics.
//!
//! Three inequalities concern the start `u0`. The discrepancy gate
//! `||F(u0) - f_delta|| > C delta^zeta` is required before integrating. The
//! two others bound the initial regularized residual
//! `||F(u0) + a(0) (u0 - ubar) - f_delta||`, relative to
//! `a(0) ||V(0) - ubar||` (factor `p`) or absolutely by `theta delta^zeta`;
//! either one makes stopping times grow without bound as `delta -> 0`. They
//! are reported, never enforced.

use crate::operators::{MonotoneOperator, NoisyData};
use crate::path::{solve_regularized_with, PathError, SolveOptions};
use crate::schedule::{Condition, Schedule};
use crate::space::HVector;

use super::StopRule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InitCheck {
    fn le(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitParams {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            p: 0.4,
            q: 0.25,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitCertificate {
    /// `C delta^zeta < ||F(u0) - f_delta||` (lhs is the threshold) and
    /// `delta < C delta^zeta`.
    pub discrepancy_gate: InitCheck,
    pub threshold_above_noise: bool,
    /// Regularized residual at `u0` against `p a(0) ||V(0) - ubar||`.
    pub relative_start: InitCheck,
    /// `1 - q / (1 - 2q)`; admissible `p` lie strictly between 0 and this.
    pub p_ceiling: f64,
    pub p_admissible: bool,
    /// Regularized residual at `u0` against `theta delta^zeta`.
    pub absolute_start: InitCheck,
    pub theta_admissible: bool,
    /// Whether the schedule satisfies the ratio bound with `q < 1/3`.
    pub schedule_certified: bool,
}

impl InitCertificate {
    /// The growth guarantee needs admissible parameters, a certified
    /// schedule, and one of the two start bounds.
    pub fn growth_guaranteed(&self) -> bool {
        self.schedule_certified
            && ((self.p_admissible && self.relative_start.holds)
                || (self.theta_admissible && self.absolute_start.holds))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn check_init(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    data: &NoisyData,
    u0: &HVector,
    ubar: Option<&HVector>,
    rule: &StopRule,
    params: &InitParams,
) -> Result<InitCertificate, PathError> {
    let f_delta = data.f_delta();
    f_delta.check_compatible(u0)?;
    let w = f_delta.weights();
    let delta = data.delta();
    let a0 = schedule.value(0.0)?;
    let fu = op.apply(u0.coords());
    let mut disc = vec![0.0; fu.len()];
    let mut reg = vec![0.0; fu.len()];
    for i in 0..fu.len() {
        disc[i] = fu[i] - f_delta.coords()[i];
        let shift = ubar.map_or(0.0, |u| u.coords()[i]);
        reg[i] = disc[i] + a0 * (u0.coords()[i] - shift);
    }
    let disc = w.norm_of(&disc);
    let reg = w.norm_of(&reg);
    let threshold = rule.threshold(delta);

    let v0 = solve_regularized_with(op, a0, f_delta, ubar, &SolveOptions::with_tol(1e-13), None)?;
    let q = params.q;
    let p_ceiling = 1.0 - q / (1.0 - 2.0 * q);
    let schedule_certified = q > 0.0
        && q < 1.0 / 3.0
        && schedule
            .certify(Condition::RatioBelowThird, Some(q), 2000)
            .map(|c| c.passed)
            .unwrap_or(false);
    Ok(InitCertificate {
        discrepancy_gate: InitCheck {
            lhs: threshold,
            rhs: disc,
            holds: threshold < disc,
        },
        threshold_above_noise: threshold > delta,
        relative_start: InitCheck::le(reg, params.p * a0 * v0.psi),
        p_ceiling,
        p_admissible: params.p > 0.0 && params.p < p_ceiling,
        absolute_start: InitCheck::le(reg, params.theta * delta.powf(rule.zeta)),
        theta_admissible: params.theta >= 0.0 && params.theta < rule.c,
        schedule_certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Identity;
    use approx::assert_relative_eq;

    fn ev(c: &[f64]) -> HVector {
        HVector::euclidean(c.to_vec()).unwrap()
    }

    fn setup() -> (Schedule, NoisyData) {
        // a(0) = 1.
        let s = Schedule::power(1.0, 1.0, 0.5).unwrap();
        let data = NoisyData::new(&ev(&[1.0]), ev(&[1.01]), 0.01).unwrap();
        (s, data)
    }

    #[test]
    fn exact_regularized_start_passes() {
        let (s, data) = setup();
        let u0 = ev(&[0.505]);
        let params = InitParams {
            p: 1e-6,
            ..Default::default()
        };
        let c = check_init(
            &Identity::new(1),
            &s,
            &data,
            &u0,
            None,
            &StopRule::default(),
            &params,
        )
        .unwrap();
        assert!(c.relative_start.lhs < 1e-15);
        assert!(c.relative_start.holds);
    }

    #[test]
    fn scalar_relative_start() {
        let (s, data) = setup();
        let u0 = ev(&[0.4]);
        let check = |p: f64| {
            let params = InitParams {
                p,
                ..Default::default()
            };
            check_init(
                &Identity::new(1),
                &s,
                &data,
                &u0,
                None,
                &StopRule::default(),
                &params,
            )
            .unwrap()
        };
        let c = check(0.42);
        assert_relative_eq!(c.relative_start.lhs, 0.21, max_relative = 1e-12);
        assert_relative_eq!(c.relative_start.rhs, 0.42 * 0.505, max_relative = 1e-10);
        assert!(c.relative_start.holds);
        assert!(!check(0.41).relative_start.holds);
    }

    #[test]
    fn p_ceiling_for_quarter() {
        let (s, data) = setup();
        let c = check_init(
            &Identity::new(1),
            &s,
            &data,
            &ev(&[0.0]),
            None,
            &StopRule::default(),
            &InitParams::default(),
        )
        .unwrap();
        assert_relative_eq!(c.p_ceiling, 0.5, max_relative = 1e-15);
        assert!(c.p_admissible);
        assert!(c.discrepancy_gate.holds);
        // d = 1 gives ratio(0) = 0.5 > q.
        assert!(!c.schedule_certified);
    }
}
