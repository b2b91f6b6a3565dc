//! Post-hoc audit of a DSM run against the regularized path.
//!
//! `V(t)` solves `F(V) + a(t) (V - ubar) = f_delta` (`ubar = 0` without a
//! shift), `psi = ||V - ubar||`, `h` is the regularized residual of the
//! flow and `w = u - V`.

use crate::dsm::TrajectoryRecord;
use crate::operators::{MonotoneOperator, NoisyData};
use crate::path::{solve_regularized_with, PathError, SolveOptions};
use crate::quadrature::{damped_integral, merge_points, phi_grid};
use crate::schedule::{Condition, Schedule};
use crate::space::HVector;

use super::gronwall::{bound_with_exponent, ratio_max};
use super::limits::PsiProfile;
use super::Verdict;

/// Residual tolerance of the path solves made by the audit.
pub const AUDIT_SOLVE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub verdict: Verdict,
    pub max_ratio: f64,
}

impl BoundCheck {
    fn new(t: &[f64], lhs: &[f64], rhs: &[f64], slack: f64) -> Self {
        Self {
            verdict: Verdict::from_pairs(t, lhs, rhs, slack),
            max_ratio: ratio_max(lhs, rhs),
        }
    }

    fn refused(msg: String) -> Self {
        Self {
            verdict: Verdict::Refused(msg),
            max_ratio: f64::NAN,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

/// The four addends of the error split at the stopping time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopSplit {
    pub t_delta: f64,
    /// `||u(t_delta) - target||`.
    pub error: f64,
    /// `||u - V_delta||`.
    pub flow_gap: f64,
    /// `delta / a`.
    pub noise_term: f64,
    /// `||V - target||` for the noise-free path.
    pub bias: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryAudit {
    pub samples: usize,
    /// `h <= e^{-A} h(0) + e^{-A} int e^{A} |a'| psi` with `A = (1 - q) int a`.
    pub h_bound: BoundCheck,
    /// `||w|| <= e^{-phi} ||w(0)|| + e^{-phi} int e^{phi} (|a'| / a) psi`.
    pub w_bound: BoundCheck,
    /// `a ||u - V|| <= h`.
    pub scaled_gap: BoundCheck,
    /// `||F(u) - F(V)|| <= h`.
    pub operator_gap: BoundCheck,
    /// `||u - ubar|| <= ||w(0)|| + K psi + 0.05`.
    pub growth: BoundCheck,
    /// `1 + sup e^{-phi} int e^{phi} |a'| / a` over `[0, t_max]`.
    pub k: f64,
    pub stop: Option<StopSplit>,
}

impl TrajectoryAudit {
    pub fn passed(&self) -> bool {
        self.h_bound.passed()
            && self.w_bound.passed()
            && self.scaled_gap.passed()
            && self.operator_gap.passed()
            && self.growth.passed()
            && self.stop.is_none_or(|s| s.holds)
    }
}

/// What the audit compares against.
#[derive(Debug, Clone, Copy)]
pub struct AuditInputs<'a> {
    pub op: &'a dyn MonotoneOperator,
    pub schedule: &'a Schedule,
    pub data: &'a NoisyData,
    /// Noise-free data `f`.
    pub f: &'a HVector,
    /// `y`, or the closest solution to `ubar` for shifted runs.
    pub target: &'a HVector,
    pub q: f64,
    /// Relative slack on every inequality.
    pub slack: f64,
}

/// Absolute tolerance on the stop-time split, covering path solve errors.
const SPLIT_TOL: f64 = 1e-9;

/// Additive allowance in the growth bound.
const GROWTH_ALLOWANCE: f64 = 0.05;

fn diff_norm(w: &crate::space::Weights, x: &[f64], y: &[f64]) -> f64 {
    w.dist(x, y)
}

/// `sup` over `[0, t_max]` of `e^{-phi} int e^{phi} |a'| / a`, plus one.
pub fn growth_constant(schedule: &Schedule) -> f64 {
    let grid = phi_grid(schedule, schedule.t_max(), 0.05, 0.01);
    let phi: Vec<f64> = grid.iter().map(|&t| schedule.phi(t)).collect();
    let beta: Vec<f64> = grid
        .iter()
        .map(|&t| schedule.adot(t).abs() / schedule.a(t))
        .collect();
    1.0 + damped_integral(&grid, &phi, &beta)
        .into_iter()
        .fold(0.0, f64::max)
}

pub fn audit_trajectory(
    record: &TrajectoryRecord,
    inputs: &AuditInputs<'_>,
) -> Result<TrajectoryAudit, PathError> {
    let AuditInputs {
        op,
        schedule,
        data,
        f,
        target,
        q,
        slack,
    } = *inputs;
    let w = &record.weights;
    let f_delta = data.f_delta();
    let ubar = record.ubar.as_ref();
    let opts = SolveOptions::with_tol(AUDIT_SOLVE_TOL);
    let n = record.samples.len();

    let mut t = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut gap = Vec::with_capacity(n);
    let mut scaled_gap = Vec::with_capacity(n);
    let mut op_gap = Vec::with_capacity(n);
    let mut dist_ubar = Vec::with_capacity(n);
    let mut last_v: Option<HVector> = None;
    let mut fu = vec![0.0; op.dim()];
    let mut fv = vec![0.0; op.dim()];
    for s in &record.samples {
        let point = solve_regularized_with(op, s.a, f_delta, ubar, &opts, last_v.as_ref())
            .map_err(|e| PathError::AtTime {
                t: s.t,
                source: Box::new(e),
            })?;
        op.apply_into(&s.u, &mut fu);
        op.apply_into(point.v.coords(), &mut fv);
        let g = diff_norm(w, &s.u, point.v.coords());
        t.push(s.t);
        psi.push(point.psi);
        h.push(s.h);
        gap.push(g);
        scaled_gap.push(s.a * g);
        op_gap.push(diff_norm(w, &fu, &fv));
        dist_ubar.push(match ubar {
            Some(ub) => diff_norm(w, &s.u, ub.coords()),
            None => w.norm_of(&s.u),
        });
        last_v = Some(point.v);
    }

    // Integrals run on the sample times refined by a schedule grid, with psi
    // interpolated linearly between samples.
    let profile = PsiProfile::new(t.clone(), psi.clone());
    let t_end = *t.last().unwrap();
    let grid = merge_points(phi_grid(schedule, t_end, 0.05, 0.01), &t);
    let at: Vec<usize> = t
        .iter()
        .map(|&ti| grid.partition_point(|&x| x < ti))
        .collect();
    let phi: Vec<f64> = grid.iter().map(|&s| schedule.phi(s)).collect();
    let adot: Vec<f64> = grid.iter().map(|&s| schedule.adot(s).abs()).collect();

    let h_bound = match schedule.certify(Condition::RatioBelowHalf, Some(q), 2000) {
        Ok(c) if c.passed => {
            let expo: Vec<f64> = phi.iter().map(|p| (1.0 - q) * p).collect();
            let beta: Vec<f64> = grid
                .iter()
                .zip(&adot)
                .map(|(&s, d)| d * profile.at(s))
                .collect();
            let bound = bound_with_exponent(&grid, h[0], &expo, &beta);
            let rhs: Vec<f64> = at.iter().map(|&i| bound[i]).collect();
            BoundCheck::new(&t, &h, &rhs, slack)
        }
        Ok(_) => BoundCheck::refused(format!("schedule fails the ratio bound with q = {q}")),
        Err(e) => BoundCheck::refused(e.to_string()),
    };

    let beta: Vec<f64> = grid
        .iter()
        .zip(&adot)
        .map(|(&s, d)| d / schedule.a(s) * profile.at(s))
        .collect();
    let bound = bound_with_exponent(&grid, gap[0], &phi, &beta);
    let w_rhs: Vec<f64> = at.iter().map(|&i| bound[i]).collect();
    let w_bound = BoundCheck::new(&t, &gap, &w_rhs, slack);

    let k = growth_constant(schedule);
    let growth_rhs: Vec<f64> = psi
        .iter()
        .map(|p| gap[0] + k * p + GROWTH_ALLOWANCE)
        .collect();

    let stop = match (&record.u_at_stop, record.t_delta) {
        (Some(u), Some(td)) if record.stopped => {
            let last = record.final_sample();
            let a = last.a;
            let noise_free = solve_regularized_with(op, a, f, ubar, &opts, last_v.as_ref())?;
            let error = u.dist(target)?;
            let flow_gap = *gap.last().unwrap();
            let noise_term = data.delta() / a;
            let bias = noise_free.v.dist(target)?;
            Some(StopSplit {
                t_delta: td,
                error,
                flow_gap,
                noise_term,
                bias,
                holds: error <= flow_gap + noise_term + bias + SPLIT_TOL,
            })
        }
        _ => None,
    };

    Ok(TrajectoryAudit {
        samples: n,
        h_bound,
        w_bound,
        scaled_gap: BoundCheck::new(&t, &scaled_gap, &h, slack),
        operator_gap: BoundCheck::new(&t, &op_gap, &h, slack),
        growth: BoundCheck::new(&t, &dist_ubar, &growth_rhs, 0.0),
        k,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsm::{integrate, IntegratorOptions, StopRule};
    use crate::operators::{perturb, MonotoneProblem};

    fn run(label_y: f64) -> (MonotoneProblem, Schedule, NoisyData, TrajectoryRecord) {
        let p =
            MonotoneProblem::identity(1, Some(HVector::euclidean(vec![label_y]).unwrap())).unwrap();
        let s = Schedule::power(3.0, 1.0, 0.5).unwrap();
        let data = perturb(p.f(), 1e-2, 0).unwrap();
        let u0 = HVector::euclidean(vec![-1.0]).unwrap();
        let rec = integrate(
            p.operator(),
            &s,
            &data,
            &u0,
            &StopRule::default(),
            &IntegratorOptions::default(),
        )
        .unwrap();
        (p, s, data, rec)
    }

    #[test]
    fn identity_run_satisfies_all_bounds() {
        let (p, s, data, rec) = run(1.0);
        let inputs = AuditInputs {
            op: p.operator(),
            schedule: &s,
            data: &data,
            f: p.f(),
            target: p.y(),
            q: 0.25,
            slack: 0.05,
        };
        let audit = audit_trajectory(&rec, &inputs).unwrap();
        assert!(audit.passed(), "{audit:#?}");
        assert!(audit.stop.is_some());
    }

    #[test]
    fn corrupted_residuals_fail() {
        let (p, s, data, mut rec) = run(1.0);
        for smp in rec.samples.iter_mut().skip(1) {
            smp.h *= 1.5;
        }
        let inputs = AuditInputs {
            op: p.operator(),
            schedule: &s,
            data: &data,
            f: p.f(),
            target: p.y(),
            q: 0.25,
            slack: 0.05,
        };
        let audit = audit_trajectory(&rec, &inputs).unwrap();
        assert!(matches!(audit.h_bound.verdict, Verdict::Fail { .. }));
    }

    #[test]
    fn uncertified_q_is_refused() {
        let (p, s, data, rec) = run(1.0);
        let inputs = AuditInputs {
            op: p.operator(),
            schedule: &s,
            data: &data,
            f: p.f(),
            target: p.y(),
            q: 0.01,
            slack: 0.05,
        };
        let audit = audit_trajectory(&rec, &inputs).unwrap();
        assert!(matches!(audit.h_bound.verdict, Verdict::Refused(_)));
    }

    #[test]
    fn growth_constant_of_default_schedule() {
        let k = growth_constant(&Schedule::power(3.0, 1.0, 0.5).unwrap());
        assert!(k > 1.0 && k.is_finite());
    }
}
