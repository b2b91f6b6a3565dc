//! The flow `u' = -(F(u) + a(t) (u - ubar) - f_delta)` with a
//! discrepancy-principle stop.
//!
//! Integration runs until `||F(u) - f_delta||` first drops to `C delta^zeta`.
//! The discrepancy is evaluated at every accepted step; once a step lands at
//! or below the threshold the crossing time is refined by bisection on the
//! step's cubic Hermite interpolant.

mod init;
pub mod stepper;

use thiserror::Error;

use crate::operators::{MonotoneOperator, NoisyData};
use crate::schedule::{Condition, Schedule, ScheduleError};
use crate::space::{HVector, SpaceError, Weights};

pub use init::{check_init, InitCertificate, InitCheck, InitParams};
use stepper::{attempt, hermite, initial_step, Controller, Field, Stages, StepControl};

/// Discrepancy-principle constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub c: f64,
    pub zeta: f64,
    /// Relative bisection tolerance on the crossing time.
    pub crossing_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            c: 1.5,
            zeta: 0.9,
            crossing_tol: 1e-10,
        }
    }
}

impl StopRule {
    pub fn new(c: f64, zeta: f64) -> Self {
        Self {
            c,
            zeta,
            ..Self::default()
        }
    }

    pub fn threshold(&self, delta: f64) -> f64 {
        self.c * delta.powf(self.zeta)
    }

    /// `C delta^zeta > delta`, the condition that keeps the stop above the
    /// noise floor.
    pub fn admissible(&self, delta: f64) -> bool {
        self.threshold(delta) > delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    /// Grid resolution used to certify the schedule before integrating.
    pub certify_resolution: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            t_max: crate::schedule::DEFAULT_T_MAX,
            certify_resolution: 2000,
        }
    }
}

/// State of the flow at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub u: Vec<f64>,
    /// `||F(u) - f_delta||`.
    pub discrepancy: f64,
    pub a: f64,
    /// `||F(u) + a (u - ubar) - f_delta||`.
    pub h: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub field_evals: usize,
}

/// Samples at `t = 0`, every accepted step, and the refined stop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub weights: Weights,
    pub delta: f64,
    pub threshold: f64,
    pub ubar: Option<HVector>,
    pub t_delta: Option<f64>,
    pub u_at_stop: Option<HVector>,
    pub stopped: bool,
    pub stats: StepStats,
}

impl TrajectoryRecord {
    pub fn final_sample(&self) -> &Sample {
        self.samples
            .last()
            .expect("a record always holds the start")
    }

    pub fn initial_sample(&self) -> &Sample {
        &self.samples[0]
    }

    /// Samples strictly before the stop (all of them when not stopped).
    pub fn before_stop(&self) -> &[Sample] {
        if self.stopped {
            &self.samples[..self.samples.len() - 1]
        } else {
            &self.samples
        }
    }

    pub fn sample_vector(&self, i: usize) -> HVector {
        HVector::from_parts(self.samples[i].u.clone(), &self.weights)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsmError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("schedule fails the decay condition at t = {witness:?}")]
    ScheduleNotCertified { witness: Option<f64> },
    #[error("threshold C delta^zeta = {threshold:e} does not exceed delta = {delta:e}")]
    ThresholdBelowNoise { threshold: f64, delta: f64 },
    #[error("start is already within the threshold: discrepancy {discrepancy:e} <= {threshold:e}")]
    Init { discrepancy: f64, threshold: f64 },
    #[error("no crossing before t = {t:e}; final discrepancy {discrepancy:e}")]
    Timeout {
        t: f64,
        discrepancy: f64,
        record: Box<TrajectoryRecord>,
    },
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    Stiffness { t: f64, h: f64 },
    #[error("invalid integrator options: {0}")]
    BadOptions(String),
}

struct Flow<'a> {
    op: &'a dyn MonotoneOperator,
    schedule: &'a Schedule,
    f_delta: &'a [f64],
    ubar: Option<&'a [f64]>,
    evals: std::cell::Cell<usize>,
}

impl Field for Flow<'_> {
    fn dim(&self) -> usize {
        self.f_delta.len()
    }

    fn eval(&self, t: f64, u: &[f64], out: &mut [f64]) {
        self.evals.set(self.evals.get() + 1);
        self.op.apply_into(u, out);
        let a = self.schedule.a(t);
        match self.ubar {
            Some(ub) => {
                for i in 0..u.len() {
                    out[i] = -(out[i] + a * (u[i] - ub[i]) - self.f_delta[i]);
                }
            }
            None => {
                for i in 0..u.len() {
                    out[i] = -(out[i] + a * u[i] - self.f_delta[i]);
                }
            }
        }
    }
}

impl Flow<'_> {
    fn sample(&self, w: &Weights, t: f64, u: &[f64]) -> Sample {
        let fu = self.op.apply(u);
        let a = self.schedule.a(t);
        let mut d = vec![0.0; u.len()];
        let mut v = vec![0.0; u.len()];
        for i in 0..u.len() {
            d[i] = fu[i] - self.f_delta[i];
            let shift = self.ubar.map_or(0.0, |ub| ub[i]);
            v[i] = d[i] + a * (u[i] - shift);
        }
        Sample {
            t,
            u: u.to_vec(),
            discrepancy: w.norm_of(&d),
            a,
            h: w.norm_of(&v),
        }
    }
}

/// Integrates the unshifted flow from `u0`.
pub fn integrate(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    data: &NoisyData,
    u0: &HVector,
    rule: &StopRule,
    opts: &IntegratorOptions,
) -> Result<TrajectoryRecord, DsmError> {
    run(op, schedule, data, u0, None, rule, opts)
}

/// Integrates the flow anchored at `ubar`; its stopped states approach the
/// solution closest to `ubar`.
pub fn integrate_shifted(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    data: &NoisyData,
    u0: &HVector,
    ubar: &HVector,
    rule: &StopRule,
    opts: &IntegratorOptions,
) -> Result<TrajectoryRecord, DsmError> {
    run(op, schedule, data, u0, Some(ubar), rule, opts)
}

fn validate(opts: &IntegratorOptions, rule: &StopRule) -> Result<(), DsmError> {
    if !(opts.rtol >= 0.0 && opts.atol >= 0.0 && opts.rtol + opts.atol > 0.0) {
        return Err(DsmError::BadOptions(
            "tolerances must be nonnegative, not both zero".into(),
        ));
    }
    if !(opts.t_max > 0.0 && opts.t_max.is_finite()) {
        return Err(DsmError::BadOptions(format!(
            "t_max must be positive, got {}",
            opts.t_max
        )));
    }
    if !(rule.zeta > 0.0 && rule.zeta <= 1.0) {
        return Err(DsmError::BadOptions(format!(
            "zeta must lie in (0, 1], got {}",
            rule.zeta
        )));
    }
    if !(rule.crossing_tol > 0.0) {
        return Err(DsmError::BadOptions(
            "crossing tolerance must be positive".into(),
        ));
    }
    Ok(())
}

fn run(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    data: &NoisyData,
    u0: &HVector,
    ubar: Option<&HVector>,
    rule: &StopRule,
    opts: &IntegratorOptions,
) -> Result<TrajectoryRecord, DsmError> {
    validate(opts, rule)?;
    let f_delta = data.f_delta();
    f_delta.check_compatible(u0)?;
    if let Some(ub) = ubar {
        f_delta.check_compatible(ub)?;
    }
    if op.dim() != u0.dim() {
        return Err(SpaceError::DimensionMismatch {
            left: op.dim(),
            right: u0.dim(),
        }
        .into());
    }
    let t_max = opts.t_max.min(schedule.t_max());
    let cert = schedule.certify(Condition::Decay, None, opts.certify_resolution)?;
    if !cert.passed {
        return Err(DsmError::ScheduleNotCertified {
            witness: cert.witness,
        });
    }
    let delta = data.delta();
    let threshold = rule.threshold(delta);
    if !rule.admissible(delta) {
        return Err(DsmError::ThresholdBelowNoise { threshold, delta });
    }

    let w = f_delta.weights();
    let flow = Flow {
        op,
        schedule,
        f_delta: f_delta.coords(),
        ubar: ubar.map(|u| u.coords()),
        evals: std::cell::Cell::new(0),
    };
    let first = flow.sample(w, 0.0, u0.coords());
    if first.discrepancy <= threshold {
        return Err(DsmError::Init {
            discrepancy: first.discrepancy,
            threshold,
        });
    }

    let ctl = StepControl {
        rtol: opts.rtol,
        atol: opts.atol,
    };
    let n = u0.dim();
    let mut t = 0.0;
    let mut u = u0.coords().to_vec();
    let mut k = vec![0.0; n];
    flow.eval(t, &u, &mut k);
    let mut h = initial_step(&flow, t, &u, &k, &ctl, t_max);
    let mut controller = Controller::new();
    let mut stages = Stages::new(n);
    let mut stats = StepStats::default();
    let mut samples = vec![first];

    let finish = |samples: Vec<Sample>, stats: StepStats, stop: Option<(f64, Vec<f64>)>| {
        let stats = StepStats {
            field_evals: flow.evals.get(),
            ..stats
        };
        let (t_delta, u_at_stop) = match stop {
            Some((td, us)) => (Some(td), Some(HVector::from_parts(us, w))),
            None => (None, None),
        };
        TrajectoryRecord {
            samples,
            weights: w.clone(),
            delta,
            threshold,
            ubar: ubar.cloned(),
            stopped: t_delta.is_some(),
            t_delta,
            u_at_stop,
            stats,
        }
    };

    loop {
        if t >= t_max {
            let discrepancy = samples.last().unwrap().discrepancy;
            let record = finish(samples, stats, None);
            return Err(DsmError::Timeout {
                t,
                discrepancy,
                record: Box::new(record),
            });
        }
        let h_min = 1e-13 * t.abs().max(1.0);
        if h < h_min {
            return Err(DsmError::Stiffness { t, h });
        }
        let step = h.min(t_max - t);
        let att = attempt(&flow, t, &u, &k, step, &ctl, &mut stages);
        if !(att.err <= 1.0) {
            stats.rejected += 1;
            h = step
                * if att.err.is_finite() {
                    controller.reject(att.err)
                } else {
                    0.2
                };
            continue;
        }
        stats.accepted += 1;
        let t_new = if step == t_max - t { t_max } else { t + step };
        let s_new = flow.sample(w, t_new, &att.u_new);
        if s_new.discrepancy <= threshold {
            let (td, us, sample) = refine_crossing(
                &flow, w, t, &u, &k, &att.u_new, &att.k_new, step, threshold, rule,
            );
            samples.push(sample);
            return Ok(finish(samples, stats, Some((td, us))));
        }
        samples.push(s_new);
        let fac = controller.accept(att.err);
        t = t_new;
        u = att.u_new;
        k = att.k_new;
        h = step * fac;
    }
}

/// Bisection for the first zero of `discrepancy - threshold` on the
/// interpolant over `[t0, t0 + h]`.
#[allow(clippy::too_many_arguments)]
fn refine_crossing(
    flow: &Flow<'_>,
    w: &Weights,
    t0: f64,
    u0: &[f64],
    k0: &[f64],
    u1: &[f64],
    k1: &[f64],
    h: f64,
    threshold: f64,
    rule: &StopRule,
) -> (f64, Vec<f64>, Sample) {
    let at = |s: f64| {
        let u = if s >= 1.0 {
            u1.to_vec()
        } else {
            hermite(u0, k0, u1, k1, h, s)
        };
        let sample = flow.sample(w, t0 + s * h, &u);
        (sample.discrepancy - threshold, sample)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut g_hi, mut best) = at(1.0);
    let mut g_lo = flow.sample(w, t0, u0).discrepancy - threshold;
    for _ in 0..60 {
        if (hi - lo) * h <= rule.crossing_tol * (1.0 + t0 + h) || g_hi.abs() <= 1e-12 * threshold {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (g, s) = at(mid);
        if g > 0.0 {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
            best = s;
        }
    }
    // Report the bracket end closer to the threshold.
    if g_lo.abs() < g_hi.abs() && lo > 0.0 {
        let (_, s) = at(lo);
        best = s;
    }
    (best.t, best.u.clone(), best)
}
