//! Regularizing schedules `a(t)` and their condition certificates.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("time must be nonnegative and finite, got {0}")]
    NegativeTime(f64),
    #[error("time {t} is beyond the last sample {last}")]
    BeyondSamples { t: f64, last: f64 },
    #[error("invalid power schedule: {0}")]
    BadPower(String),
    #[error("invalid sampled schedule: {0}")]
    BadSamples(String),
    #[error("q = {q} outside the admissible range (0, {upper})")]
    QOutOfRange { q: f64, upper: f64 },
    #[error("condition {0} needs a value for q")]
    MissingQ(Condition),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
}

pub const DEFAULT_T_MAX: f64 = 1e6;

/// Schedule conditions that can be certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    /// `a > 0` decreasing, `|a'|/a^2 > 0` decreasing.
    Decay,
    /// Decay plus `|a'|/a^2 < q` with `q < 1/2`.
    RatioBelowHalf,
    /// Decay plus `|a'|/a^2 < q` with `q < 1/3`.
    RatioBelowThird,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::Decay,
        Condition::RatioBelowHalf,
        Condition::RatioBelowThird,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::Decay => "decay",
            Condition::RatioBelowHalf => "ratio-below-half",
            Condition::RatioBelowThird => "ratio-below-third",
        }
    }

    /// Exclusive upper bound on `q`, if the condition takes one.
    pub fn q_ceiling(&self) -> Option<f64> {
        match self {
            Condition::Decay => None,
            Condition::RatioBelowHalf => Some(0.5),
            Condition::RatioBelowThird => Some(1.0 / 3.0),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCertificate {
    pub condition: Condition,
    pub q: Option<f64>,
    pub passed: bool,
    /// First grid time at which an inequality fails.
    pub witness: Option<f64>,
    /// For power schedules with a `q`: whether `d > b c^{b-1} / q`.
    pub closed_form: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    pub d: f64,
    pub c: f64,
    pub b: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            d: 3.0,
            c: 1.0,
            b: 0.5,
        }
    }
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant of decreasing
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSchedule {
    t: Vec<f64>,
    a: Vec<f64>,
    slopes: Vec<f64>,
    // Cumulative integral at each knot.
    cum: Vec<f64>,
}

impl SampledSchedule {
    pub fn new(t: Vec<f64>, a: Vec<f64>) -> Result<Self, ScheduleError> {
        if t.len() != a.len() || t.len() < 2 {
            return Err(ScheduleError::BadSamples(
                "need at least two (t, a) pairs of equal length".into(),
            ));
        }
        if t[0] != 0.0 {
            return Err(ScheduleError::BadSamples(
                "first sample must be at t = 0".into(),
            ));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|x| !x.is_finite()) {
            return Err(ScheduleError::BadSamples(
                "times must be strictly increasing".into(),
            ));
        }
        if a.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(ScheduleError::BadSamples("values must be positive".into()));
        }
        if a.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(ScheduleError::BadSamples(
                "values must be strictly decreasing".into(),
            ));
        }
        let m = t.len();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..m - 1).map(|k| (a[k + 1] - a[k]) / h[k]).collect();
        let mut slopes = vec![0.0; m];
        if m == 2 {
            slopes[0] = del[0];
            slopes[1] = del[0];
        } else {
            for k in 1..m - 1 {
                // Weighted harmonic mean; all secants share a sign.
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
            slopes[0] = end_slope(h[0], h[1], del[0], del[1]);
            slopes[m - 1] = end_slope(h[m - 2], h[m - 3], del[m - 2], del[m - 3]);
        }
        let mut cum = vec![0.0; m];
        for k in 0..m - 1 {
            // Simpson is exact on each cubic piece.
            let mid = hermite(a[k], a[k + 1], slopes[k], slopes[k + 1], h[k], 0.5).0;
            cum[k + 1] = cum[k] + h[k] / 6.0 * (a[k] + 4.0 * mid + a[k + 1]);
        }
        Ok(Self { t, a, slopes, cum })
    }

    pub fn last_time(&self) -> f64 {
        *self.t.last().unwrap()
    }

    fn locate(&self, t: f64) -> usize {
        match self.t.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(self.t.len() - 2),
        }
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let k = self.locate(t);
        let h = self.t[k + 1] - self.t[k];
        hermite(
            self.a[k],
            self.a[k + 1],
            self.slopes[k],
            self.slopes[k + 1],
            h,
            (t - self.t[k]) / h,
        )
    }

    fn integral(&self, t: f64) -> f64 {
        let k = self.locate(t);
        let h = self.t[k + 1] - self.t[k];
        let s = (t - self.t[k]) / h;
        let (m, _) = hermite(
            self.a[k],
            self.a[k + 1],
            self.slopes[k],
            self.slopes[k + 1],
            h,
            0.5 * s,
        );
        let (e, _) = self.eval(t);
        self.cum[k] + (t - self.t[k]) / 6.0 * (self.a[k] + 4.0 * m + e)
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

/// Value and derivative of the cubic Hermite piece at fraction `s`.
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * m1;
    let dv = ((6.0 * s2 - 6.0 * s) * y0
        + (3.0 * s2 - 4.0 * s + 1.0) * h * m0
        + (-6.0 * s2 + 6.0 * s) * y1
        + (3.0 * s2 - 2.0 * s) * h * m1)
        / h;
    (v, dv)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    Power(PowerParams),
    Sampled(SampledSchedule),
}

/// `a(t)` on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    t_max: f64,
}

impl Schedule {
    /// `a(t) = d / (c + t)^b` with `d, c > 0` and `b` in `(0, 1)`.
    pub fn power(d: f64, c: f64, b: f64) -> Result<Self, ScheduleError> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(ScheduleError::BadPower(format!(
                "d must be positive, got {d}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ScheduleError::BadPower(format!(
                "c must be positive, got {c}"
            )));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(ScheduleError::BadPower(format!(
                "b must lie in (0, 1), got {b}"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::Power(PowerParams { d, c, b }),
            t_max: DEFAULT_T_MAX,
        })
    }

    pub fn from_params(p: PowerParams) -> Result<Self, ScheduleError> {
        Self::power(p.d, p.c, p.b)
    }

    /// Monotone cubic interpolation of samples; the horizon is the last
    /// sample time.
    pub fn sampled(t: Vec<f64>, a: Vec<f64>) -> Result<Self, ScheduleError> {
        let s = SampledSchedule::new(t, a)?;
        let t_max = s.last_time();
        Ok(Self {
            kind: ScheduleKind::Sampled(s),
            t_max,
        })
    }

    pub fn with_t_max(mut self, t_max: f64) -> Result<Self, ScheduleError> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(ScheduleError::BadHorizon(t_max));
        }
        if let ScheduleKind::Sampled(s) = &self.kind {
            if t_max > s.last_time() {
                return Err(ScheduleError::BeyondSamples {
                    t: t_max,
                    last: s.last_time(),
                });
            }
        }
        self.t_max = t_max;
        Ok(self)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn power_params(&self) -> Option<PowerParams> {
        match &self.kind {
            ScheduleKind::Power(p) => Some(*p),
            ScheduleKind::Sampled(_) => None,
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    fn check(&self, t: f64) -> Result<(), ScheduleError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(ScheduleError::NegativeTime(t));
        }
        if let ScheduleKind::Sampled(s) = &self.kind {
            if t > s.last_time() {
                return Err(ScheduleError::BeyondSamples {
                    t,
                    last: s.last_time(),
                });
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> Result<f64, ScheduleError> {
        self.check(t)?;
        Ok(self.a(t))
    }

    pub fn derivative(&self, t: f64) -> Result<f64, ScheduleError> {
        self.check(t)?;
        Ok(self.adot(t))
    }

    /// `phi(t) = int_0^t a(s) ds`.
    pub fn integral_phi(&self, t: f64) -> Result<f64, ScheduleError> {
        self.check(t)?;
        Ok(self.phi(t))
    }

    /// `|a'(t)| / a(t)^2`.
    pub fn ratio(&self, t: f64) -> Result<f64, ScheduleError> {
        self.check(t)?;
        Ok(self.ratio_unchecked(t))
    }

    // Unchecked evaluators for hot loops; callers keep `t` in range.

    #[inline]
    pub(crate) fn a(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Power(p) => p.d / (p.c + t).powf(p.b),
            ScheduleKind::Sampled(s) => s.eval(t).0,
        }
    }

    #[inline]
    pub(crate) fn adot(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Power(p) => -p.b * p.d / (p.c + t).powf(p.b + 1.0),
            ScheduleKind::Sampled(s) => s.eval(t).1,
        }
    }

    pub(crate) fn phi(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Power(p) => {
                let e = 1.0 - p.b;
                // (c+t)^e - c^e without cancellation for small t.
                let diff = p.c.powf(e) * ((e * (t / p.c).ln_1p()).exp_m1());
                p.d * diff / e
            }
            ScheduleKind::Sampled(s) => s.integral(t),
        }
    }

    pub(crate) fn ratio_unchecked(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Power(p) => p.b / p.d * (p.c + t).powf(p.b - 1.0),
            ScheduleKind::Sampled(_) => {
                let a = self.a(t);
                self.adot(t).abs() / (a * a)
            }
        }
    }

    /// Certification grid: `t = 0`, then `resolution` log-spaced points
    /// ending at `t_max`, plus every sample knot for sampled schedules.
    pub fn grid(&self, resolution: usize) -> Vec<f64> {
        let n = resolution.max(2);
        let lo = (self.t_max * 1e-9).min(1e-3);
        let (llo, lhi) = (lo.ln(), self.t_max.ln());
        let mut g: Vec<f64> = std::iter::once(0.0)
            .chain((0..n).map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp()))
            .collect();
        *g.last_mut().unwrap() = self.t_max;
        if let ScheduleKind::Sampled(s) = &self.kind {
            g.extend(s.t.iter().copied().filter(|&x| x <= self.t_max));
            g.sort_by(f64::total_cmp);
            g.dedup();
        }
        g
    }

    /// Checks `condition` on a dense grid over `[0, t_max]`.
    pub fn certify(
        &self,
        condition: Condition,
        q: Option<f64>,
        resolution: usize,
    ) -> Result<ConditionCertificate, ScheduleError> {
        let q = match condition.q_ceiling() {
            None => None,
            Some(upper) => {
                let q = q.ok_or(ScheduleError::MissingQ(condition))?;
                if !(q > 0.0 && q < upper) {
                    return Err(ScheduleError::QOutOfRange { q, upper });
                }
                Some(q)
            }
        };
        let grid = self.grid(resolution);
        let mut witness = None;
        let mut prev: Option<(f64, f64)> = None;
        for &t in &grid {
            let a = self.a(t);
            let r = self.ratio_unchecked(t);
            let mut ok = a > 0.0 && r > 0.0 && self.adot(t) < 0.0;
            if let Some((pa, pr)) = prev {
                ok &= a < pa && r < pr;
            }
            if let Some(q) = q {
                ok &= r < q;
            }
            if !ok {
                witness = Some(t);
                break;
            }
            prev = Some((a, r));
        }
        let closed_form = match (q, self.power_params()) {
            (Some(q), Some(p)) => Some(p.d > p.b / q * p.c.powf(p.b - 1.0)),
            _ => None,
        };
        Ok(ConditionCertificate {
            condition,
            q,
            passed: witness.is_none() && closed_form.unwrap_or(true),
            witness,
            closed_form,
        })
    }
}
