//! Classical Runge-Kutta 4 with an embedded third-order estimate.
//!
//! The companion solution uses weights `(1/6, 1/3, 1/3, 0, 1/6)` on the
//! stages plus the derivative at the new point, which is reused as the first
//! stage of the next step. The difference of the two solutions is
//! `h/6 (k4 - k5)`.

/// A first-order system `u' = field(t, u)`.
pub trait Field {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, u: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
}

/// Result of one attempted step from `(t, u)` with derivative `k1`.
pub(crate) struct Attempt {
    pub u_new: Vec<f64>,
    pub k_new: Vec<f64>,
    /// Scaled error norm; `<= 1` means acceptable.
    pub err: f64,
}

pub(crate) struct Stages {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Stages {
    pub fn new(n: usize) -> Self {
        Self {
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

pub(crate) fn attempt<F: Field + ?Sized>(
    field: &F,
    t: f64,
    u: &[f64],
    k1: &[f64],
    h: f64,
    ctl: &StepControl,
    st: &mut Stages,
) -> Attempt {
    let n = u.len();
    let half = 0.5 * h;
    for i in 0..n {
        st.tmp[i] = u[i] + half * k1[i];
    }
    field.eval(t + half, &st.tmp, &mut st.k2);
    for i in 0..n {
        st.tmp[i] = u[i] + half * st.k2[i];
    }
    field.eval(t + half, &st.tmp, &mut st.k3);
    for i in 0..n {
        st.tmp[i] = u[i] + h * st.k3[i];
    }
    field.eval(t + h, &st.tmp, &mut st.k4);
    let mut u_new = vec![0.0; n];
    for i in 0..n {
        u_new[i] = u[i] + h / 6.0 * (k1[i] + 2.0 * st.k2[i] + 2.0 * st.k3[i] + st.k4[i]);
    }
    let mut k_new = vec![0.0; n];
    field.eval(t + h, &u_new, &mut k_new);
    let mut err: f64 = 0.0;
    for i in 0..n {
        let e = h / 6.0 * (st.k4[i] - k_new[i]);
        let sc = ctl.atol + ctl.rtol * u[i].abs().max(u_new[i].abs());
        err = err.max(e.abs() / sc);
    }
    Attempt { u_new, k_new, err }
}

/// Starting step from the usual two-probe heuristic.
pub(crate) fn initial_step<F: Field + ?Sized>(
    field: &F,
    t: f64,
    u: &[f64],
    k1: &[f64],
    ctl: &StepControl,
    h_max: f64,
) -> f64 {
    let n = u.len();
    let sc: Vec<f64> = u.iter().map(|x| ctl.atol + ctl.rtol * x.abs()).collect();
    let norm = |v: &[f64]| {
        v.iter()
            .zip(&sc)
            .map(|(x, s)| (x / s).abs())
            .fold(0.0, f64::max)
    };
    let d0 = norm(u);
    let d1 = norm(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(h_max);
    let probe: Vec<f64> = (0..n).map(|i| u[i] + h0 * k1[i]).collect();
    let mut k = vec![0.0; n];
    field.eval(t + h0, &probe, &mut k);
    let diff: Vec<f64> = (0..n).map(|i| k[i] - k1[i]).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.25)
    };
    (100.0 * h0).min(h1).min(h_max)
}

/// PI step-size controller for a method whose error estimate is
/// `O(h^4)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Controller {
    err_prev: f64,
    rejected_last: bool,
}

impl Controller {
    const SAFETY: f64 = 0.9;
    const ALPHA: f64 = 0.7 / 4.0;
    const BETA: f64 = 0.4 / 4.0;

    pub fn new() -> Self {
        Self {
            err_prev: 1.0,
            rejected_last: false,
        }
    }

    /// Factor for the next step after an accepted one.
    pub fn accept(&mut self, err: f64) -> f64 {
        let err = err.max(1e-10);
        let mut fac = Self::SAFETY * err.powf(-Self::ALPHA) * self.err_prev.powf(Self::BETA);
        fac = fac.clamp(0.2, 5.0);
        if self.rejected_last {
            fac = fac.min(1.0);
        }
        self.err_prev = err;
        self.rejected_last = false;
        fac
    }

    pub fn reject(&mut self, err: f64) -> f64 {
        self.rejected_last = true;
        (Self::SAFETY * err.powf(-0.25)).clamp(0.2, 0.9)
    }
}

/// Cubic Hermite interpolation on `[t0, t0 + h]`.
pub(crate) fn hermite(u0: &[f64], k0: &[f64], u1: &[f64], k1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..u0.len())
        .map(|i| h00 * u0[i] + h10 * h * k0[i] + h01 * u1[i] + h11 * h * k1[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(f64);
    impl Field for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, t: f64, u: &[f64], out: &mut [f64]) {
            out[0] = -self.0 * u[0] + t.sin();
        }
    }

    fn est(h: f64) -> f64 {
        let f = Linear(1.3);
        let ctl = StepControl {
            rtol: 0.0,
            atol: 1.0,
        };
        let u = [0.7];
        let mut k1 = [0.0];
        f.eval(0.2, &u, &mut k1);
        let mut st = Stages::new(1);
        attempt(&f, 0.2, &u, &k1, h, &ctl, &mut st).err
    }

    #[test]
    fn error_estimate_is_fourth_order() {
        let r = est(0.02) / est(0.01);
        assert!((r - 16.0).abs() < 0.5, "ratio {r}");
    }

    #[test]
    fn hermite_reproduces_cubics() {
        // p(t) = t^3 - t on [1, 3].
        let p = |t: f64| t * t * t - t;
        let dp = |t: f64| 3.0 * t * t - 1.0;
        let v = hermite(&[p(1.0)], &[dp(1.0)], &[p(3.0)], &[dp(3.0)], 2.0, 0.3);
        assert!((v[0] - p(1.6)).abs() < 1e-12);
    }
}
