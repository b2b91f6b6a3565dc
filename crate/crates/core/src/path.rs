//! The regularized equation `F(V) + a (V - ubar) = f_delta` and its path
//! `t -> V(t)` under a schedule `a(t)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::operators::{MonotoneOperator, NoisyData};
use crate::schedule::{Schedule, ScheduleError};
use crate::space::{HVector, SpaceError, Weights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("regularization parameter must be positive, got {0}")]
    BadParameter(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(
        "no convergence for a = {a:e} after {iterations} iterations (best residual {best_residual:e})"
    )]
    NonConvergence {
        a: f64,
        best_residual: f64,
        iterations: usize,
    },
    #[error("path sample at t = {t} failed: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<PathError>,
    },
    #[error("sample times must be nonnegative and increasing")]
    BadTimes,
    #[error("||F(ubar) - f_delta|| = 0: the path is constant and carries no information")]
    Degenerate,
    #[error("direct solve failed: matrix is singular")]
    Singular,
}

/// One solved point of the regularized path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub a: f64,
    pub v: HVector,
    /// `||V - ubar||` (`||V||` without a shift).
    pub psi: f64,
    /// `a psi`; equals `||F(V) - f_delta||` up to the residual.
    pub phi_d: f64,
    /// `||F(V) + a (V - ubar) - f_delta||` actually achieved.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub const DEFAULT_MAX_ITER: usize = 500_000;

/// `min(1e-10, 1e-3 a delta)`, floored at `1e-13`; `1e-10` without noise.
pub fn default_tol(a: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        (1e-3 * a * delta).clamp(1e-13, 1e-10)
    } else {
        1e-10
    }
}

struct Problem<'a> {
    op: &'a dyn MonotoneOperator,
    w: &'a Weights,
    a: f64,
    f: &'a [f64],
    anchor: Option<&'a [f64]>,
}

impl Problem<'_> {
    fn residual(&self, v: &[f64], out: &mut [f64]) {
        self.op.apply_into(v, out);
        for i in 0..v.len() {
            let shift = self.anchor.map_or(0.0, |u| u[i]);
            out[i] += self.a * (v[i] - shift) - self.f[i];
        }
    }

    /// Secant estimate of the local Lipschitz constant of `F` at `v`.
    fn lipschitz_estimate(&self, v: &[f64], g: &[f64]) -> f64 {
        let n = v.len();
        let scale = 1e-2 * (self.w.norm_of(v) + self.w.norm_of(self.f)) + 1e-8;
        let fv = self.op.apply(v);
        let mut best: f64 = 0.0;
        let gn = self.w.norm_of(g);
        let alt: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let altn = self.w.norm_of(&alt);
        let mut probe = vec![0.0; n];
        for (dir, dn) in [(g, gn), (&alt[..], altn)] {
            if dn == 0.0 {
                continue;
            }
            for i in 0..n {
                probe[i] = v[i] + scale * dir[i] / dn;
            }
            let fp = self.op.apply(&probe);
            best = best.max(self.w.dist(&fp, &fv) / scale);
        }
        best
    }

    /// Damped fixed-point iteration `V <- V - lambda G(V)` with
    /// Barzilai-Borwein steps and a nonmonotone residual test.
    fn solve(&self, init: Vec<f64>, opts: &SolveOptions) -> Result<(Vec<f64>, f64), PathError> {
        const WINDOW: usize = 10;
        let n = init.len();
        let mut v = init;
        let mut g = vec![0.0; n];
        self.residual(&v, &mut g);
        let mut r = self.w.norm_of(&g);
        let mut best = (r, v.clone());
        if r <= opts.tol {
            return Ok((v, r));
        }
        let l = self.lipschitz_estimate(&v, &g);
        let mut lambda = self.a / ((self.a + l) * (self.a + l));
        let lambda_max = 1.0 / self.a;
        let mut history = std::collections::VecDeque::with_capacity(WINDOW);
        history.push_back(r);
        let mut trial = vec![0.0; n];
        let mut gt = vec![0.0; n];
        for _ in 0..opts.max_iter {
            for i in 0..n {
                trial[i] = v[i] - lambda * g[i];
            }
            self.residual(&trial, &mut gt);
            let rt = self.w.norm_of(&gt);
            let reference = history.iter().copied().fold(0.0, f64::max);
            if !(rt < reference || rt <= opts.tol) {
                lambda *= 0.5;
                if lambda < 1e-300 {
                    break;
                }
                continue;
            }
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let s = trial[i] - v[i];
                let y = gt[i] - g[i];
                ss += self.w.as_slice()[i] * s * s;
                sy += self.w.as_slice()[i] * s * y;
            }
            std::mem::swap(&mut v, &mut trial);
            std::mem::swap(&mut g, &mut gt);
            r = rt;
            if r < best.0 {
                best = (r, v.clone());
            }
            if r <= opts.tol {
                return Ok((v, r));
            }
            lambda = if sy > 0.0 {
                (ss / sy).min(lambda_max)
            } else {
                lambda_max
            };
            if history.len() == WINDOW {
                history.pop_front();
            }
            history.push_back(r);
        }
        Err(PathError::NonConvergence {
            a: self.a,
            best_residual: best.0,
            iterations: opts.max_iter,
        })
    }
}

fn check_inputs(a: f64, opts: &SolveOptions) -> Result<(), PathError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(PathError::BadParameter(a));
    }
    if !(opts.tol > 0.0) {
        return Err(PathError::BadTolerance(opts.tol));
    }
    Ok(())
}

fn solve_impl(
    op: &dyn MonotoneOperator,
    a: f64,
    f_delta: &HVector,
    ubar: Option<&HVector>,
    opts: &SolveOptions,
    v_init: Option<&HVector>,
    t: f64,
) -> Result<PathPoint, PathError> {
    check_inputs(a, opts)?;
    if let Some(u) = ubar {
        f_delta.check_compatible(u)?;
    }
    if let Some(v) = v_init {
        f_delta.check_compatible(v)?;
    }
    if op.dim() != f_delta.dim() {
        return Err(SpaceError::DimensionMismatch {
            left: op.dim(),
            right: f_delta.dim(),
        }
        .into());
    }
    let w = f_delta.weights();
    let prob = Problem {
        op,
        w,
        a,
        f: f_delta.coords(),
        anchor: ubar.map(|u| u.coords()),
    };
    let init = match (v_init, ubar) {
        (Some(v), _) => v.coords().to_vec(),
        (None, Some(u)) => u.coords().to_vec(),
        (None, None) => vec![0.0; f_delta.dim()],
    };
    let (v, residual) = prob.solve(init, opts)?;
    let psi = match ubar {
        Some(u) => w.dist(&v, u.coords()),
        None => w.norm_of(&v),
    };
    Ok(PathPoint {
        t,
        a,
        v: f_delta.with_coords(v),
        psi,
        phi_d: a * psi,
        residual,
    })
}

/// Solves `F(V) + a V = f_delta` to `||residual|| <= tol`. The returned
/// point has `t = NaN`; path samplers fill it in.
pub fn solve_regularized(
    op: &dyn MonotoneOperator,
    a: f64,
    f_delta: &HVector,
    opts: &SolveOptions,
    v_init: Option<&HVector>,
) -> Result<PathPoint, PathError> {
    solve_impl(op, a, f_delta, None, opts, v_init, f64::NAN)
}

/// Solves `F(V) + a (V - ubar) = f_delta`, or the unshifted equation when
/// `ubar` is `None`.
pub fn solve_regularized_with(
    op: &dyn MonotoneOperator,
    a: f64,
    f_delta: &HVector,
    ubar: Option<&HVector>,
    opts: &SolveOptions,
    v_init: Option<&HVector>,
) -> Result<PathPoint, PathError> {
    solve_impl(op, a, f_delta, ubar, opts, v_init, f64::NAN)
}

/// Solves `F(V) + a (V - ubar) = f_delta`.
pub fn solve_regularized_shifted(
    op: &dyn MonotoneOperator,
    a: f64,
    f_delta: &HVector,
    ubar: &HVector,
    opts: &SolveOptions,
    v_init: Option<&HVector>,
) -> Result<PathPoint, PathError> {
    solve_impl(op, a, f_delta, Some(ubar), opts, v_init, f64::NAN)
}

/// Dense solve of `(A + a I) V = rhs + a ubar` for linear operators.
pub fn solve_linear_direct(
    matrix: &DMatrix<f64>,
    a: f64,
    rhs: &HVector,
    ubar: Option<&HVector>,
) -> Result<HVector, PathError> {
    if !(a > 0.0) {
        return Err(PathError::BadParameter(a));
    }
    let n = rhs.dim();
    let m = matrix + DMatrix::identity(n, n) * a;
    let mut b = DVector::from_column_slice(rhs.coords());
    if let Some(u) = ubar {
        rhs.check_compatible(u)?;
        b += DVector::from_column_slice(u.coords()) * a;
    }
    let x = m.lu().solve(&b).ok_or(PathError::Singular)?;
    Ok(rhs.with_coords(x.iter().copied().collect()))
}

/// Path sampling options. `tol = None` picks [`default_tol`] per point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl PathOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol: Some(tol),
            ..Self::default()
        }
    }
}

fn check_times(times: &[f64]) -> Result<(), PathError> {
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(PathError::BadTimes);
    }
    Ok(())
}

/// Warm-started path `V(t)` for `F(V) + a(t) (V - ubar) = rhs`, where
/// `delta` only feeds the default tolerance.
pub fn sample_path_general(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    rhs: &HVector,
    delta: f64,
    ubar: Option<&HVector>,
    times: &[f64],
    opts: &PathOptions,
) -> Result<Vec<PathPoint>, PathError> {
    check_times(times)?;
    let base = match ubar {
        Some(u) => u.clone(),
        None => HVector::zeros(rhs.weights()),
    };
    let f_base = op.apply(base.coords());
    if rhs.weights().dist(&f_base, rhs.coords()) == 0.0 {
        return Err(PathError::Degenerate);
    }
    let mut out: Vec<PathPoint> = Vec::with_capacity(times.len());
    for &t in times {
        let a = schedule.value(t)?;
        let so = SolveOptions {
            tol: opts.tol.unwrap_or_else(|| default_tol(a, delta)),
            max_iter: opts.max_iter,
        };
        let init = out.last().map(|p| &p.v);
        let mut p = solve_impl(op, a, rhs, ubar, &so, init, t).map_err(|e| PathError::AtTime {
            t,
            source: Box::new(e),
        })?;
        p.t = t;
        out.push(p);
    }
    Ok(out)
}

/// Path of the noisy regularized equation `F(V) + a(t) V = f_delta`.
pub fn sample_path(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    data: &NoisyData,
    times: &[f64],
    opts: &PathOptions,
) -> Result<Vec<PathPoint>, PathError> {
    sample_path_general(
        op,
        schedule,
        data.f_delta(),
        data.delta(),
        None,
        times,
        opts,
    )
}

/// Path with exact data, `F(V) + a(t) V = f`.
pub fn noiseless_path(
    op: &dyn MonotoneOperator,
    schedule: &Schedule,
    f: &HVector,
    times: &[f64],
    opts: &PathOptions,
) -> Result<Vec<PathPoint>, PathError> {
    sample_path_general(op, schedule, f, 0.0, None, times, opts)
}

/// `t = 0` followed by `count - 1` log-spaced points in `[lo, hi]`.
pub fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let m = count.saturating_sub(1).max(1);
    let (a, b) = (lo.ln(), hi.ln());
    let mut out = vec![0.0];
    for k in 0..m {
        let x = if m == 1 {
            b
        } else {
            a + (b - a) * k as f64 / (m - 1) as f64
        };
        out.push(x.exp());
    }
    if let Some(last) = out.last_mut() {
        *last = hi;
    }
    out
}
