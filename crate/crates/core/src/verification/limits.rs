//! Tail audits of schedule-only limits and of the weighted-integral bound
//! along a regularized path.

use crate::path::PathPoint;
use crate::quadrature::{damped_integral, merge_points, phi_grid};
use crate::schedule::{Condition, Schedule};

use super::Verdict;

/// `psi(t)` from path samples, linear between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiProfile {
    t: Vec<f64>,
    psi: Vec<f64>,
}

impl PsiProfile {
    pub fn new(t: Vec<f64>, psi: Vec<f64>) -> Self {
        assert_eq!(t.len(), psi.len());
        assert!(!t.is_empty());
        Self { t, psi }
    }

    pub fn from_path(path: &[PathPoint]) -> Self {
        Self::new(
            path.iter().map(|p| p.t).collect(),
            path.iter().map(|p| p.psi).collect(),
        )
    }

    pub fn constant(value: f64, t_end: f64) -> Self {
        Self::new(vec![0.0, t_end], vec![value, value])
    }

    pub fn last_time(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.t.partition_point(|&x| x <= t);
        if k == 0 {
            return self.psi[0];
        }
        if k == self.t.len() {
            return *self.psi.last().unwrap();
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let s = (t - t0) / (t1 - t0);
        self.psi[k - 1] * (1.0 - s) + self.psi[k] * s
    }
}

/// Grid used for schedule integrals: `phi` increments of at most 0.05 and
/// relative steps of at most 1%.
fn audit_grid(schedule: &Schedule, t_end: f64, extra: &[f64]) -> Vec<f64> {
    merge_points(phi_grid(schedule, t_end, 0.05, 0.01), extra)
}

fn index_of(grid: &[f64], t: f64) -> usize {
    grid.partition_point(|&x| x < t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub t: f64,
    pub a: f64,
    /// `int_0^t a`.
    pub phi: f64,
    /// `ln(a(t)) + phi(t)`, the log of `a e^{phi}`.
    pub log_a_exp_phi: f64,
    /// `e^{-phi(t)} int_0^t e^{phi} |a'| psi ds`.
    pub weighted_psi: f64,
    /// `e^{-phi(t)} int_0^t e^{phi} |a'| ds / a(t)`.
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsReport {
    pub rows: Vec<CheckpointRow>,
    /// `phi` strictly increasing across checkpoints.
    pub phi_diverges: Verdict,
    /// `a e^{phi}` increasing across checkpoints and larger at `t_max` than
    /// at `t_max / 2`.
    pub a_exp_phi_diverges: Verdict,
    /// Weighted `psi` integral decreasing across checkpoints.
    pub weighted_psi_decays: Verdict,
    /// `M` decreasing across checkpoints and `M(t_max) < M(t_max / 2)`.
    pub m_decays: Verdict,
    /// For each `epsilon`, the first grid time after which
    /// `e^{-phi} int e^{phi} |a'| < epsilon a` holds up to `t_max`.
    pub t_epsilon: Vec<(f64, Option<f64>)>,
}

impl LimitsReport {
    pub fn passed(&self) -> bool {
        self.phi_diverges.passed()
            && self.a_exp_phi_diverges.passed()
            && self.weighted_psi_decays.passed()
            && self.m_decays.passed()
            && self.t_epsilon.iter().all(|(_, t)| t.is_some())
    }
}

fn strictly_monotone(
    rows: &[CheckpointRow],
    key: impl Fn(&CheckpointRow) -> f64,
    increasing: bool,
) -> Verdict {
    for w in rows.windows(2) {
        let (x, y) = (key(&w[0]), key(&w[1]));
        let ok = if increasing { y > x } else { y < x };
        if !ok {
            return Verdict::Fail {
                t: w[1].t,
                lhs: y,
                rhs: x,
            };
        }
    }
    Verdict::Pass
}

/// Evaluates the tail quantities at `checkpoints` and at `t_max / 2`,
/// `t_max`. `psi` comes from `path`, held constant past its last sample.
pub fn audit_limits(
    schedule: &Schedule,
    path: &PsiProfile,
    checkpoints: &[f64],
    epsilons: &[f64],
) -> LimitsReport {
    let t_max = schedule.t_max();
    let refused = |msg: String| LimitsReport {
        rows: Vec::new(),
        phi_diverges: Verdict::Refused(msg.clone()),
        a_exp_phi_diverges: Verdict::Refused(msg.clone()),
        weighted_psi_decays: Verdict::Refused(msg.clone()),
        m_decays: Verdict::Refused(msg),
        t_epsilon: epsilons.iter().map(|e| (*e, None)).collect(),
    };
    match schedule.certify(Condition::Decay, None, 2000) {
        Ok(c) if c.passed => {}
        _ => return refused("schedule fails the decay condition".into()),
    }
    if checkpoints.iter().any(|&t| !(t > 0.0 && t <= t_max)) {
        return refused(format!("checkpoints must lie in (0, {t_max}]"));
    }
    let mut extra = checkpoints.to_vec();
    extra.extend([0.5 * t_max, t_max]);
    let grid = audit_grid(schedule, t_max, &extra);
    let phi: Vec<f64> = grid.iter().map(|&t| schedule.phi(t)).collect();
    let adot: Vec<f64> = grid.iter().map(|&t| schedule.adot(t).abs()).collect();
    let beta_psi: Vec<f64> = grid
        .iter()
        .zip(&adot)
        .map(|(&t, d)| d * path.at(t))
        .collect();
    let e_psi = damped_integral(&grid, &phi, &beta_psi);
    let e_adot = damped_integral(&grid, &phi, &adot);

    let row = |t: f64| {
        let i = index_of(&grid, t);
        let a = schedule.a(t);
        CheckpointRow {
            t,
            a,
            phi: phi[i],
            log_a_exp_phi: a.ln() + phi[i],
            weighted_psi: e_psi[i],
            m: e_adot[i] / a,
        }
    };
    let rows: Vec<CheckpointRow> = checkpoints.iter().map(|&t| row(t)).collect();
    let half = row(0.5 * t_max);
    let end = row(t_max);

    let mut a_exp_phi = strictly_monotone(&rows, |r| r.log_a_exp_phi, true);
    if a_exp_phi.passed() && !(end.log_a_exp_phi > half.log_a_exp_phi) {
        a_exp_phi = Verdict::Fail {
            t: t_max,
            lhs: end.log_a_exp_phi,
            rhs: half.log_a_exp_phi,
        };
    }
    let mut m = strictly_monotone(&rows, |r| r.m, false);
    if m.passed() && !(end.m < half.m) {
        m = Verdict::Fail {
            t: t_max,
            lhs: end.m,
            rhs: half.m,
        };
    }

    let t_epsilon = epsilons
        .iter()
        .map(|&eps| {
            // Scan from the end for the last violation.
            let mut first_ok = Some(grid[0]);
            for i in (0..grid.len()).rev() {
                if !(e_adot[i] < eps * schedule.a(grid[i])) {
                    first_ok = grid.get(i + 1).copied();
                    break;
                }
            }
            (eps, first_ok)
        })
        .collect();

    LimitsReport {
        phi_diverges: strictly_monotone(&rows, |r| r.phi, true),
        a_exp_phi_diverges: a_exp_phi,
        weighted_psi_decays: strictly_monotone(&rows, |r| r.weighted_psi, false),
        m_decays: m,
        t_epsilon,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aux33Report {
    pub verdict: Verdict,
    /// Largest lhs/rhs at the checked times.
    pub max_ratio: f64,
    pub checked: usize,
}

/// With `A = (1 - q) int a`, checks
/// `e^{-A(t)} int_0^t e^{A} |a'| psi ds <= q/(1 - 2q) a(t) psi(t)` at the
/// profile's sample times, relative tolerance `tol`.
pub fn audit_aux33(schedule: &Schedule, q: f64, path: &PsiProfile, tol: f64) -> Aux33Report {
    let refused = |msg: String| Aux33Report {
        verdict: Verdict::Refused(msg),
        max_ratio: f64::NAN,
        checked: 0,
    };
    match schedule.certify(Condition::RatioBelowHalf, Some(q), 2000) {
        Ok(c) if c.passed => {}
        Ok(c) => {
            return refused(format!(
                "schedule fails the ratio bound with q = {q} (witness {:?})",
                c.witness
            ))
        }
        Err(e) => return refused(e.to_string()),
    }
    let t_end = path.last_time().min(schedule.t_max());
    let times: Vec<f64> = path
        .times()
        .iter()
        .copied()
        .filter(|&t| t <= t_end)
        .collect();
    let grid = audit_grid(schedule, t_end, &times);
    let expo: Vec<f64> = grid.iter().map(|&t| (1.0 - q) * schedule.phi(t)).collect();
    let beta: Vec<f64> = grid
        .iter()
        .map(|&t| schedule.adot(t).abs() * path.at(t))
        .collect();
    let e = damped_integral(&grid, &expo, &beta);
    let k = q / (1.0 - 2.0 * q);
    let mut lhs = Vec::with_capacity(times.len());
    let mut rhs = Vec::with_capacity(times.len());
    for &t in &times {
        lhs.push(e[index_of(&grid, t)]);
        rhs.push(k * schedule.a(t) * path.at(t));
    }
    Aux33Report {
        verdict: Verdict::from_pairs(&times, &lhs, &rhs, tol),
        max_ratio: super::gronwall::ratio_max(&lhs, &rhs),
        checked: times.len(),
    }
}
