//! Seeded noise sweeps and CSV output.

mod config;
pub mod trajectory_csv;

pub use config::{parse_config, print_config, ConfigError, ConfigErrorKind, StudyConfig, KEYS};

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::dsm::{
    check_init, integrate, integrate_shifted, DsmError, InitParams, TrajectoryRecord,
};
use crate::exec::{map_collect, Execution};
use crate::operators::{perturb, registry, MonotoneProblem, ProblemError};
use crate::space::HVector;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 8] = [
    "delta",
    "seed",
    "t_delta",
    "error",
    "discrepancy_at_stop",
    "a_at_stop",
    "status",
    "wall_time_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Stopped,
    /// No crossing before the horizon.
    Timeout,
    /// The start already satisfies the discrepancy bound.
    Init,
    Stiff,
    Failed,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Stopped => "stopped",
            RunStatus::Timeout => "timeout",
            RunStatus::Init => "init",
            RunStatus::Stiff => "stiff",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub delta: f64,
    pub seed: u64,
    /// NaN unless stopped.
    pub t_delta: f64,
    /// Distance to the target at the stop, or at the last state on timeout.
    pub error: f64,
    pub discrepancy_at_stop: f64,
    pub a_at_stop: f64,
    pub status: RunStatus,
    pub wall_time_ms: f64,
    /// Whether the start checks guarantee growing stopping times; only
    /// evaluated when the config sets `q`.
    pub init_growth: Option<bool>,
    pub message: Option<String>,
}

/// The flow target: `y`, or the closest solution to `ubar` when shifted.
pub fn study_target(
    problem: &MonotoneProblem,
    ubar: Option<&HVector>,
) -> Result<HVector, ProblemError> {
    match ubar {
        Some(u) => problem.closest_solution(u),
        None => Ok(problem.y().clone()),
    }
}

fn one_run(
    cfg: &StudyConfig,
    problem: &MonotoneProblem,
    target: &HVector,
    ubar: Option<&HVector>,
    delta: f64,
    seed: u64,
) -> StudyRow {
    let clock = Instant::now();
    let schedule = cfg.schedule();
    let mut row = StudyRow {
        delta,
        seed,
        t_delta: f64::NAN,
        error: f64::NAN,
        discrepancy_at_stop: f64::NAN,
        a_at_stop: f64::NAN,
        status: RunStatus::Failed,
        wall_time_ms: 0.0,
        init_growth: None,
        message: None,
    };
    let data = match perturb(problem.f(), delta, seed) {
        Ok(d) => d,
        Err(e) => {
            row.message = Some(e.to_string());
            return row;
        }
    };
    let u0 = HVector::filled(problem.weights(), cfg.start);
    if let Some(q) = cfg.q {
        let params = InitParams {
            q,
            ..InitParams::default()
        };
        row.init_growth = check_init(
            problem.operator(),
            &schedule,
            &data,
            &u0,
            ubar,
            &cfg.rule,
            &params,
        )
        .ok()
        .map(|c| c.growth_guaranteed());
    }
    let result = match ubar {
        Some(ub) => integrate_shifted(
            problem.operator(),
            &schedule,
            &data,
            &u0,
            ub,
            &cfg.rule,
            &cfg.integrator,
        ),
        None => integrate(
            problem.operator(),
            &schedule,
            &data,
            &u0,
            &cfg.rule,
            &cfg.integrator,
        ),
    };
    let fill = |row: &mut StudyRow, rec: &TrajectoryRecord| {
        let last = rec.final_sample();
        row.error = rec.weights.dist(&last.u, target.coords());
        row.discrepancy_at_stop = last.discrepancy;
        row.a_at_stop = last.a;
    };
    match result {
        Ok(rec) => {
            fill(&mut row, &rec);
            row.t_delta = rec.t_delta.unwrap_or(f64::NAN);
            row.status = RunStatus::Stopped;
        }
        Err(DsmError::Timeout { record, .. }) => {
            fill(&mut row, &record);
            row.status = RunStatus::Timeout;
        }
        Err(e) => {
            row.status = match e {
                DsmError::Init { .. } => RunStatus::Init,
                DsmError::Stiffness { .. } => RunStatus::Stiff,
                _ => RunStatus::Failed,
            };
            row.message = Some(e.to_string());
        }
    }
    row.wall_time_ms = clock.elapsed().as_secs_f64() * 1e3;
    row
}

/// One row per `(delta, seed)`, ordered by decreasing `delta`, then seed.
/// Failed runs are recorded in their row.
pub fn run_study(cfg: &StudyConfig, exec: Execution) -> Result<Vec<StudyRow>, StudyError> {
    let problem = registry::lookup(&cfg.problem)?;
    let ubar = cfg
        .ubar
        .as_ref()
        .map(|u| HVector::new(u.clone(), problem.weights().clone()))
        .transpose()?;
    let target = study_target(&problem, ubar.as_ref())?;
    let mut deltas = cfg.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let items: Vec<(f64, u64)> = deltas
        .iter()
        .flat_map(|&d| (0..cfg.seeds).map(move |s| (d, s)))
        .collect();
    Ok(map_collect(exec, &items, |&(d, s)| {
        one_run(cfg, &problem, &target, ubar.as_ref(), d, s)
    }))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the fixed header and one line per row, numbers with 17
/// significant digits.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            num(r.delta),
            r.seed.to_string(),
            num(r.t_delta),
            num(r.error),
            num(r.discrepancy_at_stop),
            num(r.a_at_stop),
            r.status.name().to_string(),
            num(r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Median of the finite values; NaN when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// `(delta, median t_delta, median error)` per noise level, in row order.
pub fn medians_by_delta(rows: &[StudyRow]) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let d = rows[i].delta;
        let group: Vec<&StudyRow> = rows[i..].iter().take_while(|r| r.delta == d).collect();
        i += group.len();
        out.push((
            d,
            median(group.iter().map(|r| r.t_delta)),
            median(group.iter().map(|r| r.error)),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> StudyConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn rows_are_ordered_and_stopped() {
        let c = cfg("problem=identity\ndelta=1e-1,1e-2\nseeds=2");
        let rows = run_study(&c, Execution::Parallel).unwrap();
        let keys: Vec<(f64, u64)> = rows.iter().map(|r| (r.delta, r.seed)).collect();
        assert_eq!(keys, vec![(1e-1, 0), (1e-1, 1), (1e-2, 0), (1e-2, 1)]);
        for r in &rows {
            assert_eq!(r.status, RunStatus::Stopped);
            let thr = c.rule.threshold(r.delta);
            assert!((r.discrepancy_at_stop - thr).abs() <= 1e-8 * thr);
        }
    }

    #[test]
    fn csv_is_deterministic_without_wall_time() {
        let c = cfg("problem=holder075\ndelta=1e-1,1e-2\nseeds=2");
        let strip = |rows: &[StudyRow]| {
            let mut buf = Vec::new();
            write_study_csv(rows, &mut buf).unwrap();
            String::from_utf8(buf)
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect::<Vec<_>>()
        };
        let a = strip(&run_study(&c, Execution::Sequential).unwrap());
        let b = strip(&run_study(&c, Execution::Parallel).unwrap());
        assert_eq!(a, b);
        assert_eq!(a[0], CSV_COLUMNS[..7].join(","));
    }

    #[test]
    fn start_inside_threshold_is_recorded() {
        let c = cfg("problem=identity\ndelta=1e-1\nseeds=1\nstart=0.05");
        let rows = run_study(&c, Execution::Sequential).unwrap();
        assert_eq!(rows[0].status, RunStatus::Init);
        assert!(rows[0].message.is_some());
    }

    #[test]
    fn timeout_is_recorded() {
        let c = cfg("problem=identity\ndelta=1e-4\nseeds=1\nt_max=10");
        let rows = run_study(&c, Execution::Sequential).unwrap();
        assert_eq!(rows[0].status, RunStatus::Timeout);
        assert!(rows[0].t_delta.is_nan());
        assert!(rows[0].error.is_finite());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median([f64::NAN]).is_nan());
    }
}
