//! Trajectory CSV: `t, discrepancy, a, h, norm_u, kind, u0, u1, ...`, one
//! line per stored sample. `kind` is `start`, `step` or `stop`.

use std::io::{Read, Write};

use crate::dsm::{StepStats, TrajectoryRecord};
use crate::space::{HVector, Weights};

use super::StudyError;

pub const FIXED_COLUMNS: [&str; 6] = ["t", "discrepancy", "a", "h", "norm_u", "kind"];

pub fn write_trajectory_csv<W: Write>(record: &TrajectoryRecord, out: W) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    let n = record.weights.len();
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..n).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    let last = record.samples.len() - 1;
    for (i, s) in record.samples.iter().enumerate() {
        let kind = if i == 0 {
            "start"
        } else if i == last && record.stopped {
            "stop"
        } else {
            "step"
        };
        let mut line = vec![
            format!("{:.16e}", s.t),
            format!("{:.16e}", s.discrepancy),
            format!("{:.16e}", s.a),
            format!("{:.16e}", s.h),
            format!("{:.16e}", record.weights.norm_of(&s.u)),
            kind.to_string(),
        ];
        line.extend(s.u.iter().map(|x| format!("{x:.16e}")));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a record from its CSV. Step statistics are not stored and
/// come back as zeros.
pub fn read_trajectory_csv<R: Read>(
    input: R,
    weights: &Weights,
    delta: f64,
    threshold: f64,
    ubar: Option<&HVector>,
) -> Result<TrajectoryRecord, StudyError> {
    let mut rdr = csv::Reader::from_reader(input);
    let n = weights.len();
    let headers = rdr.headers()?.clone();
    if headers.len() != FIXED_COLUMNS.len() + n
        || FIXED_COLUMNS
            .iter()
            .zip(headers.iter())
            .any(|(a, b)| *a != b)
    {
        return Err(StudyError::Format(format!(
            "expected columns {} and {n} coordinates",
            FIXED_COLUMNS.join(",")
        )));
    }
    let mut samples = Vec::new();
    let mut stopped = false;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64, StudyError> {
            rec[i].trim().parse().map_err(|_| {
                StudyError::Format(format!("row {}: bad number {:?}", line + 2, &rec[i]))
            })
        };
        if stopped {
            return Err(StudyError::Format(format!(
                "row {}: data after the stop",
                line + 2
            )));
        }
        stopped = &rec[5] == "stop";
        let u = (0..n)
            .map(|i| field(6 + i))
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(crate::dsm::Sample {
            t: field(0)?,
            u,
            discrepancy: field(1)?,
            a: field(2)?,
            h: field(3)?,
        });
    }
    if samples.is_empty() {
        return Err(StudyError::Format("no samples".into()));
    }
    let last = samples.last().unwrap();
    let (t_delta, u_at_stop) = if stopped {
        (
            Some(last.t),
            Some(HVector::new(last.u.clone(), weights.clone())?),
        )
    } else {
        (None, None)
    };
    Ok(TrajectoryRecord {
        samples,
        weights: weights.clone(),
        delta,
        threshold,
        ubar: ubar.cloned(),
        t_delta,
        u_at_stop,
        stopped,
        stats: StepStats::default(),
    })
}
