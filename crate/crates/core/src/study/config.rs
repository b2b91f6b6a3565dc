//! `key=value` study configuration.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::dsm::{IntegratorOptions, StopRule};
use crate::operators::registry;
use crate::schedule::{Condition, PowerParams, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub kind: ConfigErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigErrorKind {
    #[error("expected key=value, got {0:?}")]
    Malformed(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("duplicate key {0:?}")]
    Duplicate(String),
    #[error("bad value for {key}: {msg}")]
    BadValue { key: String, msg: String },
    #[error("{0}")]
    Invariant(String),
}

pub const KEYS: [&str; 15] = [
    "problem", "d", "c", "b", "C", "zeta", "delta", "seeds", "ubar", "start", "q", "output",
    "rtol", "atol", "t_max",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: String,
    pub schedule: PowerParams,
    pub rule: StopRule,
    /// Strictly decreasing noise levels.
    pub deltas: Vec<f64>,
    pub seeds: u64,
    /// Anchor of the shifted flow; absent runs the unshifted flow.
    pub ubar: Option<Vec<f64>>,
    /// Every coordinate of the start point.
    pub start: f64,
    /// When set, the schedule must also pass the ratio bound below one third
    /// with this `q`, and start checks are reported.
    pub q: Option<f64>,
    pub output: Option<PathBuf>,
    pub integrator: IntegratorOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            problem: "identity".into(),
            schedule: PowerParams::default(),
            rule: StopRule::default(),
            deltas: Vec::new(),
            seeds: 3,
            ubar: None,
            start: registry::DEFAULT_START,
            q: None,
            output: None,
            integrator: IntegratorOptions::default(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigErrorKind> {
    let x: f64 = v.trim().parse().map_err(|_| ConfigErrorKind::BadValue {
        key: key.into(),
        msg: format!("{v:?} is not a number"),
    })?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigErrorKind::BadValue {
            key: key.into(),
            msg: "must be finite".into(),
        })
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigErrorKind> {
    v.split(',').map(|s| parse_f64(key, s)).collect()
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigErrorKind {
    ConfigErrorKind::BadValue {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Parses and validates; missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<StudyConfig, ConfigError> {
    let mut cfg = StudyConfig::default();
    let mut lines: HashMap<&str, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |kind| ConfigError { line, kind };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(ConfigErrorKind::Malformed(content.into())))?;
        let (key, value) = (key.trim(), value.trim());
        let key = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| err(ConfigErrorKind::UnknownKey(key.into())))?;
        if lines.insert(key, line).is_some() {
            return Err(err(ConfigErrorKind::Duplicate(key.into())));
        }
        let set = |cfg: &mut StudyConfig| -> Result<(), ConfigErrorKind> {
            match key {
                "problem" => cfg.problem = value.into(),
                "d" => cfg.schedule.d = parse_f64(key, value)?,
                "c" => cfg.schedule.c = parse_f64(key, value)?,
                "b" => cfg.schedule.b = parse_f64(key, value)?,
                "C" => cfg.rule.c = parse_f64(key, value)?,
                "zeta" => cfg.rule.zeta = parse_f64(key, value)?,
                "delta" => cfg.deltas = parse_list(key, value)?,
                "seeds" => {
                    cfg.seeds = value
                        .parse()
                        .map_err(|_| bad(key, "expected a positive integer"))?
                }
                "ubar" => cfg.ubar = Some(parse_list(key, value)?),
                "start" => cfg.start = parse_f64(key, value)?,
                "q" => cfg.q = Some(parse_f64(key, value)?),
                "output" => cfg.output = Some(PathBuf::from(value)),
                "rtol" => cfg.integrator.rtol = parse_f64(key, value)?,
                "atol" => cfg.integrator.atol = parse_f64(key, value)?,
                "t_max" => cfg.integrator.t_max = parse_f64(key, value)?,
                _ => unreachable!("key list and match arms agree"),
            }
            Ok(())
        };
        set(&mut cfg).map_err(err)?;
    }
    validate(&cfg, &lines)?;
    Ok(cfg)
}

fn validate(cfg: &StudyConfig, lines: &HashMap<&str, usize>) -> Result<(), ConfigError> {
    let at = |key: &str, kind| ConfigError {
        line: lines.get(key).copied().unwrap_or(0),
        kind,
    };
    let problem =
        registry::lookup(&cfg.problem).map_err(|e| at("problem", bad("problem", e.to_string())))?;
    let schedule = Schedule::from_params(cfg.schedule)
        .and_then(|s| s.with_t_max(cfg.integrator.t_max))
        .map_err(|e| {
            let key = if !(cfg.schedule.b > 0.0 && cfg.schedule.b < 1.0) {
                "b"
            } else if !(cfg.schedule.c > 0.0) {
                "c"
            } else if !(cfg.schedule.d > 0.0) {
                "d"
            } else {
                "t_max"
            };
            at(key, bad(key, e.to_string()))
        })?;
    if !(cfg.rule.c > 0.0) {
        return Err(at("C", bad("C", "must be positive")));
    }
    if !(cfg.rule.zeta > 0.0 && cfg.rule.zeta <= 1.0) {
        return Err(at("zeta", bad("zeta", "must lie in (0, 1]")));
    }
    if cfg.deltas.is_empty() {
        return Err(at(
            "delta",
            ConfigErrorKind::Invariant("delta list is empty".into()),
        ));
    }
    if cfg.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(at("delta", bad("delta", "every delta must be positive")));
    }
    if cfg.deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(at(
            "delta",
            ConfigErrorKind::Invariant("delta list must be strictly decreasing".into()),
        ));
    }
    if let Some(d) = cfg.deltas.iter().find(|d| !cfg.rule.admissible(**d)) {
        return Err(at(
            "delta",
            ConfigErrorKind::Invariant(format!(
                "C delta^zeta = {:e} does not exceed delta = {d:e}",
                cfg.rule.threshold(*d)
            )),
        ));
    }
    if cfg.seeds == 0 {
        return Err(at("seeds", bad("seeds", "expected a positive integer")));
    }
    if let Some(u) = &cfg.ubar {
        if u.len() != problem.dim() {
            return Err(at(
                "ubar",
                bad(
                    "ubar",
                    format!("expected {} coordinates, got {}", problem.dim(), u.len()),
                ),
            ));
        }
    }
    if !(cfg.integrator.rtol > 0.0) {
        return Err(at("rtol", bad("rtol", "must be positive")));
    }
    if !(cfg.integrator.atol > 0.0) {
        return Err(at("atol", bad("atol", "must be positive")));
    }
    let res = cfg.integrator.certify_resolution;
    let cert = schedule
        .certify(Condition::Decay, None, res)
        .map_err(|e| at("b", bad("b", e.to_string())))?;
    if !cert.passed {
        return Err(at(
            "b",
            ConfigErrorKind::Invariant(format!(
                "schedule fails the decay condition at {:?}",
                cert.witness
            )),
        ));
    }
    if let Some(q) = cfg.q {
        let cert = schedule
            .certify(Condition::RatioBelowThird, Some(q), res)
            .map_err(|e| at("q", bad("q", e.to_string())))?;
        if !cert.passed {
            return Err(at(
                "q",
                ConfigErrorKind::Invariant(format!(
                    "schedule fails the ratio bound with q = {q} at {:?}",
                    cert.witness
                )),
            ));
        }
    }
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Prints every key; `parse_config` of the output gives back `cfg`.
pub fn print_config(cfg: &StudyConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("problem", cfg.problem.clone());
    kv("d", cfg.schedule.d.to_string());
    kv("c", cfg.schedule.c.to_string());
    kv("b", cfg.schedule.b.to_string());
    kv("C", cfg.rule.c.to_string());
    kv("zeta", cfg.rule.zeta.to_string());
    kv("delta", join(&cfg.deltas));
    kv("seeds", cfg.seeds.to_string());
    if let Some(u) = &cfg.ubar {
        kv("ubar", join(u));
    }
    kv("start", cfg.start.to_string());
    if let Some(q) = cfg.q {
        kv("q", q.to_string());
    }
    if let Some(o) = &cfg.output {
        kv("output", o.display().to_string());
    }
    kv("rtol", cfg.integrator.rtol.to_string());
    kv("atol", cfg.integrator.atol.to_string());
    kv("t_max", cfg.integrator.t_max.to_string());
    s
}

impl StudyConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule::from_params(self.schedule)
            .and_then(|s| s.with_t_max(self.integrator.t_max))
            .expect("validated at parse time")
    }
}
