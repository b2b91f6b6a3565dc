use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dsm_core::dsm::{
    check_init, integrate, integrate_shifted, DsmError, InitParams, IntegratorOptions, StopRule,
};
use dsm_core::operators::{perturb, registry, MonotoneProblem, NoisyData};
use dsm_core::path::{log_times, sample_path_general, PathOptions};
use dsm_core::schedule::{Condition, Schedule, DEFAULT_T_MAX};
use dsm_core::study::trajectory_csv::{read_trajectory_csv, write_trajectory_csv};
use dsm_core::study::{medians_by_delta, parse_config, run_study, study_target, write_study_csv};
use dsm_core::verification::{
    audit_limits, audit_trajectory, AuditInputs, BoundCheck, PsiProfile, Verdict,
};
use dsm_core::{Execution, HVector};

#[derive(Parser)]
#[command(
    name = "dsm",
    version,
    about = "Dynamical systems method for monotone ill-posed equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a power schedule a(t) = d / (c + t)^b.
    ValidateSchedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Ratio bound for the two q-dependent conditions.
        #[arg(long, default_value_t = 0.25)]
        q: f64,
        #[arg(long, default_value_t = 2000)]
        resolution: usize,
        /// Times for the tail audit.
        #[arg(long, value_delimiter = ',', default_value = "1e2,1e3,1e4,1e5")]
        checkpoints: Vec<f64>,
    },
    /// Integrate the flow for one noise draw.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Write every stored sample to this CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Sample the regularized path V(t) at log-spaced times.
    Path {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value_t = 1e-2)]
        lo: f64,
        #[arg(long, default_value_t = 1e4)]
        hi: f64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Residual tolerance of each solve.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a trajectory against the regularized path.
    Audit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.25)]
        q: f64,
        /// Relative slack on each inequality.
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
        /// Replay this trajectory CSV instead of integrating.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run a seeded noise sweep from a config file.
    Study {
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 3.0)]
    d: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    t_max: f64,
}

impl ScheduleArgs {
    fn build(&self) -> Result<Schedule> {
        Ok(Schedule::power(self.d, self.c, self.b)?.with_t_max(self.t_max)?)
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value = "identity")]
    problem: String,
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Anchor of the shifted flow, comma separated; `registered` uses the
    /// problem's own anchor.
    #[arg(long)]
    ubar: Option<String>,
}

impl DataArgs {
    fn problem(&self) -> Result<MonotoneProblem> {
        Ok(registry::lookup(&self.problem)?)
    }

    fn ubar(&self, p: &MonotoneProblem) -> Result<Option<HVector>> {
        match self.ubar.as_deref() {
            None => Ok(None),
            Some("registered") => match p.ubar() {
                Some(u) => Ok(Some(u.clone())),
                None => bail!("problem {} has no registered anchor", p.label()),
            },
            Some(text) => {
                let coords = text
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .context("ubar must be a comma separated list of numbers")?;
                Ok(Some(HVector::new(coords, p.weights().clone())?))
            }
        }
    }

    fn noisy(&self, p: &MonotoneProblem) -> Result<NoisyData> {
        Ok(perturb(p.f(), self.delta, self.seed)?)
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Discrepancy multiplier C.
    #[arg(long = "rule-c", default_value_t = 1.5)]
    rule_c: f64,
    #[arg(long, default_value_t = 0.9)]
    zeta: f64,
    /// Every coordinate of the start point.
    #[arg(long, default_value_t = registry::DEFAULT_START)]
    start: f64,
    #[arg(long, default_value_t = 1e-8)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
}

struct Prepared {
    problem: MonotoneProblem,
    schedule: Schedule,
    data: NoisyData,
    ubar: Option<HVector>,
    rule: StopRule,
    u0: HVector,
    opts: IntegratorOptions,
}

impl RunArgs {
    fn prepare(&self) -> Result<Prepared> {
        let problem = self.data.problem()?;
        let ubar = self.data.ubar(&problem)?;
        let data = self.data.noisy(&problem)?;
        let u0 = HVector::filled(problem.weights(), self.start);
        Ok(Prepared {
            schedule: self.schedule.build()?,
            rule: StopRule::new(self.rule_c, self.zeta),
            opts: IntegratorOptions {
                rtol: self.rtol,
                atol: self.atol,
                t_max: self.schedule.t_max,
                ..IntegratorOptions::default()
            },
            problem,
            data,
            ubar,
            u0,
        })
    }
}

impl Prepared {
    fn integrate(&self) -> Result<dsm_core::dsm::TrajectoryRecord, DsmError> {
        let op = self.problem.operator();
        match &self.ubar {
            Some(ub) => integrate_shifted(
                op,
                &self.schedule,
                &self.data,
                &self.u0,
                ub,
                &self.rule,
                &self.opts,
            ),
            None => integrate(
                op,
                &self.schedule,
                &self.data,
                &self.u0,
                &self.rule,
                &self.opts,
            ),
        }
    }

    fn target(&self) -> Result<HVector> {
        Ok(study_target(&self.problem, self.ubar.as_ref())?)
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Pass => "pass".into(),
        Verdict::Fail { t, lhs, rhs } => {
            format!("FAIL t={} lhs={} rhs={}", num(*t), num(*lhs), num(*rhs))
        }
        Verdict::Refused(msg) => format!("refused ({msg})"),
    }
}

fn validate_schedule(
    schedule: &ScheduleArgs,
    q: f64,
    resolution: usize,
    checkpoints: &[f64],
) -> Result<bool> {
    let s = schedule.build()?;
    let mut all = true;
    println!("condition,q,passed,witness,closed_form");
    for cond in Condition::ALL {
        let q_arg = (cond != Condition::Decay).then_some(q);
        let c = s.certify(cond, q_arg, resolution)?;
        all &= c.passed;
        println!(
            "{},{},{},{},{}",
            cond.name(),
            q_arg.map_or("-".into(), |q| q.to_string()),
            c.passed,
            c.witness.map_or("-".into(), num),
            c.closed_form.map_or("-".into(), |b| b.to_string()),
        );
    }
    let r = audit_limits(
        &s,
        &PsiProfile::constant(1.0, 1.0),
        checkpoints,
        &[0.1, 0.01],
    );
    println!();
    println!("t,a,phi,log_a_exp_phi,m");
    for row in &r.rows {
        println!(
            "{},{},{},{},{}",
            num(row.t),
            num(row.a),
            num(row.phi),
            num(row.log_a_exp_phi),
            num(row.m)
        );
    }
    println!("phi increasing: {}", verdict_text(&r.phi_diverges));
    println!(
        "a e^phi increasing: {}",
        verdict_text(&r.a_exp_phi_diverges)
    );
    println!("M decreasing: {}", verdict_text(&r.m_decays));
    for (eps, t) in &r.t_epsilon {
        println!("t_eps({eps}) = {}", t.map_or("none".into(), num));
    }
    Ok(all && r.passed())
}

fn solve(run: &RunArgs, trajectory: Option<&PathBuf>) -> Result<bool> {
    let p = run.prepare()?;
    let init = check_init(
        p.problem.operator(),
        &p.schedule,
        &p.data,
        &p.u0,
        p.ubar.as_ref(),
        &p.rule,
        &InitParams::default(),
    )?;
    let target = p.target()?;
    let (rec, status) = match p.integrate() {
        Ok(rec) => (rec, "stopped"),
        Err(DsmError::Timeout { record, .. }) => (*record, "timeout"),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = trajectory {
        write_trajectory_csv(&rec, output(Some(path))?)?;
    }
    let last = rec.final_sample();
    println!(
        "problem={} delta={} seed={} status={status} t_delta={} error={} discrepancy={} threshold={} a={} steps={} rejected={} growth_guaranteed={}",
        p.problem.label(),
        num(p.data.delta()),
        run.data.seed,
        rec.t_delta.map_or("nan".into(), num),
        num(rec.weights.dist(&last.u, target.coords())),
        num(last.discrepancy),
        num(rec.threshold),
        num(last.a),
        rec.stats.accepted,
        rec.stats.rejected,
        init.growth_guaranteed(),
    );
    Ok(rec.stopped)
}

#[allow(clippy::too_many_arguments)]
fn path(
    data: &DataArgs,
    schedule: &ScheduleArgs,
    lo: f64,
    hi: f64,
    count: usize,
    tol: Option<f64>,
    out: Option<&PathBuf>,
) -> Result<bool> {
    let p = data.problem()?;
    let ubar = data.ubar(&p)?;
    let noisy = data.noisy(&p)?;
    let s = schedule.build()?;
    if !(lo > 0.0 && hi > lo && count >= 2) {
        bail!("need 0 < lo < hi and count >= 2");
    }
    let times = log_times(lo, hi, count);
    let opts = PathOptions {
        tol,
        ..PathOptions::default()
    };
    let pts = sample_path_general(
        p.operator(),
        &s,
        noisy.f_delta(),
        noisy.delta(),
        ubar.as_ref(),
        &times,
        &opts,
    )?;
    let mut w = output(out)?;
    writeln!(w, "t,a,psi,phi_d,residual")?;
    for pt in &pts {
        writeln!(
            w,
            "{},{},{},{},{}",
            num(pt.t),
            num(pt.a),
            num(pt.psi),
            num(pt.phi_d),
            num(pt.residual)
        )?;
    }
    w.flush()?;
    Ok(true)
}

fn print_check(name: &str, c: &BoundCheck) {
    println!("{name},{},{}", num(c.max_ratio), verdict_text(&c.verdict));
}

fn audit(run: &RunArgs, q: f64, slack: f64, trajectory: Option<&PathBuf>) -> Result<bool> {
    let p = run.prepare()?;
    let rec = match trajectory {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            read_trajectory_csv(
                file,
                p.problem.weights(),
                p.data.delta(),
                p.rule.threshold(p.data.delta()),
                p.ubar.as_ref(),
            )?
        }
        None => match p.integrate() {
            Ok(rec) => rec,
            Err(DsmError::Timeout { record, .. }) => *record,
            Err(e) => return Err(e.into()),
        },
    };
    let target = p.target()?;
    let inputs = AuditInputs {
        op: p.problem.operator(),
        schedule: &p.schedule,
        data: &p.data,
        f: p.problem.f(),
        target: &target,
        q,
        slack,
    };
    let a = audit_trajectory(&rec, &inputs)?;
    println!("samples={} K={}", a.samples, num(a.k));
    println!("check,max_ratio,verdict");
    print_check("h_bound", &a.h_bound);
    print_check("w_bound", &a.w_bound);
    print_check("scaled_gap", &a.scaled_gap);
    print_check("operator_gap", &a.operator_gap);
    print_check("growth", &a.growth);
    if let Some(s) = a.stop {
        println!(
            "stop t_delta={} error={} flow_gap={} noise_term={} bias={} holds={}",
            num(s.t_delta),
            num(s.error),
            num(s.flow_gap),
            num(s.noise_term),
            num(s.bias),
            s.holds
        );
    }
    Ok(a.passed())
}

fn study(config: &PathBuf, out: Option<&PathBuf>, workers: Option<usize>) -> Result<bool> {
    let text =
        std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = parse_config(&text).with_context(|| format!("in {}", config.display()))?;
    let rows = run_study(&cfg, Execution::from_workers(workers))?;
    let dest = out.or(cfg.output.as_ref());
    write_study_csv(&rows, output(dest)?)?;
    if dest.is_some() {
        println!("delta,median_t_delta,median_error");
        for (d, t, e) in medians_by_delta(&rows) {
            println!("{},{},{}", num(d), num(t), num(e));
        }
    }
    for r in rows.iter().filter(|r| r.message.is_some()) {
        eprintln!(
            "delta={} seed={}: {}",
            num(r.delta),
            r.seed,
            r.message.as_deref().unwrap_or("")
        );
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ValidateSchedule {
            schedule,
            q,
            resolution,
            checkpoints,
        } => validate_schedule(schedule, *q, *resolution, checkpoints),
        Command::Solve { run, trajectory } => solve(run, trajectory.as_ref()),
        Command::Path {
            data,
            schedule,
            lo,
            hi,
            count,
            tol,
            output,
        } => path(data, schedule, *lo, *hi, *count, *tol, output.as_ref()),
        Command::Audit {
            run,
            q,
            slack,
            trajectory,
        } => audit(run, *q, *slack, trajectory.as_ref()),
        Command::Study {
            config,
            output,
            workers,
        } => study(config, output.as_ref(), *workers),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
