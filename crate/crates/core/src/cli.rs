//! Command-line front end: `run`, `constants` and `check`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{build_problem, run_experiment, ExperimentOutcome, ExperimentSpec};
use crate::metrics::{AggregateCurve, TraceField};
use crate::solvers::ConvergenceTrace;
use crate::verify::{run_suite, Scale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Environment variable consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "WCOORD_OUT_DIR";

pub const CSV_HEADER: &str = "work,energy,grad_norm_sq,running_min_grad_norm_sq,barycenter_norm";

#[derive(Debug, Parser)]
#[command(name = "wcoord", version, about = "Wasserstein coordinate methods on particle ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write traces, aggregates and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: $WCOORD_OUT_DIR, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path override, e.g. `problem.eps=0.01`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Print smoothness constants and schedules as JSON.
    Constants {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a verification suite: fd-grad, smoothness, descent-identity, subproblem.
    Check {
        suite: String,
        #[arg(long, default_value = "small")]
        scale: String,
        /// Restrict to one functional family or example.
        #[arg(long)]
        functional: Option<String>,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    execute(cli.command)
}

pub fn execute(cmd: Command) -> i32 {
    match cmd {
        Command::Run { config, out, set, threads } => {
            let out = out.unwrap_or_else(default_out_dir);
            cmd_run(&config, &set, &out, threads)
        }
        Command::Constants { config, set } => cmd_constants(&config, &set),
        Command::Check { suite, scale, functional } => cmd_check(&suite, &scale, functional.as_deref()),
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    match e {
        Error::Divergence(_) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

pub fn cmd_run(config: &Path, overrides: &[String], out: &Path, threads: usize) -> i32 {
    let spec = match ExperimentSpec::load(config, overrides) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    let outcome = match run_experiment(&spec, threads) {
        Ok(o) => o,
        Err(e) => return report(&e),
    };
    if let Err(e) = write_bundle(&outcome, out) {
        return report(&e);
    }
    if outcome.diverged() {
        for (m, trial, e) in outcome.failures() {
            eprintln!("{m} trial {trial}: {e}");
        }
        eprintln!("partial outputs written to {}", out.display());
        return EXIT_DIVERGENCE;
    }
    EXIT_OK
}

pub fn cmd_constants(config: &Path, overrides: &[String]) -> i32 {
    let result = ExperimentSpec::load(config, overrides)
        .and_then(|s| {
            s.validate()?;
            build_problem(&s)
        })
        .and_then(|p| p.constants());
    match result {
        Ok(v) => {
            println!("{}", pretty(&v));
            EXIT_OK
        }
        Err(e) => report(&e),
    }
}

pub fn cmd_check(suite: &str, scale: &str, functional: Option<&str>) -> i32 {
    let result = scale.parse::<Scale>().and_then(|s| run_suite(suite, s, functional));
    match result {
        Ok(reports) => {
            let pass = reports.iter().all(|r| r.pass);
            println!("{}", pretty(&json!({ "suite": suite, "scale": scale, "pass": pass, "checks": reports })));
            if pass {
                EXIT_OK
            } else {
                EXIT_FAILED_CHECK
            }
        }
        Err(e) => report(&e),
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per trace record, 17 significant digits.
pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.work,
            num(r.energy),
            num(r.grad_norm_sq),
            num(r.running_min_grad_norm_sq),
            num(r.barycenter_norm)
        );
    }
    s
}

/// Median and 10/90 percentile bands of every trace field on the shared work grid.
pub fn aggregate_csv(curves: &[AggregateCurve]) -> String {
    let mut s = String::from("work");
    for c in curves {
        let f = c.field.name();
        let _ = write!(s, ",{f}_median,{f}_p10,{f}_p90");
    }
    s.push('\n');
    let Some(first) = curves.first() else { return s };
    for (k, w) in first.work.iter().enumerate() {
        s.push_str(&w.to_string());
        for c in curves {
            let _ = write!(s, ",{},{},{}", num(c.median[k]), num(c.p10[k]), num(c.p90[k]));
        }
        s.push('\n');
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Writes `<method>.csv` for deterministic methods, `<method>_trialNNN.csv`
/// and `<method>_aggregate.csv` for randomized ones, and `summary.json`.
pub fn write_bundle(outcome: &ExperimentOutcome, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    for m in &outcome.methods {
        if m.method.is_randomized() {
            for r in &m.runs {
                write_file(&out.join(format!("{}_trial{:03}.csv", m.method, r.trial)), &trace_csv(&r.trace))?;
            }
            let curves: Vec<AggregateCurve> =
                TraceField::ALL.iter().filter_map(|f| m.aggregate(*f).cloned()).collect();
            write_file(&out.join(format!("{}_aggregate.csv", m.method)), &aggregate_csv(&curves))?;
        } else if let Some(r) = m.runs.first() {
            write_file(&out.join(format!("{}.csv", m.method)), &trace_csv(&r.trace))?;
        }
    }
    let mut summary = pretty(&outcome.summary()?);
    summary.push('\n');
    write_file(&out.join("summary.json"), &summary)
}
