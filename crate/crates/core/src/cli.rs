//! Command-line front end: `simulate`, `exact`, `fluid` and `experiment`.
//!
//! Data goes to standard output or the file given by `--out`; timing and
//! progress go to standard error. Every output starts by echoing the
//! resolved parameters together with `schema: 1`. The worker count is not
//! part of the echo, so outputs do not depend on `--threads`.
//!
//! Exit codes: 0 on success, 2 for invalid arguments, 1 for failures while
//! running.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::coalescent_sim::{SimMode, Simulator};
use crate::exact_solver::{absorption_oracle, enumerate_configs, ewens_q, MoehleSolver, SpectrumDistribution};
use crate::experiments::{run_experiment, ExperimentConfig};
use crate::fluid_limit::{closed_form, closed_form_frozen, euclidean, integrate_ode};
use crate::lambda_rates::LambdaModel;
use crate::seeding::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "allelic", version, about = "Lambda-coalescents with freeze: allele frequency spectra and their limits")]
struct Cli {
    /// Worker threads for replicate fan-out (default: all cores). Outputs do
    /// not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the coalescent with freeze; one JSON line per replicate.
    Simulate(SimulateArgs),
    /// Exact allele frequency spectrum distribution for a small sample.
    Exact(ExactArgs),
    /// Fluid-limit trajectory as CSV.
    Fluid(FluidArgs),
    /// Run a configured Monte Carlo sweep.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Truncated,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Coalescent: kingman, bs, star, beta:<alpha> or grid:<csv path>.
    #[arg(long, default_value = "bs")]
    model: String,
    /// Freeze (mutation) rate per lineage.
    #[arg(long)]
    rho: f64,
    /// Sample size.
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    /// Base seed; replicate r uses a seed derived from (seed, r).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "full")]
    mode: Mode,
    /// Truncation level for truncated mode.
    #[arg(long)]
    d: Option<usize>,
    /// Rescaled sampling times, `start:stop:step` or a comma list.
    #[arg(long)]
    sample_times: Option<String>,
    /// Sidecar CSV for sampled trajectories (needs --sample-times).
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Moehle,
    Oracle,
    Ewens,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[arg(long, default_value = "bs")]
    model: String,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    n: u32,
    /// Recursion, absorption chain, or Ewens formula (kingman only, theta = 2 rho).
    #[arg(long, value_enum, default_value = "moehle")]
    method: Method,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FluidArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    rho: f64,
    /// End of the time grid, or the evaluation time with --point.
    #[arg(long)]
    t: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Print the closed form at --t only.
    #[arg(long)]
    point: bool,
    /// Add Runge-Kutta columns with this step and their deviation.
    #[arg(long)]
    rk4_step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON or key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV and JSON outputs (overrides out_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::Parameter(_) | Error::Domain(_) | Error::UnsupportedModel(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Runtime(e.to_string())),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Exact(a) => exact(a),
        Command::Fluid(a) => fluid(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn open_output(path: Option<&Path>) -> std::result::Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn parse_sample_times(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad --sample-times {spec:?}; use start:stop:step or a comma list"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=count).map(|i| start + i as f64 * step).collect())
    } else {
        spec.split(',').map(num).collect()
    }
}

fn simulate(a: SimulateArgs) -> CliResult {
    let model = LambdaModel::from_spec(&a.model)?;
    let mode = match (a.mode, a.d) {
        (Mode::Full, None) => SimMode::Full,
        (Mode::Full, Some(_)) => return Err(Failure::Usage("--d applies to truncated mode only".into())),
        (Mode::Truncated, Some(d)) => SimMode::Truncated(d),
        (Mode::Truncated, None) => return Err(Failure::Usage("truncated mode needs --d".into())),
    };
    let times = a.sample_times.as_deref().map(parse_sample_times).transpose()?;
    if a.trajectory.is_some() && times.is_none() {
        return Err(Failure::Usage("--trajectory needs --sample-times".into()));
    }
    let sim = Simulator::new(model.clone(), a.rho, mode)?;
    let mut out = open_output(a.out.as_deref())?;
    let mut config = Map::new();
    config.insert("model".into(), json!(model.to_string()));
    config.insert("rho".into(), json!(a.rho));
    config.insert("n".into(), json!(a.n));
    config.insert("replicates".into(), json!(a.replicates));
    config.insert("seed".into(), json!(a.seed));
    config.insert("mode".into(), serde_json::to_value(mode).unwrap_or(Value::Null));
    if let Some(t) = &times {
        config.insert("sample_times".into(), json!(t));
    }
    writeln!(out, "{}", json!({"schema": 1, "command": "simulate", "config": config}))?;

    let mut trajectory = match &a.trajectory {
        Some(p) => Some(open_output(Some(p))?),
        None => None,
    };
    if let (Some(w), SimMode::Truncated(d)) = (trajectory.as_mut(), mode) {
        let mut cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        cols.push(format!("y{}", d + 1));
        cols.push(format!("z{d}"));
        writeln!(w, "# {}", json!({"schema": 1, "command": "simulate", "config": config}))?;
        writeln!(w, "replicate,t,{}", cols.join(","))?;
    }

    // Replicates in fixed-size batches bound the memory held at once.
    const BATCH: u64 = 4096;
    let started = std::time::Instant::now();
    let mut done = 0;
    while done < a.replicates {
        let count = BATCH.min(a.replicates - done);
        let results = {
            use rayon::prelude::*;
            (done..done + count)
                .into_par_iter()
                .map(|r| sim.run(a.n, derive_seed(a.seed, r), times.as_deref()))
                .collect::<Result<Vec<_>>>()?
        };
        for (r, res) in (done..).zip(&results) {
            let line = json!({
                "schema": 1,
                "replicate": r,
                "seed": res.seed,
                "n": res.n,
                "model": model.to_string(),
                "rho": a.rho,
                "spectrum": res.spectrum.to_json(),
                "N": res.n_total,
                "S": res.s_count,
                "tree_length": res.tree_length,
                "events": res.event_count,
            });
            writeln!(out, "{line}")?;
            if let (Some(w), Some(path)) = (trajectory.as_mut(), &res.trajectory) {
                for (t, v) in path.times.iter().zip(&path.values) {
                    let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                    writeln!(w, "{r},{t},{}", vals.join(","))?;
                }
            }
        }
        done += count;
        eprintln!("simulate: {done}/{} replicates, {:.1}s", a.replicates, started.elapsed().as_secs_f64());
    }
    out.flush()?;
    if let Some(w) = trajectory.as_mut() {
        w.flush()?;
    }
    Ok(())
}

fn exact(a: ExactArgs) -> CliResult {
    let model = LambdaModel::from_spec(&a.model)?;
    let dist: SpectrumDistribution = match a.method {
        Method::Moehle => MoehleSolver::new(model.clone(), a.rho)?.distribution(a.n)?,
        Method::Oracle => absorption_oracle(&model, a.rho, a.n)?,
        Method::Ewens => {
            if model != LambdaModel::Kingman {
                return Err(Failure::Usage("--method ewens needs --model kingman".into()));
            }
            let probs = enumerate_configs(a.n)?
                .into_iter()
                .map(|c| ewens_q(2.0 * a.rho, &c).map(|p| (c, p)))
                .collect::<Result<_>>()?;
            SpectrumDistribution { n: a.n, rho: a.rho, model: model.clone(), probs }
        }
    };
    let rows: Vec<Value> = dist.probs.iter().map(|(c, p)| json!({"config": (1..=a.n as usize).map(|j| c.get(j)).collect::<Vec<_>>(), "prob": p})).collect();
    let doc = json!({
        "schema": 1,
        "command": "exact",
        "params": {"model": model.to_string(), "rho": a.rho, "n": a.n, "method": format!("{:?}", a.method).to_lowercase()},
        "distribution": rows,
        "residual": 1.0 - dist.total(),
    });
    let mut out = open_output(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
    out.flush()?;
    Ok(())
}

fn fluid(a: FluidArgs) -> CliResult {
    if a.d == 0 {
        return Err(Failure::Usage("--d must be at least 1".into()));
    }
    if !(a.rho > 0.0) || !(a.t >= 0.0 && a.t.is_finite()) || !(a.step > 0.0) {
        return Err(Failure::Usage("need rho > 0, t >= 0 and step > 0".into()));
    }
    let d = a.d;
    let mut out = open_output(a.out.as_deref())?;
    let params = json!({"schema": 1, "command": "fluid", "config": {
        "d": d, "rho": a.rho, "t": a.t, "step": a.step, "point": a.point, "rk4_step": a.rk4_step}});
    writeln!(out, "# {params}")?;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=d).map(|k| format!("x{k}")));
    cols.push(format!("y{}", d + 1));
    cols.extend((1..=d).map(|k| format!("z{k}")));
    if a.rk4_step.is_some() {
        cols.extend((1..=d).map(|k| format!("rk4_x{k}")));
        cols.push(format!("rk4_y{}", d + 1));
        cols.push(format!("rk4_z{d}"));
        cols.push("rk4_error".into());
    }
    writeln!(out, "{}", cols.join(","))?;
    let times: Vec<f64> = if a.point {
        vec![a.t]
    } else {
        let count = (a.t / a.step + 1e-9).floor() as usize;
        let mut ts: Vec<f64> = (0..=count).map(|i| i as f64 * a.step).collect();
        if *ts.last().expect("nonempty") < a.t {
            ts.push(a.t);
        }
        ts
    };
    for t in times {
        let cf = closed_form(d, a.rho, t);
        let mut row: Vec<f64> = vec![t];
        row.extend_from_slice(&cf[..=d]);
        row.extend(closed_form_frozen(d, a.rho, t));
        if let Some(h) = a.rk4_step {
            let path = integrate_ode(d, a.rho, t, h)?;
            let end = path.values.last().expect("path has its initial point");
            row.extend_from_slice(end);
            row.push(euclidean(end, &cf));
        }
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(dir) = a.out_dir {
        config.out_dir = Some(dir);
    }
    let report = run_experiment(&config)?;
    for (n, secs) in &report.wall_time_secs {
        eprintln!("{}: n = {n} in {secs:.2}s", report.experiment);
    }
    for o in &report.outcomes {
        eprintln!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.label, o.detail);
    }
    if let Some(dir) = &config.out_dir {
        report.write(dir).map_err(|e| Failure::Runtime(format!("cannot write to {}: {e}", dir.display())))?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&report.to_json()).map_err(Error::from)?)?;
    Ok(())
}
