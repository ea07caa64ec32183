//! `fracsim`: run days, batches, sweeps and calibrations from the command line.
//!
//! Exit status is 0 on success, 1 for configuration problems (bad flags,
//! unreadable or malformed files, invalid parameters) and 2 for anything
//! that goes wrong while simulating or writing output.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracsim_core::calibration::{calibrate_profile, CalibrationConfig};
use fracsim_core::endowments::{write_population, EndowmentProfile, ProfileDocument};
use fracsim_core::engine::{run_day, write_trace_jsonl};
use fracsim_core::experiments::{run_batch, run_sweep, PopulationSource, SweepAxis, SweepSpec, DEFAULT_REPS};
use fracsim_core::report;
use fracsim_core::{Executor, ModelParams, SimError};
use serde::Deserialize;

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "fracsim",
    version,
    about = "Secondary-market simulator for fractional shares"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (day seed for `run`, population seed for `gen-endowments`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Experiments per batch or sweep point [default: 1000; 200 for calibrate].
    #[arg(long, global = true, value_name = "N")]
    reps: Option<usize>,
    /// Output file [default: stdout].
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Write a JSON-lines fill log (`run` only). Defaults to the output path
    /// with a `.trace.jsonl` extension, or `trace.jsonl`.
    #[arg(long, global = true, value_name = "PATH")]
    trace: Option<Option<PathBuf>>,
    /// Population profile (TOML) [default: the shipped profile].
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "endowments")]
    profile: Option<PathBuf>,
    /// Endowment table (CSV with header kind,shares,cash).
    #[arg(long, global = true, value_name = "PATH")]
    endowments: Option<PathBuf>,
    /// Override one parameter, e.g. `--set k_pb=3`; repeatable. Also accepts
    /// market_width and market_midpoint.
    #[arg(long = "set", global = true, value_name = "NAME=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trading day and print its metrics.
    Run,
    /// Run a batch of independent days and print aggregate metrics.
    Batch,
    /// Vary one parameter over a list of values.
    Sweep {
        /// Parameter name, market_width or market_midpoint.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Option<Vec<f64>>,
    },
    /// Write a population drawn from a profile as an endowment CSV.
    GenEndowments,
    /// Search for a profile that reproduces target metrics; writes the profile as TOML.
    Calibrate {
        /// Number of candidate profiles evaluated.
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A message plus the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_configuration() {
            Failure::config(e.to_string())
        } else {
            Failure::runtime(e.to_string())
        }
    }
}

fn write_failed(path: Option<&Path>, e: io::Error) -> Failure {
    match path {
        Some(p) => Failure::runtime(format!("{}: {e}", p.display())),
        None => Failure::runtime(format!("stdout: {e}")),
    }
}

/// Everything a subcommand needs, after merging the config file and flags.
struct Setup {
    file: FileConfig,
    params: ModelParams,
    seed: u64,
    reps: usize,
    format: Format,
    exec: Executor,
    out: Option<PathBuf>,
}

impl Setup {
    fn new(g: &Global) -> Result<Self, Failure> {
        let file = match &g.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let mut params = file.params()?;
        for item in &g.set {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Failure::config(format!("--set expects NAME=VALUE, got `{item}`")))?;
            let axis: SweepAxis = name.trim().parse()?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Failure::config(format!("--set {name}: `{value}` is not a number")))?;
            params = axis.apply(&params, value)?;
        }
        params.validate()?;
        let jobs = g.jobs.or(file.jobs).unwrap_or(0);
        Ok(Setup {
            params,
            seed: g.seed.or(file.seed).unwrap_or(0),
            reps: g.reps.or(file.reps).unwrap_or(DEFAULT_REPS),
            format: g.format.or(file.format).unwrap_or_default(),
            exec: Executor::with_jobs(jobs),
            out: g.out.clone(),
            file,
        })
    }

    fn population(&self, g: &Global) -> Result<PopulationSource, Failure> {
        if let Some(p) = &g.endowments {
            return Ok(PopulationSource::File(p.clone()));
        }
        if let Some(p) = &g.profile {
            return Ok(PopulationSource::Profile(ProfileDocument::load(p)?));
        }
        match (&self.file.population.profile, &self.file.population.endowments) {
            (Some(_), Some(_)) => Err(Failure::config(
                "[population]: give either `profile` or `endowments`, not both",
            )),
            (Some(p), None) => Ok(PopulationSource::Profile(ProfileDocument::load(p)?)),
            (None, Some(p)) => Ok(PopulationSource::File(p.clone())),
            (None, None) => Ok(PopulationSource::Profile(EndowmentProfile::shipped())),
        }
    }

    fn profile(&self, g: &Global) -> Result<ProfileDocument, Failure> {
        if g.endowments.is_some() || self.file.population.endowments.is_some() {
            return Err(Failure::config(
                "gen-endowments needs a profile, not an endowment table",
            ));
        }
        let path = g.profile.as_ref().or(self.file.population.profile.as_ref());
        Ok(match path {
            Some(p) => ProfileDocument::load(p)?,
            None => EndowmentProfile::shipped(),
        })
    }

    /// Opens the output (file or stdout), runs `emit`, and flushes.
    fn emit(&self, emit: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
        let path = self.out.as_deref();
        let result = match path {
            Some(p) => {
                let file = File::create(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
                let mut w = BufWriter::new(file);
                emit(&mut w).and_then(|_| w.flush())
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                emit(&mut w).and_then(|_| w.flush())
            }
        };
        result.map_err(|e| write_failed(path, e))
    }
}

fn json_line(out: &mut dyn Write, v: &serde_json::Value) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)
}

fn trace_path(requested: Option<&Path>, out: Option<&Path>) -> PathBuf {
    if let Some(p) = requested {
        return p.to_path_buf();
    }
    match out {
        Some(o) => o.with_extension("trace.jsonl"),
        None => PathBuf::from("trace.jsonl"),
    }
}

fn cmd_run(g: &Global, s: &Setup) -> Result<(), Failure> {
    let population = s.population(g)?.materialize()?;
    let day = run_day(&population, &s.params, s.seed)?;
    if let Some(requested) = &g.trace {
        let path = trace_path(requested.as_deref(), s.out.as_deref());
        let file = File::create(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        write_trace_jsonl(&day.trace, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| write_failed(Some(&path), e))?;
    }
    s.emit(|out| match s.format {
        Format::Csv => report::write_day_csv(&day.metrics, out),
        Format::Json => json_line(out, &report::day_json(&day.metrics)),
    })
}

fn cmd_batch(g: &Global, s: &Setup) -> Result<(), Failure> {
    let source = s.population(g)?;
    let agg = run_batch(&s.params, &source, s.reps, s.seed, s.exec)?;
    s.emit(|out| match s.format {
        Format::Csv => report::write_batch_csv(&agg, out),
        Format::Json => json_line(out, &report::batch_json(&agg)),
    })
}

fn cmd_sweep(g: &Global, s: &Setup, param: Option<&str>, values: Option<&[f64]>) -> Result<(), Failure> {
    let param = param
        .or(s.file.sweep.param.as_deref())
        .ok_or_else(|| Failure::config("sweep needs --param (or [sweep] param)"))?;
    let values = values
        .or(s.file.sweep.values.as_deref())
        .ok_or_else(|| Failure::config("sweep needs --values (or [sweep] values)"))?;
    let spec = SweepSpec {
        axis: param.parse()?,
        values: values.to_vec(),
        reps: s.reps,
        base_params: s.params.clone(),
        master_seed: s.seed,
    };
    let source = s.population(g)?;
    let rows = run_sweep(&spec, &source, s.exec)?;
    s.emit(|out| match s.format {
        Format::Csv => report::write_sweep_csv(&rows, out),
        Format::Json => json_line(out, &report::sweep_json(param, &rows)),
    })
}

fn cmd_gen_endowments(g: &Global, s: &Setup) -> Result<(), Failure> {
    let mut doc = s.profile(g)?;
    if let Some(seed) = g.seed.or(s.file.seed) {
        doc.population_seed = seed;
    }
    let population = doc.generate()?;
    s.emit(|out| write_population(&population, out))
}

fn cmd_calibrate(g: &Global, s: &Setup, budget: Option<usize>) -> Result<(), Failure> {
    let section = &s.file.calibrate;
    let defaults = CalibrationConfig::default();
    let config = CalibrationConfig {
        targets: section.targets.unwrap_or(defaults.targets),
        weights: section.weights.unwrap_or(defaults.weights),
        space: section.space.clone().unwrap_or(defaults.space),
        params: s.params.clone(),
        budget: budget.or(section.budget).unwrap_or(defaults.budget),
        reps: g.reps.or(section.reps).unwrap_or(defaults.reps),
        seed: s.seed,
        refine_share: section.refine_share.unwrap_or(defaults.refine_share),
    };
    let outcome = calibrate_profile(&config, s.exec)?;
    let best = &outcome.best;
    eprintln!(
        "evaluated {} candidates; best objective {:.6}",
        outcome.evaluated, best.objective
    );
    for (name, value) in best.metrics.record().iter().take(5) {
        eprintln!("  {name:<16} {value:.3}");
    }
    let text = best.document.to_toml();
    s.emit(|out| out.write_all(text.as_bytes()))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let setup = Setup::new(g)?;
    if g.trace.is_some() && !matches!(cli.command, Command::Run) {
        return Err(Failure::config("--trace only applies to `run`"));
    }
    match &cli.command {
        Command::Run => cmd_run(g, &setup),
        Command::Batch => cmd_batch(g, &setup),
        Command::Sweep { param, values } => cmd_sweep(g, &setup, param.as_deref(), values.as_deref()),
        Command::GenEndowments => cmd_gen_endowments(g, &setup),
        Command::Calibrate { budget } => cmd_calibrate(g, &setup, *budget),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fracsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
