//! `repump`: run simulations, fits, RB analyses, budgets and pulse scans from
//! TOML experiment files.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "repump", version, about = "Leakage-repump simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo of the repump cycle
    Simulate(Common),
    /// Fit the five-parameter pump model to a trajectory
    Fit(Common),
    /// Interleaved RB or population-decay analysis
    Rb(Common),
    /// Leakage budget for a suppression target
    Budget(Common),
    /// Off-resonant error scan over pulse edges and detunings
    Pulse(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Rb(_) => "rb",
            Command::Budget(_) => "budget",
            Command::Pulse(_) => "pulse",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Fit(c) | Command::Rb(c) | Command::Budget(c) | Command::Pulse(c) => c,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled experiment
    #[arg(long, value_enum)]
    preset: Option<output::Preset>,
    /// Master seed, overriding the experiment file
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the experiment file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Format of tabular artifacts
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
pub enum Format {
    Csv,
    Json,
}

/// Failure carrying the process exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<repump_core::Error> for Failure {
    fn from(e: repump_core::Error) -> Self {
        let code = match e {
            repump_core::Error::Convergence(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let command = cli.command;
    let common = command.common();
    let (text, base_dir) = match (&common.config, common.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, dir)
        }
        (None, Some(preset)) => (preset.text().to_string(), PathBuf::new()),
        (None, None) => return Err(Failure::invalid("either --config or --preset is required")),
    };
    let experiment = config::parse(&text).map_err(|e| Failure::invalid(format!("invalid experiment file: {e}")))?;
    if experiment.command() != command.name() {
        return Err(Failure::invalid(format!(
            "experiment kind `{}` belongs to the `{}` subcommand, not `{}`",
            experiment.kind(),
            experiment.command(),
            command.name()
        )));
    }
    let seed = common.seed.unwrap_or(experiment.seed());
    let out_dir = match (&common.out, experiment.out()) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base_dir.join(o),
        (None, None) => PathBuf::from("repump-out"),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Failure::invalid("--workers must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::invalid(e.to_string()))?;
    let ctx = commands::Context {
        seed,
        base_dir,
        format: common.format,
    };
    let run = pool.install(|| commands::execute(&experiment, &ctx))?;
    output::write_run(&out_dir, &experiment, &text, seed, &run)?;
    println!("{}", serde_json::to_string_pretty(&run.summary).expect("summary serializes"));
    if !run.converged {
        return Err(Failure {
            code: 2,
            message: "fit did not converge".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
