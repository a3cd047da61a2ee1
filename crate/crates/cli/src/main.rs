//! `telegraph`: runs kernel checks, multiplier tables, mild solves, Monte
//! Carlo tails and decay probes from a TOML experiment file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] telegraph_core::Error),
    #[error("i/o: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            _ => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
            CliError::Check(_) => "check_failed",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "telegraph", version, about = "Nonlocal telegraph equation experiments")]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `randomization.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Example {
    #[value(name = "6.2")]
    DampedCubicWave,
    #[value(name = "6.3")]
    SpaceTimeFractional,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Checks the creep-pair identity on the time grid.
    KernelCheck,
    /// Relaxation functions `s_γ` and `1 * r_γ` for `l = b`.
    Relax,
    /// Subordinate kernel `h_γ` and the `h * h = b * r_γ` residual.
    Subkernel,
    /// Builds and dumps the propagator symbol table.
    Multipliers,
    /// Picard solve of the mild equation.
    Solve,
    /// Monte Carlo tail of the randomised linear evolution.
    RandomizeMc,
    /// Decay of `||C(t)u||` against the predicted rate.
    ProbeDecay,
    /// Log-log slope of the dispersive multipliers.
    ProbeDispersive,
    /// Exponents, hypotheses and applicable existence cases.
    Exponents,
    /// Preset run of a worked example.
    ReproduceExample {
        #[arg(value_enum)]
        example: Example,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&cli.command, &cli.config) {
        (Command::ReproduceExample { example }, path) => {
            let mut cfg = match example {
                Example::DampedCubicWave => config::damped_cubic_wave(),
                Example::SpaceTimeFractional => config::space_time_fractional(),
            };
            if let Some(p) = path {
                // only the output section is taken from a file here
                cfg.output = ExperimentConfig::load(p)?.output;
            }
            cfg
        }
        (_, Some(p)) => ExperimentConfig::load(p)?,
        (_, None) => return Err(CliError::Config("--config is required for this subcommand".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.randomization.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let cfg = load(cli)?;
    let setup = cfg.setup()?;
    let mut art = output::Artifacts::new(&cfg.output.dir, &cfg.hash(), commands::grids_meta(&setup))?;
    let result = match &cli.command {
        Command::KernelCheck => commands::kernel_check(&cfg, &setup, &mut art),
        Command::Relax => commands::relax(&cfg, &setup, &mut art),
        Command::Subkernel => commands::subkernel(&cfg, &setup, &mut art),
        Command::Multipliers => commands::multipliers(&cfg, &setup, &mut art),
        Command::Solve => commands::solve(&cfg, &setup, &mut art),
        Command::RandomizeMc => commands::randomize_mc(&cfg, &setup, &mut art),
        Command::ProbeDecay => commands::probe_decay(&cfg, &setup, &mut art),
        Command::ProbeDispersive => commands::probe_dispersive(&cfg, &setup, &mut art),
        Command::Exponents => commands::exponents(&cfg, &setup, &mut art),
        Command::ReproduceExample { .. } => commands::reproduce(&cfg, &setup, &mut art),
    };
    match result {
        Ok(outcome) => {
            let files = art.commit()?;
            let names: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
            if outcome.pass {
                Ok(json!({ "status": "ok", "files": names, "summary": outcome.summary }))
            } else {
                Err(CliError::Check(outcome.summary.to_string()))
            }
        }
        Err(e) => {
            art.discard();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "status": "error", "kind": e.kind(), "message": e.to_string() }));
            ExitCode::from(e.exit_code())
        }
    }
}
