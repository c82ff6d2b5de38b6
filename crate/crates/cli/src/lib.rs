//! Command-line front end for the `ribgraph` pipeline.
//!
//! Every command writes its artifacts into an output directory. Anything that
//! varies between otherwise identical runs (wall-clock time, stage runtimes)
//! goes only into `metadata.json`.

mod artifacts;
mod commands;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ribgraph::config::PipelineConfig;
use ribgraph::nonrigid::Weighting;

pub use commands::{
    cmd_eval, cmd_generate, cmd_register, cmd_transfer, EvalSummary, GenerateSummary, RegisterReport, RegisterSummary,
    TransferRecord, TransferSummary,
};

#[derive(Debug, Parser)]
#[command(
    name = "ribgraph",
    version,
    about = "Skeleton-graph registration of rib cage point clouds"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fixture seed for `generate`; the only evaluation seed for `eval`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Blend weighting of the local transforms.
    #[arg(long, global = true, value_parser = parse_weighting)]
    pub weighting: Option<Weighting>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic CT-like / US-like pair with its ground truth.
    Generate,
    /// Register a template cloud onto a target cloud.
    Register {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        us: PathBuf,
    },
    /// Carry template-space waypoints through a finished registration.
    Transfer {
        registration_dir: PathBuf,
        waypoints: PathBuf,
    },
    /// Compare methods over seeded synthetic fixtures.
    Eval,
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse().map_err(|e: ribgraph::Error| e.to_string())
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok,
    InputError,
    PartialFailure,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::InputError => 2,
            ExitStatus::PartialFailure => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl fmt::Display) -> Self {
        Self {
            status: ExitStatus::InputError,
            message: message.to_string(),
        }
    }

    pub fn partial(message: impl fmt::Display) -> Self {
        Self {
            status: ExitStatus::PartialFailure,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ribgraph::Error> for CliError {
    fn from(e: ribgraph::Error) -> Self {
        match e {
            ribgraph::Error::Stage { .. } => CliError::partial(e),
            other => CliError::input(other),
        }
    }
}

/// Load the configuration and apply command-line overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.fixture.seed = seed;
        config.eval.seeds = vec![seed];
    }
    if let Some(w) = global.weighting {
        config.registration.weighting = w;
    }
    config.validate()?;
    Ok(config)
}

/// Run a parsed command line; returns the exit status and prints a summary.
pub fn run(cli: Cli) -> Result<ExitStatus, CliError> {
    let config = resolve_config(&cli.global)?;
    let out = |default: &str| cli.global.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Generate => {
            let s = cmd_generate(&config, &out("fixture"))?;
            println!("{s}");
            Ok(ExitStatus::Ok)
        }
        Command::Register { ct, us } => {
            let s = cmd_register(&ct, &us, &config, &out("registration"))?;
            println!("{s}");
            Ok(ExitStatus::Ok)
        }
        Command::Transfer {
            registration_dir,
            waypoints,
        } => {
            let dir = cli.global.out.clone().unwrap_or_else(|| registration_dir.clone());
            let s = cmd_transfer(&registration_dir, &waypoints, &dir)?;
            println!("{s}");
            Ok(if s.failed() > 0 {
                ExitStatus::PartialFailure
            } else {
                ExitStatus::Ok
            })
        }
        Command::Eval => {
            let s = cmd_eval(&config, &out("eval"))?;
            println!("{}", s.table);
            Ok(if s.failures > 0 {
                ExitStatus::PartialFailure
            } else {
                ExitStatus::Ok
            })
        }
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::InputError.code()
            } else {
                ExitStatus::Ok.code()
            };
        }
    };
    match run(cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.code()
        }
    }
}
