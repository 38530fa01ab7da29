//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::DataFormat;
use crate::io::Workspace;
use crate::pipeline::{self, Context, SynthKind};

#[derive(Debug, Parser)]
#[command(name = "rangecast", version, about = "Intraday FX log-range forecasting pipeline")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, env = "RANGECAST_OUT")]
    pub out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent jobs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Restrict to these pair ids (repeatable).
    #[arg(long = "pair", global = true)]
    pub pairs: Vec<String>,
    /// Input file format (overrides the config).
    #[arg(long, global = true, value_enum)]
    pub format: Option<DataFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse minute bars into aligned log-range and return panels.
    Ingest,
    /// Mean log range per minute of day, overall and by weekday.
    Profile,
    /// Intraday and interday autocorrelations.
    Acf,
    /// Lagged cross-pair correlations.
    Crosscorr,
    /// Grid-search hyperparameters on validation MSE.
    Tune,
    /// Fit every configured model on every fold.
    Train,
    /// Score trained models on the test days.
    Evaluate,
    /// Pairwise Diebold-Mariano tests on the evaluation errors.
    Dmtest,
    /// Test MSE as a function of the lag length.
    Sensitivity,
    /// Write seeded synthetic data.
    Synth {
        /// Generator; defaults to the config's, else multi_pair.
        #[arg(long = "spec", value_enum)]
        spec: Option<SynthKind>,
        /// Series length for the non-panel generators.
        #[arg(long, default_value_t = 100_000)]
        length: usize,
    },
    /// Verify manifests and collect tables into one report.
    Report,
}

fn context(cli: &Cli) -> CliResult<Context> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    let out = cli.out.clone().or_else(|| cfg.output_dir.as_ref().map(|o| cfg.resolve(o))).unwrap_or_else(|| PathBuf::from("out"));
    if cli.jobs == Some(0) {
        return Err(CliError::Usage(String::from("--jobs must be positive")));
    }
    Ok(Context { cfg, ws: Workspace::new(out), pairs: cli.pairs.clone(), jobs: cli.jobs })
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Ingest => pipeline::ingest(&ctx),
        Command::Profile => pipeline::profile(&ctx),
        Command::Acf => pipeline::acf(&ctx),
        Command::Crosscorr => pipeline::crosscorr(&ctx),
        Command::Tune => pipeline::tune(&ctx),
        Command::Train => pipeline::train(&ctx),
        Command::Evaluate => pipeline::evaluate(&ctx),
        Command::Dmtest => pipeline::dmtest(&ctx),
        Command::Sensitivity => pipeline::sensitivity(&ctx),
        Command::Synth { spec, length } => pipeline::synth(&ctx, *spec, *length),
        Command::Report => pipeline::report(&ctx),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are printed to stderr as one JSON line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", CliError::Usage(e.render().to_string().trim().to_string()).to_json());
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
