//! Command surface for training, running and scoring the medication pipeline.

pub mod artifact;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use artifact::{load_model, save_model, ArtifactError, ModelArtifact};
pub use config::{ConfigError, RunConfig};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "MEDCTX_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Model(#[from] medctx::ModelError),
    #[error(transparent)]
    Corpus(#[from] medctx::corpus::CorpusError),
    #[error(transparent)]
    Synth(#[from] medctx::synth::SynthError),
    #[error(transparent)]
    Eval(#[from] medctx::eval::EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(ConfigError::Io { .. }) => EXIT_FAILURE,
            CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "medctx", version, about = "Medication mention extraction with event and context classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Corpus root with train/, dev/ and test/ directories.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Model directory.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra key=value overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a generated corpus and its ledger.
    Synth,
    /// Train one task, or all of them.
    Train {
        #[arg(long, value_parser = ["ner", "event", "action", "negation", "temporality", "certainty", "actor", "all"])]
        task: String,
    },
    /// Mention spans for a note or a corpus split.
    Predict {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
    },
    /// Full extraction and classification for a note or a corpus split.
    Pipeline {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
    },
    /// Score trained models on a corpus split.
    Evaluate {
        #[arg(long, value_parser = ["ner", "event", "context", "end2end"])]
        task: String,
        #[arg(long, value_parser = ["strict", "lenient"])]
        mode: Option<String>,
        #[arg(long = "gold-spans", value_parser = ["on", "off"])]
        gold_spans: Option<String>,
        #[arg(long)]
        split: Option<String>,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Label counts per split.
    Stats,
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    // repeated calls in one process keep the first logger
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Usage(format!("{THREADS_ENV} must be positive")));
    }
    // the global pool can only be set once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut rc = commands::defaults_for(&cli.command);
    if let Some(path) = &cli.common.config {
        rc.apply_file(path)?;
    }
    for kv in &cli.common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        rc.set(k.trim(), v.trim())?;
    }
    let c = &cli.common;
    let paths = [("data", &c.data), ("model", &c.model), ("out", &c.out)];
    for (key, p) in paths {
        if let Some(p) = p {
            rc.set(key, &p.to_string_lossy())?;
        }
    }
    if let Some(seed) = c.seed {
        rc.set("seed", &seed.to_string())?;
    }
    commands::apply_command_flags(&cli.command, &mut rc)?;
    Ok(rc)
}

/// Parses `argv` (program name first), runs one subcommand and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.common.quiet);
    let result = init_threads()
        .and_then(|_| build_config(&cli))
        .and_then(|rc| commands::run(&cli.command, &rc));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
