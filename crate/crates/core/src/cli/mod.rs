//! The `subprune` command line: `collect`, `prune`, `eval`, `verify`, `report`.
//!
//! Exit codes: 0 success, 2 bad input (missing file, parse error, invalid
//! config), 3 inconsistent state (Gram cache does not match the model),
//! 4 verification threshold exceeded, 1 anything else.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_collect, cmd_eval, cmd_prune, cmd_report, cmd_verify, EvalSummary, GRAMS_DIR, LOCK_FILE, PLANS_DIR,
    PRUNED_MODEL, REPORT_CSV, REPORT_JSON,
};
pub use config::{
    parse_sample_count, CalibrationConfig, DataConfig, DataFormat, DataSource, Overrides, RunConfig,
};

use crate::error::Error;
use crate::pruning::ScoreMethod;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STALE: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// An error paired with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Load { .. }
            | Error::Json(_)
            | Error::Contract(_)
            | Error::Shape(_)
            | Error::Data(_) => EXIT_INPUT,
            Error::NotPsd { .. } | Error::Numeric(_) | Error::Internal(_) => EXIT_OTHER,
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "subprune", version, about = "Structured node pruning with least-squares reconstruction")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON). Relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// saw | unnorm_zca | saw_tilde | random
    #[arg(long, global = true)]
    pub method: Option<ScoreMethod>,
    /// uniform | variance_cutoff | explicit
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Calibration sample count or "all".
    #[arg(long, global = true)]
    pub samples: Option<String>,
    /// Calibrate on standard-normal inputs instead of data.
    #[arg(long, global = true)]
    pub white_noise: bool,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Gram cache directory (default: <out>/grams).
    #[arg(long, global = true)]
    pub grams: Option<PathBuf>,
    /// Run the data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream calibration inputs through the model and cache one Gram per weighted layer.
    Collect,
    /// Prune from a Gram cache; writes the pruned model, report and per-layer plans.
    Prune,
    /// Accuracy of the model (and the pruned model under --out, if present).
    Eval {
        /// Print metrics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check the pruning path against independent least-squares oracles.
    Verify {
        /// Also check every Gram in the cache.
        #[arg(long)]
        real_grams: bool,
        /// Corrupt every recovery matrix by this amount (negative control).
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Print the report under --out and regenerate its CSV.
    Report,
}

impl CommonArgs {
    fn overrides(&self) -> CliResult<Overrides> {
        Ok(Overrides {
            seed: self.seed,
            method: self.method,
            mode: self.mode.clone(),
            ratio: self.ratio,
            tau: self.tau,
            samples: self.samples.as_deref().map(parse_sample_count).transpose()?,
            white_noise: self.white_noise,
            model: self.model.clone(),
            out: self.out.clone(),
        })
    }

    /// Config file (if any) with flags applied on top.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides()?)?;
        Ok(cfg)
    }

    pub fn exec(&self) -> crate::Execution {
        if self.sequential {
            crate::Execution::Sequential
        } else {
            crate::Execution::Parallel
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = cli.common.run_config()?;
    let exec = cli.common.exec();
    let grams = cli.common.grams.clone().unwrap_or_else(|| cfg.out.join(GRAMS_DIR));
    match &cli.command {
        Command::Collect => cmd_collect(&cfg, &grams, exec),
        Command::Prune => cmd_prune(&cfg, &grams, exec),
        Command::Eval { json } => cmd_eval(&cfg, *json, exec).map(|_| ()),
        Command::Verify {
            real_grams,
            inject_fault,
            json,
        } => cmd_verify(&cfg, real_grams.then_some(grams.as_path()), *inject_fault, *json, exec),
        Command::Report => cmd_report(&cfg),
    }
}
