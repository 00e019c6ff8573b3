//! Command-line harness around `navobs`: `simulate`, `replay` and `selftest`.
//!
//! Flags override the config file, which overrides the built-in defaults.
//! Everything is written under the output directory and nowhere else.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use navobs::dataset::{parse_config, ModeSelection, RunConfig};
use navobs::Error;

mod commands;
pub mod selftest;

pub use commands::{run_replay, run_simulate, ModeReport};
pub use selftest::{run_selftest, SelftestOptions, SuiteResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
/// Runtime failure, including landmark sets that cannot observe attitude.
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "navobs",
    version,
    about = "SE2(3) landmark/IMU observer harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory, its sensors and the observer; write logs and metrics.
    Simulate(RunArgs),
    /// Run the observer on recorded IMU and landmark logs.
    Replay(RunArgs),
    /// Run the built-in verification suites.
    Selftest(SelftestArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
    /// Noise seed; with `trials` > 1 the first of the batch.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// known-gravity, adaptive-gravity or both.
    #[arg(long)]
    pub mode: Option<String>,
    /// Flip the sign of the attitude correction.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Default, Args)]
pub struct SelftestArgs {
    /// 10^3 samples per statistical suite instead of 10^5, shorter runs.
    #[arg(long)]
    pub quick: bool,
    /// Also write the result table to `selftest.txt` here.
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// An error on its way to becoming a process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// Exit code for an error raised while reading the configuration.
    pub fn config(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => EXIT_IO,
            Error::InsufficientLandmarks { .. } | Error::CollinearLandmarks { .. } => EXIT_RUNTIME,
            _ => EXIT_CONFIG,
        };
        Self::new(code, e.to_string())
    }

    /// Exit code for an error raised while loading data or running.
    pub fn runtime(e: Error) -> Self {
        let code = match &e {
            e if e.is_io() => EXIT_IO,
            Error::UnknownLandmarkId(_)
            | Error::DuplicateLandmarkId(_)
            | Error::InvalidLandmark { .. }
            | Error::NonUnitQuaternion { .. } => EXIT_IO,
            Error::Validation { .. } | Error::ParseKey { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        let message = match e {
            Error::InsufficientLandmarks { .. } | Error::CollinearLandmarks { .. } => {
                format!("landmark observability requirement violated: {e}")
            }
            _ => e.to_string(),
        };
        Self::new(code, message)
    }
}

/// Reads `--config` (or the defaults) and applies the flag overrides.
pub fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path).map_err(Failure::config)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &args.out_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.scenario.noise.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse::<ModeSelection>().map_err(Failure::config)?;
    }
    if args.inject_fault {
        cfg.scenario.observer.invert_attitude_correction = true;
    }
    Ok(cfg)
}

/// Parses `args` and runs the chosen subcommand, reporting to `out` and
/// `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => {
            load_config(a).and_then(|cfg| run_simulate(&cfg, out).map(|_| EXIT_OK))
        }
        Command::Replay(a) => load_config(a).and_then(|cfg| run_replay(&cfg, out).map(|_| EXIT_OK)),
        Command::Selftest(a) => {
            let opts = SelftestOptions {
                quick: a.quick,
                inject_fault: a.inject_fault,
            };
            run_selftest(&opts, a.out_dir.as_deref(), out).map(|results| {
                if results.iter().all(|r| r.passed) {
                    EXIT_OK
                } else {
                    EXIT_SELFTEST_FAILED
                }
            })
        }
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
