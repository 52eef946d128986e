//! Command-line front end: `train`, `verify` and `report`.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 numerical
//! failure during training, 3 verification failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{run_id, run_to_dir, RunManifest};
use crate::report::{write_report, ReportKind};
use crate::verify::{run_suite, Suite, SuiteReport, SuiteSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "trgl", version, about = "Module-wise training with a transport penalty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every variant of a config on each seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed list, e.g. `--seeds 1,2,3`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory; defaults to `runs/<name>-<run id>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Also write the structured report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a table (and optional chart) from a run manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: ReportKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit code for an error: numerical failures get their own code, every
/// other error is a problem with the inputs.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

pub fn cmd_train(config: &Path, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> Result<(RunManifest, PathBuf)> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
        cfg.validate()?;
    }
    let out = match out {
        Some(o) => o,
        None => PathBuf::from("runs").join(format!("{}-{}", cfg.name, run_id(&cfg)?)),
    };
    run_to_dir(&cfg, &out)
}

pub fn cmd_verify(suite: Suite, report: Option<&Path>) -> Result<SuiteReport> {
    let r = run_suite(suite, &SuiteSettings::default())?;
    if let Some(path) = report {
        std::fs::write(path, serde_json::to_string_pretty(&r)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(r)
}

pub fn cmd_report(manifest: &Path, kind: ReportKind, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    write_report(manifest, kind, out)
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train { config, seeds, out } => {
            let (m, path) = cmd_train(&config, seeds, out)?;
            for r in &m.runs {
                let last = r.final_test_acc.last().copied().unwrap_or(f64::NAN);
                println!("{} seed {}: last-module test accuracy {last:.4} ({:.1}s)", r.variant, r.seed, r.seconds);
            }
            println!("manifest: {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Verify { suite, report } => {
            let r = cmd_verify(suite, report.as_deref())?;
            for line in r.lines() {
                println!("{line}");
            }
            Ok(if r.passed() { EXIT_OK } else { EXIT_VERIFICATION })
        }
        Command::Report { manifest, kind, out } => {
            for p in cmd_report(&manifest, kind, out.as_deref())? {
                println!("{}", p.display());
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        let nan = Error::NonFinite {
            module: 2,
            epoch: 3,
            what: "loss".into(),
        };
        assert_eq!(exit_code(&nan), EXIT_NUMERICAL);
    }

    #[test]
    fn parses_seed_lists() {
        let cli = Cli::try_parse_from(["trgl", "train", "--config", "c.toml", "--seeds", "1,2,3"]).unwrap();
        match cli.command {
            Command::Train { seeds, .. } => assert_eq!(seeds, Some(vec![1, 2, 3])),
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["trgl", "verify", "--suite", "nope"]).is_err());
        assert!(Cli::try_parse_from(["trgl", "report", "--manifest", "m.json", "--kind", "tau-sensitivity"]).is_ok());
    }

    #[test]
    fn missing_config_is_config_error() {
        assert_eq!(run(["trgl", "train", "--config", "/nonexistent/x.toml"]), EXIT_CONFIG);
    }
}
