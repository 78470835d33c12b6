//! Command-line front end: `run` and `validate` subcommands.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::experiments::{run_to_dir, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "semiclassical", version, about = "Semi-classical limit experiments for the Schrödinger equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its run directory.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override a scenario key (`section.key=value` or `section_key=value`).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Maximum number of worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and size a scenario without running it.
    Validate {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("seed={s}"));
    }
    Scenario::from_toml(&text, &all).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_plan(scenario: &Scenario, out: &mut dyn Write) -> Result<(), ScenarioError> {
    let plans = scenario.plan()?;
    let _ = writeln!(out, "scenario {} ({:?}), seed {}", scenario.name, scenario.kind, scenario.seed);
    let _ = writeln!(out, "{:>8} {:>12} {:>12} {:>12} {:>14} {:>14} {:>12} {:>8}", "divisor", "hbar", "v_max", "wavelength", "required", "points", "dt", "steps");
    for p in &plans {
        let fmt = |v: &[usize]| v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x");
        let _ = writeln!(
            out,
            "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>14} {:>14} {:>12.4e} {:>8}",
            p.divisor,
            p.hbar,
            p.v_max,
            p.wavelength,
            fmt(&p.required_points),
            fmt(&p.points),
            p.dt,
            p.steps_per_output * p.outputs
        );
    }
    Ok(())
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match cli.command {
        Command::Validate { scenario, overrides, seed } => {
            let s = match load(&scenario, &overrides, seed) {
                Ok(s) => s,
                Err(m) => {
                    let _ = writeln!(err, "error: {m}");
                    return EXIT_CONFIG;
                }
            };
            match print_plan(&s, out) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", scenario.display());
                    EXIT_CONFIG
                }
            }
        }
        Command::Run { scenario, out: dir, overrides, jobs, seed } => {
            let s = match load(&scenario, &overrides, seed) {
                Ok(s) => s,
                Err(m) => {
                    let _ = writeln!(err, "error: {m}");
                    return EXIT_CONFIG;
                }
            };
            if let Err(e) = print_plan(&s, err) {
                let _ = writeln!(err, "error: {}: {e}", scenario.display());
                return EXIT_CONFIG;
            }
            let _ = writeln!(err, "running {} rung(s)", s.divisors.len());
            match run_to_dir(&dir, &s, jobs) {
                Ok(manifest) => {
                    let _ = writeln!(out, "wrote {} ({} files)", dir.display(), manifest.outputs.len() + 1);
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", scenario.display());
                    if e.is_config() {
                        EXIT_CONFIG
                    } else {
                        EXIT_RUNTIME
                    }
                }
            }
        }
    }
}
