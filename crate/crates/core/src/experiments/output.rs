//! Run directory layout: `scenario.echo`, `metrics.json`,
//! `trajectories.csv`, `fields/*.csv`, and `manifest.json` written last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::run::SweepOutput;
use super::scenario::Scenario;
use super::ExperimentError;
use crate::grid::Grid;
use crate::trajectory::TrajectoryEnsemble;

/// Named grid columns for one `fields/<name>.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub name: String,
    pub grid: Grid,
    pub time: f64,
    pub columns: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungTiming {
    pub divisor: f64,
    pub hbar: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    /// SHA-256 of `scenario.echo`.
    pub scenario_hash: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub jobs: usize,
    pub outputs: Vec<String>,
    pub timings: Vec<RungTiming>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(contents).map_err(|e| io_err(path, e))?;
    f.sync_all().map_err(|e| io_err(path, e))
}

fn num(v: f64) -> String {
    // Display gives the shortest decimal that round-trips
    format!("{v}")
}

fn write_trajectories(
    path: &Path,
    ensembles: &[(String, String, String, &TrajectoryEnsemble)],
    limit: usize,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["rung", "divisor", "hbar", "ensemble", "particle", "step", "time", "x", "y", "vx", "vy", "absorbed"])
        .map_err(|e| io_err(path, e))?;
    for (rung, divisor, hbar, ens) in ensembles {
        let kind = serde_json::to_value(ens.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        for p in 0..ens.particle_count().min(limit) {
            let absorbed_at = ens.absorbed_at[p];
            for (k, t) in ens.times.iter().enumerate() {
                let x = ens.positions[p][k];
                let v = ens.velocities[p][k];
                let absorbed = absorbed_at.is_some_and(|a| k >= a);
                w.write_record([
                    rung.clone(),
                    divisor.clone(),
                    hbar.clone(),
                    kind.clone(),
                    p.to_string(),
                    k.to_string(),
                    num(*t),
                    num(x[0]),
                    num(x[1]),
                    num(v[0]),
                    num(v[1]),
                    (absorbed as u8).to_string(),
                ])
                .map_err(|e| io_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_field(path: &Path, dump: &FieldDump) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let dim = dump.grid.dim();
    let mut header: Vec<String> = vec!["time".into(), "x".into()];
    if dim == 2 {
        header.push("y".into());
    }
    header.extend(dump.columns.iter().map(|c| c.0.clone()));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for i in 0..dump.grid.len() {
        let p = dump.grid.node(i);
        let mut row = vec![num(dump.time), num(p[0])];
        if dim == 2 {
            row.push(num(p[1]));
        }
        row.extend(dump.columns.iter().map(|c| num(c.1[i])));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes the run directory; the manifest goes last, after every other
/// file has been flushed.
pub fn write_run(
    out_dir: &Path,
    scenario: &Scenario,
    sweep: &SweepOutput,
    started: DateTime<Utc>,
    jobs: usize,
) -> Result<RunManifest, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut outputs: Vec<PathBuf> = Vec::new();

    let echo = scenario.echo();
    let echo_path = out_dir.join("scenario.echo");
    write_file(&echo_path, echo.as_bytes())?;
    outputs.push("scenario.echo".into());

    let metrics_path = out_dir.join("metrics.json");
    let mut metrics = serde_json::to_string_pretty(&sweep.report).map_err(|e| io_err(&metrics_path, e))?;
    metrics.push('\n');
    write_file(&metrics_path, metrics.as_bytes())?;
    outputs.push("metrics.json".into());

    if scenario.write_trajectories {
        let mut ensembles = Vec::new();
        for (k, (plan, ens)) in sweep.plans.iter().zip(&sweep.bohm).enumerate() {
            ensembles.push((k.to_string(), num(plan.divisor), num(plan.hbar), ens));
        }
        if let Some(c) = &sweep.classical {
            ensembles.push(("all".into(), String::new(), String::new(), c));
        }
        let path = out_dir.join("trajectories.csv");
        write_trajectories(&path, &ensembles, scenario.max_written_particles)?;
        outputs.push("trajectories.csv".into());
    }

    if scenario.write_fields {
        let dir = out_dir.join("fields");
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for dump in &sweep.fields {
            let rel = PathBuf::from("fields").join(format!("{}.csv", dump.name));
            write_field(&out_dir.join(&rel), dump)?;
            outputs.push(rel);
        }
    }

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario.name.clone(),
        scenario_hash: hex::encode(Sha256::digest(echo.as_bytes())),
        seed: scenario.seed,
        started: started.to_rfc3339_opts(SecondsFormat::Millis, true),
        finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        jobs,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        timings: sweep
            .plans
            .iter()
            .zip(&sweep.wall_seconds)
            .map(|(p, s)| RungTiming { divisor: p.divisor, hbar: p.hbar, wall_seconds: *s })
            .collect(),
    };
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(manifest)
}

/// Runs the sweep and writes `out_dir`, stamping the start time.
pub fn run_to_dir(out_dir: &Path, scenario: &Scenario, jobs: usize) -> Result<RunManifest, ExperimentError> {
    let started = Utc::now();
    let sweep = super::run::run_sweep(scenario, jobs)?;
    write_run(out_dir, scenario, &sweep, started, jobs)
}
