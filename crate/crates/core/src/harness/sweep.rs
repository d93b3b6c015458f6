//! Parameter sweeps over SNR, user count, cell count or a pinned AoA.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format_float;

use super::config::ExperimentConfig;
use super::trial::{rmse, Experiment, SolverOutcome, TrialRecord};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "LENSDOA_WORKERS";

/// Thread pool sized by [`WORKERS_ENV`], or rayon's default when unset or invalid.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// SNR in dB.
    Snr,
    /// Number of users.
    Users,
    /// Number of vapor cells (rebuilds the dictionary).
    Cells,
    /// AoA of the first user in degrees; the others are drawn at random.
    Aoa,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Snr => "snr",
            Self::Users => "users",
            Self::Cells => "cells",
            Self::Aoa => "aoa",
        }
    }

    fn as_count(value: f64, what: &str) -> Result<usize> {
        if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
            Ok(value as usize)
        } else {
            Err(Error::Config(format!("{what} must be a positive integer, got {value}")))
        }
    }

    /// Configuration for one axis value.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            Self::Snr => cfg.scenario.snr_db = value,
            Self::Users => cfg.scenario.users = Self::as_count(value, "user count")?,
            Self::Cells => cfg.array.num_cells = Self::as_count(value, "cell count")?,
            Self::Aoa => {
                let t = value.to_radians();
                let (lo, hi) = cfg.aoa_range();
                if !(lo..=hi).contains(&t) {
                    return Err(Error::Config(format!("pinned AoA {value} deg is out of range")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn pinned(self, value: f64) -> Vec<f64> {
        match self {
            Self::Aoa => vec![value.to_radians()],
            _ => Vec::new(),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(Self::Snr),
            "users" => Ok(Self::Users),
            "cells" => Ok(Self::Cells),
            "aoa" => Ok(Self::Aoa),
            other => Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// Aggregate for one (axis value, solver) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub solver: String,
    pub rmse_rad: f64,
    pub detection_failure_rate: f64,
    pub mean_solver_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Raw records, one vector per axis value, ordered by trial index.
    pub records: Vec<Vec<TrialRecord>>,
}

/// Aggregate one solver's outcomes; `None` when the solver did not run.
pub fn aggregate<'a>(
    axis_value: f64,
    solver: &str,
    outcomes: impl Iterator<Item = Option<&'a SolverOutcome>>,
) -> Option<SweepRow> {
    let mut errors = Vec::new();
    let mut failures = 0usize;
    let mut ms = 0.0;
    let mut n = 0usize;
    for o in outcomes {
        let o = o?;
        errors.extend_from_slice(&o.squared_errors);
        failures += o.detection_failure as usize;
        ms += o.elapsed_ms;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    Some(SweepRow {
        axis_value,
        solver: solver.to_string(),
        rmse_rad: rmse(&errors),
        detection_failure_rate: failures as f64 / n as f64,
        mean_solver_ms: ms / n as f64,
    })
}

/// `T` trials per axis value, run on the [`worker_pool`].
pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one axis value".into()));
    }
    let pool = worker_pool()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut shared: Option<Experiment> = None;
    for (ai, &value) in values.iter().enumerate() {
        let cfg = axis.apply(base, value)?;
        let exp = match shared.take() {
            Some(prev) => prev.reconfigured(cfg)?,
            None => Experiment::new(cfg)?,
        };
        let pinned = axis.pinned(value);
        let scheme = exp.config().run.seed_scheme;
        let master = exp.config().run.master_seed;
        let trials = exp.config().run.trials;
        let recs: Vec<TrialRecord> = pool.install(|| {
            (0..trials)
                .into_par_iter()
                .map(|t| exp.run_trial_pinned(t, scheme.trial_seed(master, ai, t), &pinned))
                .collect::<Result<_>>()
        })?;
        rows.extend(aggregate(value, "nnlasso", recs.iter().map(|r| r.nnlasso.as_ref())));
        rows.extend(aggregate(value, "sic", recs.iter().map(|r| r.sic.as_ref())));
        records.push(recs);
        shared = Some(exp);
    }
    Ok(SweepResult { axis, values: values.to_vec(), rows, records })
}

pub const SWEEP_HEADER: [&str; 5] =
    ["axis_value", "solver", "rmse_rad", "detection_failure_rate", "mean_solver_ms"];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format_float(r.axis_value),
            r.solver.clone(),
            format_float(r.rmse_rad),
            format_float(r.detection_failure_rate),
            format_float(r.mean_solver_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Version string stamped into run metadata.
pub fn version_string() -> String {
    format!("lensdoa-v{}", env!("CARGO_PKG_VERSION"))
}

/// Path of the metadata file written next to a CSV: `<file>.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    csv_path.with_file_name(name)
}

/// Write `<csv>.meta.json` holding the config echo, version and master seed.
pub fn write_sidecar(
    csv_path: &Path,
    cfg: &ExperimentConfig,
    extra: serde_json::Value,
) -> Result<PathBuf> {
    let meta = serde_json::json!({
        "version": version_string(),
        "master_seed": cfg.run.master_seed,
        "config": cfg,
        "run": extra,
    });
    let path = sidecar_path(csv_path);
    let mut f = File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n")?;
    Ok(path)
}

/// Write a sweep's CSV and metadata sidecar.
pub fn save_sweep(result: &SweepResult, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    write_sweep_csv(&result.rows, File::create(path)?)?;
    write_sidecar(
        path,
        cfg,
        serde_json::json!({ "axis": result.axis, "values": result.values }),
    )?;
    Ok(())
}
