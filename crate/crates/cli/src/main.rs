use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lensdoa::dictionary::{build_dictionary, center, PowerDictionary};
use lensdoa::harness::{
    runtime_bench, save_sweep, sweep, write_bench_csv, write_sidecar, Axis, Experiment,
    ExperimentConfig,
};
use lensdoa::measurement::{multi_user_profile, UserConfig};
use lensdoa::nnlasso::nnlasso_solve;
use lensdoa::receiver::Receiver;
use lensdoa::sic::sic_solve;

#[derive(Parser)]
#[command(name = "lensdoa", version, about = "Lens-assisted atomic receiver AoA simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the power dictionary for a configuration and cache it to disk.
    BuildDict {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one trial and print its record as JSON.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trial seed, used as given.
        #[arg(long)]
        seed: u64,
        /// Dictionary cache from `build-dict`.
        #[arg(long)]
        dict: Option<PathBuf>,
    },
    /// Monte-Carlo RMSE sweep over one axis.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values (dB, users, cells or degrees).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Master seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solver wall time versus number of cells.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        repetitions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-iteration convergence traces of one solver.
    Traces {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        solver: SolverArg,
        /// User angles in degrees.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-8,3,10")]
        angles: Vec<f64>,
        /// Simulate a noisy profile with this seed instead of using the noiseless mean.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Snr,
    Users,
    Cells,
    Aoa,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Snr => Axis::Snr,
            AxisArg::Users => Axis::Users,
            AxisArg::Cells => Axis::Cells,
            AxisArg::Aoa => Axis::Aoa,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Nnlasso,
    Sic,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn build_dict(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let rx = Receiver::new(cfg.receiver_spec()?)?;
    let dict = build_dictionary(&cfg.grid()?, &rx)?;
    dict.save(out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "wrote {} ({} cells x {} angles, L = {})",
        out.display(),
        dict.num_cells(),
        dict.len(),
        dict.lipschitz()
    );
    Ok(())
}

fn simulate(config: Option<&Path>, seed: u64, dict: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let exp = match dict {
        Some(p) => {
            let rx = Receiver::new(cfg.receiver_spec()?)?;
            let d = PowerDictionary::load(p).with_context(|| format!("reading {}", p.display()))?;
            Experiment::with_dictionary(cfg, rx, d)?
        }
        None => Experiment::new(cfg)?,
    };
    let record = exp.run_trial(0, seed)?;
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &record)?;
    writeln!(stdout)?;
    Ok(())
}

fn run_sweep(
    config: Option<&Path>,
    axis: Axis,
    values: &[f64],
    trials: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(t) = trials {
        cfg.run.trials = t;
    }
    if let Some(s) = seed {
        cfg.run.master_seed = s;
    }
    cfg.validate()?;
    let result = sweep(&cfg, axis, values)?;
    save_sweep(&result, &cfg, out).with_context(|| format!("writing {}", out.display()))?;
    for row in &result.rows {
        eprintln!(
            "{} = {}: {} rmse {:.3e} rad, failures {:.3}",
            axis.name(),
            row.axis_value,
            row.solver,
            row.rmse_rad,
            row.detection_failure_rate
        );
    }
    Ok(())
}

fn bench(config: Option<&Path>, cells: &[usize], repetitions: usize, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let rows = runtime_bench(&cfg, cells, repetitions)?;
    write_bench_csv(&rows, create(out)?)?;
    write_sidecar(out, &cfg, json!({ "cells": cells, "repetitions": repetitions }))?;
    Ok(())
}

fn traces(
    config: Option<&Path>,
    solver: SolverArg,
    angles_deg: &[f64],
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if angles_deg.is_empty() {
        bail!("at least one angle is required");
    }
    cfg.scenario.users = angles_deg.len();
    let angles: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let users = UserConfig::equal_power(angles.clone())?;
    let exp = Experiment::new(cfg.clone())?;
    users.check_within(exp.dictionary().grid())?;
    let y = match seed {
        Some(s) => exp.measure(&users, s)?.0,
        None => center(&multi_user_profile(&users, exp.receiver())?),
    };
    let k = users.len();
    let file = create(out)?;
    let estimates = match solver {
        SolverArg::Nnlasso => {
            let mut fista = cfg.fista()?;
            fista.record_traces = true;
            let r = nnlasso_solve(exp.dictionary(), &y, k, &fista)?;
            r.write_traces(file)?;
            r.angles
        }
        SolverArg::Sic => {
            let r = sic_solve(exp.dictionary(), &y, k)?;
            r.write_traces(file)?;
            r.angles
        }
    };
    let solver_name = match solver {
        SolverArg::Nnlasso => "nnlasso",
        SolverArg::Sic => "sic",
    };
    write_sidecar(
        out,
        &cfg,
        json!({
            "solver": solver_name,
            "true_angles_rad": angles,
            "estimated_angles_rad": estimates,
            "seed": seed,
            "noiseless": seed.is_none(),
        }),
    )?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::BuildDict { config, out } => build_dict(config.as_deref(), &out),
        Command::Simulate { config, seed, dict } => simulate(config.as_deref(), seed, dict.as_deref()),
        Command::Sweep { config, axis, values, trials, seed, out } => {
            run_sweep(config.as_deref(), axis.into(), &values, trials, seed, &out)
        }
        Command::Bench { config, cells, repetitions, out } => {
            bench(config.as_deref(), &cells, repetitions, &out)
        }
        Command::Traces { config, solver, angles, seed, out } => {
            traces(config.as_deref(), solver, &angles, seed, &out)
        }
    }
}
