//! Monte-Carlo experiment runner: configuration, seeding, trials, sweeps and benchmarks.

mod bench;
mod config;
mod seeds;
mod sweep;
mod trial;

pub use bench::{loglog_slope, runtime_bench, write_bench_csv, BenchRow};
pub use config::{
    ArraySection, DipoleSection, ExperimentConfig, GridSection, LensSection, RunSection,
    ScenarioSection, SolverChoice, SolverSection,
};
pub use seeds::{mix64, mix_seeds, rng_from_seed, SeedScheme};
pub use sweep::{
    aggregate, save_sweep, sidecar_path, sweep, version_string, worker_pool, write_sidecar,
    write_sweep_csv, Axis, SweepResult, SweepRow, SWEEP_HEADER, WORKERS_ENV,
};
pub use trial::{
    draw_angles, draw_scenario, match_and_error, rmse, Experiment, SolverOutcome, TrialRecord,
    MAX_MATCH_USERS, MAX_REDRAWS,
};
