//! Solver wall-time versus the number of vapor cells.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnlasso::fista_solve;
use crate::sic::sic_solve;

use super::config::ExperimentConfig;
use super::seeds::SeedScheme;
use super::sweep::Axis;
use super::trial::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub cells: usize,
    pub solver: String,
    pub median_ms: f64,
    /// Median time per FISTA iteration (equal to `median_ms / K` for SIC stages).
    pub median_iter_ms: f64,
    pub iterations: usize,
    pub repetitions: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median solve times over `repetitions` runs on one simulated profile per `M`.
/// Dictionary construction is excluded.
pub fn runtime_bench(
    base: &ExperimentConfig,
    cells: &[usize],
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    let mut rows = Vec::new();
    for &m in cells {
        let cfg = Axis::Cells.apply(base, m as f64)?;
        let exp = Experiment::new(cfg)?;
        let seed = SeedScheme::Common.trial_seed(exp.config().run.master_seed, 0, 0);
        let users = exp.draw_users(seed, &[])?;
        let (y, _) = exp.measure(&users, seed)?;
        let k = users.len();
        let dict = exp.dictionary();
        let fista = exp.config().fista()?;
        let yv = ndarray::ArrayView1::from(&y[..]);

        let mut sic_ms = Vec::with_capacity(repetitions);
        let mut lasso_ms = Vec::with_capacity(repetitions);
        let mut lasso_iter_ms = Vec::with_capacity(repetitions);
        let mut iterations = 0;
        for _ in 0..repetitions {
            let start = Instant::now();
            std::hint::black_box(sic_solve(dict, &y, k)?);
            sic_ms.push(start.elapsed().as_secs_f64() * 1e3);

            let start = Instant::now();
            let out = std::hint::black_box(fista_solve(
                dict.centered(),
                yv,
                dict.lipschitz(),
                &fista,
            )?);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            iterations = out.iterations;
            lasso_ms.push(ms);
            lasso_iter_ms.push(ms / out.iterations as f64);
        }
        let sic_median = median(&mut sic_ms);
        rows.push(BenchRow {
            cells: m,
            solver: "nnlasso".into(),
            median_ms: median(&mut lasso_ms),
            median_iter_ms: median(&mut lasso_iter_ms),
            iterations,
            repetitions,
        });
        rows.push(BenchRow {
            cells: m,
            solver: "sic".into(),
            median_ms: sic_median,
            median_iter_ms: sic_median / k.max(1) as f64,
            iterations: k,
            repetitions,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    use crate::format_float;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cells", "solver", "median_ms", "median_iter_ms", "iterations", "repetitions"])?;
    for r in rows {
        w.write_record([
            r.cells.to_string(),
            r.solver.clone(),
            format_float(r.median_ms),
            format_float(r.median_iter_ms),
            r.iterations.to_string(),
            r.repetitions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
