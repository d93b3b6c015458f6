//! Successive interference cancellation: pick the atom most aligned with the
//! residual, fit a non-negative amplitude, subtract, repeat.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};

use crate::dictionary::PowerDictionary;
use crate::error::{Error, Result};
use crate::format_float;

/// Residuals below this fraction of `||y||` count as exhausted.
pub const EXHAUSTION_REL: f64 = 1e-12;

/// Index maximizing `p_i^T r / ||p_i||` over non-excluded columns.
///
/// The common `1/||r||` factor does not change the argmax and is omitted.
/// Ties go to the lower index. `None` when every column is excluded.
pub fn best_atom(
    p: &Array2<f64>,
    norms: &[f64],
    r: ArrayView1<'_, f64>,
    excluded: &[usize],
) -> Option<usize> {
    let corr = p.t().dot(&r);
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (c, n)) in corr.iter().zip(norms).enumerate() {
        if excluded.contains(&i) || *n == 0.0 {
            continue;
        }
        let s = c / n;
        if s > best_score || best.is_none() {
            best_score = s;
            best = Some(i);
        }
    }
    best
}

/// `[p^T r / ||p||^2]_+`.
pub fn nn_amplitude(p: ArrayView1<'_, f64>, r: ArrayView1<'_, f64>) -> Result<f64> {
    let nn = p.dot(&p);
    if nn == 0.0 {
        return Err(Error::ZeroAtom);
    }
    Ok((p.dot(&r) / nn).max(0.0))
}

#[derive(Debug, Clone)]
pub struct SicResult {
    /// Estimated angles, ascending.
    pub angles: Vec<f64>,
    /// Picked grid indices in pick order.
    pub indices: Vec<usize>,
    /// Fitted amplitudes in pick order.
    pub amplitudes: Vec<f64>,
    /// `||r||^2` before the first pick and after every pick.
    pub residual_energy_trace: Vec<f64>,
    /// Set when the residual vanished before all picks were made.
    pub exhausted: bool,
}

impl SicResult {
    /// `stage,residual_energy` rows.
    pub fn write_traces<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["stage", "residual_energy"])?;
        for (i, e) in self.residual_energy_trace.iter().enumerate() {
            wtr.write_record([i.to_string(), format_float(*e)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Run `k` pick-fit-subtract stages on a centred profile `y`.
pub fn sic_solve(dict: &PowerDictionary, y: &[f64], k: usize) -> Result<SicResult> {
    let p = dict.centered();
    if y.len() != p.nrows() {
        return Err(Error::ShapeMismatch { expected: p.nrows(), actual: y.len() });
    }
    if k > p.ncols() {
        return Err(Error::Config(format!("cannot pick {k} atoms from {}", p.ncols())));
    }
    let norms = dict.centered_norms();
    let y0 = ArrayView1::from(y);
    let floor = EXHAUSTION_REL * y0.dot(&y0).sqrt();
    let mut r: Array1<f64> = y0.to_owned();
    let mut indices = Vec::with_capacity(k);
    let mut amplitudes = Vec::with_capacity(k);
    let mut trace = vec![r.dot(&r)];
    let mut exhausted = false;
    for _ in 0..k {
        exhausted |= !(r.dot(&r).sqrt() > floor);
        let target = if exhausted { y0 } else { r.view() };
        let i = best_atom(p, norms, target, &indices).ok_or(Error::ZeroAtom)?;
        let atom = p.column(i);
        let w = if exhausted { 0.0 } else { nn_amplitude(atom, r.view())? };
        if w > 0.0 {
            r.scaled_add(-w, &atom);
        }
        indices.push(i);
        amplitudes.push(w);
        trace.push(r.dot(&r));
    }
    let mut angles: Vec<f64> = indices.iter().map(|&i| dict.grid().angles()[i]).collect();
    angles.sort_by(f64::total_cmp);
    Ok(SicResult { angles, indices, amplitudes, residual_energy_trace: trace, exhausted })
}
