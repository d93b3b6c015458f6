//! Non-negative LASSO recovery: FISTA on the centred dictionary, then support
//! detection, clustering of adjacent bins, centroid decoding and top-K selection.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dictionary::{AoaGrid, PowerDictionary};
use crate::error::{Error, Result};
use crate::format_float;

/// `sign(x) max(|x| - tau, 0)`.
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// How the l1 weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    /// `lambda = c ||P^T y||_inf`.
    Relative(f64),
    Absolute(f64),
}

impl Lambda {
    pub fn resolve(&self, p: &Array2<f64>, y: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Lambda::Relative(c) => c * p.t().dot(&y).iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            Lambda::Absolute(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FistaConfig {
    pub lambda: Lambda,
    /// Stop when `||w_new - w|| <= tol * max(1, ||y||)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Support threshold relative to `max w`.
    pub support_tau_rel: f64,
    /// Clusters lighter than this fraction of the heaviest one are discarded.
    pub mass_floor_rel: f64,
    /// Support runs separated by at most this many empty bins form one cluster.
    pub cluster_gap_bins: usize,
    pub record_traces: bool,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            lambda: Lambda::Relative(0.003),
            tol: 1e-8,
            max_iter: 2000,
            support_tau_rel: 0.01,
            mass_floor_rel: 0.1,
            // about half the lens beamwidth lambda/W on the default grid
            cluster_gap_bins: 7,
            record_traces: false,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        let lam = match self.lambda {
            Lambda::Relative(v) | Lambda::Absolute(v) => v,
        };
        if !(lam.is_finite() && lam >= 0.0) {
            return Err(Error::Config(format!("lambda {lam} must be non-negative")));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.support_tau_rel > 0.0 && self.support_tau_rel < 1.0) {
            return Err(Error::Config(format!(
                "support_tau_rel {} must lie in (0, 1)",
                self.support_tau_rel
            )));
        }
        if !(0.0..1.0).contains(&self.mass_floor_rel) {
            return Err(Error::Config(format!(
                "mass_floor_rel {} must lie in [0, 1)",
                self.mass_floor_rel
            )));
        }
        Ok(())
    }
}

/// FISTA iterate, traces and convergence status.
#[derive(Debug, Clone)]
pub struct FistaOutput {
    pub w: Array1<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `0.5 ||y - P w||^2 + lambda ||w||_1`, starting with `w = 0`.
    pub objective_trace: Vec<f64>,
    /// `||y - P w||^2`, starting with `w = 0`.
    pub model_error_trace: Vec<f64>,
}

/// Next momentum weight `(1 + sqrt(1 + 4 t^2)) / 2`.
pub fn next_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// One projected proximal-gradient step `[S_{lambda/L}(z - P^T(P z - y)/L)]_+`.
pub fn prox_step(
    p: &Array2<f64>,
    y: ArrayView1<'_, f64>,
    z: &Array1<f64>,
    lipschitz: f64,
    lambda: f64,
) -> Array1<f64> {
    let resid = p.dot(z) - y;
    let grad = p.t().dot(&resid);
    let shrink = lambda / lipschitz;
    // for a non-negative projection the soft threshold reduces to a shift
    z.iter().zip(grad.iter()).map(|(zi, gi)| (zi - gi / lipschitz - shrink).max(0.0)).collect()
}

fn objective_terms(p: &Array2<f64>, y: ArrayView1<'_, f64>, w: &Array1<f64>, lambda: f64) -> (f64, f64) {
    let r = &y - &p.dot(w);
    let err = r.dot(&r);
    (0.5 * err + lambda * w.iter().map(|v| v.abs()).sum::<f64>(), err)
}

/// `0.5 ||y - P w||^2 + lambda ||w||_1`.
pub fn objective(p: &Array2<f64>, y: ArrayView1<'_, f64>, w: &Array1<f64>, lambda: f64) -> f64 {
    objective_terms(p, y, w, lambda).0
}

/// FISTA with non-negativity, started from `w = z = 0`, `t = 1`.
pub fn fista_solve(
    p: &Array2<f64>,
    y: ArrayView1<'_, f64>,
    lipschitz: f64,
    cfg: &FistaConfig,
) -> Result<FistaOutput> {
    cfg.validate()?;
    if y.len() != p.nrows() {
        return Err(Error::ShapeMismatch { expected: p.nrows(), actual: y.len() });
    }
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(Error::Config(format!("Lipschitz constant {lipschitz} must be positive")));
    }
    let lambda = cfg.lambda.resolve(p, y);
    let eps = cfg.tol * y.dot(&y).sqrt().max(1.0);
    let d = p.ncols();
    let mut w = Array1::zeros(d);
    let mut z = Array1::zeros(d);
    let mut t = 1.0;
    let mut objective_trace = Vec::new();
    let mut model_error_trace = Vec::new();
    if cfg.record_traces {
        let (o, e) = objective_terms(p, y, &w, lambda);
        objective_trace.push(o);
        model_error_trace.push(e);
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let w_next = prox_step(p, y, &z, lipschitz, lambda);
        let t_next = next_momentum(t);
        let diff = &w_next - &w;
        z = &w_next + &(&diff * ((t - 1.0) / t_next));
        w = w_next;
        t = t_next;
        if cfg.record_traces {
            let (o, e) = objective_terms(p, y, &w, lambda);
            objective_trace.push(o);
            model_error_trace.push(e);
        }
        if diff.dot(&diff).sqrt() <= eps {
            converged = true;
            break;
        }
    }
    Ok(FistaOutput { w, lambda, iterations, converged, objective_trace, model_error_trace })
}

/// `{i : w_i > tau_rel max w}`; the flag is set when `w` has no positive entry.
pub fn detect_support(w: &[f64], tau_rel: f64) -> (Vec<usize>, bool) {
    let max = w.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return (Vec::new(), true);
    }
    let tau = tau_rel * max;
    ((0..w.len()).filter(|&i| w[i] > tau).collect(), false)
}

/// Connected components of a sorted support, where indices at most
/// `max_gap + 1` apart are connected (`max_gap = 0`: adjacent bins only).
pub fn cluster_support(support: &[usize], max_gap: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &i in support {
        match out.last_mut() {
            Some(run) if *run.last().expect("runs are non-empty") + 1 + max_gap >= i => run.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub indices: Vec<usize>,
    pub mass: f64,
    pub centroid: f64,
}

fn decode_one(indices: Vec<usize>, w: &[f64], grid: &AoaGrid) -> Option<Cluster> {
    let mass: f64 = indices.iter().map(|&i| w[i]).sum();
    if !(mass > 0.0) {
        return None;
    }
    let centroid = indices.iter().map(|&i| grid.angles()[i] * w[i]).sum::<f64>() / mass;
    Some(Cluster { indices, mass, centroid })
}

/// Power-weighted centroid and mass of every cluster; zero-mass clusters are dropped.
pub fn centroid_decode(clusters: Vec<Vec<usize>>, w: &[f64], grid: &AoaGrid) -> Vec<Cluster> {
    clusters.into_iter().filter_map(|c| decode_one(c, w, grid)).collect()
}

/// Heaviest first; equal masses keep the lower grid index first.
fn rank_by_mass(clusters: &mut [Cluster]) {
    clusters.sort_by(|a, b| {
        b.mass.total_cmp(&a.mass).then_with(|| a.indices[0].cmp(&b.indices[0]))
    });
}

/// Split a cluster at its weighted-median bin.
fn split_at_median(c: &Cluster, w: &[f64], grid: &AoaGrid) -> Option<(Cluster, Cluster)> {
    if c.indices.len() < 2 {
        return None;
    }
    let half = 0.5 * c.mass;
    let mut acc = 0.0;
    let mut j = c.indices.len() - 1;
    for (pos, &i) in c.indices.iter().enumerate() {
        acc += w[i];
        if acc >= half {
            j = pos;
            break;
        }
    }
    let j = j.min(c.indices.len() - 2);
    let left = decode_one(c.indices[..=j].to_vec(), w, grid)?;
    let right = decode_one(c.indices[j + 1..].to_vec(), w, grid)?;
    Some((left, right))
}

/// Centroids of the `k` heaviest clusters, sorted ascending.
///
/// Clusters below `mass_floor_rel` of the heaviest are dropped first. While
/// fewer than `k` remain, the heaviest splittable cluster is split at its
/// weighted median; if that is not enough, the heaviest centroid is repeated.
/// The flag reports either fallback.
pub fn select_topk(
    mut clusters: Vec<Cluster>,
    k: usize,
    w: &[f64],
    grid: &AoaGrid,
    mass_floor_rel: f64,
) -> (Vec<f64>, bool) {
    if k == 0 {
        return (Vec::new(), false);
    }
    rank_by_mass(&mut clusters);
    if let Some(top) = clusters.first().map(|c| c.mass) {
        clusters.retain(|c| c.mass >= mass_floor_rel * top);
    }
    let mut under = clusters.len() < k;
    while clusters.len() < k {
        let Some(pos) = clusters.iter().position(|c| c.indices.len() >= 2) else { break };
        match split_at_median(&clusters[pos], w, grid) {
            Some((a, b)) => {
                clusters.remove(pos);
                clusters.push(a);
                clusters.push(b);
                rank_by_mass(&mut clusters);
            }
            None => break,
        }
    }
    let mut angles: Vec<f64> = clusters.iter().take(k).map(|c| c.centroid).collect();
    if let Some(&first) = angles.first() {
        while angles.len() < k {
            under = true;
            angles.push(first);
        }
    }
    angles.sort_by(f64::total_cmp);
    (angles, under)
}

#[derive(Debug, Clone)]
pub struct NnlassoResult {
    pub w_hat: Vec<f64>,
    pub support: Vec<usize>,
    pub clusters: Vec<Cluster>,
    /// Estimated angles, ascending.
    pub angles: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub empty_support: bool,
    pub under_detected: bool,
    pub objective_trace: Vec<f64>,
    pub model_error_trace: Vec<f64>,
}

impl NnlassoResult {
    /// `iteration,objective,model_error` rows.
    pub fn write_traces<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iteration", "objective", "model_error"])?;
        for (i, (o, e)) in self.objective_trace.iter().zip(&self.model_error_trace).enumerate() {
            wtr.write_record([i.to_string(), format_float(*o), format_float(*e)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Full NN-LASSO pipeline on a centred profile `y` for `k` users.
///
/// An all-zero solution falls back to the atom most correlated with `y`.
pub fn nnlasso_solve(
    dict: &PowerDictionary,
    y: &[f64],
    k: usize,
    cfg: &FistaConfig,
) -> Result<NnlassoResult> {
    let yv = ArrayView1::from(y);
    let fista = fista_solve(dict.centered(), yv, dict.lipschitz(), cfg)?;
    let w_hat = fista.w.to_vec();
    let (support, empty_support) = detect_support(&w_hat, cfg.support_tau_rel);
    let clusters = centroid_decode(cluster_support(&support, cfg.cluster_gap_bins), &w_hat, dict.grid());
    let (mut angles, mut under_detected) =
        select_topk(clusters.clone(), k, &w_hat, dict.grid(), cfg.mass_floor_rel);
    if angles.is_empty() && k > 0 {
        let best = most_correlated(dict, yv);
        angles = vec![dict.grid().angles()[best]; k];
        under_detected = true;
    }
    Ok(NnlassoResult {
        w_hat,
        support,
        clusters,
        angles,
        lambda: fista.lambda,
        iterations: fista.iterations,
        converged: fista.converged,
        empty_support,
        under_detected,
        objective_trace: fista.objective_trace,
        model_error_trace: fista.model_error_trace,
    })
}

fn most_correlated(dict: &PowerDictionary, y: ArrayView1<'_, f64>) -> usize {
    let corr = dict.centered().t().dot(&y);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (c, n)) in corr.iter().zip(dict.centered_norms()).enumerate() {
        let s = c / n;
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}
