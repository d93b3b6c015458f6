//! One Monte-Carlo trial: draw users, simulate the averaged profile, run the
//! solvers, match estimates to the truth.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{build_dictionary, center, PowerDictionary};
use crate::error::{Error, Result};
use crate::measurement::{
    calibrate_noise, db_to_linear, simulate_profile, LoConfig, Scene, UserConfig,
};
use crate::nnlasso::{nnlasso_solve, FistaConfig};
use crate::receiver::Receiver;
use crate::sic::sic_solve;

use super::config::ExperimentConfig;
use super::seeds::rng_from_seed;

pub const MAX_REDRAWS: usize = 10_000;
pub const MAX_MATCH_USERS: usize = 8;

fn well_separated(angles: &[f64], min_sep: f64) -> bool {
    let mut s = angles.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[1] - w[0] >= min_sep)
}

/// `k` angles uniform on `range`, redrawn until every pair is at least
/// `min_sep` apart. Angles in `pinned` are kept and count toward the
/// separation check. The result is sorted ascending.
pub fn draw_angles<R: Rng + ?Sized>(
    k: usize,
    range: (f64, f64),
    min_sep: f64,
    pinned: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::Config(format!("empty AoA range [{lo}, {hi}]")));
    }
    if pinned.len() > k {
        return Err(Error::Config(format!("{} pinned angles for {k} users", pinned.len())));
    }
    for _ in 0..MAX_REDRAWS {
        let mut angles = pinned.to_vec();
        while angles.len() < k {
            angles.push(lo + (hi - lo) * rng.random::<f64>());
        }
        if well_separated(&angles, min_sep) {
            angles.sort_by(f64::total_cmp);
            return Ok(angles);
        }
    }
    Err(Error::RejectionCap(MAX_REDRAWS))
}

/// Unit-power users drawn per the configured range and separation.
pub fn draw_scenario(cfg: &ExperimentConfig, trial_seed: u64) -> Result<UserConfig> {
    let mut rng = scenario_rng(trial_seed);
    let angles =
        draw_angles(cfg.scenario.users, cfg.aoa_range(), cfg.min_separation(), &[], &mut rng)?;
    UserConfig::equal_power(angles)
}

// scenario and measurement draws use separate ChaCha streams of the same key,
// so changing K or the pinned angle does not shift the measurement stream
fn scenario_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(0);
    rng
}

fn measurement_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(1);
    rng
}

fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Squared errors `(est[sigma(k)] - truth[k])^2` under the assignment `sigma`
/// minimizing their sum. Ordered like `truth`.
pub fn match_and_error(estimates: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if estimates.len() != truth.len() {
        return Err(Error::ShapeMismatch { expected: truth.len(), actual: estimates.len() });
    }
    let k = truth.len();
    if k > MAX_MATCH_USERS {
        return Err(Error::TooManyUsers { max: MAX_MATCH_USERS, got: k });
    }
    let mut best = vec![0.0; k];
    let mut best_sum = f64::INFINITY;
    for_each_permutation(k, |perm| {
        let errs: Vec<f64> =
            truth.iter().zip(perm).map(|(t, &j)| (estimates[j] - t).powi(2)).collect();
        let sum: f64 = errs.iter().sum();
        if sum < best_sum {
            best_sum = sum;
            best = errs;
        }
    });
    Ok(best)
}

/// `sqrt(sum e / n)` over all squared errors.
pub fn rmse(squared_errors: &[f64]) -> f64 {
    if squared_errors.is_empty() {
        return 0.0;
    }
    (squared_errors.iter().sum::<f64>() / squared_errors.len() as f64).sqrt()
}

/// One solver's result on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub angles: Vec<f64>,
    pub squared_errors: Vec<f64>,
    /// Under-detection (NN-LASSO) or residual exhaustion (SIC).
    pub detection_failure: bool,
    pub converged: bool,
    pub iterations: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub true_angles: Vec<f64>,
    pub sigma_q2: f64,
    pub nnlasso: Option<SolverOutcome>,
    pub sic: Option<SolverOutcome>,
}

impl TrialRecord {
    /// Copy with the timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        let strip = |o: &Option<SolverOutcome>| {
            o.clone().map(|mut o| {
                o.elapsed_ms = 0.0;
                o
            })
        };
        Self { nnlasso: strip(&self.nnlasso), sic: strip(&self.sic), ..self.clone() }
    }
}

/// Receiver, dictionary and configuration for a batch of trials.
#[derive(Debug)]
pub struct Experiment {
    cfg: ExperimentConfig,
    fista: FistaConfig,
    receiver: Receiver,
    dict: PowerDictionary,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let receiver = Receiver::new(cfg.receiver_spec()?)?;
        let dict = build_dictionary(&cfg.grid()?, &receiver)?;
        Self::with_dictionary(cfg, receiver, dict)
    }

    /// Reuse a prebuilt dictionary; it must match the configured receiver and grid.
    pub fn with_dictionary(
        cfg: ExperimentConfig,
        receiver: Receiver,
        dict: PowerDictionary,
    ) -> Result<Self> {
        if dict.fingerprint() != receiver.spec().fingerprint() {
            return Err(Error::DictionaryFile("dictionary was built for another receiver".into()));
        }
        if dict.grid() != &cfg.grid()? {
            return Err(Error::DictionaryFile("dictionary grid differs from the config".into()));
        }
        let fista = cfg.fista()?;
        Ok(Self { cfg, fista, receiver, dict })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn receiver(&self) -> &Receiver {
        &self.receiver
    }

    pub fn dictionary(&self) -> &PowerDictionary {
        &self.dict
    }

    /// Same receiver and dictionary under a different scenario/solver/run configuration.
    pub fn reconfigured(&self, cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.receiver_spec()? != *self.receiver.spec() || cfg.grid()? != *self.dict.grid() {
            return Self::new(cfg);
        }
        let fista = cfg.fista()?;
        Ok(Self {
            cfg,
            fista,
            receiver: Receiver::new(self.receiver.spec().clone())?,
            dict: self.dict.clone(),
        })
    }

    /// Users for one trial; angles in `pinned` are fixed and the rest drawn.
    pub fn draw_users(&self, seed: u64, pinned: &[f64]) -> Result<UserConfig> {
        let mut rng = scenario_rng(seed);
        let angles = draw_angles(
            self.cfg.scenario.users,
            self.cfg.aoa_range(),
            self.cfg.min_separation(),
            pinned,
            &mut rng,
        )?;
        UserConfig::equal_power(angles)
    }

    /// Centred averaged profile and noise variance for a given user set.
    pub fn measure(&self, users: &UserConfig, seed: u64) -> Result<(Vec<f64>, f64)> {
        let s = &self.cfg.scenario;
        let sigma_q2 = calibrate_noise(users, &self.receiver, db_to_linear(s.snr_db))?;
        let lo = if s.lo_ratio > 0.0 {
            LoConfig::relative_to_users(s.lo_ratio, users, &self.receiver)?
        } else {
            LoConfig::off()
        };
        let scene = Scene::new(&self.receiver, users.clone(), lo)?;
        let mut rng = measurement_rng(seed);
        let y_bar = simulate_profile(&scene, s.snapshots, sigma_q2, s.fading, &mut rng)?;
        Ok((center(&y_bar), sigma_q2))
    }

    /// Run the configured solvers on a centred profile.
    pub fn solve(
        &self,
        y: &[f64],
        truth: &[f64],
    ) -> Result<(Option<SolverOutcome>, Option<SolverOutcome>)> {
        let k = truth.len();
        let which = self.cfg.solver.which;
        let nnlasso = if which.runs_nnlasso() {
            let start = Instant::now();
            let r = nnlasso_solve(&self.dict, y, k, &self.fista)?;
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            Some(SolverOutcome {
                squared_errors: match_and_error(&r.angles, truth)?,
                angles: r.angles,
                detection_failure: r.under_detected || r.empty_support,
                converged: r.converged,
                iterations: r.iterations,
                elapsed_ms,
            })
        } else {
            None
        };
        let sic = if which.runs_sic() {
            let start = Instant::now();
            let r = sic_solve(&self.dict, y, k)?;
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            Some(SolverOutcome {
                squared_errors: match_and_error(&r.angles, truth)?,
                angles: r.angles,
                detection_failure: r.exhausted,
                converged: true,
                iterations: k,
                elapsed_ms,
            })
        } else {
            None
        };
        Ok((nnlasso, sic))
    }

    /// Draw, measure, solve and match one trial.
    pub fn run_trial(&self, trial: usize, seed: u64) -> Result<TrialRecord> {
        self.run_trial_pinned(trial, seed, &[])
    }

    pub fn run_trial_pinned(&self, trial: usize, seed: u64, pinned: &[f64]) -> Result<TrialRecord> {
        let users = self.draw_users(seed, pinned)?;
        let (y, sigma_q2) = self.measure(&users, seed)?;
        let (nnlasso, sic) = self.solve(&y, &users.angles)?;
        Ok(TrialRecord { trial, seed, true_angles: users.angles, sigma_q2, nnlasso, sic })
    }
}
