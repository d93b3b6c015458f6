//! Snapshot-level simulation of the magnitude-only receiver observation.
//!
//! Each snapshot draws fresh fading, symbols, per-cell polarizations, LO
//! phase and shot noise; the receiver only sees `y = |x + b + n|`. Noise is
//! generated as `sigma * z` with `z` drawn regardless of `sigma`, so two runs
//! with the same seed but different noise levels share every other draw.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::atomic::projection_coefficients;
use crate::dictionary::{build_atom, AoaGrid};
use crate::error::{Error, Result};
use crate::optics::check_angle;
use crate::receiver::Receiver;

/// Default ratio of expected LO energy to expected user energy.
pub const DEFAULT_LO_RATIO: f64 = 10.0;

/// Users impinging on the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserConfig {
    pub angles: Vec<f64>,
    pub powers: Vec<f64>,
}

impl UserConfig {
    pub fn new(angles: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if angles.len() != powers.len() {
            return Err(Error::ShapeMismatch { expected: angles.len(), actual: powers.len() });
        }
        for &t in &angles {
            check_angle(t)?;
        }
        if let Some(&p) = powers.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Config(format!("user power {p} must be positive")));
        }
        Ok(Self { angles, powers })
    }

    /// Unit-power users at the given angles.
    pub fn equal_power(angles: Vec<f64>) -> Result<Self> {
        let n = angles.len();
        Self::new(angles, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Error unless every angle lies within the grid range.
    pub fn check_within(&self, grid: &AoaGrid) -> Result<()> {
        match self.angles.iter().find(|t| !grid.contains(**t)) {
            Some(&t) => Err(Error::InvalidAngle(t)),
            None => Ok(()),
        }
    }
}

/// Local-oscillator reference field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoConfig {
    pub power: f64,
    pub path_gain: f64,
    pub angle: f64,
}

impl LoConfig {
    pub fn new(power: f64, path_gain: f64, angle: f64) -> Result<Self> {
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::Config(format!("LO power {power} must be non-negative")));
        }
        if !(path_gain.is_finite() && path_gain.abs() > 0.0) {
            return Err(Error::Config(format!("LO path gain {path_gain} must be non-zero")));
        }
        check_angle(angle)?;
        Ok(Self { power, path_gain, angle })
    }

    pub fn off() -> Self {
        Self { power: 0.0, path_gain: 1.0, angle: 0.0 }
    }

    /// Broadside LO whose expected energy over all cells is `ratio` times the
    /// expected user energy `E||A s||^2`.
    pub fn relative_to_users(
        ratio: f64,
        users: &UserConfig,
        receiver: &Receiver,
    ) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(Error::Config(format!("LO ratio {ratio} must be non-negative")));
        }
        let energy = expected_user_energy(users, receiver)?;
        let per_cell = receiver.dipole().hbar_scale.powi(2) * receiver.polarization_gain(0.0);
        if per_cell == 0.0 {
            return Err(Error::Config("dipole does not couple to a broadside LO".into()));
        }
        let power = ratio * energy / (receiver.num_cells() as f64 * per_cell);
        Self::new(power, 1.0, 0.0)
    }

    /// `P_b |beta|^2`.
    pub fn strength(&self) -> f64 {
        self.power * self.path_gain * self.path_gain
    }
}

/// Whether the small-scale fading `alpha_k` is redrawn every snapshot or frozen per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    #[default]
    PerSnapshot,
    Block,
}

/// Per-user quantities that do not change between snapshots.
#[derive(Debug, Clone)]
pub struct Scene {
    users: UserConfig,
    lo: LoConfig,
    responses: Vec<Vec<Complex64>>,
    coeffs: Vec<(f64, f64)>,
    lo_coeffs: (f64, f64),
    hbar_scale: f64,
    num_cells: usize,
}

impl Scene {
    pub fn new(receiver: &Receiver, users: UserConfig, lo: LoConfig) -> Result<Self> {
        let dipole = receiver.dipole();
        let responses =
            users.angles.iter().map(|&t| receiver.lens_response(t)).collect::<Result<_>>()?;
        let coeffs = users.angles.iter().map(|&t| projection_coefficients(t, dipole)).collect();
        let lo_coeffs = projection_coefficients(lo.angle, dipole);
        Ok(Self {
            users,
            lo,
            responses,
            coeffs,
            lo_coeffs,
            hbar_scale: dipole.hbar_scale,
            num_cells: receiver.num_cells(),
        })
    }

    pub fn users(&self) -> &UserConfig {
        &self.users
    }

    pub fn lo(&self) -> &LoConfig {
        &self.lo
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// `a_lens(theta_k)` for every user.
    pub fn responses(&self) -> &[Vec<Complex64>] {
        &self.responses
    }

    fn draw_alphas<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        (0..self.users.len()).map(|_| complex_normal(rng)).collect()
    }
}

/// `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI)
}

/// `mu . eps` for a fresh polarization drawn on the transverse circle.
fn projected_polarization<R: Rng + ?Sized>((a, b): (f64, f64), rng: &mut R) -> f64 {
    let psi = rng.random::<f64>() * 2.0 * PI;
    a * psi.cos() + b * psi.sin()
}

fn user_field_with<R: Rng + ?Sized>(
    scene: &Scene,
    alphas: Option<&[Complex64]>,
    rng: &mut R,
) -> Vec<Complex64> {
    let mut x = vec![Complex64::new(0.0, 0.0); scene.num_cells];
    for k in 0..scene.users.len() {
        let alpha = match alphas {
            Some(a) => a[k],
            None => complex_normal(rng),
        };
        let s = unit_phase(rng);
        let amp = alpha * s * (scene.hbar_scale * scene.users.powers[k].sqrt());
        for (xm, u) in x.iter_mut().zip(&scene.responses[k]) {
            *xm += amp * u * projected_polarization(scene.coeffs[k], rng);
        }
    }
    x
}

/// User-induced field at every cell for one snapshot (fresh fading, symbols and polarizations).
pub fn snapshot_user_field<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Vec<Complex64> {
    user_field_with(scene, None, rng)
}

/// LO field at every cell for one snapshot (fresh phase and per-cell polarizations).
///
/// Random numbers are consumed even when the LO is off.
pub fn snapshot_lo<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Vec<Complex64> {
    let lo = &scene.lo;
    let amp = unit_phase(rng) * (scene.hbar_scale * lo.power.sqrt() * lo.path_gain);
    (0..scene.num_cells).map(|_| amp * projected_polarization(scene.lo_coeffs, rng)).collect()
}

/// `y = |x + b + n|` with `n ~ CN(0, sigma_q2 I)`.
pub fn measure_snapshot<R: Rng + ?Sized>(
    x: &[Complex64],
    b: &[Complex64],
    sigma_q2: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: x.len(), actual: b.len() });
    }
    if !(sigma_q2.is_finite() && sigma_q2 >= 0.0) {
        return Err(Error::Negative(sigma_q2));
    }
    let sigma = sigma_q2.sqrt();
    Ok(x.iter().zip(b).map(|(xm, bm)| (xm + bm + complex_normal(rng) * sigma).norm()).collect())
}

/// `(1/K) sum_k y_k^2` over the rows of a `K x M` snapshot matrix.
pub fn average_power(snapshots: &Array2<f64>) -> Vec<f64> {
    let k = snapshots.nrows().max(1) as f64;
    snapshots.columns().into_iter().map(|c| c.iter().map(|y| y * y).sum::<f64>() / k).collect()
}

/// Magnitude snapshots and their averaged power profile.
#[derive(Debug, Clone)]
pub struct MeasurementBatch {
    /// `K_snap x M` magnitudes.
    pub snapshots: Array2<f64>,
    pub y_bar: Vec<f64>,
    pub sigma_q2: f64,
}

fn check_batch(k_snap: usize, sigma_q2: f64) -> Result<()> {
    if k_snap == 0 {
        return Err(Error::Config("at least one snapshot is required".into()));
    }
    if !(sigma_q2.is_finite() && sigma_q2 >= 0.0) {
        return Err(Error::Negative(sigma_q2));
    }
    Ok(())
}

fn for_each_snapshot<R: Rng + ?Sized>(
    scene: &Scene,
    k_snap: usize,
    sigma_q2: f64,
    fading: FadingMode,
    rng: &mut R,
    mut f: impl FnMut(usize, Vec<f64>),
) -> Result<()> {
    check_batch(k_snap, sigma_q2)?;
    let block = match fading {
        FadingMode::Block => Some(scene.draw_alphas(rng)),
        FadingMode::PerSnapshot => None,
    };
    for k in 0..k_snap {
        let x = user_field_with(scene, block.as_deref(), rng);
        let b = snapshot_lo(scene, rng);
        f(k, measure_snapshot(&x, &b, sigma_q2, rng)?);
    }
    Ok(())
}

/// Simulate `k_snap` snapshots, keeping every magnitude vector.
pub fn simulate<R: Rng + ?Sized>(
    scene: &Scene,
    k_snap: usize,
    sigma_q2: f64,
    fading: FadingMode,
    rng: &mut R,
) -> Result<MeasurementBatch> {
    let mut snapshots = Array2::zeros((k_snap, scene.num_cells));
    for_each_snapshot(scene, k_snap, sigma_q2, fading, rng, |k, y| {
        snapshots.row_mut(k).iter_mut().zip(y).for_each(|(s, v)| *s = v);
    })?;
    let y_bar = average_power(&snapshots);
    Ok(MeasurementBatch { snapshots, y_bar, sigma_q2 })
}

/// Averaged power profile without storing the snapshots; same draws as [`simulate`].
pub fn simulate_profile<R: Rng + ?Sized>(
    scene: &Scene,
    k_snap: usize,
    sigma_q2: f64,
    fading: FadingMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; scene.num_cells];
    for_each_snapshot(scene, k_snap, sigma_q2, fading, rng, |_, y| {
        acc.iter_mut().zip(y).for_each(|(a, v)| *a += v * v);
    })?;
    acc.iter_mut().for_each(|a| *a /= k_snap as f64);
    Ok(acc)
}

/// Multi-user mean profile `sum_k w_k p_Q(theta_k)`, `w_k = P_k hbar_scale^2`.
pub fn multi_user_profile(users: &UserConfig, receiver: &Receiver) -> Result<Vec<f64>> {
    let mut p = vec![0.0; receiver.num_cells()];
    let h2 = receiver.dipole().hbar_scale.powi(2);
    for (&t, &pw) in users.angles.iter().zip(&users.powers) {
        for (acc, a) in p.iter_mut().zip(build_atom(t, receiver)?) {
            *acc += pw * h2 * a;
        }
    }
    Ok(p)
}

/// `E||A s||^2 = sum_k w_k eta(theta_k) sum_m g_m(theta_k)`.
pub fn expected_user_energy(users: &UserConfig, receiver: &Receiver) -> Result<f64> {
    Ok(multi_user_profile(users, receiver)?.iter().sum())
}

/// Noise variance giving `E||A s||^2 / (M sigma_q2) = target_snr` (linear).
pub fn calibrate_noise(users: &UserConfig, receiver: &Receiver, target_snr: f64) -> Result<f64> {
    if target_snr.is_nan() || target_snr <= 0.0 {
        return Err(Error::Config(format!("target SNR {target_snr} must be positive")));
    }
    Ok(expected_user_energy(users, receiver)? / (receiver.num_cells() as f64 * target_snr))
}

/// `10^(db/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Constant floor `P_b |beta|^2 hbar_scale^2 eta(theta_b)` contributed by the LO.
pub fn lo_floor(lo: &LoConfig, receiver: &Receiver) -> f64 {
    lo.strength() * receiver.dipole().hbar_scale.powi(2) * receiver.polarization_gain(lo.angle)
}

/// `E[y_bar] = p_MU + LO floor + sigma_q2`.
pub fn expected_profile(
    users: &UserConfig,
    lo: &LoConfig,
    receiver: &Receiver,
    sigma_q2: f64,
) -> Result<Vec<f64>> {
    if !(sigma_q2.is_finite() && sigma_q2 >= 0.0) {
        return Err(Error::Negative(sigma_q2));
    }
    let floor = lo_floor(lo, receiver) + sigma_q2;
    Ok(multi_user_profile(users, receiver)?.into_iter().map(|p| p + floor).collect())
}
