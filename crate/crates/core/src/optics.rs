//! Discrete Fresnel beam propagation through a thin RF lens.
//!
//! The aperture is sampled on `N_s = W / dx` points at
//! `x_p = (p - 1 - (N_s - 1)/2) dx`. A plane wave at angle `theta` picks up
//! the lens phase and the tilt, then is stepped `n_f = round(f / dz)` times
//! through free space with a split-step (DFT) Fresnel propagator. The field
//! at the focal plane is sampled at the vapor-cell positions.
//!
//! The scalar prefactor `e^{jk dz} / (j lambda dz)` of every step is never
//! multiplied into the samples (it overflows after a few dozen steps); its
//! log-magnitude is accumulated in [`ComplexField::log_scale`] instead.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative slack used when checking that geometric ratios are integral.
const INTEGRAL_TOL: f64 = 1e-9;

/// Free-space kernel used by one propagation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Continuous Fourier transform of the Fresnel chirp evaluated on the DFT
    /// bins: `H(f) = exp(-j pi lambda dz f^2)`. Unit magnitude, composes
    /// exactly across steps, free of kernel aliasing.
    #[default]
    FresnelTransfer,
    /// DFT of the chirp `exp(jk x^2 / (2 dz))` sampled at integer lags.
    /// Aliases whenever `dx > lambda dz / (N dx)`; at `dx = lambda/8`,
    /// `dz = lambda` the sampled chirp is exactly 64-periodic.
    SampledChirp,
}

/// Geometry of the RF lens aperture and the BPM discretization. All lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensSpec {
    pub wavelength: f64,
    pub aperture_width: f64,
    pub focal_length: f64,
    pub sample_spacing: f64,
    pub step: f64,
    pub pad_factor: usize,
    #[serde(default)]
    pub kernel: Kernel,
}

impl LensSpec {
    pub fn new(
        wavelength: f64,
        aperture_width: f64,
        focal_length: f64,
        sample_spacing: f64,
        step: f64,
        pad_factor: usize,
    ) -> Result<Self> {
        let lens = Self {
            wavelength,
            aperture_width,
            focal_length,
            sample_spacing,
            step,
            pad_factor,
            kernel: Kernel::default(),
        };
        lens.validate()?;
        Ok(lens)
    }

    /// Lens built from a carrier frequency with every length given in wavelengths.
    pub fn from_wavelengths(
        carrier_hz: f64,
        aperture: f64,
        focal: f64,
        spacing: f64,
        step: f64,
        pad_factor: usize,
    ) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::InvalidLens(format!("carrier frequency {carrier_hz} Hz")));
        }
        let lambda = SPEED_OF_LIGHT / carrier_hz;
        Self::new(
            lambda,
            aperture * lambda,
            focal * lambda,
            spacing * lambda,
            step * lambda,
            pad_factor,
        )
    }

    /// 5 GHz carrier, `W = 40 lambda`, `f = 52 lambda`, `dx = lambda/8`, `dz = lambda`.
    pub fn standard() -> Self {
        Self::from_wavelengths(5e9, 40.0, 52.0, 0.125, 1.0, 2).expect("default lens is valid")
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_pad_factor(mut self, pad_factor: usize) -> Result<Self> {
        self.pad_factor = pad_factor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidLens(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("wavelength", self.wavelength)?;
        positive("aperture_width", self.aperture_width)?;
        positive("focal_length", self.focal_length)?;
        positive("sample_spacing", self.sample_spacing)?;
        positive("step", self.step)?;
        if self.pad_factor == 0 {
            return Err(Error::InvalidLens("pad_factor must be >= 1".into()));
        }
        let ratio = self.aperture_width / self.sample_spacing;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > INTEGRAL_TOL * ratio.max(1.0) {
            return Err(Error::InvalidLens(format!(
                "W/dx = {ratio} is not a positive integer"
            )));
        }
        if (self.focal_length / self.step).round() < 1.0 {
            return Err(Error::InvalidLens("f/dz rounds to zero steps".into()));
        }
        if self.sample_spacing >= self.wavelength {
            return Err(Error::InvalidLens(format!(
                "sample spacing {} is not sub-wavelength ({})",
                self.sample_spacing, self.wavelength
            )));
        }
        Ok(())
    }

    /// Aperture sample count `N_s`.
    pub fn samples(&self) -> usize {
        (self.aperture_width / self.sample_spacing).round() as usize
    }

    /// Number of steps to the focal plane, `round(f / dz)` (ties away from zero).
    pub fn focal_steps(&self) -> usize {
        (self.focal_length / self.step).round() as usize
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Aperture coordinate of the 0-based sample `i`.
    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.samples() as f64 - 1.0) / 2.0) * self.sample_spacing
    }

    pub fn padded_len(&self) -> usize {
        self.samples() * self.pad_factor
    }

    /// `ln |e^{jk dz} / (j lambda dz)|`, the per-step log-magnitude left out of the samples.
    pub fn step_log_scale(&self) -> f64 {
        -(self.wavelength * self.step).ln()
    }
}

/// Uniform line array of vapor cells, centred on the lens axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub num_cells: usize,
    pub spacing: f64,
}

impl ArraySpec {
    pub fn new(num_cells: usize, spacing: f64) -> Result<Self> {
        if num_cells == 0 {
            return Err(Error::InvalidArray("array needs at least one cell".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArray(format!("spacing {spacing}")));
        }
        Ok(Self { num_cells, spacing })
    }

    /// 64 cells at half-wavelength spacing.
    pub fn standard(lens: &LensSpec) -> Self {
        Self { num_cells: 64, spacing: lens.wavelength / 2.0 }
    }

    /// `num_cells` cells at `spacing`, shrunk to `W / num_cells` when the
    /// nominal spacing would not fit inside the aperture.
    pub fn fitted(num_cells: usize, spacing: f64, lens: &LensSpec) -> Result<Self> {
        let arr = Self::new(num_cells, spacing)?;
        if arr.span() <= lens.aperture_width {
            Ok(arr)
        } else {
            Self::new(num_cells, lens.aperture_width / num_cells as f64)
        }
    }

    /// Distance between the outermost cells, `(M - 1) d`.
    pub fn span(&self) -> f64 {
        (self.num_cells as f64 - 1.0) * self.spacing
    }

    /// Position `x_m` of the 0-based cell `m`.
    pub fn position(&self, m: usize) -> f64 {
        (m as f64 - (self.num_cells as f64 - 1.0) / 2.0) * self.spacing
    }

    /// 1-based aperture index `p(m) = round(x_m/dx + (N_s+1)/2)` of the 0-based cell `m`.
    pub fn aperture_index(&self, m: usize, lens: &LensSpec) -> i64 {
        let t = self.position(m) / lens.sample_spacing + (lens.samples() as f64 + 1.0) / 2.0;
        // snap float noise onto exact half-integers so ties round away from zero
        let twice = 2.0 * t;
        let snapped = if (twice - twice.round()).abs() < INTEGRAL_TOL * twice.abs().max(1.0) {
            twice.round() / 2.0
        } else {
            t
        };
        snapped.round() as i64
    }

    /// 0-based aperture sample index of every cell.
    pub fn cell_indices(&self, lens: &LensSpec) -> Result<Vec<usize>> {
        let n = lens.samples();
        (0..self.num_cells)
            .map(|m| {
                let p = self.aperture_index(m, lens);
                if p < 1 || p > n as i64 {
                    Err(Error::CellOutsideAperture { cell: m + 1, index: p, samples: n })
                } else {
                    Ok((p - 1) as usize)
                }
            })
            .collect()
    }
}

/// Sampled complex field across the aperture at one propagation depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub samples: Vec<Complex64>,
    /// Accumulated `ln |prefactor|` of the steps applied so far.
    pub log_scale: f64,
}

impl ComplexField {
    pub fn zeros(n: usize) -> Self {
        Self { samples: vec![Complex64::new(0.0, 0.0); n], log_scale: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `|u|` divided by its maximum (all zeros stay zeros).
    pub fn normalized_magnitude(&self) -> Vec<f64> {
        let mag: Vec<f64> = self.samples.iter().map(|c| c.norm()).collect();
        let peak = mag.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            mag.into_iter().map(|v| v / peak).collect()
        } else {
            mag
        }
    }
}

pub(crate) fn check_angle(theta: f64) -> Result<()> {
    if theta.is_finite() && theta.abs() < PI / 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidAngle(theta))
    }
}

/// Field just behind the lens for a plane wave at `theta`:
/// `u_0(x) = exp(-jk (x^2 + 2 f x sin(theta)) / (2f))`.
pub fn lens_input_field(theta: f64, lens: &LensSpec) -> Result<ComplexField> {
    check_angle(theta)?;
    let k = lens.wavenumber();
    let f = lens.focal_length;
    let s = theta.sin();
    let samples = (0..lens.samples())
        .map(|i| {
            let x = lens.coordinate(i);
            Complex64::from_polar(1.0, -k * (x * x + 2.0 * f * x * s) / (2.0 * f))
        })
        .collect();
    Ok(ComplexField { samples, log_scale: 0.0 })
}

/// Precomputed split-step propagator for one lens.
///
/// Works on a zero-padded buffer of `pad_factor * N_s` samples with the
/// aperture in the middle. After every step a cosine taper across the guard
/// band absorbs the field leaving the aperture so that it cannot wrap around.
pub struct FresnelPropagator {
    lens: LensSpec,
    offset: usize,
    transfer: Vec<Complex64>,
    absorber: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FresnelPropagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FresnelPropagator")
            .field("lens", &self.lens)
            .field("padded_len", &self.transfer.len())
            .finish()
    }
}

impl FresnelPropagator {
    pub fn new(lens: &LensSpec) -> Result<Self> {
        lens.validate()?;
        let n_s = lens.samples();
        let n = lens.padded_len();
        let offset = (n - n_s) / 2;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let transfer = match lens.kernel {
            Kernel::FresnelTransfer => fresnel_transfer(lens, n),
            Kernel::SampledChirp => {
                let mut h = sampled_chirp(lens, n);
                forward.process(&mut h);
                h
            }
        };
        let absorber = cosine_absorber(n, offset, n_s);
        Ok(Self { lens: lens.clone(), offset, transfer, absorber, forward, inverse })
    }

    pub fn lens(&self) -> &LensSpec {
        &self.lens
    }

    /// DFT-domain transfer function `h_sys` (length `pad_factor * N_s`).
    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    pub fn absorber(&self) -> &[f64] {
        &self.absorber
    }

    /// Offset of the aperture inside the padded buffer.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Place an aperture field in the middle of a zeroed padded buffer.
    pub fn pad(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let n_s = self.lens.samples();
        if u.len() != n_s {
            return Err(Error::ShapeMismatch { expected: n_s, actual: u.len() });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.transfer.len()];
        buf[self.offset..self.offset + n_s].copy_from_slice(u);
        Ok(buf)
    }

    pub fn crop(&self, buf: &[Complex64]) -> Vec<Complex64> {
        buf[self.offset..self.offset + self.lens.samples()].to_vec()
    }

    /// `IDFT(DFT(buf) o h_sys)` in place, without the absorber.
    pub fn apply_transfer(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.transfer.len());
        self.forward.process(buf);
        let norm = 1.0 / buf.len() as f64;
        for (b, h) in buf.iter_mut().zip(&self.transfer) {
            *b *= h * norm;
        }
        self.inverse.process(buf);
    }

    /// One full step on the padded buffer: transfer, then absorber.
    pub fn step_padded(&self, buf: &mut [Complex64]) {
        self.apply_transfer(buf);
        for (b, a) in buf.iter_mut().zip(&self.absorber) {
            *b *= *a;
        }
    }

    /// One step of an aperture-sized field, truncated back to `N_s` samples.
    pub fn step(&self, u: &ComplexField) -> Result<ComplexField> {
        let mut buf = self.pad(&u.samples)?;
        self.step_padded(&mut buf);
        Ok(ComplexField {
            samples: self.crop(&buf),
            log_scale: u.log_scale + self.lens.step_log_scale(),
        })
    }

    /// Propagate `u` through `steps` steps, keeping the padded field between steps.
    pub fn propagate(&self, u: &ComplexField, steps: usize) -> Result<ComplexField> {
        let mut buf = self.pad(&u.samples)?;
        for _ in 0..steps {
            self.step_padded(&mut buf);
        }
        Ok(ComplexField {
            samples: self.crop(&buf),
            log_scale: u.log_scale + steps as f64 * self.lens.step_log_scale(),
        })
    }

    /// Focal-plane field `u_f` for a plane wave at `theta`.
    pub fn focal_field(&self, theta: f64) -> Result<ComplexField> {
        let u0 = lens_input_field(theta, &self.lens)?;
        self.propagate(&u0, self.lens.focal_steps())
    }
}

fn fresnel_transfer(lens: &LensSpec, n: usize) -> Vec<Complex64> {
    let span = n as f64 * lens.sample_spacing;
    (0..n)
        .map(|q| {
            let bin = if q < n.div_ceil(2) { q as f64 } else { q as f64 - n as f64 };
            let fx = bin / span;
            Complex64::from_polar(1.0, -PI * lens.wavelength * lens.step * fx * fx)
        })
        .collect()
}

/// Chirp `exp(jk (l dx)^2 / (2 dz))` laid out by integer lag `l` (index 0 is zero lag).
pub(crate) fn sampled_chirp(lens: &LensSpec, n: usize) -> Vec<Complex64> {
    let k = lens.wavenumber();
    (0..n)
        .map(|j| {
            let lag = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
            let x = lag * lens.sample_spacing;
            Complex64::from_polar(1.0, k * x * x / (2.0 * lens.step))
        })
        .collect()
}

fn cosine_absorber(n: usize, offset: usize, n_s: usize) -> Vec<f64> {
    let left = offset;
    let right = n - offset - n_s;
    (0..n)
        .map(|i| {
            let frac = if i < offset {
                (offset - i) as f64 / left as f64
            } else if i >= offset + n_s {
                (i + 1 - offset - n_s) as f64 / right as f64
            } else {
                0.0
            };
            (0.5 * PI * frac.min(1.0)).cos()
        })
        .collect()
}

/// One Fresnel step of an aperture field (padded, propagated, truncated to `N_s`).
pub fn fresnel_step(u: &ComplexField, lens: &LensSpec) -> Result<ComplexField> {
    FresnelPropagator::new(lens)?.step(u)
}

/// Focal-plane field `u_f` after `n_f` steps from [`lens_input_field`].
pub fn propagate_to_focal(theta: f64, lens: &LensSpec) -> Result<ComplexField> {
    FresnelPropagator::new(lens)?.focal_field(theta)
}

/// Lens-embedded array response `a_lens(theta) = [u_f(p(1)) ... u_f(p(M))]`.
pub fn sample_at_cells(
    u_f: &ComplexField,
    lens: &LensSpec,
    arr: &ArraySpec,
) -> Result<Vec<Complex64>> {
    if u_f.len() != lens.samples() {
        return Err(Error::ShapeMismatch { expected: lens.samples(), actual: u_f.len() });
    }
    Ok(arr.cell_indices(lens)?.into_iter().map(|p| u_f.samples[p]).collect())
}

/// Index of the largest-magnitude sample.
pub fn peak_index(samples: &[Complex64]) -> usize {
    samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, c)| {
            let v = c.norm_sqr();
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}
