//! Experiment configuration, read from TOML. Every field defaults to the
//! reference system parameters, so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::{DipoleSpec, BOHR_RADIUS, ELEMENTARY_CHARGE};
use crate::dictionary::{build_grid_degrees, AoaGrid};
use crate::error::{Error, Result};
use crate::measurement::{FadingMode, DEFAULT_LO_RATIO};
use crate::nnlasso::{FistaConfig, Lambda};
use crate::optics::{ArraySpec, Kernel, LensSpec};
use crate::receiver::ReceiverSpec;

use super::seeds::SeedScheme;
use super::trial::MAX_MATCH_USERS;

/// Lens geometry; lengths in carrier wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensSection {
    pub carrier_hz: f64,
    pub aperture: f64,
    pub focal_length: f64,
    pub sample_spacing: f64,
    pub step: f64,
    pub pad_factor: usize,
    pub kernel: Kernel,
}

impl Default for LensSection {
    fn default() -> Self {
        Self {
            carrier_hz: 5e9,
            aperture: 40.0,
            focal_length: 52.0,
            sample_spacing: 0.125,
            step: 1.0,
            pad_factor: 2,
            kernel: Kernel::FresnelTransfer,
        }
    }
}

/// Vapor-cell array; spacing in carrier wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub num_cells: usize,
    pub spacing: f64,
    /// Shrink the spacing to `W / M` when the array would overhang the aperture.
    pub fit_to_aperture: bool,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self { num_cells: 64, spacing: 0.5, fit_to_aperture: true }
    }
}

/// Transition dipole in units of `q a_0`, readout wavelengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DipoleSection {
    pub mu_eg_qa0: [f64; 3],
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub hbar_scale: f64,
}

impl Default for DipoleSection {
    fn default() -> Self {
        let d = DipoleSpec::standard();
        Self {
            mu_eg_qa0: [0.0, 1785.916, 0.0],
            lambda_c: d.lambda_c,
            lambda_p: d.lambda_p,
            hbar_scale: d.hbar_scale,
        }
    }
}

/// Candidate AoA grid in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub min_deg: f64,
    pub max_deg: f64,
    pub spacing_deg: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { min_deg: -15.0, max_deg: 15.0, spacing_deg: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub users: usize,
    pub snapshots: usize,
    pub snr_db: f64,
    pub aoa_min_deg: f64,
    pub aoa_max_deg: f64,
    /// Minimum pairwise AoA separation in grid spacings; 0 disables the constraint.
    pub min_separation_bins: f64,
    pub fading: FadingMode,
    /// Expected LO energy over expected user energy.
    pub lo_ratio: f64,
    /// Recorded for provenance only; the operative noise level follows `snr_db`.
    pub sigma_q_dbm: f64,
    pub sigma_t_dbm: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            users: 3,
            snapshots: 1024,
            snr_db: 5.0,
            aoa_min_deg: -15.0,
            aoa_max_deg: 15.0,
            min_separation_bins: 2.0,
            fading: FadingMode::PerSnapshot,
            lo_ratio: DEFAULT_LO_RATIO,
            sigma_q_dbm: -191.0,
            sigma_t_dbm: -176.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Nnlasso,
    Sic,
    #[default]
    Both,
}

impl SolverChoice {
    pub fn runs_nnlasso(self) -> bool {
        matches!(self, Self::Nnlasso | Self::Both)
    }

    pub fn runs_sic(self) -> bool {
        matches!(self, Self::Sic | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub which: SolverChoice,
    /// `lambda = lambda_rel ||P^T y||_inf`.
    pub lambda_rel: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub support_tau_rel: f64,
    pub mass_floor_rel: f64,
    pub cluster_gap_bins: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let f = FistaConfig::default();
        let lambda_rel = match f.lambda {
            Lambda::Relative(v) | Lambda::Absolute(v) => v,
        };
        Self {
            which: SolverChoice::Both,
            lambda_rel,
            tol: f.tol,
            max_iter: f.max_iter,
            support_tau_rel: f.support_tau_rel,
            mass_floor_rel: f.mass_floor_rel,
            cluster_gap_bins: f.cluster_gap_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub trials: usize,
    pub master_seed: u64,
    pub seed_scheme: SeedScheme,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { trials: 1000, master_seed: 1, seed_scheme: SeedScheme::Common }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lens: LensSection,
    pub array: ArraySection,
    pub dipole: DipoleSection,
    pub grid: GridSection,
    pub scenario: ScenarioSection,
    pub solver: SolverSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.receiver_spec()?;
        let grid = self.grid()?;
        self.fista()?.validate()?;
        let s = &self.scenario;
        if s.snapshots == 0 {
            return Err(Error::Config("scenario.snapshots must be at least 1".into()));
        }
        if self.run.trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        if !s.snr_db.is_finite() {
            return Err(Error::Config(format!("scenario.snr_db = {}", s.snr_db)));
        }
        if !(s.lo_ratio.is_finite() && s.lo_ratio >= 0.0) {
            return Err(Error::Config(format!("scenario.lo_ratio = {}", s.lo_ratio)));
        }
        if !(s.min_separation_bins.is_finite() && s.min_separation_bins >= 0.0) {
            return Err(Error::Config(format!(
                "scenario.min_separation_bins = {}",
                s.min_separation_bins
            )));
        }
        let (lo, hi) = self.aoa_range();
        if !(lo < hi) || !grid.contains(lo) || !grid.contains(hi) {
            return Err(Error::Config(format!(
                "AoA range [{}, {}] deg must be a non-empty subset of the grid",
                s.aoa_min_deg, s.aoa_max_deg
            )));
        }
        if s.users == 0 {
            return Err(Error::Config("scenario.users must be at least 1".into()));
        }
        if s.users > MAX_MATCH_USERS {
            return Err(Error::TooManyUsers { max: MAX_MATCH_USERS, got: s.users });
        }
        if s.users > grid.len() {
            return Err(Error::Config(format!("{} users exceed the grid size", s.users)));
        }
        Ok(())
    }

    pub fn lens_spec(&self) -> Result<LensSpec> {
        let l = &self.lens;
        Ok(LensSpec::from_wavelengths(
            l.carrier_hz,
            l.aperture,
            l.focal_length,
            l.sample_spacing,
            l.step,
            l.pad_factor,
        )?
        .with_kernel(l.kernel))
    }

    pub fn receiver_spec(&self) -> Result<ReceiverSpec> {
        let lens = self.lens_spec()?;
        let spacing = self.array.spacing * lens.wavelength;
        let array = if self.array.fit_to_aperture {
            ArraySpec::fitted(self.array.num_cells, spacing, &lens)?
        } else {
            ArraySpec::new(self.array.num_cells, spacing)?
        };
        array.cell_indices(&lens)?;
        let d = &self.dipole;
        let dipole = DipoleSpec::new(
            d.mu_eg_qa0.map(|v| v * ELEMENTARY_CHARGE * BOHR_RADIUS),
            d.lambda_c,
            d.lambda_p,
            d.hbar_scale,
        )?;
        Ok(ReceiverSpec { lens, array, dipole })
    }

    pub fn grid(&self) -> Result<AoaGrid> {
        build_grid_degrees(self.grid.min_deg, self.grid.max_deg, self.grid.spacing_deg)
    }

    /// AoA draw range in radians.
    pub fn aoa_range(&self) -> (f64, f64) {
        (self.scenario.aoa_min_deg.to_radians(), self.scenario.aoa_max_deg.to_radians())
    }

    /// Minimum pairwise separation of drawn AoAs, in radians.
    pub fn min_separation(&self) -> f64 {
        self.scenario.min_separation_bins * self.grid.spacing_deg.to_radians()
    }

    pub fn fista(&self) -> Result<FistaConfig> {
        let s = &self.solver;
        let cfg = FistaConfig {
            lambda: Lambda::Relative(s.lambda_rel),
            tol: s.tol,
            max_iter: s.max_iter,
            support_tau_rel: s.support_tau_rel,
            mass_floor_rel: s.mass_floor_rel,
            cluster_gap_bins: s.cluster_gap_bins,
            record_traces: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
