//! Lens + vapor-cell array + dipole, bundled with a cached propagator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::{polarization_gain, DipoleSpec};
use crate::error::Result;
use crate::optics::{check_angle, ArraySpec, FresnelPropagator, LensSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub lens: LensSpec,
    pub array: ArraySpec,
    pub dipole: DipoleSpec,
}

impl ReceiverSpec {
    pub fn standard() -> Self {
        let lens = LensSpec::standard();
        let array = ArraySpec::standard(&lens);
        Self { lens, array, dipole: DipoleSpec::standard() }
    }

    /// Stable 64-bit fingerprint of the geometry, used to tag dictionary files.
    pub fn fingerprint(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("receiver spec serializes");
        let digest = Sha256::digest(&bytes);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

/// Ready-to-use receiver: validated specs, cell indices and an FFT plan.
#[derive(Debug)]
pub struct Receiver {
    spec: ReceiverSpec,
    cells: Vec<usize>,
    propagator: FresnelPropagator,
}

impl Receiver {
    pub fn new(spec: ReceiverSpec) -> Result<Self> {
        spec.lens.validate()?;
        spec.dipole.validate()?;
        let cells = spec.array.cell_indices(&spec.lens)?;
        let propagator = FresnelPropagator::new(&spec.lens)?;
        Ok(Self { spec, cells, propagator })
    }

    pub fn spec(&self) -> &ReceiverSpec {
        &self.spec
    }

    pub fn lens(&self) -> &LensSpec {
        &self.spec.lens
    }

    pub fn array(&self) -> &ArraySpec {
        &self.spec.array
    }

    pub fn dipole(&self) -> &DipoleSpec {
        &self.spec.dipole
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// 0-based aperture sample index of every cell.
    pub fn cell_indices(&self) -> &[usize] {
        &self.cells
    }

    pub fn propagator(&self) -> &FresnelPropagator {
        &self.propagator
    }

    /// `a_lens(theta)`: focal field sampled at the cells.
    pub fn lens_response(&self, theta: f64) -> Result<Vec<Complex64>> {
        check_angle(theta)?;
        let u_f = self.propagator.focal_field(theta)?;
        Ok(self.cells.iter().map(|&p| u_f.samples[p]).collect())
    }

    /// `g(theta) = |a_lens(theta)|^2` elementwise.
    pub fn cell_gain(&self, theta: f64) -> Result<Vec<f64>> {
        Ok(self.lens_response(theta)?.iter().map(|c| c.norm_sqr()).collect())
    }

    pub fn polarization_gain(&self, theta: f64) -> f64 {
        polarization_gain(theta, &self.spec.dipole)
    }
}
