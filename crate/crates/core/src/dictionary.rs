//! AoA grid, power-profile dictionary and its centred counterpart.
//!
//! Column `i` of the dictionary is the noiseless mean power profile of a unit
//! user at grid angle `theta_i`: `p_Q(theta_i) = eta(theta_i) |a_lens(theta_i)|^2`.
//! Centring removes the all-ones component (LO floor and noise floor), and
//! the Lipschitz constant of the centred least-squares gradient is estimated
//! once by power iteration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::receiver::Receiver;

/// Uniform grid of candidate angles (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct AoaGrid {
    angles: Vec<f64>,
    spacing: f64,
}

impl AoaGrid {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.angles[0]
    }

    pub fn max(&self) -> f64 {
        self.angles[self.angles.len() - 1]
    }

    pub fn contains(&self, theta: f64) -> bool {
        let slack = 1e-9 * self.spacing;
        theta >= self.min() - slack && theta <= self.max() + slack
    }

    /// Index of the grid point closest to `theta` (clamped to the grid).
    pub fn nearest_index(&self, theta: f64) -> usize {
        let i = ((theta - self.min()) / self.spacing).round();
        i.clamp(0.0, (self.len() - 1) as f64) as usize
    }
}

/// Uniform grid from `min` to `max` in steps of `spacing`; includes `max`
/// whenever `(max - min) / spacing` is integral.
pub fn build_grid(min: f64, max: f64, spacing: f64) -> Result<AoaGrid> {
    if !(min.is_finite() && max.is_finite() && spacing.is_finite()) {
        return Err(Error::InvalidGrid("non-finite bounds or spacing".into()));
    }
    if min >= max {
        return Err(Error::InvalidGrid(format!("min {min} must be below max {max}")));
    }
    if spacing <= 0.0 {
        return Err(Error::InvalidGrid(format!("spacing {spacing} must be positive")));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    if min <= -half_pi || max >= half_pi {
        return Err(Error::InvalidGrid("grid must lie inside (-pi/2, pi/2)".into()));
    }
    let steps = ((max - min) / spacing + 1e-9).floor() as usize;
    if steps < 1 {
        return Err(Error::InvalidGrid(format!(
            "spacing {spacing} leaves a single point in [{min}, {max}]"
        )));
    }
    let angles = (0..=steps).map(|i| min + i as f64 * spacing).collect();
    Ok(AoaGrid { angles, spacing })
}

/// Grid from degree bounds; angles are stored in radians.
pub fn build_grid_degrees(min_deg: f64, max_deg: f64, spacing_deg: f64) -> Result<AoaGrid> {
    build_grid(min_deg.to_radians(), max_deg.to_radians(), spacing_deg.to_radians())
}

/// Power atom `p_Q(theta) = eta(theta) |a_lens(theta)|^2`.
pub fn build_atom(theta: f64, receiver: &Receiver) -> Result<Vec<f64>> {
    let eta = receiver.polarization_gain(theta);
    Ok(receiver.cell_gain(theta)?.into_iter().map(|g| eta * g).collect())
}

/// `v - mean(v) 1`.
pub fn center(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

pub fn center_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

pub const POWER_ITER_MAX: usize = 200;
pub const POWER_ITER_TOL: f64 = 1e-6;
pub const LIPSCHITZ_SAFETY: f64 = 1.01;

/// Largest eigenvalue of `P^T P` by power iteration.
///
/// Returns the Rayleigh-quotient estimate and the iteration count. Stops once
/// the estimate changes by at most `tol` relative.
pub fn spectral_norm_sq(p: &Array2<f64>, max_iter: usize, tol: f64) -> (f64, usize) {
    let d = p.ncols();
    if d == 0 || p.nrows() == 0 {
        return (0.0, 0);
    }
    // deterministic start that is not orthogonal to a non-negative eigenvector
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract());
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0;
    for iter in 1..=max_iter {
        let pv = p.dot(&v);
        let rayleigh = pv.dot(&pv);
        let w = p.t().dot(&pv);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return (0.0, iter);
        }
        let converged = iter > 1 && (rayleigh - estimate).abs() <= tol * rayleigh;
        estimate = rayleigh;
        if converged {
            return (estimate, iter);
        }
        v = w / norm;
    }
    (estimate, max_iter)
}

/// Atoms, centred atoms and step-size constant for one receiver and grid.
#[derive(Debug, Clone)]
pub struct PowerDictionary {
    grid: AoaGrid,
    atoms: Array2<f64>,
    centered: Array2<f64>,
    centered_norms: Vec<f64>,
    spectral_sq: f64,
    lipschitz: f64,
    fingerprint: u64,
}

impl PowerDictionary {
    /// Assemble from an `M x d` atom matrix; computes the centred columns and `L`.
    pub fn from_atoms(grid: AoaGrid, atoms: Array2<f64>, fingerprint: u64) -> Result<Self> {
        if atoms.ncols() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), actual: atoms.ncols() });
        }
        for (i, col) in atoms.axis_iter(Axis(1)).enumerate() {
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::DictionaryFile(format!("atom {i} is not non-negative")));
            }
            if col.iter().all(|v| *v == 0.0) {
                return Err(Error::DegenerateAtom { index: i, theta: grid.angles[i] });
            }
        }
        let means = atoms.mean_axis(Axis(0)).expect("at least one row");
        let centered = &atoms - &means.insert_axis(Axis(0));
        let centered_norms =
            centered.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect::<Vec<_>>();
        let (spectral_sq, _) = spectral_norm_sq(&centered, POWER_ITER_MAX, POWER_ITER_TOL);
        Ok(Self {
            grid,
            atoms,
            centered,
            centered_norms,
            spectral_sq,
            lipschitz: LIPSCHITZ_SAFETY * spectral_sq,
            fingerprint,
        })
    }

    pub fn grid(&self) -> &AoaGrid {
        &self.grid
    }

    /// `M x d` non-negative atoms (columns `p_Q(theta_i)`).
    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    /// `M x d` centred atoms (columns `Pi p_Q(theta_i)`).
    pub fn centered(&self) -> &Array2<f64> {
        &self.centered
    }

    pub fn centered_norms(&self) -> &[f64] {
        &self.centered_norms
    }

    pub fn atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(i)
    }

    pub fn centered_atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.centered.column(i)
    }

    pub fn num_cells(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    /// Power-iteration estimate of `||P^T P||_2` before the safety factor.
    pub fn spectral_sq(&self) -> f64 {
        self.spectral_sq
    }

    /// Step-size constant `L` (1% above the power-iteration estimate).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Write the dictionary cache file (header + row-major little-endian `f64` atoms).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DICT_MAGIC)?;
        w.write_all(&DICT_VERSION.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&(self.num_cells() as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.grid.min().to_le_bytes())?;
        w.write_all(&self.grid.spacing().to_le_bytes())?;
        w.write_all(&self.fingerprint.to_le_bytes())?;
        w.write_all(&self.spectral_sq.to_le_bytes())?;
        w.write_all(&self.lipschitz.to_le_bytes())?;
        for row in self.atoms.rows() {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DICT_MAGIC {
            return Err(Error::DictionaryFile("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != DICT_VERSION {
            return Err(Error::DictionaryFile(format!("unsupported version {version}")));
        }
        let _reserved = read_u32(r)?;
        let m = read_u64(r)? as usize;
        let d = read_u64(r)? as usize;
        let min = read_f64(r)?;
        let spacing = read_f64(r)?;
        let fingerprint = read_u64(r)?;
        let spectral_sq = read_f64(r)?;
        let lipschitz = read_f64(r)?;
        if m == 0 || d < 2 || m.saturating_mul(d) > (1 << 31) {
            return Err(Error::DictionaryFile(format!("implausible shape {m} x {d}")));
        }
        let mut data = vec![0.0; m * d];
        for v in data.iter_mut() {
            *v = read_f64(r)?;
        }
        let grid = AoaGrid { angles: (0..d).map(|i| min + i as f64 * spacing).collect(), spacing };
        let atoms = Array2::from_shape_vec((m, d), data)
            .map_err(|e| Error::DictionaryFile(e.to_string()))?;
        let mut dict = Self::from_atoms(grid, atoms, fingerprint)?;
        // keep the stored constant so a reloaded dictionary steps identically
        dict.spectral_sq = spectral_sq;
        dict.lipschitz = lipschitz;
        Ok(dict)
    }
}

const DICT_MAGIC: &[u8; 8] = b"LDOADICT";
const DICT_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Build every atom on the grid (in parallel over columns).
pub fn build_dictionary(grid: &AoaGrid, receiver: &Receiver) -> Result<PowerDictionary> {
    let m = receiver.num_cells();
    let columns: Vec<Vec<f64>> = grid
        .angles()
        .par_iter()
        .map(|&theta| build_atom(theta, receiver))
        .collect::<Result<_>>()?;
    let mut atoms = Array2::zeros((m, grid.len()));
    for (i, col) in columns.iter().enumerate() {
        if col.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateAtom { index: i, theta: grid.angles()[i] });
        }
        atoms.column_mut(i).assign(&ArrayView1::from(col.as_slice()));
    }
    PowerDictionary::from_atoms(grid.clone(), atoms, receiver.spec().fingerprint())
}
