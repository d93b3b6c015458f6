//! Dipole and polarization geometry of the vapor cells.
//!
//! Propagation is confined to the x-z plane with the array along x, so
//! `k(theta) = [sin(theta), 0, cos(theta)]`. Random polarizations are drawn
//! uniformly on the unit circle orthogonal to `k(theta)`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELEMENTARY_CHARGE: f64 = 1.602e-19;
pub const BOHR_RADIUS: f64 = 5.292e-11;
pub const REDUCED_PLANCK: f64 = 1.054_571_817e-34;

/// Transition dipole and readout wavelengths of the Rydberg transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpec {
    /// Transition dipole moment `mu_eg` in C m.
    pub mu_eg: [f64; 3],
    /// Coupling-beam wavelength (m).
    pub lambda_c: f64,
    /// Probe-beam wavelength (m).
    pub lambda_p: f64,
    /// Amplitude scale standing in for `1/hbar`; 1 in normalized units.
    pub hbar_scale: f64,
}

impl DipoleSpec {
    pub fn new(mu_eg: [f64; 3], lambda_c: f64, lambda_p: f64, hbar_scale: f64) -> Result<Self> {
        let d = Self { mu_eg, lambda_c, lambda_p, hbar_scale };
        d.validate()?;
        Ok(d)
    }

    /// 52D_{5/2} -> 53P_{3/2} at 5 GHz: `mu_eg = [0, 1785.916 q a_0, 0]`.
    /// Readout wavelengths are the usual Cs ladder (852 nm probe, 510 nm coupling).
    pub fn standard() -> Self {
        Self {
            mu_eg: [0.0, 1785.916 * ELEMENTARY_CHARGE * BOHR_RADIUS, 0.0],
            lambda_c: 510e-9,
            lambda_p: 852e-9,
            hbar_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu_eg.iter().all(|v| v.is_finite()) || self.mu().norm() == 0.0 {
            return Err(Error::InvalidDipole(format!("mu_eg = {:?}", self.mu_eg)));
        }
        for (name, v) in
            [("lambda_c", self.lambda_c), ("lambda_p", self.lambda_p), ("hbar_scale", self.hbar_scale)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDipole(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> Vector3<f64> {
        Vector3::from(self.mu_eg)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { mu_eg: self.mu_eg.map(|v| v * c), ..self.clone() }
    }
}

/// Unit propagation direction `[sin(theta), 0, cos(theta)]`.
pub fn propagation_direction(theta: f64) -> Vector3<f64> {
    Vector3::new(theta.sin(), 0.0, theta.cos())
}

/// Polarization-averaged projection gain
/// `eta(theta) = (|mu|^2 - (mu . k(theta))^2) / 2`.
pub fn polarization_gain(theta: f64, dipole: &DipoleSpec) -> f64 {
    let mu = dipole.mu();
    let proj = mu.dot(&propagation_direction(theta));
    (0.5 * (mu.norm_squared() - proj * proj)).max(0.0)
}

/// Orthonormal basis `{e1, e2}` of the plane orthogonal to `k(theta)`,
/// with `e1 = y` and `e2 = k x e1`.
pub fn transverse_basis(theta: f64) -> (Vector3<f64>, Vector3<f64>) {
    let e1 = Vector3::y();
    let e2 = propagation_direction(theta).cross(&e1);
    (e1, e2)
}

/// Random polarization `cos(psi) e1 + sin(psi) e2`, `psi ~ U[0, 2 pi)`.
pub fn sample_polarization<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> Vector3<f64> {
    let psi = rng.random::<f64>() * 2.0 * PI;
    let (e1, e2) = transverse_basis(theta);
    e1 * psi.cos() + e2 * psi.sin()
}

/// Projections `mu . e1`, `mu . e2`, so that `mu . eps = a cos(psi) + b sin(psi)`.
pub(crate) fn projection_coefficients(theta: f64, dipole: &DipoleSpec) -> (f64, f64) {
    let (e1, e2) = transverse_basis(theta);
    let mu = dipole.mu();
    (mu.dot(&e1), mu.dot(&e2))
}

/// Autler-Townes splitting `Delta f = (lambda_c / lambda_p) Omega / (2 pi)` in Hz.
pub fn rabi_to_at_split(omega: f64, dipole: &DipoleSpec) -> Result<f64> {
    if omega.is_nan() || omega < 0.0 {
        return Err(Error::Negative(omega));
    }
    Ok(dipole.lambda_c / dipole.lambda_p * omega / (2.0 * PI))
}

/// Inverse of [`rabi_to_at_split`].
pub fn at_split_to_rabi(delta_f: f64, dipole: &DipoleSpec) -> Result<f64> {
    if delta_f.is_nan() || delta_f < 0.0 {
        return Err(Error::Negative(delta_f));
    }
    Ok(2.0 * PI * delta_f * dipole.lambda_p / dipole.lambda_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_dipole(mu: [f64; 3]) -> DipoleSpec {
        DipoleSpec::new(mu, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn direction_values() {
        assert_eq!(propagation_direction(0.0), Vector3::new(0.0, 0.0, 1.0));
        let k = propagation_direction(PI / 6.0);
        assert!((k - Vector3::new(0.5, 0.0, 3f64.sqrt() / 2.0)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = (rng.random::<f64>() - 0.5) * PI;
            assert!((propagation_direction(t).norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gain_for_y_dipole_is_constant() {
        let d = DipoleSpec::standard();
        let half = 0.5 * d.mu().norm_squared();
        for deg in [-80.0_f64, -15.0, 0.0, 3.0, 45.0] {
            assert_eq!(polarization_gain(deg.to_radians(), &d), half);
        }
    }

    #[test]
    fn gain_vanishes_along_propagation() {
        let t = 0.4;
        let k = propagation_direction(t);
        let d = unit_dipole([k.x * 2.0, k.y * 2.0, k.z * 2.0]);
        assert!(polarization_gain(t, &d) < 1e-15);
    }

    #[test]
    fn gain_diagonal_dipole() {
        let s = 1.0 / 2f64.sqrt();
        let d = unit_dipole([s, s, 0.0]);
        // theta -> pi/2 puts k along x
        assert!((polarization_gain(PI / 2.0, &d) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gain_is_sign_invariant() {
        let d = unit_dipole([0.3, -0.7, 0.2]);
        let neg = d.scaled(-1.0);
        for t in [-1.0, 0.0, 0.5] {
            assert_eq!(polarization_gain(t, &d), polarization_gain(t, &neg));
        }
    }

    #[test]
    fn polarization_is_transverse_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..1000 {
            let t = (i as f64 / 1000.0 - 0.5) * 3.0;
            let e = sample_polarization(t, &mut rng);
            assert!(e.dot(&propagation_direction(t)).abs() < 1e-12);
            assert!((e.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polarization_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 0.3;
        let n = 100_000;
        let mut mean = Vector3::zeros();
        let mut second = nalgebra::Matrix3::zeros();
        for _ in 0..n {
            let e = sample_polarization(t, &mut rng);
            mean += e;
            second += e * e.transpose();
        }
        mean /= n as f64;
        second /= n as f64;
        assert!(mean.norm() < 0.02);
        let k = propagation_direction(t);
        let expected = 0.5 * (nalgebra::Matrix3::identity() - k * k.transpose());
        assert!((second - expected).norm() < 0.02);
    }

    #[test]
    fn at_split_conversion() {
        let d = unit_dipole([0.0, 1.0, 0.0]);
        assert_eq!(rabi_to_at_split(0.0, &d).unwrap(), 0.0);
        assert!((rabi_to_at_split(2.0 * PI, &d).unwrap() - 1.0).abs() < 1e-15);
        assert!(rabi_to_at_split(-1.0, &d).is_err());
        assert!(at_split_to_rabi(-1.0, &d).is_err());
        let cs = DipoleSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let omega = rng.random::<f64>() * 1e8;
            let back = at_split_to_rabi(rabi_to_at_split(omega, &cs).unwrap(), &cs).unwrap();
            assert!((back - omega).abs() <= 1e-14 * omega);
        }
    }

    #[test]
    fn rejects_zero_dipole() {
        assert!(DipoleSpec::new([0.0; 3], 1.0, 1.0, 1.0).is_err());
        assert!(DipoleSpec::new([0.0, 1.0, 0.0], 1.0, 1.0, 0.0).is_err());
    }
}
