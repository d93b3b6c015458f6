//! Lens-assisted, magnitude-only Rydberg atomic receiver: reception model and
//! multi-user angle-of-arrival recovery.
//!
//! The pipeline is
//! [`optics`] (lens focusing) → [`atomic`] (dipole projection) →
//! [`dictionary`] (power atoms) → [`measurement`] (snapshot simulation) →
//! [`nnlasso`] / [`sic`] (recovery) → [`harness`] (Monte-Carlo experiments).

pub mod atomic;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod measurement;
pub mod nnlasso;
pub mod optics;
pub mod receiver;
pub mod sic;

pub use error::{Error, Result};

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
