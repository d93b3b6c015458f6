//! Seed derivation. Every trial gets an independent ChaCha stream keyed by a
//! 64-bit seed mixed from the master seed and the trial coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of words into one seed: `h <- mix64(h ^ mix64(word))`.
pub fn mix_seeds(words: &[u64]) -> u64 {
    words.iter().fold(0, |h, &w| mix64(h ^ mix64(w)))
}

/// How trial seeds depend on the sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedScheme {
    /// `mix(master, trial)`: every axis value sees the same scenarios and draws.
    #[default]
    Common,
    /// `mix(master, axis_index, trial)`: independent draws per axis value.
    PerAxisValue,
}

impl SeedScheme {
    pub fn trial_seed(self, master: u64, axis_index: usize, trial: usize) -> u64 {
        match self {
            Self::Common => mix_seeds(&[master, trial as u64]),
            Self::PerAxisValue => mix_seeds(&[master, axis_index as u64, trial as u64]),
        }
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
