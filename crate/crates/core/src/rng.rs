//! Seed derivation. Every random draw in the simulator comes from a ChaCha8
//! stream keyed by a seed derived from the master seed and a path of
//! integer labels, so work can be split across threads without changing
//! any value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels for the independent streams used inside one realization.
pub mod stream {
    pub const GEOMETRY: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const CSI: u64 = 3;
    pub const INIT: u64 = 4;
    pub const BASELINE: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `seed` together with each label in `path`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
