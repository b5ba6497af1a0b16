//! Seed plumbing. Every stochastic stage draws from a ChaCha stream derived
//! from a named root seed plus a path of stream ids, so results never depend
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed with a path of stream identifiers.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &id| splitmix64(acc ^ splitmix64(id)))
}

pub fn stream(root: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, path))
}
