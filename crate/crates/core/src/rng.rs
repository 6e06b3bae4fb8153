//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`StreamRng`] obtained
//! through [`substream`]. A substream is keyed by the run seed plus a path of
//! indices, e.g. `(seed, [trial, draw])`; the key is folded through SplitMix64
//! and used to seed a ChaCha8 generator. Work scheduled on any number of
//! threads therefore sees the same random numbers for the same index path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the 64-bit key for `(seed, path...)`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &idx| {
        splitmix64(acc ^ splitmix64(idx.wrapping_add(1)))
    })
}

pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
