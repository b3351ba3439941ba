//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream, keyed by the
//! user seed, a [`Stream`] purpose and an index. Results therefore do not
//! depend on the order in which components are evaluated.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    Pool = 1,
    InitialPoints = 2,
    Enrichment = 3,
    Upgrade = 4,
    Measurement = 5,
    VoiPool = 6,
    KrigingStarts = 7,
    Sharing = 8,
    Repetition = 9,
    Synthetic = 10,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) ^ index);
    rng
}

/// A child seed for `stream`/`index`, suitable for APIs that take a plain seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    stream_rng(seed, stream, index).next_u64()
}

/// Uniform draw strictly inside (0, 1).
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n` (Lemire's multiply-shift, negligible bias for our n).
pub fn index_below(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}
