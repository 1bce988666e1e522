//! Seed derivation for independent random streams.
//!
//! Every stochastic stream is identified by a base seed and a short path of
//! indices (grid point, burst, ...). The mapping `(base, path) -> stream` is
//! injective: the ChaCha key holds the base and up to three path components
//! and the stream id holds the path length.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const MAX_PATH: usize = 3;

/// Independent generator for `(base, path)`. Panics if `path` has more than
/// [`MAX_PATH`] components.
pub fn stream(base: u64, path: &[u64]) -> SimRng {
    assert!(path.len() <= MAX_PATH, "seed path too long: {}", path.len());
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base.to_le_bytes());
    for (k, p) in path.iter().enumerate() {
        key[8 * (k + 1)..8 * (k + 2)].copy_from_slice(&p.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path.len() as u64);
    rng
}
