//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by `(seed, purpose, index)`,
//! so results never depend on evaluation order or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep independent uses of one user seed from overlapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    RandomLight = 1,
    SceneSites = 2,
    SceneBumps = 3,
    SceneColors = 4,
    SceneNoise = 5,
    ObservationNoise = 6,
    GradCheck = 7,
    HeldOutLights = 8,
}

/// A generator whose entire output is a pure function of its address.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// `n` uniform draws in `[0, 1)` from the stream at `(seed, purpose, index)`.
pub fn uniforms<const N: usize>(seed: u64, purpose: Purpose, index: u64) -> [f64; N] {
    let mut rng = stream(seed, purpose, index);
    std::array::from_fn(|_| rng.random::<f64>())
}
