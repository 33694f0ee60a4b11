//! Deterministic RNG stream derivation.
//!
//! Every random draw in the lab flows from a named stream derived from a root
//! seed plus a list of integer coordinates (speaker id, utterance index,
//! training step, ...). Streams are independent ChaCha8 generators, so
//! regenerating any object never depends on draw order elsewhere.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche behavior for seed mixing.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a root seed with a coordinate path into a single stream seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(root ^ 0x6c62_272e_07bb_0142);
    for &w in path {
        state = splitmix64(state ^ w.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    state
}

/// Independent generator for the stream named by `path` under `root`.
pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// Stable integer tags for the stream namespaces used across the lab.
/// Keeping them in one place guarantees two subsystems never collide.
pub mod tag {
    pub const SPEAKER: u64 = 1;
    pub const SCRIPT: u64 = 2;
    pub const MIXTURE: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const DATASET: u64 = 5;
    pub const PARAM_INIT: u64 = 6;
    pub const TRAIN_STEP: u64 = 7;
    pub const ENROLLMENT: u64 = 8;
    pub const TRIALS: u64 = 9;
    pub const GRAD_CHECK: u64 = 10;
}
