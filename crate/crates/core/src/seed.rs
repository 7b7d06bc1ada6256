//! Seed derivation.
//!
//! Every source of randomness in the pipeline draws from a ChaCha stream
//! seeded through a splitmix64 chain rooted at the master seed. Each stage
//! owns a fixed tag so that, for example, changing the number of evaluation
//! runs never perturbs the stream used for view generation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags for [`derive`]. The values are arbitrary but frozen:
/// changing them changes every derived stream.
pub mod stage {
    pub const MULTIVIEW: u64 = 0x01;
    pub const NEGATIVES: u64 = 0x02;
    pub const FACTOR_INIT: u64 = 0x03;
    pub const SHUFFLE: u64 = 0x04;
    pub const KMEANS: u64 = 0x05;
    pub const ASSIGN: u64 = 0x06;
    pub const EVAL: u64 = 0x07;
}

/// One round of splitmix64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stage seed from the master seed.
pub fn derive(master: u64, stage: u64) -> u64 {
    splitmix64(master ^ splitmix64(stage))
}

/// Derive an indexed seed within a stage (per slice, per epoch, per run, ...).
pub fn derive_indexed(master: u64, stage: u64, index: u64) -> u64 {
    splitmix64(derive(master, stage) ^ splitmix64(index.wrapping_add(1)))
}

/// Deterministic RNG for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fresh seed from OS entropy, for runs without an explicit seed.
pub fn entropy_seed() -> u64 {
    rand::random()
}
