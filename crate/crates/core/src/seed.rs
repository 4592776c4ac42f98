//! Deterministic seed splitting.
//!
//! Every random stream in the crate is derived from one master seed with
//! `derive_seed(master, stream)`, a SplitMix64 finaliser applied to
//! `master ^ splitmix(stream)`. Work split across threads uses the same rule
//! so parallel and serial runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream identifiers used by the crate.
pub mod stream {
    pub const MH_CHAIN: u64 = 1;
    pub const PREDICT_DRAWS: u64 = 2;
    pub const EMULATE_BASE: u64 = 1 << 32;
    pub const DATA: u64 = 3;
    pub const TEST_DATA: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const OPTIMIZER: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const REPLICATE_BASE: u64 = 1 << 40;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` from `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// RNG used for all sampling in the crate.
pub type Rng = ChaCha20Rng;

pub fn rng_from(master: u64, stream: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, stream))
}
