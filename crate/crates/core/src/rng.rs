//! Seeded random streams.
//!
//! Every stochastic component receives its own generator derived from the
//! global seed and a stream name, so changing how one component consumes
//! randomness never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Well-known stream names.
pub mod streams {
    pub const ENV: &str = "env";
    pub const POLICY_INIT: &str = "policy-init";
    pub const POLICY_SAMPLING: &str = "policy-sampling";
    pub const LOSS_LINKS: &str = "loss-links";
    pub const BASELINE_PLACEMENT: &str = "baseline-placement";
    pub const PREDICTOR: &str = "predictor";
    pub const DI_DATA: &str = "di-data";
    pub const DI_TRAIN: &str = "di-train";
    pub const SYNTH: &str = "synthetic-crimes";
    pub const POLICY_UPDATE: &str = "policy-update";
}

/// FNV-1a over the stream name, mixed with the seed through splitmix64.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, name: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, name))
}

/// Sub-stream indexed by an integer (trial number, sweep cell, ...).
pub fn indexed(seed: u64, name: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(splitmix64(
        derive_seed(seed, name) ^ splitmix64(index.wrapping_add(1)),
    ))
}
