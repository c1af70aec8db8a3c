//! Deterministic seed-stream derivation.
//!
//! Every consumer of randomness (model init, batch shuffling, DP noise,
//! query-subset sampling) gets its own stream derived from one base seed, so
//! freezing or replaying a single source never disturbs the others. The
//! derivation is `splitmix64(base ^ splitmix64(stream))`, documented here so
//! any recorded row can be reproduced in isolation.

/// Well-known stream tags used by the experiment runner.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const TARGET: u64 = 2;
    pub const EXPLAINER: u64 = 3;
    pub const EXPLAINER_DP: u64 = 4;
    pub const AUTOENCODER: u64 = 5;
    pub const POOL: u64 = 6;
    pub const SUBSET: u64 = 7;
    pub const THREAT: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const DP_NOISE: u64 = 10;
}

/// Derive an independent stream seed from a base seed.
pub fn derive(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}
