//! Shared fixtures for the benchmarks.

use dataplace_core::{gen_random, GenParams, Instance};

/// A unit-cache instance with default ranges.
pub fn fixture(n: usize, k: usize, seed: u64) -> Instance {
    gen_random(seed, &GenParams::unit(n, k)).expect("valid sizes")
}

/// Same with every placement fee set to zero.
pub fn fee_free(n: usize, k: usize, seed: u64) -> Instance {
    let params = GenParams {
        fee_range: (0.0, 0.0),
        ..GenParams::unit(n, k)
    };
    gen_random(seed, &params).expect("valid sizes")
}
