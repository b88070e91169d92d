//! Per-trial random streams.
//!
//! Trial `i` of a batch seeded with `s` uses ChaCha20 keyed by
//! `SeedableRng::seed_from_u64(s)` (a PCG32 expansion of `s` into the 256-bit
//! key) on stream number `i`, starting at word 0. The construction depends
//! only on `(s, i)`, so results do not change with worker count or platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type TrialRng = ChaCha20Rng;

pub fn derive_trial_rng(base_seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(trial_index);
    rng
}

/// Seed for a named sub-batch (calibration, H1 sweep, ...) of an experiment.
/// FNV-1a of the label, mixed into the base seed through SplitMix64.
pub fn derive_batch_seed(base_seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(base_seed ^ h)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
