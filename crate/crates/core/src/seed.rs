//! Labeled sub-seeds derived from one global seed.
//!
//! Each stochastic component draws from its own stream, so adding a component
//! never shifts the random numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian seed bytes followed by the label.
pub fn sub_seed(global: u64, label: &str) -> u64 {
    global
        .to_le_bytes()
        .iter()
        .chain(label.as_bytes())
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub fn component_rng(global: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(global, label))
}
