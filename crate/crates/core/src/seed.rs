//! Named sub-seed derivation.
//!
//! Every random component takes its own seed derived from one root seed and a
//! component name, so adding a consumer never perturbs the streams of the
//! others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed for `name` from `root`.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    mix(root ^ fnv1a(name.as_bytes()))
}

/// Derive a sub-seed for the `index`-th instance of `name`.
pub fn derive_indexed(root: u64, name: &str, index: u64) -> u64 {
    mix(derive_seed(root, name) ^ mix(index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
