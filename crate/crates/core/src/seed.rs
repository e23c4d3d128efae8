//! Per-purpose seed derivation.
//!
//! Every random stream in a run is derived from one master seed and a fixed
//! role tag, e.g. `derive(master, "split")` or `derive_indexed(master, "interrogate", 17)`.
//! Derivation is FNV-1a over the tag followed by a SplitMix64 finalizer, so
//! it is stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream named `tag` under `master`.
pub fn derive(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a(tag.as_bytes()))
}

/// Seed for the `index`-th member of a family of streams (per sample, per shadow, ...).
pub fn derive_indexed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive(master, tag) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
