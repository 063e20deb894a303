//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`], a portable
//! generator whose output does not depend on platform or word size. Child
//! streams are derived from a base seed and a path of integer tags with
//! [`derive_seed`]: each tag is mixed into the running state with two rounds
//! of SplitMix64. Tags in use:
//!
//! * cross-validation: `[STREAM_SPLIT]` for the fold plan,
//!   `[STREAM_LDA_FIT, fold, note_type]` for topic model training
//! * fold-in inference: `[STREAM_LDA_INFER, fnv1a(patient_id)]` relative to
//!   the topic model's own seed, so a patient's topic vector does not depend
//!   on which other patients are scored alongside it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_LDA_FIT: u64 = 2;
pub const STREAM_LDA_INFER: u64 = 3;
pub const STREAM_SYNTH: u64 = 4;
pub const STREAM_PERMUTE: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` along `path`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |state, &tag| {
        splitmix64(state ^ splitmix64(tag))
    })
}

pub fn rng_from(base: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, path))
}

/// 64-bit FNV-1a, used to turn identifiers into stream tags.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
