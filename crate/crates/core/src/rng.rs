//! Seeded random streams.
//!
//! Every random consumer draws from a ChaCha8 stream selected by the user seed
//! and a fixed per-purpose stream id, so results do not depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::groups::GroupElement;

pub mod streams {
    pub const MC_INTEGRATE: u64 = 1;
    pub const CONFIGURATION: u64 = 2;
    pub const COCYCLE_CHECK: u64 = 3;
    pub const ALPHA_NORM: u64 = 4;
    pub const SAS_SCALAR: u64 = 5;
    pub const LEPAGE: u64 = 6;
    pub const NULL_AVERAGE: u64 = 7;
    pub const POINTWISE: u64 = 8;
    pub const TAIL: u64 = 9;
}

/// A generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a label.
pub fn child_seed(seed: u64, label: u64) -> u64 {
    splitmix(seed ^ splitmix(label.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

/// Child seed keyed by a group element.
pub fn element_seed(seed: u64, g: &GroupElement) -> u64 {
    g.coords().iter().fold(splitmix(seed), |acc, c| splitmix(acc ^ (*c as u64)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
