//! Named random streams fanned out from a single experiment seed.
//!
//! Every consumer of randomness derives its own generator from
//! `(seed, stream, a, b)` so that changing how many draws one component
//! makes never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Timestamps = 1,
    Init = 2,
    Shuffle = 3,
    Negatives = 4,
    EvalTest = 5,
    EvalValidation = 6,
    Synth = 7,
    GradCheck = 8,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    h = splitmix64(h ^ a.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    splitmix64(h ^ b.wrapping_mul(0x8EBC_6AF0_9C88_C6E3))
}

pub fn stream(seed: u64, stream: Stream, a: u64, b: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, a, b))
}
