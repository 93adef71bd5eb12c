//! Seeded random streams.
//!
//! Every random decision is drawn from a stream keyed by a base seed and a
//! short path of tags (round, head, purpose), so results do not depend on
//! the order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags used as the first path element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Select = 2,
    Hypotheses = 3,
    Oracle = 4,
    Generate = 5,
    Noise = 6,
    Trial = 7,
    TieBreak = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `seed`.
pub fn derive_seed(seed: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn stream(seed: u64, stream: Stream, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, stream, path))
}
