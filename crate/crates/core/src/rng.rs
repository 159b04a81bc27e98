//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Experiments derive
//! one independent substream per cell from the base seed and a list of
//! integer tags, so that results do not depend on execution order or on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator seeded directly from `seed`.
pub fn seeded(seed: u64) -> Rng {
    substream(seed, &[])
}

/// Independent substream identified by `(seed, tags)`.
pub fn substream(seed: u64, tags: &[u64]) -> Rng {
    let mut state = seed ^ 0x6A09_E667_F3BC_C908;
    for &t in tags {
        state = splitmix64(&mut state) ^ t.wrapping_mul(0xA24B_AED4_963E_E407);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
