//! Counter-based random streams.
//!
//! Every random draw in a simulation comes from a generator keyed by the run
//! seed plus a path of counters (cell, replicate, purpose), so results do not
//! depend on which worker runs which replicate or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes, used as the last path element.
pub mod purpose {
    pub const VALIDATION: u64 = 1;
    pub const MAIN: u64 = 2;
    pub const PILOT: u64 = 3;
    pub const TEST: u64 = 4;
    pub const FOLDS: u64 = 5;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `seed` and the counter path.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut state = seed;
    let mut h = splitmix64(&mut state);
    for &p in path {
        state ^= h.rotate_left(17) ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        h = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
