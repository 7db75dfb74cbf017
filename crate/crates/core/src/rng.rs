//! Deterministic random substreams.
//!
//! Every trial draws from its own ChaCha8 stream whose key is derived from
//! the experiment seed and a path of integers (cell index, trial index, ...).
//! Streams for distinct paths are independent, so trials can run on any
//! thread in any order and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type TrialRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the generator for `seed` along `path`.
pub fn substream(seed: u64, path: &[u64]) -> TrialRng {
    let mut state = seed;
    // Fold the path into the state; the length is mixed in so that
    // [a] and [a, 0] never collide.
    for &step in path {
        state = splitmix64(&mut state) ^ step;
    }
    state ^= (path.len() as u64).rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
