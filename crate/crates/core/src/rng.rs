//! Reproducible random streams.
//!
//! Every random consumer in the crate draws from a ChaCha8 stream whose key is
//! derived from a root seed plus a path of integer labels (replicate index,
//! grid point, chunk, ...). Streams with different paths are independent, and
//! a stream's output never depends on how work is scheduled across threads.

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

/// Mixes a seed with a path of labels into a single 64-bit key.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &label in path {
        state ^= label.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
        acc ^= splitmix64(&mut state);
        state = acc;
    }
    acc
}

/// Random stream for `seed` split along `path`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
