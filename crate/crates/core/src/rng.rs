//! Deterministic random-number streams.
//!
//! All randomness in this crate flows through [`derive`], which maps a base
//! seed plus a purpose tag and a short list of indices (round, client, …)
//! onto an independent ChaCha8 stream. Because every consumer derives its own
//! stream, iteration order and thread scheduling cannot change the results:
//! client 3's shuffle in round 5 is the same whether clients run in sequence
//! or in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a deterministic RNG from a base seed, a purpose tag, and indices.
///
/// The tag separates streams used for different jobs ("init", "shuffle",
/// "partition", …) and the indices separate instances of the same job
/// (per round, per client). Mixing uses an FNV-1a-style pass over the tag
/// bytes and indices, then splits the resulting 64-bit value into a 256-bit
/// ChaCha seed via SplitMix64 so seeds differing in one bit give unrelated
/// streams.
pub fn derive(seed: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for &b in tag.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for &ix in indices {
        // A fixed separator keeps [1, 2] distinct from [12] and [] from [0].
        h ^= 0x9e37_79b9_7f4a_7c15;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        h ^= ix;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = h;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(&mut state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// One step of the SplitMix64 sequence, advancing `x` and returning the output.
fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
