//! Counter-based seed splitting.
//!
//! One master seed fans out into independent ChaCha streams keyed by a
//! purpose tag and up to a few integer coordinates (round, client, ...).
//! Streams never depend on the order in which they are created, so work
//! keyed this way can run on any thread layout and stay bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags for the streams derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Objective = 1,
    Corruption = 2,
    Sampling = 3,
    Client = 4,
    Attack = 5,
    Probe = 6,
    Instance = 7,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit key from the master seed, a tag and coordinates.
pub fn derive_seed(master: u64, tag: Stream, coords: &[u64]) -> u64 {
    let mut state = master;
    let mut acc = splitmix64(&mut state) ^ (tag as u64).wrapping_mul(0xd6e8_feb8_6659_fd93);
    for (i, &c) in coords.iter().enumerate() {
        state ^= acc.rotate_left(17) ^ c.wrapping_add(i as u64 + 1).wrapping_mul(0xa076_1d64_78bd_642f);
        acc = splitmix64(&mut state);
    }
    acc
}

pub fn stream(master: u64, tag: Stream, coords: &[u64]) -> SimRng {
    let mut state = derive_seed(master, tag, coords);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
