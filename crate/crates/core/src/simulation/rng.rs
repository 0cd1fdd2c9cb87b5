//! Deterministic random streams.
//!
//! A master seed is expanded into a ChaCha key; every `(cell, replicate)` pair
//! gets its own ChaCha stream id. Streams never overlap, so a replicate draws
//! the same numbers whichever worker thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
    key: [u8; 32],
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        let mut state = master;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SeedStreams { master, key }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, cell: u32, replicate: u32) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream((u64::from(cell) << 32) | u64::from(replicate));
        rng
    }
}
