//! Counter-based deterministic random streams.
//!
//! A stream is a pure function of (key, position), so any draw can be
//! reproduced without replaying the ones before it, and a stream can be
//! split into an independent child keyed by (parent key, ordinal). Splitting
//! is what gives every particle / fork / sweep its own reproducible stream.

use rand::RngCore;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_TAG: u64 = 0xD6E8_FEB8_6659_FD93;

/// SplitMix64 finalizer: bijective avalanche over one 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    pos: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { key: mix64(seed ^ GAMMA), pos: 0 }
    }

    /// Independent child stream; distinct ordinals give unrelated keys.
    pub fn split(&self, ordinal: u64) -> RngStream {
        RngStream {
            key: mix64(self.key ^ mix64(ordinal.wrapping_mul(GAMMA) ^ SPLIT_TAG)),
            pos: 0,
        }
    }

    #[inline]
    pub fn next_u64_raw(&mut self) -> u64 {
        let x = mix64(self.key.wrapping_add(self.pos.wrapping_mul(GAMMA)).wrapping_add(GAMMA));
        self.pos += 1;
        x
    }

    /// Uniform in [0, 1), 53-bit mantissa.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) without modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64_raw();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_u64_raw()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
