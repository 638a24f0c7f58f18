//! Counter-based generator.
//!
//! Every value is a pure function of `(seed, stream, index)`:
//!
//! ```text
//! key   = mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019))
//! value = mix64(key + (index + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer and all arithmetic wraps
//! modulo 2^64. Monte-Carlo drivers use the chunk seed as `seed` and the
//! sample position inside the chunk as `stream`, so a sample's draws never
//! depend on how chunks are scheduled.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_OFFSET: u64 = 0x632B_E59B_D9B4_E019;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    index: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: mix64(mix64(seed) ^ mix64(stream.wrapping_add(STREAM_OFFSET))),
            index: 0,
        }
    }

    /// Value at an arbitrary counter position without advancing.
    pub fn value_at(seed: u64, stream: u64, index: u64) -> u64 {
        let mut r = Self::new(seed, stream);
        r.index = index;
        r.next_u64()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.index = self.index.wrapping_add(1);
        mix64(self.key.wrapping_add(self.index.wrapping_mul(GOLDEN)))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`; safe for inverse CDFs.
    #[inline]
    pub fn open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}
