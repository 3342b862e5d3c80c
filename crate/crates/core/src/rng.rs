//! Portable pseudo-random streams.
//!
//! Everything seeded in this crate (projection hyperplanes, synthetic
//! corpora) draws from [`SplitMix64`] so that the same seed reproduces the
//! same bits on every platform and in other languages. Normal deviates use
//! the cosine branch of Box-Muller with `libm`, which is a pure software
//! implementation and does not depend on the platform math library.

/// SplitMix64 (Steele, Lea & Flood). Each call advances the state by the
/// golden-ratio increment and returns the mixed state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Uniform in `(0, 1]`, safe to pass to `ln`.
    fn next_f64_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53
    }

    /// Standard normal deviate. Consumes exactly two `u64` draws.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open_low();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift, slightly biased
    /// for huge bounds, which is fine for corpus generation).
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}
