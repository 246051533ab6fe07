//! Seeded pseudo-random number generation.
//!
//! Scenario resolution (parameter draws, initial states) must be portable
//! across implementations, so the generator is pinned to SplitMix64 with a
//! fixed 53-bit uniform mapping rather than delegated to a library whose
//! stream layout could change.

/// SplitMix64 generator. One 64-bit word of state; passes BigCrush.
///
/// The update is `s += 0x9E3779B97F4A7C15` followed by two xor-shift-multiply
/// finalization rounds. Identical seeds produce identical streams on every
/// platform.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1) using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
