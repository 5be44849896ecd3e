//! Deterministic splitmix64 generator.
//!
//! Every stochastic step in the crate (weight init, offset synthesis, patch
//! sampling) draws from this generator so that a seed fully determines a run
//! on any platform. Generators are single-owner; parallel work derives child
//! seeds with [`Rng::next_u64`] and builds its own instance.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid uniform range: lo ({lo}) must be strictly below hi ({hi})")]
pub struct InvalidRange {
    pub lo: f64,
    pub hi: f64,
}

/// splitmix64 state. Copy is deliberately not derived: accidental forks of the
/// stream are almost always a bug.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Advances the state by the splitmix64 recurrence and returns the mixed
    /// output. The output sequence is a pure function of the seed.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[lo, hi)` using the bit-specified mapping
    /// `lo + (hi - lo) * (u64 >> 11) / 2^53`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, InvalidRange> {
        if lo >= hi {
            return Err(InvalidRange { lo, hi });
        }
        let frac = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        Ok(lo + (hi - lo) * frac)
    }

    /// Uniform draw over a range known to be valid at the call site.
    pub(crate) fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform(lo, hi).expect("caller guarantees lo < hi")
    }

    /// Integer draw in `[0, n)` by rejection-free modulo; fine for the small
    /// `n` used in patch/index sampling (bias < 2^-40 for n < 2^24).
    pub fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Derives an independent child generator, advancing this one once.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }
}
