//! Deterministic random number generation for noise injection.
//!
//! All randomness flows from a 64-bit seed through SplitMix64, a splittable
//! generator with a one-line state transition, so every simulation result is
//! reproducible from its config. Gaussian samples come from the Box-Muller
//! transform. Streams are bit-exact across runs on a given platform; across
//! platforms they agree up to the libm implementations of `ln`/`cos`.

/// SplitMix64 pseudo-random generator (Steele, Lea & Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    cached_normal: Option<f64>,
}

/// Weyl-sequence increment (golden-ratio constant) used by SplitMix64.
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    pub fn next_sym(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Standard normal sample via Box-Muller; pairs are generated together
    /// and the second one cached.
    pub fn next_standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Derive an independent stream seed from a base seed and an index
/// (trial number, grid position, ...).
///
/// The mixing function is the SplitMix64 finalizer applied to
/// `seed ^ (index + 1) · γ`, so derived streams are decorrelated and the
/// derivation is associative enough to nest (sweep row → pose point → trial).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}
