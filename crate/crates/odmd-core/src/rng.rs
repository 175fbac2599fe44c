//! Deterministic, splittable random streams for data generation.
//!
//! Bit-exact benchmark regeneration requires an RNG whose algorithm is fully
//! pinned down, so this module implements a counter-based generator instead
//! of pulling in an external crate whose output could change between
//! versions. The construction is SplitMix64 (Steele, Lea & Flood):
//!
//! * the state is a 64-bit counter advanced by the golden-ratio increment
//!   `0x9E3779B97F4A7C15` per draw;
//! * each output is `mix64` of the advanced counter, where `mix64` is the
//!   variant-13 finalizer
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
//!
//! Stream `k` of a base seed starts from
//! `mix64(mix64(base_seed) ^ k.wrapping_mul(0x9E3779B97F4A7C15))`,
//! which makes `(seed, k)` streams reproducible in any language from this
//! comment alone.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent 64-bit seed from a base seed and a tag. Used to give
/// sub-purposes (weight init, per-iteration batches, validation sets) their
/// own streams.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    mix64(mix64(base) ^ tag.wrapping_mul(GOLDEN_GAMMA))
}

/// One independent random stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
    gaussian_spare: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng::for_stream(seed, 0)
    }

    /// Stream `k` of `base_seed`; streams with distinct `k` are independent.
    pub fn for_stream(base_seed: u64, k: u64) -> Self {
        StreamRng {
            state: derive_seed(base_seed, k),
            gaussian_spare: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`. Degenerate bounds (`lo == hi`) return `lo`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Rademacher draw: -1.0 or +1.0 with equal probability.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// `true` with probability `p`.
    #[inline]
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform index in `0..n`. Computed as `next_u64() % n`; the modulo bias
    /// is below 2^-53 for every `n` used here.
    #[inline]
    pub fn uniform_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw via Box-Muller. Draws two uniforms and caches the
    /// second variate, so a stream used only through this method consumes an
    /// even number of raw outputs.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(spare) = self.gaussian_spare.take() {
            return spare;
        }
        // 1 - u in (0, 1] keeps ln away from zero.
        let r = (-2.0 * (1.0 - self.next_f64()).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.next_f64();
        self.gaussian_spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
