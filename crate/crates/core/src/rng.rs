//! Seeded randomness shared by initialization, noise injection and the
//! synthetic corpora.
//!
//! Every stream is a ChaCha8 generator keyed by `seed_from_u64`. Uniform
//! reals take the top 53 bits of one `u64` draw; Gaussians come from the
//! Box–Muller transform over two such uniforms, using both outputs in
//! order (cos branch first).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SkdRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SkdRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[0, 1)` with 53 bits of resolution.
pub fn unit_f64(rng: &mut SkdRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[-scale, scale)`.
pub fn symmetric_uniform(rng: &mut SkdRng, scale: f64) -> f64 {
    scale * (2.0 * unit_f64(rng) - 1.0)
}

/// Standard-normal stream via Box–Muller.
pub struct Gaussian {
    rng: SkdRng,
    spare: Option<f64>,
}

impl Gaussian {
    pub fn new(seed: u64) -> Self {
        Gaussian {
            rng: seeded(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - unit_f64(&mut self.rng);
        let u2 = unit_f64(&mut self.rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Derives an independent stream seed from a base seed and a tag
/// (SplitMix64 finalizer over the combination).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
