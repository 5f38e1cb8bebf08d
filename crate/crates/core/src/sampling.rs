//! Seeded random sampling.
//!
//! All sampled sites come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded via
//! `seed_from_u64`, which produces the same stream on every platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the unit sphere scaled by a length uniform in
/// `[min_len, max_len)`.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize, min_len: f64, max_len: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|t| t * t).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            let len = if max_len > min_len {
                rng.gen_range(min_len..max_len)
            } else {
                min_len
            };
            let s = len / r2.sqrt();
            return v.into_iter().map(|t| t * s).collect();
        }
    }
}

/// Uniform sample of `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}
