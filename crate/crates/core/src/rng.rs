//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the user seed and selected by
//! a 64-bit stream id, so trial `i` of an experiment always sees the same
//! numbers no matter which worker thread runs it.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{lit, Real};

pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circularly-symmetric complex Gaussian with per-component standard deviation `scale`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, scale: T) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(lit::<T>(re) * scale, lit::<T>(im) * scale)
}

/// Uniform phase on `(−π, π]`.
pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // random::<f64>() is in [0,1); map to (−π, π]
    std::f64::consts::PI - rng.random::<f64>() * std::f64::consts::TAU
}

/// Rayleigh draw with scale `sigma` (per-component standard deviation).
pub fn rayleigh<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    // 1 − U in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    sigma * (-2.0 * u.ln()).sqrt()
}
