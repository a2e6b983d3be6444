//! Counter-based random streams.
//!
//! A Monte Carlo trial `t` of an experiment seeded with `s` always draws from
//! `stream(s, t)`, independent of which worker executes it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use num_complex::Complex64;

pub type SimRng = ChaCha8Rng;

/// Independent stream `id` under the experiment seed `seed`.
pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Sub-stream derived from a stream id and a purpose tag, for experiments that
/// need several independent families of draws per trial.
pub fn substream(seed: u64, id: u64, tag: u64) -> SimRng {
    stream(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15), id)
}

/// Circularly-symmetric complex Gaussian with `E|z|^2 = var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
