//! Waveform synthesis, FIR filtering and the jittered sampling model.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Modulation {
    Qpsk,
    /// 4+12 APSK with outer/inner radius ratio `ring_ratio`.
    Apsk16 { ring_ratio: f64 },
}

impl Modulation {
    /// Unit-average-energy constellation points.
    pub fn constellation(&self) -> Vec<Complex64> {
        match *self {
            Modulation::Qpsk => (0..4)
                .map(|i| Complex64::from_polar(1.0, PI / 4.0 + i as f64 * PI / 2.0))
                .collect(),
            Modulation::Apsk16 { ring_ratio } => {
                let r1 = (16.0 / (4.0 + 12.0 * ring_ratio * ring_ratio)).sqrt();
                let r2 = ring_ratio * r1;
                let inner = (0..4).map(|i| Complex64::from_polar(r1, PI / 4.0 + i as f64 * PI / 2.0));
                let outer = (0..12).map(|i| Complex64::from_polar(r2, PI / 12.0 + i as f64 * PI / 6.0));
                inner.chain(outer).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformSpec {
    pub modulation: Modulation,
    /// Samples per symbol.
    pub sps: usize,
    pub rolloff: f64,
    /// Root-raised-cosine length in symbols.
    pub span: usize,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        WaveformSpec { modulation: Modulation::Qpsk, sps: 8, rolloff: 0.25, span: 8 }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sps < 2 {
            return Err(Error::Config("oversampling must be at least 2".into()));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::Config(format!("rolloff must be in (0,1], got {}", self.rolloff)));
        }
        if self.span == 0 || self.span % 2 == 1 {
            return Err(Error::Config("pulse span must be a positive even number of symbols".into()));
        }
        Ok(())
    }

    pub fn pulse(&self) -> Vec<f64> {
        rrc(self.sps, self.rolloff, self.span)
    }
}

/// Root-raised-cosine taps normalised to unit energy, `span * sps + 1` long.
pub fn rrc(sps: usize, rolloff: f64, span: usize) -> Vec<f64> {
    let half = (span * sps / 2) as isize;
    let b = rolloff;
    let mut h: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let e = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    h.iter_mut().for_each(|x| *x /= e);
    h
}

/// Linear-phase FIR low-pass. `cutoff` is in multiples of the symbol rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub taps: usize,
    pub cutoff: f64,
}

impl FilterSpec {
    pub fn validate(&self, sps: usize) -> Result<()> {
        if self.taps == 0 || self.taps.is_multiple_of(2) {
            return Err(Error::Config("filter length must be odd".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff < sps as f64 / 2.0) {
            return Err(Error::Config(format!("filter cutoff {} outside (0, sps/2)", self.cutoff)));
        }
        Ok(())
    }

    pub fn design(&self, sps: usize) -> Vec<f64> {
        lowpass(self.taps, self.cutoff / sps as f64)
    }
}

/// Hamming-windowed sinc with unit DC gain; `cutoff` in cycles per sample.
pub fn lowpass(taps: usize, cutoff: f64) -> Vec<f64> {
    let c = (taps as f64 - 1.0) / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let n = i as f64 - c;
            let x = 2.0 * cutoff * n;
            let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            let w = if taps == 1 { 1.0 } else { 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps as f64 - 1.0)).cos() };
            2.0 * cutoff * sinc * w
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= s);
    h
}

/// Centred convolution with an odd-length real filter; output has the input's
/// length and zero padding is assumed outside.
pub fn filter_same(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let n = x.len() as isize;
    let c = (h.len() / 2) as isize;
    (0..n)
        .map(|i| {
            let lo = (i + c - n + 1).max(0);
            let hi = (i + c).min(h.len() as isize - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in lo..=hi {
                acc += x[(i + c - k) as usize] * h[k as usize];
            }
            acc
        })
        .collect()
}

/// Symbols upsampled and shaped; the peak of symbol `k` sits at sample `k * sps`.
pub fn shape(symbols: &[Complex64], spec: &WaveformSpec) -> Vec<Complex64> {
    let mut up = vec![Complex64::new(0.0, 0.0); symbols.len() * spec.sps];
    for (k, s) in symbols.iter().enumerate() {
        up[k * spec.sps] = *s;
    }
    filter_same(&up, &spec.pulse())
}

pub fn random_symbols<R: Rng + ?Sized>(n: usize, modulation: &Modulation, rng: &mut R) -> Vec<Complex64> {
    let points = modulation.constellation();
    (0..n).map(|_| points[rng.random_range(0..points.len())]).collect()
}

/// Spectral derivative with respect to the sample index.
pub fn derivative(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n < 2 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    let mut planner = FftPlanner::new();
    let mut buf = x.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        *v *= Complex64::new(0.0, 2.0 * PI * f / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter_mut().for_each(|v| *v /= n as f64);
    buf
}

/// Draws used by the jittered sampler: per-sample timing error (in sample
/// periods, unit variance before scaling) and additive sampling noise.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterDraws {
    pub timing: Vec<f64>,
    pub noise: Vec<Complex64>,
}

impl JitterDraws {
    pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let timing = (0..n).map(|_| rng::normal(rng)).collect();
        let noise = (0..n).map(|_| rng::complex_normal(rng, 1.0)).collect();
        JitterDraws { timing, noise }
    }
}

/// First-order jittered sampling `x + e * dx/dn + eta` with
/// `e ~ N(0, sigma_j^2)` in sample periods and `E|eta|^2 = noise_var`.
pub fn jitter_apply(x: &[Complex64], sigma_j: f64, noise_var: f64, draws: &JitterDraws) -> Vec<Complex64> {
    let dx = if sigma_j > 0.0 { derivative(x) } else { vec![Complex64::new(0.0, 0.0); x.len()] };
    let ns = noise_var.sqrt();
    x.iter()
        .zip(&dx)
        .zip(draws.timing.iter().zip(&draws.noise))
        .map(|((xi, di), (e, eta))| xi + di * (sigma_j * e) + eta * ns)
        .collect()
}

pub fn jitter_sample<R: Rng + ?Sized>(x: &[Complex64], sigma_j: f64, noise_var: f64, rng: &mut R) -> Vec<Complex64> {
    jitter_apply(x, sigma_j, noise_var, &JitterDraws::draw(x.len(), rng))
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rrc_cascade_is_nyquist() {
        let h = rrc(8, 0.25, 8);
        assert!((h.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let full: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let rc = filter_same(&full, &h);
        let c = h.len() / 2;
        assert!((rc[c].re - 1.0).abs() < 1e-9);
        for k in 1..4 {
            assert!(rc[c + 8 * k].norm() < 5e-3, "isi at {k}: {}", rc[c + 8 * k]);
        }
    }

    #[test]
    fn lowpass_unit_dc() {
        let h = lowpass(33, 0.1);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.len(), 33);
        for i in 0..16 {
            assert!((h[i] - h[32 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn filter_same_identity_and_shift() {
        let x: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        assert_eq!(filter_same(&x, &[1.0]), x);
        let y = filter_same(&x, &[0.0, 0.0, 1.0]);
        assert_eq!(y[1], x[0]);
        assert_eq!(y[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn constellations_have_unit_energy() {
        for m in [Modulation::Qpsk, Modulation::Apsk16 { ring_ratio: 2.7 }] {
            let p = m.constellation();
            assert!((mean_power(&p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_bin_tone() {
        let n = 64;
        let w = 2.0 * PI * 3.0 / n as f64;
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, w * i as f64)).collect();
        let d = derivative(&x);
        for (xi, di) in x.iter().zip(&d) {
            assert!((di - xi * Complex64::new(0.0, w)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_jitter_is_identity() {
        let x: Vec<Complex64> = (0..32).map(|i| Complex64::new((i as f64).sin(), 0.5)).collect();
        let mut r = rng::stream(1, 0);
        assert_eq!(jitter_sample(&x, 0.0, 0.0, &mut r), x);
        let c = vec![Complex64::new(0.3, -0.2); 32];
        let y = jitter_sample(&c, 0.2, 0.0, &mut r);
        for v in y {
            assert!((v - c[0]).norm() < 1e-12);
        }
    }
}
