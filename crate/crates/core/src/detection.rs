//! Onboard uplink interference detection.
//!
//! A frame of `N = N_d + N_p` QPSK samples is received as
//! `x(n) = h s(n) + eta(n)` under H0 and with an added interferer `p(n)` under
//! H1. Three energy detectors are provided: plain energy (CED), energy of the
//! pilot residual after channel estimation (EDSCP) and energy of the whole
//! frame after hard-decision cancellation of the data (EDSCD).
//!
//! Noise uncertainty: each frame's noise variance is drawn uniformly in dB over
//! `[-eps, +eps]`. The SNR is defined against that actual noise floor, so the
//! desired-signal power tracks it, and the interferer power is set against the
//! actual signal-plus-noise power. Thresholds are calibrated at the worst case
//! `+eps`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng::{self, SimRng};
use crate::stats;

/// Pilot and data positions within a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub n_data: usize,
    pub n_pilots: usize,
    /// `true` at pilot positions; pilots are spread evenly over the frame.
    pub pilot_mask: Vec<bool>,
}

impl Default for FrameLayout {
    fn default() -> Self {
        FrameLayout::new(460, 56)
    }
}

impl FrameLayout {
    pub fn new(n_data: usize, n_pilots: usize) -> Self {
        let n = n_data + n_pilots;
        let mut pilot_mask = vec![false; n];
        for j in 0..n_pilots {
            pilot_mask[j * n / n_pilots] = true;
        }
        FrameLayout { n_data, n_pilots, pilot_mask }
    }

    pub fn len(&self) -> usize {
        self.n_data + self.n_pilots
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetectorKind {
    Ced,
    Edscp,
    Edscd,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Ced, DetectorKind::Edscp, DetectorKind::Edscd];

    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Ced => "CED",
            DetectorKind::Edscp => "EDSCP",
            DetectorKind::Edscd => "EDSCD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramedSignal {
    pub samples: Vec<Complex64>,
    pub pilot_mask: Vec<bool>,
    /// Transmitted unit-energy QPSK symbols; the detector only uses pilots.
    pub symbols: Vec<Complex64>,
    /// Effective complex channel including the signal amplitude.
    pub h: Complex64,
    /// Realised noise variance of this frame.
    pub noise_var: f64,
    pub snr_db: f64,
    pub isnr_db: f64,
}

/// Operating point shared by frame generation and calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPoint {
    pub snr_db: f64,
    pub eps_db: f64,
}

fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

/// How the per-frame noise variance is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseDraw {
    /// Uniform in dB over `[-eps, +eps]`.
    Uncertain,
    /// Fixed at `+eps` dB (calibration worst case).
    WorstCase,
}

/// Synthesises one frame.
///
/// `h_dir` sets the channel phase (its magnitude is ignored); `None` draws a
/// uniform phase. `isnr_db` is ignored under H0.
pub fn gen_frame(
    layout: &FrameLayout,
    hypothesis: Hypothesis,
    h_dir: Option<Complex64>,
    snr_db: f64,
    isnr_db: f64,
    eps_db: f64,
    noise: NoiseDraw,
    rng: &mut SimRng,
) -> Result<FramedSignal> {
    if !(eps_db >= 0.0) {
        return Err(Error::Input(format!("noise uncertainty must be >= 0 dB, got {eps_db}")));
    }
    if layout.n_pilots == 0 {
        return Err(Error::Config("frame needs at least one pilot".into()));
    }
    let n = layout.len();
    let u_db = match noise {
        NoiseDraw::WorstCase => eps_db,
        NoiseDraw::Uncertain if eps_db > 0.0 => rng.random_range(-eps_db..=eps_db),
        NoiseDraw::Uncertain => 0.0,
    };
    let noise_var = stats::from_db(u_db);
    let signal_power = stats::from_db(snr_db) * noise_var;
    let phase = match h_dir {
        Some(d) if d.norm() > 0.0 => d / d.norm(),
        _ => Complex64::from_polar(1.0, rng::uniform_phase(rng)),
    };
    let h = phase * signal_power.sqrt();
    let interference = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => stats::from_db(isnr_db) * (signal_power + noise_var),
    };
    let mut symbols = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let s = qpsk(rng);
        let mut x = h * s + rng::complex_normal(rng, noise_var);
        if interference > 0.0 {
            x += rng::complex_normal(rng, interference);
        }
        symbols.push(s);
        samples.push(x);
    }
    Ok(FramedSignal {
        samples,
        pilot_mask: layout.pilot_mask.clone(),
        symbols,
        h,
        noise_var,
        snr_db,
        isnr_db,
    })
}

/// Mean energy of all samples.
pub fn stat_ced(frame: &FramedSignal) -> f64 {
    frame.samples.iter().map(|x| x.norm_sqr()).sum::<f64>() / frame.samples.len() as f64
}

/// Least-squares channel estimate on the pilots.
pub fn pilot_channel_estimate(frame: &FramedSignal) -> Complex64 {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for ((x, s), &p) in frame.samples.iter().zip(&frame.symbols).zip(&frame.pilot_mask) {
        if p {
            num += s.conj() * x;
            den += s.norm_sqr();
        }
    }
    num / den
}

/// Mean residual energy on the pilots after removing `h_hat s(n)`.
pub fn stat_edscp(frame: &FramedSignal) -> f64 {
    let h_hat = pilot_channel_estimate(frame);
    let (mut acc, mut count) = (0.0, 0usize);
    for ((x, s), &p) in frame.samples.iter().zip(&frame.symbols).zip(&frame.pilot_mask) {
        if p {
            acc += (x - h_hat * s).norm_sqr();
            count += 1;
        }
    }
    acc / count as f64
}

/// Mean residual energy over the whole frame after removing known pilots and
/// hard QPSK decisions on the data.
pub fn stat_edscd(frame: &FramedSignal) -> f64 {
    let h_hat = pilot_channel_estimate(frame);
    let mut acc = 0.0;
    for ((x, s), &p) in frame.samples.iter().zip(&frame.symbols).zip(&frame.pilot_mask) {
        let s_hat = if p {
            *s
        } else {
            let z = x / h_hat;
            Complex64::new(FRAC_1_SQRT_2.copysign(z.re), FRAC_1_SQRT_2.copysign(z.im))
        };
        acc += (x - h_hat * s_hat).norm_sqr();
    }
    acc / frame.samples.len() as f64
}

pub fn statistic(kind: DetectorKind, frame: &FramedSignal) -> f64 {
    match kind {
        DetectorKind::Ced => stat_ced(frame),
        DetectorKind::Edscp => stat_edscp(frame),
        DetectorKind::Edscd => stat_edscd(frame),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub threshold: f64,
    pub eps_db: f64,
}

// stream tags so calibration and detection trials never share draws
const TAG_CALIBRATION: u64 = 0xCA1;
const TAG_DETECTION: u64 = 0xDE7;

/// Empirical `(1 - pfa)` quantile of the H0 statistic with noise at `+eps`.
pub fn calibrate_threshold(
    layout: &FrameLayout,
    kind: DetectorKind,
    link: LinkPoint,
    pfa_target: f64,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<DetectorConfig> {
    if !(pfa_target > 0.0 && pfa_target < 1.0) {
        return Err(Error::Config(format!("pfa target must be in (0,1), got {pfa_target}")));
    }
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be >= 1".into()));
    }
    let stats_h0 = par::map_indexed(exec, n_mc, |t| -> Result<f64> {
        let mut rng = rng::substream(seed, t as u64, TAG_CALIBRATION);
        let f = gen_frame(layout, Hypothesis::H0, None, link.snr_db, 0.0, link.eps_db, NoiseDraw::WorstCase, &mut rng)?;
        Ok(statistic(kind, &f))
    });
    let mut v = stats_h0.into_iter().collect::<Result<Vec<_>>>()?;
    let threshold = stats::quantile_higher(&mut v, 1.0 - pfa_target);
    Ok(DetectorConfig { kind, threshold, eps_db: link.eps_db })
}

/// Detection probability estimate with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub isnr_db: f64,
    pub pd: f64,
    pub lo: f64,
    pub hi: f64,
    pub detections: usize,
    pub n_mc: usize,
}

/// Fraction of frames whose statistic exceeds the threshold. Under H0 this
/// measures the false-alarm rate.
pub fn detection_rate(
    layout: &FrameLayout,
    det: &DetectorConfig,
    hypothesis: Hypothesis,
    snr_db: f64,
    isnr_db: f64,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<PdPoint> {
    let errors = std::sync::atomic::AtomicBool::new(false);
    let hits = par::count_indexed(exec, n_mc, |t| {
        let mut rng = rng::substream(seed, t as u64, TAG_DETECTION);
        match gen_frame(layout, hypothesis, None, snr_db, isnr_db, det.eps_db, NoiseDraw::Uncertain, &mut rng) {
            Ok(f) => statistic(det.kind, &f) > det.threshold,
            Err(_) => {
                errors.store(true, std::sync::atomic::Ordering::Relaxed);
                false
            }
        }
    });
    if errors.into_inner() {
        return Err(Error::Input("frame generation failed".into()));
    }
    let (lo, hi) = stats::wilson(hits, n_mc, stats::Z95);
    Ok(PdPoint { isnr_db, pd: hits as f64 / n_mc as f64, lo, hi, detections: hits, n_mc })
}

/// Pd versus ISNR. Each grid point uses its own family of streams, so the
/// curve is reproducible point by point.
pub fn pd_curve(
    layout: &FrameLayout,
    det: &DetectorConfig,
    isnr_grid: &[f64],
    snr_db: f64,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<PdPoint>> {
    isnr_grid
        .iter()
        .enumerate()
        .map(|(g, &isnr)| {
            let point_seed = seed.wrapping_add((g as u64 + 1).wrapping_mul(0x2545_F491_4F6C_DD1D));
            detection_rate(layout, det, Hypothesis::H1, snr_db, isnr, n_mc, point_seed, exec)
        })
        .collect()
}

/// ISNR at which the curve first reaches `level`, linearly interpolated
/// between grid points; `None` if it never does.
pub fn crossing(curve: &[PdPoint], level: f64) -> Option<f64> {
    let first = curve.first()?;
    if first.pd >= level {
        return Some(first.isnr_db);
    }
    curve.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.pd < level && b.pd >= level)
            .then(|| a.isnr_db + (level - a.pd) / (b.pd - a.pd) * (b.isnr_db - a.isnr_db))
    })
}
