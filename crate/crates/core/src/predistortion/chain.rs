//! Transparent-payload chain: ground drive, IMUX, jittered ADC, optional SPD
//! (on ground or on board), clipped cubic amplifier, OMUX, downlink noise and
//! a matched-filter receiver with data-aided SINR estimation.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dsp::{self, FilterSpec, JitterDraws, WaveformSpec};
use super::{FitConfig, HpaParams, SpdFit, SpdParams, SpdProblem, build_lut, fit_spd};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpdLocation {
    Onboard,
    Onground,
    None,
}

impl SpdLocation {
    pub const ALL: [SpdLocation; 3] = [SpdLocation::None, SpdLocation::Onboard, SpdLocation::Onground];
}

impl fmt::Display for SpdLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpdLocation::Onboard => "onboard",
            SpdLocation::Onground => "onground",
            SpdLocation::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub spd_location: SpdLocation,
    /// Train the onboard SPD on jittered samples rather than ideal ones.
    pub jitter_aware: bool,
    /// Timing-jitter standard deviation in sample periods.
    pub jitter_sigma: f64,
    pub adc_noise_var: f64,
    /// Downlink noise variance per sample.
    pub downlink_noise_var: f64,
    pub imux: Option<FilterSpec>,
    pub omux: Option<FilterSpec>,
    pub waveform: WaveformSpec,
    /// Symbol-spaced taps of the data-aided receive equaliser (odd).
    pub eq_taps: usize,
    pub training_symbols: usize,
    pub fit: FitConfig,
    /// Replace the polynomial SPD by a table with this many bins.
    pub lut_bins: Option<usize>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            spd_location: SpdLocation::Onboard,
            jitter_aware: true,
            jitter_sigma: 0.01,
            adc_noise_var: 1e-6,
            downlink_noise_var: 1e-5,
            imux: Some(FilterSpec { taps: 65, cutoff: 0.4 }),
            omux: Some(FilterSpec { taps: 65, cutoff: 0.8 }),
            waveform: WaveformSpec::default(),
            eq_taps: 9,
            training_symbols: 1000,
            fit: FitConfig::default(),
            lut_bins: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        for f in [self.imux, self.omux].into_iter().flatten() {
            f.validate(self.waveform.sps)?;
        }
        if !(self.jitter_sigma >= 0.0 && self.adc_noise_var >= 0.0 && self.downlink_noise_var >= 0.0) {
            return Err(Error::Config("jitter and noise levels must be non-negative".into()));
        }
        if self.eq_taps == 0 || self.eq_taps.is_multiple_of(2) {
            return Err(Error::Config("equaliser length must be odd".into()));
        }
        if self.training_symbols < 16 {
            return Err(Error::Config("training block is too short".into()));
        }
        if self.lut_bins == Some(0) {
            return Err(Error::Config("table needs at least one bin".into()));
        }
        Ok(())
    }

    fn imux_taps(&self) -> Option<Vec<f64>> {
        self.imux.map(|f| f.design(self.waveform.sps))
    }

    fn omux_taps(&self) -> Option<Vec<f64>> {
        self.omux.map(|f| f.design(self.waveform.sps))
    }

    fn guard(&self) -> usize {
        self.eq_taps / 2 + self.waveform.span
    }
}

/// Every random draw of one chain run. Draws do not depend on the SPD
/// location, so runs that share a realization are paired.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub symbols: Vec<Complex64>,
    /// Unit-symbol-energy shaped waveform.
    pub waveform: Vec<Complex64>,
    pub jitter: JitterDraws,
    pub downlink: Vec<Complex64>,
}

const TAG_TRAIN: u64 = 0x7EA1;
const TAG_EVAL: u64 = 0xE7A1;

impl Realization {
    pub fn draw(spec: &WaveformSpec, n_symbols: usize, rng: &mut rng::SimRng) -> Self {
        let symbols = dsp::random_symbols(n_symbols, &spec.modulation, rng);
        let waveform = dsp::shape(&symbols, spec);
        let n = waveform.len();
        let jitter = JitterDraws::draw(n, rng);
        let downlink = (0..n).map(|_| rng::complex_normal(rng, 1.0)).collect();
        Realization { symbols, waveform, jitter, downlink }
    }

    pub fn training(spec: &WaveformSpec, n_symbols: usize, seed: u64) -> Self {
        Realization::draw(spec, n_symbols, &mut rng::substream(seed, 0, TAG_TRAIN))
    }

    pub fn evaluation(spec: &WaveformSpec, n_symbols: usize, seed: u64) -> Self {
        Realization::draw(spec, n_symbols, &mut rng::substream(seed, 0, TAG_EVAL))
    }
}

fn maybe(x: Vec<Complex64>, h: &Option<Vec<f64>>) -> Vec<Complex64> {
    match h {
        Some(h) => dsp::filter_same(&x, h),
        None => x,
    }
}

fn scaled(x: &[Complex64], g: f64) -> Vec<Complex64> {
    x.iter().map(|v| v * g).collect()
}

/// Samples at the amplifier output for drive `drive`.
fn amplifier_output(cfg: &ChainConfig, hpa: &HpaParams, spd: Option<&SpdParams>, drive: f64, real: &Realization) -> Vec<Complex64> {
    let mut u = scaled(&real.waveform, drive);
    if let (SpdLocation::Onground, Some(p)) = (cfg.spd_location, spd) {
        u = u.iter().map(|&v| p.apply(v)).collect();
    }
    let v = maybe(u, &cfg.imux_taps());
    let mut x = dsp::jitter_apply(&v, cfg.jitter_sigma, cfg.adc_noise_var, &real.jitter);
    if let (SpdLocation::Onboard, Some(p)) = (cfg.spd_location, spd) {
        x = x.iter().map(|&v| p.apply(v)).collect();
    }
    x.iter().map(|&r| hpa.apply_clipped(r)).collect()
}

fn obo_db(hpa: &HpaParams, y: &[Complex64]) -> f64 {
    match hpa.p_sat_out() {
        Some(p) => 10.0 * (p / dsp::mean_power(y)).log10(),
        None => f64::NAN,
    }
}

/// Data-aided SINR: least-squares fit of a symbol-spaced linear response to
/// the matched-filter output; the cursor tap is signal, the residual is
/// noise plus distortion.
pub fn data_aided_sinr_db(symbols: &[Complex64], received: &[Complex64], taps: usize, guard: usize) -> Result<f64> {
    let half = taps / 2;
    let guard = guard.max(half);
    if symbols.len() != received.len() || symbols.len() <= 2 * guard + taps {
        return Err(Error::Input("not enough symbols for SINR estimation".into()));
    }
    let idx: Vec<usize> = (guard..symbols.len() - guard).collect();
    let a = DMatrix::from_fn(idx.len(), taps, |i, j| symbols[idx[i] + j - half]);
    let z = DVector::from_iterator(idx.len(), idx.iter().map(|&i| received[i]));
    let ah = a.adjoint();
    let gram = &ah * &a;
    let c = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("symbol sequence does not excite the equaliser".into()))?
        .solve(&(&ah * &z));
    let res = &z - &a * &c;
    let sig = c[half].norm_sqr() * idx.iter().map(|&i| symbols[i].norm_sqr()).sum::<f64>();
    Ok(10.0 * (sig / res.norm_squared()).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPoint {
    pub spd_location: SpdLocation,
    pub jitter_aware: bool,
    pub obo_db: f64,
    pub sinr_db: f64,
    pub drive: f64,
    pub spd: Option<SpdParams>,
    pub seed: u64,
}

/// Runs one realization through the chain with a fixed SPD and drive.
/// Returns `(sinr_db, obo_db)`; OBO is NaN for an amplifier without a peak.
pub fn evaluate_chain(cfg: &ChainConfig, spd: Option<&SpdParams>, hpa: &HpaParams, drive: f64, real: &Realization) -> Result<(f64, f64)> {
    cfg.validate()?;
    hpa.validate()?;
    let y = amplifier_output(cfg, hpa, spd, drive, real);
    let obo = obo_db(hpa, &y);
    let nv = cfg.downlink_noise_var.sqrt();
    let z: Vec<Complex64> = maybe(y, &cfg.omux_taps()).iter().zip(&real.downlink).map(|(a, n)| a + n * nv).collect();
    let mf = dsp::filter_same(&z, &cfg.waveform.pulse());
    let rx: Vec<Complex64> = mf.iter().step_by(cfg.waveform.sps).copied().collect();
    let sinr = data_aided_sinr_db(&real.symbols, &rx, cfg.eq_taps, cfg.guard())?;
    Ok((sinr, obo))
}

/// Fits the SPD for `cfg.spd_location` at drive level `drive` on a training
/// realization. `None` location returns `Ok(None)`.
pub fn design_spd(
    cfg: &ChainConfig,
    hpa: &HpaParams,
    drive: f64,
    train: &Realization,
    init: Option<(Complex64, Complex64)>,
) -> Result<Option<SpdFit>> {
    let imux = cfg.imux_taps();
    let omux = cfg.omux_taps();
    let u = scaled(&train.waveform, drive);
    let target = maybe(u.clone(), &imux);
    let (input, pre) = match cfg.spd_location {
        SpdLocation::None => return Ok(None),
        SpdLocation::Onboard => {
            let input = if cfg.jitter_aware {
                dsp::jitter_apply(&target, cfg.jitter_sigma, cfg.adc_noise_var, &train.jitter)
            } else {
                target.clone()
            };
            (input, None)
        }
        SpdLocation::Onground => (u, imux.as_deref()),
    };
    let problem = SpdProblem { input: &input, target: &target, pre, post: omux.as_deref() };
    let mut fit = fit_spd(hpa, problem, init, &cfg.fit)?;
    if let Some(bins) = cfg.lut_bins {
        let peak = input.iter().map(|v| v.norm()).fold(0.0, f64::max);
        fit.params.lut = Some(build_lut(&fit.params, peak * 1.2, bins)?);
    }
    Ok(Some(fit))
}

/// Finds the drive that yields `obo_target` on the evaluation realization
/// (refitting the SPD at every trial drive) and reports the SINR there.
pub fn sinr_at_obo(cfg: &ChainConfig, hpa: &HpaParams, obo_target: f64, n_symbols: usize, seed: u64) -> Result<ChainPoint> {
    cfg.validate()?;
    hpa.validate()?;
    let p_sat = hpa
        .p_sat_out()
        .ok_or_else(|| Error::Config("back-off needs an amplifier with a saturation point".into()))?;
    let train = Realization::training(&cfg.waveform, cfg.training_symbols, seed);
    let eval = Realization::evaluation(&cfg.waveform, n_symbols, seed);

    let mut warm: Option<(Complex64, Complex64)> = None;
    let mut probe = |t: f64| -> Result<(f64, Option<SpdParams>)> {
        let g = t.exp();
        let spd = design_spd(cfg, hpa, g, &train, warm)?.map(|f| f.params);
        if let Some(p) = &spd {
            warm = Some((p.gamma, p.delta));
        }
        let y = amplifier_output(cfg, hpa, spd.as_ref(), g, &eval);
        Ok((obo_db(hpa, &y) - obo_target, spd))
    };

    // small-signal starting guess, then bracket in log-drive
    let px = dsp::mean_power(&eval.waveform);
    let t0 = 0.5 * (p_sat * 10f64.powf(-obo_target / 10.0) / (hpa.alpha.norm_sqr() * px)).ln();
    let (mut lo, mut hi) = (t0 - 0.1, t0 + 0.1);
    let (mut f_lo, _) = probe(lo)?;
    let mut n = 0;
    while f_lo < 0.0 {
        lo -= 0.5;
        f_lo = probe(lo)?.0;
        n += 1;
        if n > 40 {
            return Err(Error::Config(format!("back-off {obo_target} dB not reachable")));
        }
    }
    let (mut f_hi, _) = probe(hi)?;
    n = 0;
    while f_hi > 0.0 {
        hi += 0.5;
        f_hi = probe(hi)?.0;
        n += 1;
        if n > 40 {
            return Err(Error::Config(format!("back-off {obo_target} dB below the saturation floor")));
        }
    }
    // Illinois false position
    let mut best = None;
    let mut side = 0i8;
    for _ in 0..60 {
        let t = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        let (f, spd) = probe(t)?;
        best = Some((t, spd));
        if f.abs() < 1e-6 {
            break;
        }
        if f > 0.0 {
            lo = t;
            f_lo = f;
            if side == 1 {
                f_hi /= 2.0;
            }
            side = 1;
        } else {
            hi = t;
            f_hi = f;
            if side == -1 {
                f_lo /= 2.0;
            }
            side = -1;
        }
    }
    let (t, spd) = best.expect("at least one iteration");
    let drive = t.exp();
    let (sinr_db, obo_db) = evaluate_chain(cfg, spd.as_ref(), hpa, drive, &eval)?;
    Ok(ChainPoint { spd_location: cfg.spd_location, jitter_aware: cfg.jitter_aware, obo_db, sinr_db, drive, spd, seed })
}

pub fn obo_sweep(cfg: &ChainConfig, hpa: &HpaParams, obo_grid: &[f64], n_symbols: usize, seed: u64, exec: Execution) -> Result<Vec<ChainPoint>> {
    par::map_slice(exec, obo_grid, |&o| sinr_at_obo(cfg, hpa, o, n_symbols, seed)).into_iter().collect()
}

/// One line of the SINR-versus-OBO export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub spd_location: SpdLocation,
    pub jitter_aware: bool,
    pub obo_db: f64,
    pub sinr_db: f64,
    pub seed: u64,
}

impl From<&ChainPoint> for ChainRow {
    fn from(p: &ChainPoint) -> Self {
        ChainRow { spd_location: p.spd_location, jitter_aware: p.jitter_aware, obo_db: p.obo_db, sinr_db: p.sinr_db, seed: p.seed }
    }
}

pub fn write_rows<W: Write>(rows: &[ChainRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
