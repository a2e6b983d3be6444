//! Onboard predistortion chain: third-order memoryless amplifier model, signal
//! predistorter (SPD) with polynomial and table paths, least-squares fitting,
//! and end-to-end SINR versus output back-off.

pub mod chain;
pub mod dsp;

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{
    ChainConfig, ChainPoint, ChainRow, Realization, SpdLocation, design_spd, evaluate_chain, obo_sweep,
    sinr_at_obo, write_rows,
};
pub use dsp::{FilterSpec, Modulation, WaveformSpec, jitter_sample};

/// `y = alpha r + beta |r|^2 r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpaParams {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl Default for HpaParams {
    fn default() -> Self {
        HpaParams { alpha: Complex64::new(1.0, 0.0), beta: Complex64::new(-0.25, -0.05) }
    }
}

impl HpaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.re.is_finite() && self.alpha.im.is_finite() && self.beta.re.is_finite() && self.beta.im.is_finite()) {
            return Err(Error::Config("amplifier coefficients must be finite".into()));
        }
        if self.alpha.norm() == 0.0 {
            return Err(Error::Config("amplifier linear gain must be non-zero".into()));
        }
        Ok(())
    }

    pub fn apply(&self, r: Complex64) -> Complex64 {
        self.alpha * r + self.beta * r.norm_sqr() * r
    }

    /// Input magnitude of the AM/AM maximum, if the curve has one.
    ///
    /// With `s = r^2`, `d|y|^2/ds = |a|^2 + 4 Re(a* b) s + 3 |b|^2 s^2`; the
    /// peak is its smallest positive root.
    pub fn r_sat(&self) -> Option<f64> {
        let a = self.alpha.norm_sqr();
        let b = 4.0 * (self.alpha.conj() * self.beta).re;
        let c = 3.0 * self.beta.norm_sqr();
        if c == 0.0 {
            return None;
        }
        let disc = b * b - 4.0 * c * a;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let roots = [(-b - sq) / (2.0 * c), (-b + sq) / (2.0 * c)];
        roots.into_iter().filter(|s| *s > 0.0).fold(None, |m: Option<f64>, s| Some(m.map_or(s, |v| v.min(s)))).map(f64::sqrt)
    }

    /// Saturated output power `|y(r_sat)|^2`.
    pub fn p_sat_out(&self) -> Option<f64> {
        self.r_sat().map(|r| self.apply(Complex64::new(r, 0.0)).norm_sqr())
    }

    /// Amplifier with its drive limited to `r_sat` (phase preserved).
    pub fn apply_clipped(&self, r: Complex64) -> Complex64 {
        self.apply(clip(r, self.r_sat()))
    }
}

fn clip(r: Complex64, r_sat: Option<f64>) -> Complex64 {
    match r_sat {
        Some(rs) if r.norm() > rs => r * (rs / r.norm()),
        _ => r,
    }
}

pub fn hpa_apply(params: &HpaParams, r: &[Complex64]) -> Vec<Complex64> {
    r.iter().map(|&v| params.apply(v)).collect()
}

/// Least-squares `(alpha, beta)` from input/output samples.
pub fn fit_hpa(input: &[Complex64], output: &[Complex64]) -> Result<HpaParams> {
    if input.len() != output.len() {
        return Err(Error::Input(format!("{} inputs vs {} outputs", input.len(), output.len())));
    }
    if input.len() < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let n = input.len();
    let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { input[i] } else { input[i] * input[i].norm_sqr() });
    let b = DMatrix::from_fn(n, 1, |i, _| output[i]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < 1e-10 {
        return Err(Error::RankDeficient(
            "regressors r and |r|^2 r are collinear; input needs amplitude diversity".into(),
        ));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(HpaParams { alpha: x[(0, 0)], beta: x[(1, 0)] })
}

/// Magnitude-binned complex gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut {
    /// Monotone bin edges, `gains.len() + 1` of them.
    pub edges: Vec<f64>,
    pub gains: Vec<Complex64>,
}

impl Lut {
    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() || self.edges.len() != self.gains.len() + 1 {
            return Err(Error::Input("table needs n bins and n+1 edges".into()));
        }
        if self.edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("table edges must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Gain for magnitude `m`; values outside the range use the end bins.
    pub fn gain(&self, m: f64) -> Complex64 {
        let i = self.edges[1..].partition_point(|&e| e <= m);
        self.gains[i.min(self.gains.len() - 1)]
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bin_lo", "bin_hi", "gain_re", "gain_im"])?;
        for (i, g) in self.gains.iter().enumerate() {
            wr.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                g.re.to_string(),
                g.im.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            bin_lo: f64,
            bin_hi: f64,
            gain_re: f64,
            gain_im: f64,
        }
        let mut edges = Vec::new();
        let mut gains = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize::<Row>() {
            let row = row?;
            if let Some(&last) = edges.last() {
                if last != row.bin_lo {
                    return Err(Error::Input(format!("table bins are not contiguous at {}", row.bin_lo)));
                }
                edges.pop();
            }
            edges.push(row.bin_lo);
            edges.push(row.bin_hi);
            gains.push(Complex64::new(row.gain_re, row.gain_im));
        }
        let lut = Lut { edges, gains };
        lut.validate()?;
        Ok(lut)
    }
}

/// `r = gamma x + delta |x|^2 x`, optionally through a lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdParams {
    pub gamma: Complex64,
    pub delta: Complex64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lut: Option<Lut>,
}

impl SpdParams {
    pub fn identity() -> Self {
        SpdParams { gamma: Complex64::new(1.0, 0.0), delta: Complex64::new(0.0, 0.0), lut: None }
    }

    pub fn poly(&self, x: Complex64) -> Complex64 {
        (self.gamma + self.delta * x.norm_sqr()) * x
    }

    /// Table path if a table is attached, polynomial otherwise.
    pub fn apply(&self, x: Complex64) -> Complex64 {
        match &self.lut {
            Some(l) => l.gain(x.norm()) * x,
            None => self.poly(x),
        }
    }
}

pub fn spd_apply(params: &SpdParams, x: &[Complex64]) -> Vec<Complex64> {
    x.iter().map(|&v| params.poly(v)).collect()
}

pub fn spd_apply_lut(lut: &Lut, x: &[Complex64]) -> Vec<Complex64> {
    x.iter().map(|&v| lut.gain(v.norm()) * v).collect()
}

/// Uniform bins over `[0, max_magnitude]`, each holding the polynomial gain at
/// its midpoint.
pub fn build_lut(params: &SpdParams, max_magnitude: f64, n_bins: usize) -> Result<Lut> {
    if n_bins == 0 || !(max_magnitude > 0.0 && max_magnitude.is_finite()) {
        return Err(Error::Config("table needs at least one bin and a positive range".into()));
    }
    let w = max_magnitude / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 * w).collect();
    let gains = (0..n_bins)
        .map(|i| {
            let m = (i as f64 + 0.5) * w;
            params.gamma + params.delta * m * m
        })
        .collect();
    Ok(Lut { edges, gains })
}

/// Direct-learning settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    /// Damping applied to each preconditioned update.
    pub step: f64,
    /// Samples per update; `None` uses the whole training block.
    pub batch: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { iterations: 30, step: 0.5, batch: None }
    }
}

/// Training problem for the SPD.
///
/// The amplifier sees `pre * (gamma x + delta |x|^2 x)` (clipped at `r_sat`);
/// the cost is the mean of `|post * (y - target)|^2`. Filters are optional.
#[derive(Debug, Clone, Copy)]
pub struct SpdProblem<'a> {
    pub input: &'a [Complex64],
    pub target: &'a [Complex64],
    pub pre: Option<&'a [f64]>,
    pub post: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdFit {
    pub params: SpdParams,
    /// Training MSE before the first update and after each one.
    pub trace: Vec<f64>,
}

struct Regressors {
    r1: Vec<Complex64>,
    r2: Vec<Complex64>,
}

impl Regressors {
    fn new(input: &[Complex64], pre: Option<&[f64]>) -> Self {
        let r1 = input.to_vec();
        let r2: Vec<Complex64> = input.iter().map(|x| x * x.norm_sqr()).collect();
        match pre {
            Some(h) => Regressors { r1: dsp::filter_same(&r1, h), r2: dsp::filter_same(&r2, h) },
            None => Regressors { r1, r2 },
        }
    }
}

fn maybe_filter(x: Vec<Complex64>, h: Option<&[f64]>) -> Vec<Complex64> {
    match h {
        Some(h) => dsp::filter_same(&x, h),
        None => x,
    }
}

fn residual(hpa: &HpaParams, p: (Complex64, Complex64), reg: &Regressors, target: &[Complex64], post: Option<&[f64]>, rs: Option<f64>) -> Vec<Complex64> {
    let e: Vec<Complex64> = reg
        .r1
        .iter()
        .zip(&reg.r2)
        .zip(target)
        .map(|((a, b), t)| hpa.apply(clip(p.0 * a + p.1 * b, rs)) - t)
        .collect();
    maybe_filter(e, post)
}

fn mse(e: &[Complex64]) -> f64 {
    dsp::mean_power(e)
}

/// Direct learning of `(gamma, delta)` by damped Gauss-Newton steps: the
/// gradient of the training MSE is preconditioned by the inverse Gram matrix
/// of the output sensitivities, with `r_sat` clipping differentiated exactly.
pub fn fit_spd(hpa: &HpaParams, problem: SpdProblem<'_>, init: Option<(Complex64, Complex64)>, cfg: &FitConfig) -> Result<SpdFit> {
    hpa.validate()?;
    let n = problem.input.len();
    if n == 0 || problem.target.len() != n {
        return Err(Error::Input("training input and target must be non-empty and equal length".into()));
    }
    if !(cfg.step > 0.0) {
        return Err(Error::Config("step must be positive".into()));
    }
    let rs = hpa.r_sat();
    let reg = Regressors::new(problem.input, problem.pre);
    let mut p = init.unwrap_or((Complex64::new(1.0, 0.0) / hpa.alpha, Complex64::new(0.0, 0.0)));
    let initial = mse(&residual(hpa, p, &reg, problem.target, problem.post, rs));
    let mut trace = vec![initial];
    let batch = cfg.batch.unwrap_or(n).clamp(1, n);
    for it in 0..cfg.iterations {
        let start = if batch == n { 0 } else { (it * batch) % (n - batch + 1) };
        let range = start..start + batch;
        let step = gauss_newton_step(hpa, p, &reg, problem.target, problem.post, rs, range);
        let Some(d) = step else { break };
        p = (p.0 - d.0 * cfg.step, p.1 - d.1 * cfg.step);
        let m = mse(&residual(hpa, p, &reg, problem.target, problem.post, rs));
        trace.push(m);
        if !m.is_finite() || m > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence { step: cfg.step, mse: m, initial });
        }
    }
    Ok(SpdFit { params: SpdParams { gamma: p.0, delta: p.1, lut: None }, trace })
}

fn gauss_newton_step(
    hpa: &HpaParams,
    p: (Complex64, Complex64),
    reg: &Regressors,
    target: &[Complex64],
    post: Option<&[f64]>,
    rs: Option<f64>,
    range: std::ops::Range<usize>,
) -> Option<(Complex64, Complex64)> {
    let r1 = &reg.r1[range.clone()];
    let r2 = &reg.r2[range.clone()];
    let t = &target[range];
    let m = r1.len();
    // dy = P dr + Q conj(dr)
    let mut pq = Vec::with_capacity(m);
    let mut e = Vec::with_capacity(m);
    for i in 0..m {
        let r = p.0 * r1[i] + p.1 * r2[i];
        let mag = r.norm();
        let (rc, pc, qc) = match rs {
            Some(s) if mag > s => {
                let rc = r * (s / mag);
                (rc, Complex64::new(s / (2.0 * mag), 0.0), -r * r * (s / (2.0 * mag * mag * mag)))
            }
            _ => (r, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        };
        let a = hpa.alpha + hpa.beta * (2.0 * rc.norm_sqr());
        let b = hpa.beta * rc * rc;
        pq.push((a * pc + b * qc.conj(), a * qc + b * pc.conj()));
        e.push(hpa.apply(rc) - t[i]);
    }
    let e = maybe_filter(e, post);
    let unit = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(4);
    for reg_col in [r1, r2] {
        for d in unit {
            let c: Vec<Complex64> = reg_col
                .iter()
                .zip(&pq)
                .map(|(x, (pp, qq))| {
                    let dr = x * d;
                    pp * dr + qq * dr.conj()
                })
                .collect();
            cols.push(maybe_filter(c, post));
        }
    }
    // real 4x4 normal equations on stacked (re, im) residuals
    let mut g = nalgebra::Matrix4::<f64>::zeros();
    let mut rhs = nalgebra::Vector4::<f64>::zeros();
    for i in 0..4 {
        for j in i..4 {
            let v: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        rhs[i] = cols[i].iter().zip(&e).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
    }
    let scale = g.trace().max(f64::MIN_POSITIVE);
    for i in 0..4 {
        g[(i, i)] += 1e-12 * scale;
    }
    let d = g.cholesky()?.solve(&rhs);
    Some((Complex64::new(d[0], d[1]), Complex64::new(d[2], d[3])))
}
