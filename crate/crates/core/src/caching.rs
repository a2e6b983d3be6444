//! Zipf popularity and the broadcast/unicast delivery threshold.
//!
//! Files ranked `1..i_hat-1` are pushed once by broadcast to all `K` base
//! stations; files ranked `i_hat..=I` are fetched on demand by unicast.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityModel {
    pub alpha: f64,
    /// `pmf[i-1]` is the request probability of rank `i`.
    pub pmf: Vec<f64>,
    /// `tail[i-1] = sum_{j >= i} pmf[j-1]`, with `tail[0] == 1` exactly and a
    /// trailing zero for `i = I + 1`.
    tail: Vec<f64>,
}

impl PopularityModel {
    pub fn files(&self) -> usize {
        self.pmf.len()
    }

    /// Request mass of ranks `i_hat..=I`.
    pub fn tail(&self, i_hat: usize) -> f64 {
        self.tail[i_hat - 1]
    }
}

/// `f[i] = (1/i)^alpha / sum_j (1/j)^alpha`.
pub fn zipf_pmf(files: usize, alpha: f64) -> Result<PopularityModel> {
    if files == 0 {
        return Err(Error::Config("library must hold at least one file".into()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Config(format!("Zipf exponent must be finite and >= 0, got {alpha}")));
    }
    let w: Vec<f64> = (1..=files).map(|i| (i as f64).powf(-alpha)).collect();
    // suffix sums from the smallest weight up
    let mut suffix = vec![0.0; files + 1];
    for i in (0..files).rev() {
        suffix[i] = suffix[i + 1] + w[i];
    }
    let norm = suffix[0];
    Ok(PopularityModel {
        alpha,
        pmf: w.iter().map(|x| x / norm).collect(),
        tail: suffix.iter().map(|x| x / norm).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryParams {
    /// File size in bits.
    pub file_bits: f64,
    pub base_stations: f64,
    pub r_uc: f64,
    pub r_bc: f64,
}

impl DeliveryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.file_bits > 0.0 && self.base_stations > 0.0 && self.r_uc > 0.0 && self.r_bc > 0.0) {
            return Err(Error::Config("file size, base-station count and rates must be positive".into()));
        }
        if !(self.file_bits.is_finite() && self.base_stations.is_finite()) {
            return Err(Error::Config("file size and base-station count must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryPlan {
    pub i_hat: usize,
    pub t_uc: f64,
    pub t_bc: f64,
    pub t_tot: f64,
    /// `(i_hat - 1) s`.
    pub v_bc: f64,
    /// Requested volume served from broadcast caches, `s K sum_{i < i_hat} f[i]`.
    pub cached_volume: f64,
}

/// Delivery times for threshold `i_hat` in `1..=I+1`.
pub fn delivery_times(i_hat: usize, model: &PopularityModel, p: &DeliveryParams) -> Result<DeliveryPlan> {
    p.validate()?;
    let files = model.files();
    if i_hat == 0 || i_hat > files + 1 {
        return Err(Error::Input(format!("threshold {i_hat} outside 1..={}", files + 1)));
    }
    let tail = model.tail(i_hat);
    let t_uc = p.file_bits * p.base_stations * tail / p.r_uc;
    let t_bc = p.file_bits * (i_hat - 1) as f64 / p.r_bc;
    Ok(DeliveryPlan {
        i_hat,
        t_uc,
        t_bc,
        t_tot: t_uc + t_bc,
        v_bc: (i_hat - 1) as f64 * p.file_bits,
        cached_volume: p.file_bits * p.base_stations * (1.0 - tail),
    })
}

/// Every threshold `1..=I+1`.
pub fn threshold_curve(model: &PopularityModel, p: &DeliveryParams) -> Result<Vec<DeliveryPlan>> {
    (1..=model.files() + 1).map(|i| delivery_times(i, model, p)).collect()
}

/// Exhaustive minimiser of `T_tot`; the lowest threshold wins ties.
pub fn optimal_threshold(model: &PopularityModel, p: &DeliveryParams) -> Result<DeliveryPlan> {
    let curve = threshold_curve(model, p)?;
    let mut best = curve[0];
    for plan in &curve[1..] {
        if plan.t_tot < best.t_tot {
            best = *plan;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "I")]
    pub i: usize,
    pub rate_ratio: f64,
    pub i_hat: usize,
    #[serde(rename = "T_uc")]
    pub t_uc: f64,
    #[serde(rename = "T_bc")]
    pub t_bc: f64,
    #[serde(rename = "T_tot")]
    pub t_tot: f64,
}

impl ThresholdRow {
    pub fn new(model: &PopularityModel, p: &DeliveryParams, plan: &DeliveryPlan) -> Self {
        ThresholdRow {
            alpha: model.alpha,
            k: p.base_stations,
            i: model.files(),
            rate_ratio: p.r_uc / p.r_bc,
            i_hat: plan.i_hat,
            t_uc: plan.t_uc,
            t_bc: plan.t_bc,
            t_tot: plan.t_tot,
        }
    }
}

pub fn write_rows<W: Write>(rows: &[ThresholdRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64, ratio: f64) -> DeliveryParams {
        DeliveryParams { file_bits: 1.0, base_stations: k, r_uc: ratio, r_bc: 1.0 }
    }

    #[test]
    fn uniform_at_zero_exponent() {
        let m = zipf_pmf(4, 0.0).unwrap();
        assert!(m.pmf.iter().all(|&f| (f - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_files_harmonic() {
        let m = zipf_pmf(2, 1.0).unwrap();
        assert!((m.pmf[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.pmf[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.tail(1), 1.0);
        assert_eq!(m.tail(3), 0.0);
    }

    #[test]
    fn boundaries() {
        let m = zipf_pmf(100, 1.2).unwrap();
        let p = DeliveryParams { file_bits: 8e6, base_stations: 500.0, r_uc: 3e6, r_bc: 1e6 };
        let first = delivery_times(1, &m, &p).unwrap();
        assert_eq!(first.t_tot, p.file_bits * p.base_stations / p.r_uc);
        assert_eq!(first.t_bc, 0.0);
        let last = delivery_times(101, &m, &p).unwrap();
        assert_eq!(last.t_tot, p.file_bits * 100.0 / p.r_bc);
        assert_eq!(last.cached_volume, p.file_bits * p.base_stations);
        assert!(delivery_times(0, &m, &p).is_err());
        assert!(delivery_times(102, &m, &p).is_err());
    }

    #[test]
    fn free_modes() {
        let m = zipf_pmf(50, 1.1).unwrap();
        let p = DeliveryParams { file_bits: 1.0, base_stations: 10.0, r_uc: 1.0, r_bc: f64::INFINITY };
        assert_eq!(optimal_threshold(&m, &p).unwrap().i_hat, 51);
        let p = DeliveryParams { file_bits: 1.0, base_stations: 10.0, r_uc: f64::INFINITY, r_bc: 1.0 };
        assert_eq!(optimal_threshold(&m, &p).unwrap().i_hat, 1);
    }

    #[test]
    fn interior_minimum_for_reference_setting() {
        let m = zipf_pmf(100, 1.2).unwrap();
        let p = params(500.0, 3.0);
        let best = optimal_threshold(&m, &p).unwrap();
        assert!(best.i_hat > 1 && best.i_hat < 101);
        let curve = threshold_curve(&m, &p).unwrap();
        assert!(best.t_tot < curve[0].t_tot && best.t_tot < curve[100].t_tot);
    }

    #[test]
    fn csv_header() {
        let m = zipf_pmf(3, 1.0).unwrap();
        let p = params(5.0, 3.0);
        let plan = optimal_threshold(&m, &p).unwrap();
        let mut buf = Vec::new();
        write_rows(&[ThresholdRow::new(&m, &p, &plan)], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("alpha,K,I,rate_ratio,i_hat,T_uc,T_bc,T_tot\n"));
    }
}
