//! Per-subcommand configuration blocks. Every field has a default, so an
//! empty JSON object is a valid config; unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mbsat::access::{Strategy, SweepConfig};
use mbsat::cognitive::RemConfig;
use mbsat::detection::DetectorKind;
use mbsat::predistortion::{ChainConfig, HpaParams, SpdLocation};
use mbsat::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelReportConfig {
    pub scenario: Scenario,
    pub reuse_factors: Vec<usize>,
    pub n_mc: usize,
}

impl Default for ChannelReportConfig {
    fn default() -> Self {
        ChannelReportConfig { scenario: Scenario::default(), reuse_factors: vec![1, 2, 3, 4], n_mc: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecodingBenchConfig {
    /// Scenario used for the per-frame export; its `users_per_beam` sets N_u.
    pub scenario: Scenario,
    pub beam_counts: Vec<usize>,
    pub users_per_frame: Vec<usize>,
    pub trials: usize,
    /// Frames per beam in the per-frame export.
    pub frames: usize,
}

impl Default for PrecodingBenchConfig {
    fn default() -> Self {
        PrecodingBenchConfig {
            scenario: Scenario { users_per_beam: 2, ..Scenario::hexagonal(19, 250.0) },
            beam_counts: vec![7, 19, 37, 71],
            users_per_frame: vec![1, 2, 4, 8],
            trials: 5,
            frames: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateRegionConfig {
    pub direct_db: f64,
    pub cross_db: f64,
    pub sweep: SweepConfig,
    pub strategies: Vec<Strategy>,
}

impl Default for RateRegionConfig {
    fn default() -> Self {
        RateRegionConfig { direct_db: 0.0, cross_db: -2.0, sweep: SweepConfig::default(), strategies: Strategy::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub snr_db: f64,
    pub eps_db: Vec<f64>,
    pub n_data: usize,
    pub n_pilots: usize,
    pub pfa_target: f64,
    pub n_calibration: usize,
    pub n_mc: usize,
    pub isnr_min_db: f64,
    pub isnr_max_db: f64,
    pub isnr_step_db: f64,
    pub detectors: Vec<DetectorKind>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            snr_db: 6.0,
            eps_db: vec![0.0, 2.0],
            n_data: 460,
            n_pilots: 56,
            pfa_target: 0.01,
            n_calibration: 20_000,
            n_mc: 5000,
            isnr_min_db: -20.0,
            isnr_max_db: 10.0,
            isnr_step_db: 1.0,
            detectors: DetectorKind::ALL.to_vec(),
        }
    }
}

impl DetectionConfig {
    pub fn isnr_grid(&self) -> Vec<f64> {
        if self.isnr_step_db.is_nan() || self.isnr_step_db <= 0.0 || self.isnr_max_db < self.isnr_min_db {
            return Vec::new();
        }
        let n = ((self.isnr_max_db - self.isnr_min_db) / self.isnr_step_db + 1e-9).floor() as usize;
        (0..=n).map(|i| self.isnr_min_db + i as f64 * self.isnr_step_db).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdBenchConfig {
    /// Chain settings; `spd_location` and `jitter_aware` are overridden per run.
    pub chain: ChainConfig,
    pub hpa: HpaParams,
    pub locations: Vec<SpdLocation>,
    pub jitter_aware: Vec<bool>,
    pub obo_db: Vec<f64>,
    pub n_symbols: usize,
    /// Export the onboard SPD as a table with this many bins.
    pub lut_bins: Option<usize>,
    pub lut_obo_db: f64,
}

impl Default for SpdBenchConfig {
    fn default() -> Self {
        SpdBenchConfig {
            chain: ChainConfig::default(),
            hpa: HpaParams::default(),
            locations: SpdLocation::ALL.to_vec(),
            jitter_aware: vec![true],
            obo_db: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            n_symbols: 20_000,
            lut_bins: Some(64),
            lut_obo_db: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarrierAssignConfig {
    pub rem: RemConfig,
    /// Incumbent stations from file instead of the synthetic generator.
    pub rem_csv: Option<PathBuf>,
    pub instances: usize,
}

impl Default for CarrierAssignConfig {
    fn default() -> Self {
        CarrierAssignConfig { rem: RemConfig::default(), rem_csv: None, instances: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CachingConfig {
    pub files: usize,
    pub base_stations: Vec<f64>,
    /// `R_uc / R_bc`.
    pub rate_ratio: f64,
    pub r_bc: f64,
    pub file_bits: f64,
    pub alphas: Vec<f64>,
}

impl Default for CachingConfig {
    fn default() -> Self {
        CachingConfig {
            files: 100,
            base_stations: vec![500.0],
            rate_ratio: 3.0,
            r_bc: 1.0,
            file_bits: 1.0,
            alphas: vec![0.8, 1.2, 1.6],
        }
    }
}
