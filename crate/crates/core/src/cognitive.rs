//! Cognitive carrier assignment: per-carrier SINR from a radio environment map
//! of incumbent fixed-service (FS) stations, rate mapping, and one-to-one
//! carrier/terminal assignment by the Hungarian method.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Linear SINR per (carrier `m`, terminal `k`), carrier-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrMatrix {
    pub values: Vec<Vec<f64>>,
    pub scenario_id: String,
}

impl SinrMatrix {
    pub fn carriers(&self) -> usize {
        self.values.len()
    }

    pub fn terminals(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// `SINR(m,k) = P(k) / (I_k(m) + I_co + N_0)`.
///
/// `interference[m][k]` is the incumbent interference on carrier `m` at
/// terminal `k`.
pub fn build_sinr_matrix(rx_power: &[f64], interference: &[Vec<f64>], i_co: f64, n0: f64, scenario_id: &str) -> Result<SinrMatrix> {
    if rx_power.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Input("received powers must be finite and non-negative".into()));
    }
    if !(i_co.is_finite() && i_co >= 0.0 && n0.is_finite() && n0 > 0.0) {
        return Err(Error::Input("co-channel interference must be >= 0 and noise > 0".into()));
    }
    let k = rx_power.len();
    let mut values = Vec::with_capacity(interference.len());
    for (m, row) in interference.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Input(format!("interference row {m} has {} entries, expected {k}", row.len())));
        }
        if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input(format!("interference row {m} has a negative or non-finite entry")));
        }
        values.push(row.iter().zip(rx_power).map(|(i, p)| p / (i + i_co + n0)).collect());
    }
    Ok(SinrMatrix { values, scenario_id: scenario_id.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMap {
    #[default]
    Shannon,
    /// DVB-S2 MODCOD staircase (ideal Es/N0 thresholds).
    Modcod,
}

/// (Es/N0 threshold in dB, spectral efficiency in bit/s/Hz).
const MODCODS: [(f64, f64); 28] = [
    (-2.35, 0.490),
    (-1.24, 0.656),
    (-0.30, 0.789),
    (1.00, 0.988),
    (2.23, 1.188),
    (3.10, 1.322),
    (4.03, 1.487),
    (4.68, 1.587),
    (5.18, 1.655),
    (5.50, 1.780),
    (6.20, 1.766),
    (6.42, 1.789),
    (6.62, 1.981),
    (7.91, 2.228),
    (8.97, 2.637),
    (9.35, 2.479),
    (10.21, 2.967),
    (10.69, 2.646),
    (10.98, 2.679),
    (11.03, 3.166),
    (11.61, 3.300),
    (12.73, 3.703),
    (12.89, 3.523),
    (13.13, 3.567),
    (13.64, 3.951),
    (14.28, 4.119),
    (15.69, 4.397),
    (16.05, 4.453),
];

pub fn modcod_efficiency(sinr: f64) -> f64 {
    let db = 10.0 * sinr.log10();
    MODCODS.iter().filter(|(t, _)| *t <= db).map(|(_, e)| *e).fold(0.0, f64::max)
}

pub fn rate_matrix(sinr: &SinrMatrix, map: RateMap) -> Vec<Vec<f64>> {
    sinr.values
        .iter()
        .map(|row| {
            row.iter()
                .map(|&s| match map {
                    RateMap::Shannon => (1.0 + s).log2(),
                    RateMap::Modcod => modcod_efficiency(s),
                })
                .collect()
        })
        .collect()
}

/// One-to-one carrier/terminal map. A carrier is unassigned only when there
/// are more carriers than terminals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub carrier_to_terminal: Vec<Option<usize>>,
    pub objective: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.carrier_to_terminal.iter().enumerate().filter_map(|(m, k)| k.map(|k| (m, k)))
    }
}

/// Sum of `rates[m][k]` over the assigned pairs.
pub fn objective(rates: &[Vec<f64>], map: &[Option<usize>]) -> f64 {
    map.iter().enumerate().filter_map(|(m, k)| k.map(|k| rates[m][k])).sum()
}

fn check_rates(rates: &[Vec<f64>]) -> Result<(usize, usize)> {
    let m = rates.len();
    let k = rates.first().map_or(0, Vec::len);
    if m == 0 || k == 0 {
        return Err(Error::Input("rate matrix is empty".into()));
    }
    if rates.iter().any(|r| r.len() != k) {
        return Err(Error::Input("rate matrix rows differ in length".into()));
    }
    if rates.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("rate matrix has non-finite entries".into()));
    }
    Ok((m, k))
}

/// Maximum-sum one-to-one assignment. Among optimal assignments the one whose
/// terminal sequence (carrier 0, 1, ...) is lexicographically smallest is
/// returned.
pub fn assign_hungarian(rates: &[Vec<f64>]) -> Result<Assignment> {
    let (m, k) = check_rates(rates)?;
    let n = m.max(k);
    let top = rates.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let low = rates.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    // padded entries act like zero-value dummies below every real rate
    let pad = low.min(0.0);
    let cost = |i: usize, j: usize| if i < m && j < k { top - rates[i][j] } else { top - pad };
    let (u, v, _) = hungarian_min(n, &cost);
    let tol = 1e-9 * (top - pad).abs().max(1.0);
    let tight = |i: usize, j: usize| (cost(i, j) - u[i] - v[j]).abs() <= tol;
    let rows = lexicographic_matching(n, &tight)
        .ok_or_else(|| Error::Input("no perfect matching on the tight subgraph".into()))?;
    let map: Vec<Option<usize>> = (0..m).map(|i| Some(rows[i]).filter(|&j| j < k)).collect();
    Ok(Assignment { objective: objective(rates, &map), carrier_to_terminal: map })
}

/// Shortest-augmenting-path Hungarian method on a square cost matrix.
/// Returns row potentials, column potentials and the row -> column matching.
fn hungarian_min(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), row_to_col)
}

/// Greedy row-by-row choice of the smallest column that still leaves a
/// perfect matching on the remaining rows.
fn lexicographic_matching(n: usize, edge: &dyn Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut taken = vec![false; n];
    for i in 0..n {
        let mut choice = None;
        for j in 0..n {
            if taken[j] || !edge(i, j) {
                continue;
            }
            taken[j] = true;
            let ok = has_perfect_matching(n, i + 1, &taken, edge);
            taken[j] = false;
            if ok {
                choice = Some(j);
                break;
            }
        }
        let choice = choice?;
        taken[choice] = true;
        fixed.push(choice);
    }
    Some(fixed)
}

/// Kuhn's augmenting paths for rows `first..n` over untaken columns.
fn has_perfect_matching(n: usize, first: usize, taken: &[bool], edge: &dyn Fn(usize, usize) -> bool) -> bool {
    fn augment(i: usize, n: usize, taken: &[bool], edge: &dyn Fn(usize, usize) -> bool, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..n {
            if taken[j] || seen[j] || !edge(i, j) {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|o| augment(o, n, taken, edge, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; n];
    (first..n).all(|i| {
        let mut seen = vec![false; n];
        augment(i, n, taken, edge, &mut seen, &mut owner)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub shared_sum_rate: f64,
    pub exclusive_sum_rate: f64,
    /// `shared / exclusive`; infinite when the exclusive baseline carries nothing.
    pub gain: f64,
}

/// Sum rate when all carriers may be assigned versus only the carriers listed
/// in `exclusive`.
pub fn throughput_report(rates: &[Vec<f64>], exclusive: &[usize]) -> Result<ThroughputReport> {
    let (m, _) = check_rates(rates)?;
    if exclusive.iter().any(|&c| c >= m) {
        return Err(Error::Input("exclusive carrier index out of range".into()));
    }
    let shared = assign_hungarian(rates)?.objective;
    let excl = if exclusive.is_empty() {
        0.0
    } else {
        let sub: Vec<Vec<f64>> = exclusive.iter().map(|&c| rates[c].clone()).collect();
        assign_hungarian(&sub)?.objective
    };
    let gain = if excl > 0.0 { shared / excl } else { f64::INFINITY };
    Ok(ThroughputReport { shared_sum_rate: shared, exclusive_sum_rate: excl, gain })
}

/// Incumbent fixed-service transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsStation {
    pub station_id: u32,
    pub x_km: f64,
    pub y_km: f64,
    /// EIRP along boresight.
    pub tx_dbw: f64,
    pub azimuth_deg: f64,
    pub beamwidth_deg: f64,
}

pub fn read_rem<R: Read>(r: R) -> Result<Vec<FsStation>> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<FsStation>() {
        let s = row?;
        if !(s.beamwidth_deg > 0.0 && s.x_km.is_finite() && s.y_km.is_finite() && s.tx_dbw.is_finite()) {
            return Err(Error::Input(format!("station {} has an invalid row", s.station_id)));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_rem<W: Write>(stations: &[FsStation], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in stations {
        wr.serialize(s)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemConfig {
    pub carriers: usize,
    /// Carriers `0..shared_carriers` are shared with FS incumbents; the rest
    /// are exclusive to the satellite.
    pub shared_carriers: usize,
    pub terminals: usize,
    pub stations: usize,
    /// Side of the square deployment area.
    pub area_km: f64,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_temp_k: f64,
    /// Satellite carrier power at the terminal, before a uniform dB spread.
    pub rx_power_dbw: f64,
    pub rx_power_spread_db: f64,
    pub station_eirp_dbw: f64,
    pub station_beamwidth_deg: f64,
    /// Terminal antenna gain towards the horizon.
    pub terminal_gain_dbi: f64,
    pub co_channel_dbw: f64,
    pub rate_map: RateMap,
}

impl Default for RemConfig {
    fn default() -> Self {
        RemConfig {
            carriers: 8,
            shared_carriers: 6,
            terminals: 10,
            stations: 20,
            area_km: 60.0,
            carrier_freq_hz: 18e9,
            bandwidth_hz: 36e6,
            noise_temp_k: 300.0,
            rx_power_dbw: -118.0,
            rx_power_spread_db: 3.0,
            station_eirp_dbw: 20.0,
            station_beamwidth_deg: 3.0,
            terminal_gain_dbi: 0.0,
            co_channel_dbw: -140.0,
            rate_map: RateMap::Shannon,
        }
    }
}

const BOLTZMANN: f64 = 1.380_649e-23;

impl RemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.carriers == 0 || self.terminals == 0 {
            return Err(Error::Config("need at least one carrier and one terminal".into()));
        }
        if self.shared_carriers > self.carriers {
            return Err(Error::Config("shared carriers exceed the carrier count".into()));
        }
        if self.stations > 0 && self.shared_carriers == 0 {
            return Err(Error::Config("stations need at least one shared carrier".into()));
        }
        if !(self.area_km > 0.0 && self.bandwidth_hz > 0.0 && self.noise_temp_k > 0.0 && self.carrier_freq_hz > 0.0) {
            return Err(Error::Config("area, bandwidth, temperature and frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_w(&self) -> f64 {
        BOLTZMANN * self.noise_temp_k * self.bandwidth_hz
    }

    /// Carrier used by a station.
    pub fn station_carrier(&self, station_id: u32) -> usize {
        station_id as usize % self.shared_carriers
    }

    pub fn exclusive_carriers(&self) -> Vec<usize> {
        (self.shared_carriers..self.carriers).collect()
    }
}

/// Terminal positions, satellite powers and incumbent stations for one
/// synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemScenario {
    pub terminals: Vec<[f64; 2]>,
    pub rx_power_w: Vec<f64>,
    pub stations: Vec<FsStation>,
}

pub fn synthetic_rem(cfg: &RemConfig, seed: u64) -> Result<RemScenario> {
    cfg.validate()?;
    let mut r = rng::stream(seed, 0);
    let a = cfg.area_km;
    let stations = (0..cfg.stations)
        .map(|i| FsStation {
            station_id: i as u32,
            x_km: r.random_range(0.0..a),
            y_km: r.random_range(0.0..a),
            tx_dbw: cfg.station_eirp_dbw,
            azimuth_deg: r.random_range(0.0..360.0),
            beamwidth_deg: cfg.station_beamwidth_deg,
        })
        .collect();
    let terminals = (0..cfg.terminals).map(|_| [r.random_range(0.0..a), r.random_range(0.0..a)]).collect();
    let spread = cfg.rx_power_spread_db;
    let rx_power_w = (0..cfg.terminals)
        .map(|_| {
            let d = if spread > 0.0 { r.random_range(-spread / 2.0..=spread / 2.0) } else { 0.0 };
            10f64.powf((cfg.rx_power_dbw + d) / 10.0)
        })
        .collect();
    Ok(RemScenario { terminals, rx_power_w, stations })
}

/// Off-boresight attenuation `min(12 (theta/bw)^2, 25)` dB.
pub fn station_gain_db(station: &FsStation, x_km: f64, y_km: f64) -> f64 {
    let bearing = (y_km - station.y_km).atan2(x_km - station.x_km).to_degrees();
    let mut off = (bearing - station.azimuth_deg).rem_euclid(360.0);
    if off > 180.0 {
        off = 360.0 - off;
    }
    -(12.0 * (off / station.beamwidth_deg).powi(2)).min(25.0)
}

/// Interference table `I_k(m)` in watts: free-space path loss from every
/// station to every terminal on the station's carrier.
pub fn interference_table(cfg: &RemConfig, scen: &RemScenario) -> Vec<Vec<f64>> {
    let lambda = 299_792_458.0 / cfg.carrier_freq_hz;
    let mut table = vec![vec![0.0; scen.terminals.len()]; cfg.carriers];
    for s in &scen.stations {
        let m = cfg.station_carrier(s.station_id);
        for (k, t) in scen.terminals.iter().enumerate() {
            let d_m = ((t[0] - s.x_km).hypot(t[1] - s.y_km) * 1e3).max(100.0);
            let fspl = (lambda / (4.0 * std::f64::consts::PI * d_m)).powi(2);
            let g_db = s.tx_dbw + station_gain_db(s, t[0], t[1]) + cfg.terminal_gain_dbi;
            table[m][k] += 10f64.powf(g_db / 10.0) * fspl;
        }
    }
    table
}

pub fn sinr_from_rem(cfg: &RemConfig, scen: &RemScenario, scenario_id: &str) -> Result<SinrMatrix> {
    let i_co = 10f64.powf(cfg.co_channel_dbw / 10.0);
    build_sinr_matrix(&scen.rx_power_w, &interference_table(cfg, scen), i_co, cfg.noise_w(), scenario_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub carrier: usize,
    pub terminal: usize,
    pub rate_bpshz: f64,
}

pub fn assignment_rows(rates: &[Vec<f64>], a: &Assignment) -> Vec<AssignmentRow> {
    a.pairs().map(|(m, k)| AssignmentRow { carrier: m, terminal: k, rate_bpshz: rates[m][k] }).collect()
}

pub fn write_assignment<W: Write>(rows: &[AssignmentRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(["carrier", "terminal", "rate_bpshz"])?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
