//! System geometry, link budget and channel synthesis for the forward link.
//!
//! The channel of user `i` in beam `k` towards feed `n` is
//!
//! ```text
//! Hbar[k,n] = G_R a_kn e^{j psi_kn} / (4 pi d_k / lambda * sqrt(K_B T_R B_W))
//! H[k,n]    = mu_k e^{j theta_k} Hbar[k,n]
//! ```
//!
//! so noise is unit variance after normalisation and fading multiplies a whole
//! row (it is independent of the feed).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::par::{self, Execution};
use crate::rng::{self, SimRng};
use crate::stats;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// `u` at which `2 J1(u) / u` equals `1/sqrt(2)` (half power).
pub const U_HALF_POWER: f64 = 1.616_339_948_310_703;
/// First zero of `J1`.
pub const U_FIRST_NULL: f64 = 3.831_705_970_207_512_5;

/// Root input of every experiment: beam layout plus link-budget constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    /// Number of beams `K`.
    pub beams: usize,
    /// Number of feeds `N`; overloading (`N < K`) is allowed.
    pub feeds: usize,
    /// Users served per beam per frame, `N_u`.
    pub users_per_beam: usize,
    /// Planar beam centres in km, relative to the sub-satellite point.
    pub beam_centers: Vec<[f64; 2]>,
    /// Feed boresight points on ground (km). Empty means feed `n` points at beam `n`.
    pub feed_centers: Vec<[f64; 2]>,
    /// Hexagonal lattice spacing between adjacent beam centres (km).
    pub beam_spacing_km: f64,
    /// Ground distance from boresight at which the feed pattern is 3 dB down.
    pub half_power_radius_km: f64,
    /// Boresight feed gain `a_max^2` in dBi.
    pub boresight_gain_dbi: f64,
    /// Pattern floor relative to boresight power, dB (negative).
    pub sidelobe_floor_db: f64,
    pub sat_altitude_km: f64,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// Receive amplitude gain `G_R` (the antenna gain is `G_R^2`).
    pub rx_gain: f64,
    pub noise_temp_k: f64,
    /// Per-feed power cap `P` in W.
    pub feed_power_w: f64,
    pub reuse_factor: usize,
    pub rng_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::hexagonal(71, 250.0)
    }
}

impl Scenario {
    /// `beams` centres taken from a hexagonal lattice in order of distance to
    /// the origin (ties broken by polar angle), one feed per beam.
    pub fn hexagonal(beams: usize, spacing_km: f64) -> Self {
        let centers = hex_centers(beams, spacing_km);
        Scenario {
            beams,
            feeds: beams,
            users_per_beam: 1,
            beam_centers: centers,
            feed_centers: Vec::new(),
            beam_spacing_km: spacing_km,
            half_power_radius_km: spacing_km / 3f64.sqrt(),
            boresight_gain_dbi: 52.0,
            sidelobe_floor_db: -40.0,
            sat_altitude_km: 35_786.0,
            carrier_freq_hz: 20e9,
            bandwidth_hz: 500e6,
            rx_gain: 10f64.powf(41.7 / 20.0),
            noise_temp_k: 235.0,
            feed_power_w: 55.0,
            reuse_factor: 1,
            rng_seed: 1,
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn noise_power_w(&self) -> f64 {
        BOLTZMANN * self.noise_temp_k * self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.beams == 0 || self.feeds == 0 || self.users_per_beam == 0 {
            return Err(Error::Config("beams, feeds and users_per_beam must be >= 1".into()));
        }
        if self.beam_centers.len() != self.beams {
            return Err(Error::Config(format!(
                "{} beam centres for {} beams",
                self.beam_centers.len(),
                self.beams
            )));
        }
        if !self.feed_centers.is_empty() && self.feed_centers.len() != self.feeds {
            return Err(Error::Config(format!(
                "{} feed centres for {} feeds",
                self.feed_centers.len(),
                self.feeds
            )));
        }
        if self.feed_centers.is_empty() && self.feeds > self.beams {
            return Err(Error::Config(
                "more feeds than beams requires explicit feed_centers".into(),
            ));
        }
        let positive = [
            ("beam_spacing_km", self.beam_spacing_km),
            ("half_power_radius_km", self.half_power_radius_km),
            ("sat_altitude_km", self.sat_altitude_km),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("rx_gain", self.rx_gain),
            ("noise_temp_k", self.noise_temp_k),
            ("feed_power_w", self.feed_power_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(1..=4).contains(&self.reuse_factor) {
            return Err(Error::Config(format!(
                "reuse_factor must be in 1..=4, got {}",
                self.reuse_factor
            )));
        }
        Ok(())
    }

    pub fn geometry(&self) -> BeamGeometry {
        let feed_centers = if self.feed_centers.is_empty() {
            self.beam_centers[..self.feeds].to_vec()
        } else {
            self.feed_centers.clone()
        };
        BeamGeometry {
            feed_centers,
            half_power_radius_km: self.half_power_radius_km,
            boresight_amplitude: 10f64.powf(self.boresight_gain_dbi / 20.0),
            floor_amplitude: 10f64.powf(self.boresight_gain_dbi / 20.0)
                * 10f64.powf(self.sidelobe_floor_db / 20.0),
        }
    }

    /// Slant range from the satellite to a ground point, planar approximation.
    pub fn slant_range_km(&self, p: [f64; 2]) -> f64 {
        (self.sat_altitude_km.powi(2) + p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// Whether `p` falls in the hexagonal cell of beam `k`.
    pub fn in_cell(&self, k: usize, p: [f64; 2]) -> bool {
        let c = self.beam_centers[k];
        let d = [p[0] - c[0], p[1] - c[1]];
        let s = self.beam_spacing_km;
        hex_neighbor_offsets(s).iter().all(|v| {
            d[0] * v[0] + d[1] * v[1] <= 0.5 * (v[0] * v[0] + v[1] * v[1]) * (1.0 + 1e-12)
        })
    }

    pub fn in_coverage(&self, p: [f64; 2]) -> bool {
        (0..self.beams).any(|k| self.in_cell(k, p))
    }
}

fn hex_neighbor_offsets(s: f64) -> [[f64; 2]; 6] {
    let h = s * 3f64.sqrt() / 2.0;
    [
        [s, 0.0],
        [-s, 0.0],
        [s / 2.0, h],
        [-s / 2.0, -h],
        [-s / 2.0, h],
        [s / 2.0, -h],
    ]
}

fn hex_centers(count: usize, s: f64) -> Vec<[f64; 2]> {
    let mut rings = 0i64;
    while ((3 * rings * (rings + 1) + 1) as usize) < count {
        rings += 1;
    }
    let mut pts: Vec<(f64, f64, [f64; 2])> = Vec::new();
    for q in -rings..=rings {
        for r in -rings..=rings {
            if (q + r).abs() > rings {
                continue;
            }
            let x = s * (q as f64 + r as f64 / 2.0);
            let y = s * (r as f64) * 3f64.sqrt() / 2.0;
            let radius = (x * x + y * y).sqrt();
            let mut angle = y.atan2(x);
            if angle < -1e-12 {
                angle += 2.0 * PI;
            }
            pts.push(((radius * 1e6).round() / 1e6, angle, [x, y]));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.into_iter().take(count).map(|p| p.2).collect()
}

/// Feed pattern parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGeometry {
    pub feed_centers: Vec<[f64; 2]>,
    pub half_power_radius_km: f64,
    /// `a_max`.
    pub boresight_amplitude: f64,
    pub floor_amplitude: f64,
}

/// Tapered-aperture amplitude `a_max |2 J1(u) / u|` with `u` scaled so the
/// half-power point sits at `half_power_radius_km`. Beyond the first null (or
/// wherever the main lobe drops below it) the pattern is held at the floor.
pub fn pattern_amplitude(geom: &BeamGeometry, off_axis_km: f64) -> f64 {
    let u = U_HALF_POWER * off_axis_km / geom.half_power_radius_km;
    if u >= U_FIRST_NULL {
        return geom.floor_amplitude;
    }
    (geom.boresight_amplitude * airy(u)).max(geom.floor_amplitude)
}

/// Complex gain from `feed` to a user at `position`. The deterministic pattern
/// carries no phase; propagation phase is drawn by [`build_channel`].
pub fn beam_gain(feed: usize, position: [f64; 2], geom: &BeamGeometry) -> Complex64 {
    let c = geom.feed_centers[feed];
    let off = ((position[0] - c[0]).powi(2) + (position[1] - c[1]).powi(2)).sqrt();
    Complex64::new(pattern_amplitude(geom, off), 0.0)
}

/// `2 J1(u) / u`, with the removable singularity at 0.
fn airy(u: f64) -> f64 {
    if u.abs() < 1e-12 {
        return 1.0;
    }
    2.0 * bessel_j1(u) / u
}

/// Power series for `J1`; accurate to ~1e-15 over the main lobe.
fn bessel_j1(x: f64) -> f64 {
    let half = x / 2.0;
    let q = -half * half;
    let mut term = half;
    let mut sum = term;
    for m in 1..40 {
        term *= q / (m as f64 * (m + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// One line-of-sight entry before fading.
pub fn los_entry(
    rx_gain: f64,
    gain: Complex64,
    distance_m: f64,
    wavelength_m: f64,
    noise_power_w: f64,
) -> Complex64 {
    gain * rx_gain / (4.0 * PI * distance_m / wavelength_m * noise_power_w.sqrt())
}

/// User positions grouped by beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSet {
    /// `positions[k][i]` is user `i` of beam `k` (km).
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl UserSet {
    /// `per_beam` users dropped uniformly in each beam's hexagonal cell.
    pub fn drop_uniform(scenario: &Scenario, per_beam: usize, rng: &mut SimRng) -> Self {
        let s = scenario.beam_spacing_km;
        let r_max = s / 3f64.sqrt();
        let positions = (0..scenario.beams)
            .map(|k| {
                let c = scenario.beam_centers[k];
                let mut out = Vec::with_capacity(per_beam);
                while out.len() < per_beam {
                    let dx = rng.random_range(-r_max..r_max);
                    let dy = rng.random_range(-r_max..r_max);
                    let p = [c[0] + dx, c[1] + dy];
                    if scenario.in_cell(k, p) {
                        out.push(p);
                    }
                }
                out
            })
            .collect();
        UserSet { positions }
    }

    /// Every user at its beam centre.
    pub fn at_centers(scenario: &Scenario, per_beam: usize) -> Self {
        UserSet {
            positions: scenario.beam_centers.iter().map(|&c| vec![c; per_beam]).collect(),
        }
    }

    pub fn beams(&self) -> usize {
        self.positions.len()
    }

    /// Users per beam; `None` when beams hold different counts.
    pub fn per_beam(&self) -> Option<usize> {
        let n = self.positions.first()?.len();
        self.positions.iter().all(|p| p.len() == n).then_some(n)
    }

    /// Flat user index used by gain tables: `beam * per_beam + slot`.
    pub fn global_index(&self, beam: usize, slot: usize) -> usize {
        self.positions[..beam].iter().map(Vec::len).sum::<usize>() + slot
    }

    /// Beam that owns each flat user index.
    pub fn beam_of_user(&self) -> Vec<usize> {
        self.positions
            .iter()
            .enumerate()
            .flat_map(|(k, p)| std::iter::repeat_n(k, p.len()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.positions.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Atmospheric fading applied per (user, beam row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    /// Log-normal amplitude spread in dB; 0 means clear sky.
    pub sigma_db: f64,
    pub random_phase: bool,
}

impl Default for FadingModel {
    fn default() -> Self {
        FadingModel { sigma_db: 0.0, random_phase: true }
    }
}

impl FadingModel {
    /// `mu = 1`, `theta = 0` everywhere.
    pub fn identity() -> Self {
        FadingModel { sigma_db: 0.0, random_phase: false }
    }

    fn draw(&self, rng: &mut SimRng) -> Complex64 {
        let mu = if self.sigma_db > 0.0 {
            10f64.powf(self.sigma_db * rng::normal(rng) / 20.0)
        } else {
            1.0
        };
        let theta = if self.random_phase { rng::uniform_phase(rng) } else { 0.0 };
        Complex64::from_polar(mu, theta)
    }
}

/// Externally supplied feed-to-user gains, keyed by `(feed, flat user)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainTable {
    entries: HashMap<(usize, usize), Complex64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GainRecord {
    feed: usize,
    user: usize,
    amp: f64,
    phase_rad: f64,
}

impl GainTable {
    pub fn insert(&mut self, feed: usize, user: usize, amp: f64, phase_rad: f64) {
        self.entries.insert((feed, user), Complex64::from_polar(amp, phase_rad));
    }

    pub fn get(&self, feed: usize, user: usize) -> Option<Complex64> {
        self.entries.get(&(feed, user)).copied()
    }

    /// Reads `feed,user,amp,phase_rad` CSV.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut table = GainTable::default();
        let mut rdr = csv::Reader::from_reader(reader);
        for rec in rdr.deserialize() {
            let rec: GainRecord = rec?;
            if !(rec.amp >= 0.0 && rec.amp.is_finite() && rec.phase_rad.is_finite()) {
                return Err(Error::Input(format!(
                    "bad gain entry for feed {} user {}",
                    rec.feed, rec.user
                )));
            }
            table.insert(rec.feed, rec.user, rec.amp, rec.phase_rad);
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut keys: Vec<_> = self.entries.keys().copied().collect();
        keys.sort_unstable();
        let mut w = csv::Writer::from_writer(writer);
        for (feed, user) in keys {
            let g = self.entries[&(feed, user)];
            w.serialize(GainRecord { feed, user, amp: g.norm(), phase_rad: g.arg() })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-slot channel matrices for one user drop.
///
/// Slot `i` collects user `i` of every beam: row `k` of `h[i]` is the channel
/// of user `i` in beam `k` towards all `N` feeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CMatrix>,
    pub hbar: Vec<CMatrix>,
    /// `fading[i][k] = mu_k^[i] e^{j theta_k^[i]}`.
    pub fading: Vec<Vec<Complex64>>,
}

impl ChannelSet {
    pub fn slots(&self) -> usize {
        self.h.len()
    }

    pub fn beams(&self) -> usize {
        self.h.first().map_or(0, |m| m.nrows())
    }

    pub fn feeds(&self) -> usize {
        self.h.first().map_or(0, |m| m.ncols())
    }

    /// Builds a channel set directly from matrices, with identity fading.
    pub fn from_matrices(h: Vec<CMatrix>) -> Result<Self> {
        let first = h.first().ok_or_else(|| Error::Input("empty channel set".into()))?;
        let shape = first.shape();
        if h.iter().any(|m| m.shape() != shape) {
            return Err(Error::Input("channel matrices differ in shape".into()));
        }
        let fading = vec![vec![Complex64::new(1.0, 0.0); shape.0]; h.len()];
        Ok(ChannelSet { hbar: h.clone(), h, fading })
    }
}

enum GainSource<'a> {
    Pattern(BeamGeometry),
    Table(&'a GainTable),
}

/// Synthesises `H^[i] = F^[i] o Hbar^[i]` for every slot of `users`.
///
/// Draw order per slot and beam is: fading, then one propagation phase per
/// feed, so a given seed always yields bit-identical matrices.
pub fn build_channel(
    scenario: &Scenario,
    users: &UserSet,
    fading: &FadingModel,
    rng: &mut SimRng,
) -> Result<ChannelSet> {
    scenario.validate()?;
    build(scenario, users, fading, GainSource::Pattern(scenario.geometry()), rng)
}

/// As [`build_channel`] but with feed gains (amplitude and phase) read from
/// `table` instead of the parametric pattern.
pub fn build_channel_with_gains(
    scenario: &Scenario,
    users: &UserSet,
    fading: &FadingModel,
    table: &GainTable,
    rng: &mut SimRng,
) -> Result<ChannelSet> {
    scenario.validate()?;
    build(scenario, users, fading, GainSource::Table(table), rng)
}

fn build(
    scenario: &Scenario,
    users: &UserSet,
    fading: &FadingModel,
    gains: GainSource<'_>,
    rng: &mut SimRng,
) -> Result<ChannelSet> {
    if users.beams() != scenario.beams {
        return Err(Error::Config(format!(
            "user set has {} beams, scenario has {}",
            users.beams(),
            scenario.beams
        )));
    }
    let slots = users
        .per_beam()
        .ok_or_else(|| Error::Config("user set has unequal users per beam".into()))?;
    if slots == 0 {
        return Err(Error::Config("user set is empty".into()));
    }
    let (k_beams, n_feeds) = (scenario.beams, scenario.feeds);
    let lambda = scenario.wavelength_m();
    let noise = scenario.noise_power_w();

    let mut h = Vec::with_capacity(slots);
    let mut hbar = Vec::with_capacity(slots);
    let mut fades = Vec::with_capacity(slots);
    for i in 0..slots {
        let mut hb = CMatrix::zeros(k_beams, n_feeds);
        let mut f_row = Vec::with_capacity(k_beams);
        for k in 0..k_beams {
            let pos = users.positions[k][i];
            let d_m = scenario.slant_range_km(pos) * 1e3;
            f_row.push(fading.draw(rng));
            for n in 0..n_feeds {
                let psi = rng::uniform_phase(rng);
                let g = match &gains {
                    GainSource::Pattern(geom) => beam_gain(n, pos, geom) * Complex64::from_polar(1.0, psi),
                    GainSource::Table(t) => {
                        let u = users.global_index(k, i);
                        t.get(n, u).ok_or_else(|| {
                            Error::Config(format!("gain table has no entry for feed {n}, user {u}"))
                        })?
                    }
                };
                hb[(k, n)] = los_entry(scenario.rx_gain, g, d_m, lambda, noise);
            }
        }
        let mut hm = hb.clone();
        for k in 0..k_beams {
            for n in 0..n_feeds {
                hm[(k, n)] *= f_row[k];
            }
        }
        h.push(hm);
        hbar.push(hb);
        fades.push(f_row);
    }
    Ok(ChannelSet { h, hbar, fading: fades })
}

/// Beam colouring for a frequency reuse factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReusePattern {
    pub factor: usize,
    pub colors: Vec<usize>,
}

impl ReusePattern {
    /// Standard hexagonal colourings: `q mod 2` for 2 colours, `(q - r) mod 3`
    /// for 3 and `(q mod 2) + 2 (r mod 2)` for 4, where `(q, r)` are the axial
    /// lattice coordinates recovered from the beam centres.
    pub fn hexagonal(scenario: &Scenario, factor: usize) -> Result<Self> {
        if !(1..=4).contains(&factor) {
            return Err(Error::Config(format!("reuse factor must be 1..=4, got {factor}")));
        }
        let s = scenario.beam_spacing_km;
        let colors = scenario
            .beam_centers
            .iter()
            .map(|c| {
                let r = (c[1] / (s * 3f64.sqrt() / 2.0)).round() as i64;
                let q = (c[0] / s - r as f64 / 2.0).round() as i64;
                match factor {
                    1 => 0,
                    2 => q.rem_euclid(2) as usize,
                    3 => (q - r).rem_euclid(3) as usize,
                    _ => (q.rem_euclid(2) + 2 * r.rem_euclid(2)) as usize,
                }
            })
            .collect();
        Ok(ReusePattern { factor, colors })
    }

    /// Same colour for every beam.
    pub fn full(beams: usize) -> Self {
        ReusePattern { factor: 1, colors: vec![0; beams] }
    }

    pub fn co_channel(&self, a: usize, b: usize) -> bool {
        self.colors[a] == self.colors[b]
    }
}

/// Carrier-to-interference ratio (dB) of every user in `channel`, assuming
/// feed `k` alone carries beam `k` at equal power. Users without co-channel
/// beams get `+inf`.
pub fn cir_db(channel: &ChannelSet, reuse: &ReusePattern) -> Result<Vec<f64>> {
    let k_beams = channel.beams();
    if channel.feeds() < k_beams {
        return Err(Error::Config("nominal CIR needs one feed per beam".into()));
    }
    if reuse.colors.len() != k_beams {
        return Err(Error::Config("reuse pattern does not match beam count".into()));
    }
    let mut out = Vec::with_capacity(k_beams * channel.slots());
    for h in &channel.h {
        for k in 0..k_beams {
            let carrier = h[(k, k)].norm_sqr();
            let interference: f64 = (0..k_beams)
                .filter(|&j| j != k && reuse.co_channel(j, k))
                .map(|j| h[(k, j)].norm_sqr())
                .sum();
            out.push(if interference > 0.0 {
                stats::db(carrier / interference)
            } else {
                f64::INFINITY
            });
        }
    }
    Ok(out)
}

/// Mean per-user CIR in dB over `n_mc` independent uniform user drops.
/// Returns `+inf` when no beam has a co-channel neighbour.
pub fn average_cir(
    scenario: &Scenario,
    reuse: &ReusePattern,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    scenario.validate()?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be >= 1".into()));
    }
    let per_drop = par::map_indexed(exec, n_mc, |t| -> Result<Vec<f64>> {
        let mut rng = rng::stream(seed, t as u64);
        let users = UserSet::drop_uniform(scenario, 1, &mut rng);
        let ch = build_channel(scenario, &users, &FadingModel::identity(), &mut rng)?;
        cir_db(&ch, reuse)
    });
    let mut all = Vec::with_capacity(n_mc * scenario.beams);
    for d in per_drop {
        all.extend(d?);
    }
    if all.iter().any(|v| v.is_infinite()) {
        return Ok(f64::INFINITY);
    }
    Ok(stats::mean(&all))
}

/// Loads a scenario from JSON; missing fields take their defaults.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let s: Scenario = serde_json::from_str(&text)?;
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_geometry() -> BeamGeometry {
        BeamGeometry {
            feed_centers: vec![[0.0, 0.0]],
            half_power_radius_km: 100.0,
            boresight_amplitude: 3.0,
            floor_amplitude: 3.0 * 1e-3,
        }
    }

    #[test]
    fn j1_matches_reference_values() {
        // scipy.special.j1
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j1(3.0) - 0.339_058_958_525_936_4).abs() < 1e-14);
        assert!(bessel_j1(U_FIRST_NULL).abs() < 1e-14);
    }

    #[test]
    fn boresight_is_maximum() {
        let g = unit_geometry();
        let a = beam_gain(0, [0.0, 0.0], &g);
        assert_eq!(a.re, 3.0);
        assert_eq!(a.im, 0.0);
    }

    #[test]
    fn half_power_radius_is_three_db() {
        let g = unit_geometry();
        let a = beam_gain(0, [100.0, 0.0], &g).norm();
        assert!((a * a - 9.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_monotone_to_first_null_then_floor() {
        let g = unit_geometry();
        let null_km = U_FIRST_NULL / U_HALF_POWER * 100.0;
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let d = null_km * i as f64 / 99.0;
            let a = pattern_amplitude(&g, d);
            assert!(a <= prev, "not monotone at {d}");
            assert!(a <= g.boresight_amplitude);
            prev = a;
        }
        assert_eq!(pattern_amplitude(&g, 5.0 * null_km), g.floor_amplitude);
    }

    #[test]
    fn unit_substitution() {
        let e = los_entry(1.0, Complex64::new(1.0, 0.0), 1.0, 1.0, 1.0);
        assert!((e.norm() - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn doubling_distance_halves_entry() {
        let g = Complex64::from_polar(2.5, 0.3);
        let a = los_entry(7.0, g, 3.6e7, 0.015, 1e-12);
        let b = los_entry(7.0, g, 7.2e7, 0.015, 1e-12);
        assert_eq!(a / 2.0, b);
    }

    #[test]
    fn hex_layout_has_71_distinct_cells() {
        let s = Scenario::default();
        s.validate().unwrap();
        assert_eq!(s.beam_centers.len(), 71);
        assert_eq!(s.beam_centers[0], [0.0, 0.0]);
        for k in 0..71 {
            assert!(s.in_cell(k, s.beam_centers[k]));
            for j in 0..71 {
                if j != k {
                    assert!(!s.in_cell(j, s.beam_centers[k]));
                }
            }
        }
    }

    #[test]
    fn reuse_colourings_separate_neighbours() {
        let s = Scenario::default();
        for fr in [3, 4] {
            let p = ReusePattern::hexagonal(&s, fr).unwrap();
            for a in 0..s.beams {
                for b in 0..s.beams {
                    let d = ((s.beam_centers[a][0] - s.beam_centers[b][0]).powi(2)
                        + (s.beam_centers[a][1] - s.beam_centers[b][1]).powi(2))
                    .sqrt();
                    if a != b && d < 1.01 * s.beam_spacing_km {
                        assert!(!p.co_channel(a, b), "fr={fr} beams {a},{b}");
                    }
                }
            }
            assert_eq!(p.colors.iter().max().copied(), Some(fr - 1));
        }
        assert!(ReusePattern::hexagonal(&s, 5).is_err());
    }

    #[test]
    fn single_beam_cir_is_infinite() {
        let s = Scenario::hexagonal(1, 250.0);
        let v = average_cir(&s, &ReusePattern::full(1), 3, 9, Execution::Sequential).unwrap();
        assert!(v.is_infinite() && v > 0.0);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let s = Scenario::hexagonal(7, 250.0);
        let other = Scenario::hexagonal(3, 250.0);
        let users = UserSet::at_centers(&other, 1);
        let mut rng = rng::stream(1, 0);
        assert!(matches!(
            build_channel(&s, &users, &FadingModel::default(), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = Scenario::hexagonal(7, 250.0);
        s.carrier_freq_hz = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::hexagonal(7, 250.0);
        s.reuse_factor = 7;
        assert!(s.validate().is_err());
    }
}
