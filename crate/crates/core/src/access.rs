//! Two-beam interference-channel strategies and rate regions, plus the
//! overloaded unicast evaluation with intra-beam multi-user detection.
//!
//! Gains follow the receiver/transmitter convention `g_rt`: `g21` is the gain
//! of `x2` at receiver 1 and `g12` the gain of `x1` at receiver 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::par::{self, Execution};
use crate::scenario::ChannelSet;

/// `log2(1 + x)`.
pub fn capacity(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoUserChannel {
    pub g11: f64,
    pub g21: f64,
    pub g12: f64,
    pub g22: f64,
    pub p1: f64,
    pub p2: f64,
    /// Noise plus residual interference at each receiver.
    pub noise1: f64,
    pub noise2: f64,
}

impl TwoUserChannel {
    /// Symmetric channel from dB gains, unit noise.
    pub fn symmetric_db(direct_db: f64, cross_db: f64, power: f64) -> Self {
        let d = 10f64.powf(direct_db / 10.0);
        let x = 10f64.powf(cross_db / 10.0);
        TwoUserChannel { g11: d, g21: x, g12: x, g22: d, p1: power, p2: power, noise1: 1.0, noise2: 1.0 }
    }

    /// Direct 0 dB, cross -2 dB.
    pub fn weak_cross(power: f64) -> Self {
        Self::symmetric_db(0.0, -2.0, power)
    }

    pub fn with_powers(mut self, p1: f64, p2: f64) -> Self {
        self.p1 = p1;
        self.p2 = p2;
        self
    }

    /// Relabels user 1 as user 2 and vice versa.
    pub fn swapped(&self) -> Self {
        TwoUserChannel {
            g11: self.g22,
            g21: self.g12,
            g12: self.g21,
            g22: self.g11,
            p1: self.p2,
            p2: self.p1,
            noise1: self.noise2,
            noise2: self.noise1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.g11, self.g21, self.g12, self.g22, self.p1, self.p2];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input("gains and powers must be finite and >= 0".into()));
        }
        if !(self.noise1 > 0.0 && self.noise2 > 0.0) {
            return Err(Error::Input("noise powers must be > 0".into()));
        }
        Ok(())
    }

    /// Own-signal SNR at each receiver without interference.
    fn snr(&self) -> (f64, f64) {
        (self.p1 * self.g11 / self.noise1, self.p2 * self.g22 / self.noise2)
    }

    /// Interference-to-noise ratio at each receiver.
    fn inr(&self) -> (f64, f64) {
        (self.p2 * self.g21 / self.noise1, self.p1 * self.g12 / self.noise2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub r1: f64,
    pub r2: f64,
}

impl RatePoint {
    pub fn new(r1: f64, r2: f64) -> Self {
        RatePoint { r1, r2 }
    }

    pub fn swapped(self) -> Self {
        RatePoint { r1: self.r2, r2: self.r1 }
    }

    /// Componentwise `>=` within `tol`.
    pub fn dominates(&self, other: &RatePoint, tol: f64) -> bool {
        self.r1 + tol >= other.r1 && self.r2 + tol >= other.r2
    }
}

/// Interference treated as noise at both receivers.
pub fn rate_ian(ch: &TwoUserChannel) -> RatePoint {
    let (s1, s2) = ch.snr();
    let (i1, i2) = ch.inr();
    RatePoint::new(capacity(s1 / (1.0 + i1)), capacity(s2 / (1.0 + i2)))
}

/// Which user sends a purely public message in sequential cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScdOrder {
    /// User 1 all public, user 2 all private: receiver 2 cancels `x1`.
    PublicUser1,
    /// Mirror image: receiver 1 cancels `x2`.
    PublicUser2,
}

pub fn rate_scd(ch: &TwoUserChannel, order: ScdOrder) -> RatePoint {
    match order {
        ScdOrder::PublicUser1 => {
            let (_, s2) = ch.snr();
            let (i1, i2) = ch.inr();
            let at_rx1 = capacity(ch.p1 * ch.g11 / ch.noise1 / (1.0 + i1));
            let at_rx2 = capacity(i2 / (1.0 + s2));
            RatePoint::new(at_rx1.min(at_rx2), capacity(s2))
        }
        ScdOrder::PublicUser2 => rate_scd(&ch.swapped(), ScdOrder::PublicUser1).swapped(),
    }
}

/// Simultaneous non-unique decoding outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SndPoint {
    pub rates: RatePoint,
    /// Whether receiver `i` attempted joint decoding (the skip rule failed).
    pub joint: [bool; 2],
}

/// Rate receiver 1 supports for its own message when user 2 transmits at `m2`.
fn snd_rx1(ch: &TwoUserChannel, m2: f64) -> (f64, bool) {
    let (s1, _) = ch.snr();
    let (i1, _) = ch.inr();
    let ian = capacity(s1 / (1.0 + i1));
    if m2 >= capacity(i1) {
        (ian, false)
    } else {
        (capacity(s1).min(capacity(s1 + i1) - m2).max(ian), true)
    }
}

/// Each receiver jointly decodes both streams, not caring about errors in the
/// other's, unless the announced rate of the other stream is at least the
/// single-user capacity of its interference link, in which case it treats it
/// as noise.
pub fn rate_snd(ch: &TwoUserChannel, m1: f64, m2: f64) -> SndPoint {
    let (r1, j1) = snd_rx1(ch, m2);
    let (r2, j2) = snd_rx1(&ch.swapped(), m1);
    SndPoint { rates: RatePoint::new(r1, r2), joint: [j1, j2] }
}

/// Orthogonal frequency split: user 1 gets the fraction `beta` of the band.
pub fn rate_fdm(ch: &TwoUserChannel, beta: f64) -> Result<RatePoint> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Input(format!("FDM fraction must be in [0,1], got {beta}")));
    }
    let part = |frac: f64, p: f64, g: f64, n: f64| {
        if frac <= 0.0 {
            0.0
        } else {
            frac * capacity(p * g / (frac * n))
        }
    };
    Ok(RatePoint::new(
        part(beta, ch.p1, ch.g11, ch.noise1),
        part(1.0 - beta, ch.p2, ch.g22, ch.noise2),
    ))
}

/// Power-split Gaussian HK point without time sharing.
///
/// Each receiver successively decodes the other user's public message, its
/// own public message and finally its own private message; the other
/// user's private message stays as noise. A public rate is the minimum of what
/// the two receivers support for it. `lambda_i` is the private power fraction.
pub fn rate_hk(ch: &TwoUserChannel, lambda1: f64, lambda2: f64) -> RatePoint {
    let half = |ch: &TwoUserChannel, l_own: f64, l_other: f64| {
        // powers at receiver 1, noise-normalised
        let n = ch.noise1;
        let own_pub = (1.0 - l_own) * ch.p1 * ch.g11 / n;
        let own_priv = l_own * ch.p1 * ch.g11 / n;
        let oth_pub = (1.0 - l_other) * ch.p2 * ch.g21 / n;
        let oth_priv = l_other * ch.p2 * ch.g21 / n;
        let r_oth_pub = capacity(oth_pub / (1.0 + own_pub + own_priv + oth_priv));
        let r_own_pub = capacity(own_pub / (1.0 + own_priv + oth_priv));
        let r_own_priv = capacity(own_priv / (1.0 + oth_priv));
        (r_own_pub, r_own_priv, r_oth_pub)
    };
    let (pub1_rx1, priv1, pub2_rx1) = half(ch, lambda1, lambda2);
    let (pub2_rx2, priv2, pub1_rx2) = half(&ch.swapped(), lambda2, lambda1);
    RatePoint::new(pub1_rx1.min(pub1_rx2) + priv1, pub2_rx2.min(pub2_rx1) + priv2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ian,
    Scd1,
    Scd2,
    Snd,
    Fdm,
    Hk,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Strategy::Ian, Strategy::Scd1, Strategy::Scd2, Strategy::Snd, Strategy::Fdm, Strategy::Hk];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ian => "ian",
            Strategy::Scd1 => "scd1",
            Strategy::Scd2 => "scd2",
            Strategy::Snd => "snd",
            Strategy::Fdm => "fdm",
            Strategy::Hk => "hk",
        }
    }
}

/// A rate point with the two parameters that produced it. Their meaning
/// depends on the strategy: powers `(P1, P2)` for IAN/SCD/SND, `(beta, P)`
/// for FDM and `(lambda1, lambda2)` for HK.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedPoint {
    pub param1: f64,
    pub param2: f64,
    pub rate: RatePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegion {
    pub strategy: Strategy,
    pub points: Vec<TaggedPoint>,
    pub frontier: Vec<RatePoint>,
}

impl RateRegion {
    pub fn new(strategy: Strategy, points: Vec<TaggedPoint>) -> Self {
        let frontier = pareto_frontier(&points.iter().map(|p| p.rate).collect::<Vec<_>>());
        RateRegion { strategy, points, frontier }
    }

    pub fn on_frontier(&self, p: &RatePoint) -> bool {
        self.frontier.iter().any(|f| f.r1 == p.r1 && f.r2 == p.r2)
    }
}

/// Non-dominated subset sorted by increasing `r1`. Duplicates collapse to
/// one point; the result does not depend on input order.
pub fn pareto_frontier(points: &[RatePoint]) -> Vec<RatePoint> {
    let mut sorted: Vec<RatePoint> = points.to_vec();
    sorted.sort_by(|a, b| b.r1.total_cmp(&a.r1).then(b.r2.total_cmp(&a.r2)));
    let mut out: Vec<RatePoint> = Vec::new();
    let mut best_r2 = f64::NEG_INFINITY;
    for p in sorted {
        if p.r2 > best_r2 {
            out.push(p);
            best_r2 = p.r2;
        }
    }
    out.reverse();
    out
}

/// Every point of `inner` is componentwise below some point of `outer`.
pub fn frontier_dominates(outer: &[RatePoint], inner: &[RatePoint], tol: f64) -> bool {
    inner.iter().all(|q| outer.iter().any(|p| p.dominates(q, tol)))
}

/// HK points over a `(lambda1, lambda2)` grid and a list of power pairs.
pub fn hk_region(
    ch: &TwoUserChannel,
    lambdas: &[f64],
    powers: &[(f64, f64)],
    exec: Execution,
) -> RateRegion {
    let pairs: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|&a| lambdas.iter().map(move |&b| (a, b)))
        .collect();
    let chunks = par::map_slice(exec, &pairs, |&(l1, l2)| {
        powers
            .iter()
            .map(|&(p1, p2)| TaggedPoint {
                param1: l1,
                param2: l2,
                rate: rate_hk(&ch.with_powers(p1, p2), l1, l2),
            })
            .collect::<Vec<_>>()
    });
    RateRegion::new(Strategy::Hk, chunks.into_iter().flatten().collect())
}

/// `n` evenly spaced values in `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Power pairs tracing the power-control boundary: one user at `p_max`, the
/// other at each of `levels` evenly spaced values in `[0, p_max]`.
pub fn boundary_powers(p_max: f64, levels: usize) -> Vec<(f64, f64)> {
    let grid: Vec<f64> = unit_grid(levels).into_iter().map(|x| x * p_max).collect();
    let mut out: Vec<(f64, f64)> = grid.iter().map(|&p| (p, p_max)).collect();
    out.extend(grid.iter().filter(|&&p| p < p_max).map(|&p| (p_max, p)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub p_max: f64,
    pub power_levels: usize,
    pub lambda_points: usize,
    pub fdm_points: usize,
    pub snd_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { p_max: 10.0, power_levels: 20, lambda_points: 21, fdm_points: 21, snd_points: 21 }
    }
}

/// One region per requested strategy, obtained by varying transmit power
/// (and the strategy's own parameter where it has one). `template` fixes the
/// gains and noises; its powers are ignored.
pub fn region_sweep(
    template: &TwoUserChannel,
    cfg: &SweepConfig,
    strategies: &[Strategy],
    exec: Execution,
) -> Result<Vec<RateRegion>> {
    template.validate()?;
    if !(cfg.p_max >= 0.0 && cfg.p_max.is_finite()) {
        return Err(Error::Config("p_max must be finite and >= 0".into()));
    }
    let powers = boundary_powers(cfg.p_max, cfg.power_levels);
    let tag = |p1: f64, p2: f64, rate: RatePoint| TaggedPoint { param1: p1, param2: p2, rate };
    strategies
        .iter()
        .map(|&s| {
            let points: Vec<TaggedPoint> = match s {
                Strategy::Ian => powers
                    .iter()
                    .map(|&(p1, p2)| tag(p1, p2, rate_ian(&template.with_powers(p1, p2))))
                    .collect(),
                Strategy::Scd1 | Strategy::Scd2 => {
                    let order = if s == Strategy::Scd1 { ScdOrder::PublicUser1 } else { ScdOrder::PublicUser2 };
                    powers
                        .iter()
                        .map(|&(p1, p2)| tag(p1, p2, rate_scd(&template.with_powers(p1, p2), order)))
                        .collect()
                }
                Strategy::Snd => powers
                    .iter()
                    .flat_map(|&(p1, p2)| snd_points(&template.with_powers(p1, p2), cfg.snd_points))
                    .collect(),
                Strategy::Fdm => {
                    let ch = template.with_powers(cfg.p_max, cfg.p_max);
                    unit_grid(cfg.fdm_points)
                        .into_iter()
                        .map(|b| Ok(tag(b, cfg.p_max, rate_fdm(&ch, b)?)))
                        .collect::<Result<_>>()?
                }
                Strategy::Hk => {
                    return Ok(hk_region(template, &unit_grid(cfg.lambda_points), &powers, exec));
                }
            };
            Ok(RateRegion::new(s, points))
        })
        .collect()
}

/// Self-consistent SND operating points for one power pair: announce a rate
/// for one user, let the other receiver pick its best supported rate, then
/// cap the announced rate at what its own receiver supports.
fn snd_points(ch: &TwoUserChannel, n: usize) -> Vec<TaggedPoint> {
    let (s1, s2) = ch.snr();
    let mut out = Vec::with_capacity(2 * n);
    for x in unit_grid(n) {
        let m2 = x * capacity(s2);
        let r1 = rate_snd(ch, 0.0, m2).rates.r1;
        let r2 = m2.min(rate_snd(ch, r1, 0.0).rates.r2);
        out.push(TaggedPoint { param1: ch.p1, param2: ch.p2, rate: RatePoint::new(r1, r2) });

        let m1 = x * capacity(s1);
        let r2 = rate_snd(ch, m1, 0.0).rates.r2;
        let r1 = m1.min(rate_snd(ch, 0.0, r2).rates.r1);
        out.push(TaggedPoint { param1: ch.p1, param2: ch.p2, rate: RatePoint::new(r1, r2) });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraBeamPolicy {
    TreatAsNoise,
    /// The user with the stronger channel norm cancels its partner's stream
    /// first when it can decode it at the partner's rate.
    Sic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicastRates {
    /// `rates[k] = [user 0, user 1]` of beam `k`.
    pub rates: Vec<[f64; 2]>,
    /// Whether SIC succeeded in each beam.
    pub cancelled: Vec<bool>,
}

/// Overloaded unicast with two users per beam and a precoder per user.
///
/// `w` is `N x 2K`; column `2k + i` serves user (slot) `i` of beam `k`.
/// Inter-beam terms are folded into the noise of each user.
pub fn overloaded_unicast_rates(
    channel: &ChannelSet,
    w: &CMatrix,
    policy: IntraBeamPolicy,
) -> Result<UnicastRates> {
    let beams = channel.beams();
    if channel.slots() != 2 {
        return Err(Error::Input("overloaded unicast needs two users per beam".into()));
    }
    if w.nrows() != channel.feeds() || w.ncols() != 2 * beams {
        return Err(Error::Input(format!(
            "precoder must be {}x{}, got {}x{}",
            channel.feeds(),
            2 * beams,
            w.nrows(),
            w.ncols()
        )));
    }
    let mut rates = Vec::with_capacity(beams);
    let mut cancelled = Vec::with_capacity(beams);
    for k in 0..beams {
        // received powers at user i from stream j of this beam, and the
        // noise-plus-inter-beam term
        let mut pw = [[0.0f64; 2]; 2];
        let mut noise = [1.0f64; 2];
        let mut norm = [0.0f64; 2];
        for i in 0..2 {
            let h = &channel.h[i];
            norm[i] = linalg::row(h, k).iter().map(|z| z.norm_sqr()).sum();
            for c in 0..2 * beams {
                let p = linalg::row_col_power(h, k, w, c);
                if c / 2 == k {
                    pw[i][c % 2] = p;
                } else {
                    noise[i] += p;
                }
            }
        }
        let tan = |i: usize| capacity(pw[i][i] / (noise[i] + pw[i][1 - i]));
        let mut r = [tan(0), tan(1)];
        let mut ok = false;
        if policy == IntraBeamPolicy::Sic {
            let strong = if norm[1] > norm[0] { 1 } else { 0 };
            let weak = 1 - strong;
            let cross = capacity(pw[strong][weak] / (noise[strong] + pw[strong][strong]));
            if cross >= r[weak] {
                r[strong] = capacity(pw[strong][strong] / noise[strong]);
                ok = true;
            }
        }
        rates.push(r);
        cancelled.push(ok);
    }
    Ok(UnicastRates { rates, cancelled })
}
