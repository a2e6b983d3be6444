//! Multigroup multicast precoding: the MMSE precoder over the frame-averaged
//! channel, per-feed power scaling, SINR / sum-rate evaluators, a P2
//! feasibility checker and multi-gateway block-diagonal assembly.

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};
use crate::scenario::{ChannelSet, Scenario, UserSet};

/// Condition estimate above which the regularised Gram matrix is loaded.
pub const CONDITION_LIMIT: f64 = 1e12;
pub const DIAGONAL_LOADING: f64 = 1e-12;

/// `N x K` precoder with the power metadata it was scaled against.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeMatrix {
    pub w: CMatrix,
    pub power_cap: f64,
    /// Scalar applied by [`enforce_per_feed`].
    pub beta: f64,
    /// Set when the inverse needed diagonal loading.
    pub loaded: bool,
}

impl PrecodeMatrix {
    /// `[W W^H]_nn` for every feed.
    pub fn feed_powers(&self) -> Vec<f64> {
        feed_powers(&self.w)
    }

    pub fn max_feed_power(&self) -> f64 {
        self.feed_powers().into_iter().fold(0.0, f64::max)
    }
}

pub fn feed_powers(w: &CMatrix) -> Vec<f64> {
    (0..w.nrows())
        .map(|n| w.row(n).iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

/// Per beam, the slot indices grouped into multicast frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    /// `frames[k][f]` lists the slots of beam `k` served in frame `f`.
    pub frames: Vec<Vec<Vec<usize>>>,
}

impl FramePlan {
    /// One frame per beam holding slots `0..slots`.
    pub fn single(beams: usize, slots: usize) -> Self {
        FramePlan { frames: vec![vec![(0..slots).collect()]; beams] }
    }

    pub fn frames_per_beam(&self) -> usize {
        self.frames.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Every slot of every beam appears exactly once and within range.
    pub fn validate(&self, channel: &ChannelSet) -> Result<()> {
        if self.frames.len() != channel.beams() {
            return Err(Error::Config(format!(
                "frame plan covers {} beams, channel has {}",
                self.frames.len(),
                channel.beams()
            )));
        }
        for (k, frames) in self.frames.iter().enumerate() {
            let mut seen = vec![false; channel.slots()];
            for f in frames {
                for &i in f {
                    if i >= channel.slots() || seen[i] {
                        return Err(Error::Config(format!("beam {k}: slot {i} invalid or repeated")));
                    }
                    seen[i] = true;
                }
            }
        }
        Ok(())
    }

    pub fn members(&self, beam: usize, frame: usize) -> Result<&[usize]> {
        let m = self
            .frames
            .get(beam)
            .and_then(|f| f.get(frame))
            .ok_or_else(|| Error::Config(format!("beam {beam} has no frame {frame}")))?;
        if m.is_empty() {
            return Err(Error::Input(format!("frame {frame} of beam {beam} is empty")));
        }
        Ok(m)
    }
}

/// Gateway partition of feeds and beams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GwBlock {
    pub feeds: Vec<usize>,
    pub beams: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GwPartition {
    pub blocks: Vec<GwBlock>,
}

impl GwPartition {
    /// `blocks` contiguous, near-equal groups of feeds and of beams.
    pub fn contiguous(feeds: usize, beams: usize, blocks: usize) -> Self {
        let split = |n: usize| -> Vec<Vec<usize>> {
            (0..blocks)
                .map(|l| (l * n / blocks..(l + 1) * n / blocks).collect())
                .collect()
        };
        let f = split(feeds);
        let b = split(beams);
        GwPartition {
            blocks: f.into_iter().zip(b).map(|(feeds, beams)| GwBlock { feeds, beams }).collect(),
        }
    }

    pub fn validate(&self, feeds: usize, beams: usize) -> Result<()> {
        let check = |name: &str, total: usize, pick: &dyn Fn(&GwBlock) -> &Vec<usize>| {
            let mut seen = vec![false; total];
            for b in &self.blocks {
                for &i in pick(b) {
                    if i >= total || seen[i] {
                        return Err(Error::Config(format!("{name} index {i} invalid or repeated")));
                    }
                    seen[i] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Config(format!("{name} not fully covered by partition")));
            }
            Ok(())
        };
        check("feed", feeds, &|b| &b.feeds)?;
        check("beam", beams, &|b| &b.beams)
    }
}

/// Frame-averaged channel `Hhat`: row `k` is the mean of row `k` over the
/// members of frame `frame` in beam `k`.
pub fn average_channel(channel: &ChannelSet, plan: &FramePlan, frame: usize) -> Result<CMatrix> {
    plan.validate(channel)?;
    let (k_beams, n_feeds) = (channel.beams(), channel.feeds());
    let mut avg = CMatrix::zeros(k_beams, n_feeds);
    for k in 0..k_beams {
        let members = plan.members(k, frame)?;
        let inv = 1.0 / members.len() as f64;
        for n in 0..n_feeds {
            let s = members.iter().fold(ZERO, |acc, &i| acc + channel.h[i][(k, n)]);
            avg[(k, n)] = s * inv;
        }
    }
    Ok(avg)
}

/// `(Hhat^H Hhat + I/P)^{-1} Hhat^H` before power scaling, and whether
/// diagonal loading was applied.
pub fn mmse_unscaled(h_avg: &CMatrix, power: f64) -> Result<(CMatrix, bool)> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Input(format!("power cap must be positive, got {power}")));
    }
    if !linalg::is_finite(h_avg) {
        return Err(Error::Input("channel matrix has non-finite entries".into()));
    }
    let n = h_avg.ncols();
    let hh = h_avg.adjoint();
    let mut gram = &hh * h_avg;
    for i in 0..n {
        gram[(i, i)] += 1.0 / power;
    }
    let mut chol = Cholesky::new(gram.clone())
        .ok_or_else(|| Error::Input("regularised Gram matrix is not positive definite".into()))?;
    let mut loaded = false;
    if cholesky_condition(&chol) > CONDITION_LIMIT {
        for i in 0..n {
            gram[(i, i)] += DIAGONAL_LOADING;
        }
        chol = Cholesky::new(gram)
            .ok_or_else(|| Error::Input("loaded Gram matrix is not positive definite".into()))?;
        loaded = true;
    }
    Ok((chol.solve(&hh), loaded))
}

/// `(max L_ii / min L_ii)^2`, a cheap lower estimate of the 2-norm condition.
fn cholesky_condition(chol: &Cholesky<num_complex::Complex64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (hi / lo).powi(2)
}

/// UpConst multicast MMSE precoder, scaled so the busiest feed sits at `power`.
pub fn mmse_multicast(h_avg: &CMatrix, power: f64) -> Result<PrecodeMatrix> {
    let (raw, loaded) = mmse_unscaled(h_avg, power)?;
    let mut p = enforce_per_feed(&raw, power)?;
    p.loaded = loaded;
    Ok(p)
}

/// Uniformly scales `w_raw` so that `max_n [W W^H]_nn = power`.
pub fn enforce_per_feed(w_raw: &CMatrix, power: f64) -> Result<PrecodeMatrix> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Input(format!("power cap must be positive, got {power}")));
    }
    let peak = feed_powers(w_raw).into_iter().fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Input("precoder has no finite non-zero feed power".into()));
    }
    let beta = (power / peak).sqrt();
    Ok(PrecodeMatrix { w: w_raw * Complex64::new(beta, 0.0), power_cap: power, beta, loaded: false })
}

/// Equal-power single-feed-per-beam baseline: feed `k` carries beam `k`.
pub fn identity_precoder(feeds: usize, beams: usize, power: f64) -> Result<PrecodeMatrix> {
    let mut w = CMatrix::zeros(feeds, beams);
    for k in 0..feeds.min(beams) {
        w[(k, k)] = linalg::ONE;
    }
    enforce_per_feed(&w, power)
}

/// Linear SINR per beam and frame member: `values[k][m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrTable {
    pub values: Vec<Vec<f64>>,
}

fn user_sinr(h: &CMatrix, k: usize, w: &CMatrix) -> f64 {
    let signal = linalg::row_col_power(h, k, w, k);
    let interference: f64 = (0..w.ncols())
        .filter(|&j| j != k)
        .map(|j| linalg::row_col_power(h, k, w, j))
        .sum();
    signal / (interference + 1.0)
}

fn check_shapes(channel: &ChannelSet, w: &CMatrix) -> Result<()> {
    if w.nrows() != channel.feeds() || w.ncols() != channel.beams() {
        return Err(Error::Input(format!(
            "precoder is {}x{}, channel needs {}x{}",
            w.nrows(),
            w.ncols(),
            channel.feeds(),
            channel.beams()
        )));
    }
    Ok(())
}

/// Unit-noise SINR of every slot in every beam.
pub fn sinr_all(channel: &ChannelSet, w: &CMatrix) -> Result<SinrTable> {
    check_shapes(channel, w)?;
    let values = (0..channel.beams())
        .map(|k| channel.h.iter().map(|h| user_sinr(h, k, w)).collect())
        .collect();
    Ok(SinrTable { values })
}

/// SINR restricted to the members of one frame.
pub fn sinr_frame(channel: &ChannelSet, plan: &FramePlan, frame: usize, w: &CMatrix) -> Result<SinrTable> {
    check_shapes(channel, w)?;
    plan.validate(channel)?;
    let values = (0..channel.beams())
        .map(|k| {
            Ok(plan
                .members(k, frame)?
                .iter()
                .map(|&i| user_sinr(&channel.h[i], k, w))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(SinrTable { values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRate {
    pub total: f64,
    pub per_beam: Vec<f64>,
}

/// Multicast sum-rate: each beam runs at its weakest member's Shannon rate.
pub fn sum_rate(table: &SinrTable) -> SumRate {
    let per_beam: Vec<f64> = table
        .values
        .iter()
        .map(|members| {
            let worst = members.iter().copied().fold(f64::INFINITY, f64::min);
            if worst.is_finite() {
                (1.0 + worst).log2()
            } else {
                0.0
            }
        })
        .collect();
    SumRate { total: per_beam.iter().sum(), per_beam }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Feasibility {
    /// `(beam, slot, sinr)` below its beam target.
    pub sinr_violations: Vec<(usize, usize, f64)>,
    /// `(feed, power)` above the cap.
    pub feed_violations: Vec<(usize, f64)>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.sinr_violations.is_empty() && self.feed_violations.is_empty()
    }
}

/// Checks a candidate `W` against the P2 constraints: every user of beam `k`
/// at SINR `>= targets[k]`, every feed at power `<= power` (1e-9 relative slack).
pub fn check_p2_feasibility(
    channel: &ChannelSet,
    w: &CMatrix,
    targets: &[f64],
    power: f64,
) -> Result<Feasibility> {
    if targets.len() != channel.beams() {
        return Err(Error::Input(format!(
            "{} SINR targets for {} beams",
            targets.len(),
            channel.beams()
        )));
    }
    let table = sinr_all(channel, w)?;
    let mut out = Feasibility::default();
    for (k, members) in table.values.iter().enumerate() {
        for (i, &s) in members.iter().enumerate() {
            if s < targets[k] {
                out.sinr_violations.push((k, i, s));
            }
        }
    }
    for (n, p) in feed_powers(w).into_iter().enumerate() {
        if p > power * (1.0 + 1e-9) {
            out.feed_violations.push((n, p));
        }
    }
    Ok(out)
}

/// Places per-gateway precoders on the block diagonal of an `N x K` matrix.
/// `blocks[l]` must be `|feeds_l| x |beams_l|`.
pub fn block_diag_assemble(
    partition: &GwPartition,
    blocks: &[PrecodeMatrix],
    feeds: usize,
    beams: usize,
) -> Result<PrecodeMatrix> {
    partition.validate(feeds, beams)?;
    if blocks.len() != partition.blocks.len() {
        return Err(Error::Input("one precoder per gateway block required".into()));
    }
    let mut w = CMatrix::zeros(feeds, beams);
    let mut cap: f64 = 0.0;
    for (blk, p) in partition.blocks.iter().zip(blocks) {
        if p.w.shape() != (blk.feeds.len(), blk.beams.len()) {
            return Err(Error::Input("block precoder shape does not match partition".into()));
        }
        for (a, &n) in blk.feeds.iter().enumerate() {
            for (b, &k) in blk.beams.iter().enumerate() {
                w[(n, k)] = p.w[(a, b)];
            }
        }
        cap = cap.max(p.power_cap);
    }
    let out = PrecodeMatrix {
        w,
        power_cap: cap,
        beta: 1.0,
        loaded: blocks.iter().any(|b| b.loaded),
    };
    if out.max_feed_power() > cap * (1.0 + 1e-9) {
        return Err(Error::Input("assembled precoder violates the per-feed cap".into()));
    }
    Ok(out)
}

/// Each gateway runs MMSE on its own sub-channel (its beams x its feeds).
pub fn multi_gateway_mmse(h_avg: &CMatrix, partition: &GwPartition, power: f64) -> Result<PrecodeMatrix> {
    let (beams, feeds) = h_avg.shape();
    partition.validate(feeds, beams)?;
    let blocks = partition
        .blocks
        .iter()
        .map(|blk| {
            let sub = CMatrix::from_fn(blk.beams.len(), blk.feeds.len(), |b, a| {
                h_avg[(blk.beams[b], blk.feeds[a])]
            });
            mmse_multicast(&sub, power)
        })
        .collect::<Result<Vec<_>>>()?;
    block_diag_assemble(partition, &blocks, feeds, beams)
}

/// Greedy geographic grouping. Within each beam, the unassigned user closest
/// to the beam centre seeds a frame, which is then filled with its nearest
/// unassigned neighbours; ties go to the lower user index.
pub fn geographic_scheduler(scenario: &Scenario, users: &UserSet, users_per_frame: usize) -> Result<FramePlan> {
    if users_per_frame == 0 {
        return Err(Error::Config("users_per_frame must be >= 1".into()));
    }
    if users.beams() != scenario.beams {
        return Err(Error::Config("user set does not match scenario beams".into()));
    }
    let dist2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let nearest = |from: [f64; 2], pos: &[[f64; 2]], free: &[bool]| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, &p) in pos.iter().enumerate() {
            if !free[i] {
                continue;
            }
            let d = dist2(from, p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|b| b.1)
    };
    let frames = users
        .positions
        .iter()
        .enumerate()
        .map(|(k, pos)| {
            let mut free = vec![true; pos.len()];
            let mut frames = Vec::new();
            while let Some(seed) = nearest(scenario.beam_centers[k], pos, &free) {
                free[seed] = false;
                let mut frame = vec![seed];
                while frame.len() < users_per_frame {
                    match nearest(pos[seed], pos, &free) {
                        Some(j) => {
                            free[j] = false;
                            frame.push(j);
                        }
                        None => break,
                    }
                }
                frame.sort_unstable();
                frames.push(frame);
            }
            frames
        })
        .collect();
    Ok(FramePlan { frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_channel_unit_power() {
        let h = CMatrix::identity(3, 3);
        let (raw, loaded) = mmse_unscaled(&h, 1.0).unwrap();
        assert!(!loaded);
        assert!(linalg::max_abs_diff(&raw, &(CMatrix::identity(3, 3) * c(0.5, 0.0))) < 1e-15);
        let p = mmse_multicast(&h, 1.0).unwrap();
        assert!((p.beta - 2.0).abs() < 1e-14);
        assert!(linalg::max_abs_diff(&p.w, &CMatrix::identity(3, 3)) < 1e-14);
    }

    #[test]
    fn enforce_per_feed_examples() {
        let w = CMatrix::from_row_slice(2, 2, &[ONE, ONE, c(0.5, 0.0), ZERO]);
        // row powers 2 and 0.25
        let p = enforce_per_feed(&w, 2.0).unwrap();
        assert!((p.beta - 1.0).abs() < 1e-15);
        let p = enforce_per_feed(&(w.clone() * c(2.0, 0.0)), 2.0).unwrap();
        assert!((p.beta - 0.5).abs() < 1e-15);
        assert!(enforce_per_feed(&CMatrix::zeros(2, 2), 1.0).is_err());
        assert!(enforce_per_feed(&w, 0.0).is_err());
    }

    #[test]
    fn non_finite_channel_rejected() {
        let mut h = CMatrix::identity(2, 2);
        h[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(mmse_multicast(&h, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn zero_precoder_gives_zero_sinr() {
        let ch = ChannelSet::from_matrices(vec![CMatrix::identity(2, 3)]).unwrap();
        let t = sinr_all(&ch, &CMatrix::zeros(3, 2)).unwrap();
        assert!(t.values.iter().flatten().all(|&s| s == 0.0));
        assert_eq!(sum_rate(&t).total, 0.0);
    }

    #[test]
    fn orthogonal_columns_have_no_interference() {
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), ZERO, ZERO, c(0.0, 3.0)]);
        let ch = ChannelSet::from_matrices(vec![h]).unwrap();
        let t = sinr_all(&ch, &CMatrix::identity(2, 2)).unwrap();
        assert!((t.values[0][0] - 4.0).abs() < 1e-15);
        assert!((t.values[1][0] - 9.0).abs() < 1e-15);
    }

    #[test]
    fn sum_rate_examples() {
        let t = SinrTable { values: vec![vec![1.0]; 3] };
        let sr = sum_rate(&t);
        assert!((sr.total - 3.0).abs() < 1e-15);
        let t = SinrTable { values: vec![vec![100.0, 0.0, 50.0], vec![1.0, 3.0]] };
        let sr = sum_rate(&t);
        assert_eq!(sr.per_beam[0], 0.0);
        assert_eq!(sr.per_beam[1], 1.0);
    }

    #[test]
    fn singleton_and_cancelling_averages() {
        let h = CMatrix::from_fn(2, 2, |i, j| c(i as f64 + 1.0, j as f64 - 0.5));
        let ch = ChannelSet::from_matrices(vec![h.clone()]).unwrap();
        let avg = average_channel(&ch, &FramePlan::single(2, 1), 0).unwrap();
        assert_eq!(avg, h);
        let ch = ChannelSet::from_matrices(vec![h.clone(), -h.clone()]).unwrap();
        let avg = average_channel(&ch, &FramePlan::single(2, 2), 0).unwrap();
        assert!(avg.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn empty_frame_errors() {
        let ch = ChannelSet::from_matrices(vec![CMatrix::identity(2, 2)]).unwrap();
        let plan = FramePlan { frames: vec![vec![vec![0]], vec![vec![0], vec![]]] };
        assert!(average_channel(&ch, &plan, 1).is_err());
    }

    #[test]
    fn feasibility_reports_both_kinds() {
        let ch = ChannelSet::from_matrices(vec![CMatrix::identity(2, 2)]).unwrap();
        let w = CMatrix::identity(2, 2) * c(2.0, 0.0);
        let f = check_p2_feasibility(&ch, &w, &[3.0, 5.0], 3.5).unwrap();
        assert_eq!(f.sinr_violations, vec![(1, 0, 4.0)]);
        assert_eq!(f.feed_violations, vec![(0, 4.0), (1, 4.0)]);
        assert!(!f.is_feasible());
        let f = check_p2_feasibility(&ch, &w, &[1.0, 1.0], 4.0).unwrap();
        assert!(f.is_feasible());
    }

    #[test]
    fn partition_validation() {
        let p = GwPartition::contiguous(4, 4, 2);
        p.validate(4, 4).unwrap();
        assert_eq!(p.blocks[1].feeds, vec![2, 3]);
        let bad = GwPartition { blocks: vec![GwBlock { feeds: vec![0, 1], beams: vec![0] }] };
        assert!(bad.validate(2, 2).is_err());
    }

    #[test]
    fn scheduler_groups_by_proximity() {
        let s = Scenario::hexagonal(1, 100.0);
        let users = UserSet {
            positions: vec![vec![[30.0, 0.0], [1.0, 0.0], [31.0, 0.0], [2.0, 0.0]]],
        };
        let plan = geographic_scheduler(&s, &users, 2).unwrap();
        assert_eq!(plan.frames[0], vec![vec![1, 3], vec![0, 2]]);
    }
}
