use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use mbsat::access::{self, TwoUserChannel};
use mbsat::caching::{self, DeliveryParams, ThresholdRow};
use mbsat::cognitive::{self, RemScenario};
use mbsat::detection::{self, FrameLayout, Hypothesis, LinkPoint};
use mbsat::par::{self, Execution};
use mbsat::precoding::{self, FramePlan};
use mbsat::predistortion::{self, ChainRow, SpdLocation};
use mbsat::rng;
use mbsat::scenario::{self, FadingModel, ReusePattern, Scenario, UserSet};
use mbsat::stats;

use crate::config::*;

/// Where a run writes and how it schedules work.
pub struct Ctx {
    pub out: std::path::PathBuf,
    pub seed: u64,
    pub exec: Execution,
}

fn create(ctx: &Ctx, name: &str) -> Result<BufWriter<File>> {
    let path = ctx.out.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_csv<T: Serialize>(ctx: &Ctx, name: &str, rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(create(ctx, name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(name.to_string())
}

// per-cell seed so that grid points never share streams
fn cell_seed(seed: u64, cell: u64) -> u64 {
    seed.wrapping_add(cell.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Serialize)]
struct CirRow {
    reuse_factor: usize,
    avg_cir_db: f64,
    n_mc: usize,
    seed: u64,
}

pub fn channel_report(cfg: &ChannelReportConfig, ctx: &Ctx) -> Result<Vec<String>> {
    cfg.scenario.validate()?;
    let mut rows = Vec::new();
    for &fr in &cfg.reuse_factors {
        let reuse = ReusePattern::hexagonal(&cfg.scenario, fr)?;
        let cir = scenario::average_cir(&cfg.scenario, &reuse, cfg.n_mc, ctx.seed, ctx.exec)?;
        rows.push(CirRow { reuse_factor: fr, avg_cir_db: cir, n_mc: cfg.n_mc, seed: ctx.seed });
    }
    Ok(vec![write_csv(ctx, "channel_report.csv", &rows)?])
}

/// Same link budget and lattice spacing as `base`, with `beams` beams and one
/// feed per beam.
fn resized(base: &Scenario, beams: usize) -> Scenario {
    let lattice = Scenario::hexagonal(beams, base.beam_spacing_km);
    Scenario { beams, feeds: beams, beam_centers: lattice.beam_centers, feed_centers: Vec::new(), ..base.clone() }
}

#[derive(Serialize)]
struct BenchRow {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Nu")]
    nu: usize,
    sr_per_beam: f64,
    cpu_ms: f64,
}

#[derive(Serialize)]
struct FrameRow {
    beam: usize,
    frame: usize,
    min_sinr_db: f64,
    rate_bpshz: f64,
}

fn one_frame_sum_rate(s: &Scenario, nu: usize, seed: u64) -> mbsat::Result<f64> {
    let mut r = rng::stream(seed, 0);
    let users = UserSet::drop_uniform(s, nu, &mut r);
    let ch = scenario::build_channel(s, &users, &FadingModel::identity(), &mut r)?;
    let plan = FramePlan::single(s.beams, nu);
    let h_avg = precoding::average_channel(&ch, &plan, 0)?;
    let w = precoding::mmse_multicast(&h_avg, s.feed_power_w)?;
    Ok(precoding::sum_rate(&precoding::sinr_frame(&ch, &plan, 0, &w.w)?).total)
}

pub fn precoding_bench(cfg: &PrecodingBenchConfig, ctx: &Ctx) -> Result<Vec<String>> {
    cfg.scenario.validate()?;
    if cfg.trials == 0 || cfg.frames == 0 {
        bail!("trials and frames must be >= 1");
    }
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &k in &cfg.beam_counts {
        let s = resized(&cfg.scenario, k);
        s.validate()?;
        for &nu in &cfg.users_per_frame {
            let seed = cell_seed(ctx.seed, cell);
            cell += 1;
            let start = Instant::now();
            let totals = par::map_indexed(ctx.exec, cfg.trials, |t| {
                one_frame_sum_rate(&s, nu, seed.wrapping_add(t as u64))
            })
            .into_iter()
            .collect::<mbsat::Result<Vec<f64>>>()?;
            let cpu_ms = start.elapsed().as_secs_f64() * 1e3 / cfg.trials as f64;
            rows.push(BenchRow { k, n: s.feeds, nu, sr_per_beam: stats::mean(&totals) / k as f64, cpu_ms });
        }
    }
    let mut outputs = vec![write_csv(ctx, "precoding_bench.csv", &rows)?];

    // per-frame detail on the configured scenario
    let s = &cfg.scenario;
    let nu = s.users_per_beam;
    let mut r = rng::stream(ctx.seed, u64::MAX);
    let users = UserSet::drop_uniform(s, nu * cfg.frames, &mut r);
    let ch = scenario::build_channel(s, &users, &FadingModel::identity(), &mut r)?;
    let plan = precoding::geographic_scheduler(s, &users, nu)?;
    let mut frames = Vec::new();
    for f in 0..plan.frames_per_beam() {
        let h_avg = precoding::average_channel(&ch, &plan, f)?;
        let w = precoding::mmse_multicast(&h_avg, s.feed_power_w)?;
        let table = precoding::sinr_frame(&ch, &plan, f, &w.w)?;
        for (k, members) in table.values.iter().enumerate() {
            let worst = members.iter().copied().fold(f64::INFINITY, f64::min);
            frames.push(FrameRow { beam: k, frame: f, min_sinr_db: stats::db(worst), rate_bpshz: (1.0 + worst).log2() });
        }
    }
    outputs.push(write_csv(ctx, "precoding_frames.csv", &frames)?);
    Ok(outputs)
}

#[derive(Serialize)]
struct RegionRow {
    strategy: &'static str,
    param1: f64,
    param2: f64,
    #[serde(rename = "R1")]
    r1: f64,
    #[serde(rename = "R2")]
    r2: f64,
    on_frontier: bool,
}

pub fn rate_region(cfg: &RateRegionConfig, ctx: &Ctx) -> Result<Vec<String>> {
    let template = TwoUserChannel::symmetric_db(cfg.direct_db, cfg.cross_db, cfg.sweep.p_max);
    let regions = access::region_sweep(&template, &cfg.sweep, &cfg.strategies, ctx.exec)?;
    let mut outputs = Vec::new();
    for reg in &regions {
        let rows: Vec<RegionRow> = reg
            .points
            .iter()
            .map(|p| RegionRow {
                strategy: reg.strategy.name(),
                param1: p.param1,
                param2: p.param2,
                r1: p.rate.r1,
                r2: p.rate.r2,
                on_frontier: reg.on_frontier(&p.rate),
            })
            .collect();
        outputs.push(write_csv(ctx, &format!("rate_region_{}.csv", reg.strategy.name()), &rows)?);
    }
    Ok(outputs)
}

#[derive(Serialize)]
struct PdRow {
    detector: &'static str,
    eps_db: f64,
    isnr_db: f64,
    pd: f64,
    pd_lo: f64,
    pd_hi: f64,
    n_mc: usize,
    pfa_target: f64,
    seed: u64,
}

#[derive(Serialize)]
struct PfaRow {
    detector: &'static str,
    eps_db: f64,
    threshold: f64,
    pfa: f64,
    pfa_lo: f64,
    pfa_hi: f64,
    n_mc: usize,
    pfa_target: f64,
    seed: u64,
}

pub fn detection_pd(cfg: &DetectionConfig, ctx: &Ctx) -> Result<Vec<String>> {
    if cfg.n_pilots == 0 || cfg.n_mc == 0 || cfg.n_calibration == 0 {
        bail!("pilots, n_mc and n_calibration must be >= 1");
    }
    let grid = cfg.isnr_grid();
    if grid.is_empty() {
        bail!("ISNR grid is empty");
    }
    let layout = FrameLayout::new(cfg.n_data, cfg.n_pilots);
    let mut rows = Vec::new();
    let mut pfa_rows = Vec::new();
    let mut cell = 0u64;
    for &eps in &cfg.eps_db {
        for &kind in &cfg.detectors {
            let seed = cell_seed(ctx.seed, cell);
            cell += 1;
            let link = LinkPoint { snr_db: cfg.snr_db, eps_db: eps };
            let det = detection::calibrate_threshold(&layout, kind, link, cfg.pfa_target, cfg.n_calibration, seed, ctx.exec)?;
            let h0 = detection::detection_rate(&layout, &det, Hypothesis::H0, cfg.snr_db, 0.0, cfg.n_mc, seed, ctx.exec)?;
            pfa_rows.push(PfaRow {
                detector: kind.name(),
                eps_db: eps,
                threshold: det.threshold,
                pfa: h0.pd,
                pfa_lo: h0.lo,
                pfa_hi: h0.hi,
                n_mc: cfg.n_mc,
                pfa_target: cfg.pfa_target,
                seed,
            });
            for p in detection::pd_curve(&layout, &det, &grid, cfg.snr_db, cfg.n_mc, seed, ctx.exec)? {
                rows.push(PdRow {
                    detector: kind.name(),
                    eps_db: eps,
                    isnr_db: p.isnr_db,
                    pd: p.pd,
                    pd_lo: p.lo,
                    pd_hi: p.hi,
                    n_mc: p.n_mc,
                    pfa_target: cfg.pfa_target,
                    seed,
                });
            }
        }
    }
    Ok(vec![write_csv(ctx, "detection_pd.csv", &rows)?, write_csv(ctx, "detection_pfa.csv", &pfa_rows)?])
}

pub fn spd_bench(cfg: &SpdBenchConfig, ctx: &Ctx) -> Result<Vec<String>> {
    cfg.chain.validate()?;
    cfg.hpa.validate()?;
    let mut rows: Vec<ChainRow> = Vec::new();
    for &loc in &cfg.locations {
        // the jitter-aware flag only matters for an onboard fit
        let flags = if loc == SpdLocation::Onboard { cfg.jitter_aware.clone() } else { vec![cfg.chain.jitter_aware] };
        for aware in flags {
            let chain = predistortion::ChainConfig { spd_location: loc, jitter_aware: aware, ..cfg.chain.clone() };
            let pts = predistortion::obo_sweep(&chain, &cfg.hpa, &cfg.obo_db, cfg.n_symbols, ctx.seed, ctx.exec)?;
            rows.extend(pts.iter().map(ChainRow::from));
        }
    }
    let mut buf = create(ctx, "spd_bench.csv")?;
    predistortion::chain::write_rows(&rows, &mut buf)?;
    buf.flush()?;
    let mut outputs = vec!["spd_bench.csv".to_string()];

    if let Some(bins) = cfg.lut_bins {
        let chain = predistortion::ChainConfig { spd_location: SpdLocation::Onboard, lut_bins: Some(bins), ..cfg.chain.clone() };
        let pt = predistortion::sinr_at_obo(&chain, &cfg.hpa, cfg.lut_obo_db, cfg.n_symbols, ctx.seed)?;
        let lut = pt.spd.and_then(|p| p.lut).context("onboard fit produced no table")?;
        let mut w = create(ctx, "spd_lut.csv")?;
        lut.write(&mut w)?;
        w.flush()?;
        outputs.push("spd_lut.csv".to_string());
    }
    Ok(outputs)
}

#[derive(Serialize)]
struct ThroughputRow {
    instance: usize,
    shared_sum_rate: f64,
    exclusive_sum_rate: f64,
    gain: f64,
}

pub fn carrier_assign(cfg: &CarrierAssignConfig, ctx: &Ctx) -> Result<Vec<String>> {
    cfg.rem.validate()?;
    if cfg.instances == 0 {
        bail!("instances must be >= 1");
    }
    let stations = match &cfg.rem_csv {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("cannot read {}", p.display()))?;
            Some(cognitive::read_rem(f)?)
        }
        None => None,
    };
    let mut outputs = Vec::new();
    let mut report = Vec::new();
    for i in 0..cfg.instances {
        let mut scen: RemScenario = cognitive::synthetic_rem(&cfg.rem, cell_seed(ctx.seed, i as u64))?;
        if let Some(st) = &stations {
            scen.stations = st.clone();
        }
        let sinr = cognitive::sinr_from_rem(&cfg.rem, &scen, &format!("instance-{i}"))?;
        let rates = cognitive::rate_matrix(&sinr, cfg.rem.rate_map);
        let a = cognitive::assign_hungarian(&rates)?;
        let name = format!("assignment_{i:03}.csv");
        let mut w = create(ctx, &name)?;
        cognitive::write_assignment(&cognitive::assignment_rows(&rates, &a), &mut w)?;
        w.flush()?;
        outputs.push(name);

        let name = format!("rem_{i:03}.csv");
        let mut w = create(ctx, &name)?;
        cognitive::write_rem(&scen.stations, &mut w)?;
        w.flush()?;
        outputs.push(name);

        let t = cognitive::throughput_report(&rates, &cfg.rem.exclusive_carriers())?;
        report.push(ThroughputRow {
            instance: i,
            shared_sum_rate: t.shared_sum_rate,
            exclusive_sum_rate: t.exclusive_sum_rate,
            gain: t.gain,
        });
    }
    outputs.push(write_csv(ctx, "throughput.csv", &report)?);
    Ok(outputs)
}

pub fn caching_threshold(cfg: &CachingConfig, ctx: &Ctx) -> Result<Vec<String>> {
    let mut minima = Vec::new();
    let mut curve = Vec::new();
    for &alpha in &cfg.alphas {
        let model = caching::zipf_pmf(cfg.files, alpha)?;
        for &k in &cfg.base_stations {
            let p = DeliveryParams { file_bits: cfg.file_bits, base_stations: k, r_uc: cfg.rate_ratio * cfg.r_bc, r_bc: cfg.r_bc };
            for plan in caching::threshold_curve(&model, &p)? {
                curve.push(ThresholdRow::new(&model, &p, &plan));
            }
            let best = caching::optimal_threshold(&model, &p)?;
            minima.push(ThresholdRow::new(&model, &p, &best));
        }
    }
    let mut outputs = Vec::new();
    for (name, rows) in [("caching_min.csv", &minima), ("caching_curve.csv", &curve)] {
        let mut w = create(ctx, name)?;
        caching::write_rows(rows, &mut w)?;
        w.flush()?;
        outputs.push(name.to_string());
    }
    Ok(outputs)
}

/// Makes sure `dir` exists and is writable before any work starts.
pub fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let probe = dir.join(".mbsat-write-test");
    File::create(&probe).with_context(|| format!("output directory {} is not writable", dir.display()))?;
    std::fs::remove_file(&probe)?;
    Ok(())
}
