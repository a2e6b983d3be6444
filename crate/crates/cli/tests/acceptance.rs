//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Oracles here are written independently of the library code.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use mbsat::access::{self, RatePoint, Strategy, SweepConfig, TwoUserChannel};
use mbsat::caching::{self, DeliveryParams};
use mbsat::cognitive;
use mbsat::detection::{self, DetectorKind, FrameLayout, Hypothesis, LinkPoint};
use mbsat::linalg::CMatrix;
use mbsat::par::Execution;
use mbsat::precoding;
use mbsat::predistortion::{self, ChainConfig, HpaParams, SpdLocation};
use mbsat::rng;
use mbsat::scenario::{self, ChannelSet, ReusePattern, Scenario};
use mbsat::Complex64;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn random_matrix(rows: usize, cols: usize, r: &mut rng::SimRng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| rng::complex_normal(r, 1.0))
}

// ---------------------------------------------------------------- oracles

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
fn gauss_jordan(mut a: Vec<Vec<Complex64>>, mut b: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = 1.0 / a[col][col];
        for v in a[col].iter_mut() {
            *v *= inv;
        }
        for v in b[col].iter_mut() {
            *v *= inv;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..n {
                let t = a[col][c];
                a[row][c] -= f * t;
            }
            for c in 0..b[row].len() {
                let t = b[col][c];
                b[row][c] -= f * t;
            }
        }
    }
    b
}

/// `(H^H H + I/P)^{-1} H^H` scaled so the largest feed power equals `p`.
fn mmse_oracle(h: &CMatrix, p: f64) -> Vec<Vec<Complex64>> {
    let (k, n) = h.shape();
    let mut a = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for r in 0..k {
                s += h[(r, i)].conj() * h[(r, j)];
            }
            a[i][j] = s;
        }
        a[i][i] += 1.0 / p;
    }
    let hh: Vec<Vec<Complex64>> = (0..n).map(|i| (0..k).map(|r| h[(r, i)].conj()).collect()).collect();
    let mut w = gauss_jordan(a, hh);
    let peak = w.iter().map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>()).fold(0.0, f64::max);
    let beta = (p / peak).sqrt();
    for row in w.iter_mut() {
        for z in row.iter_mut() {
            *z *= beta;
        }
    }
    w
}

/// Unit-noise SINR of row `k` of `h` for precoder `w`, by explicit loops.
fn sinr_oracle(h: &CMatrix, w: &CMatrix, k: usize) -> f64 {
    let (n, cols) = w.shape();
    let mut sig = 0.0;
    let mut intf = 0.0;
    for j in 0..cols {
        let (mut re, mut im) = (0.0, 0.0);
        for f in 0..n {
            let (a, b) = (h[(k, f)], w[(f, j)]);
            re += a.re * b.re - a.im * b.im;
            im += a.re * b.im + a.im * b.re;
        }
        let p = re * re + im * im;
        if j == k {
            sig = p;
        } else {
            intf += p;
        }
    }
    sig / (intf + 1.0)
}

/// Best total over every one-to-one pairing of carriers and terminals.
fn exhaustive_assignment(rates: &[Vec<f64>]) -> f64 {
    fn go(rates: &[Vec<f64>], m: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if m == rates.len() {
            *best = best.max(acc);
            return;
        }
        // carrier m left idle
        go(rates, m + 1, used, acc, best);
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                go(rates, m + 1, used, acc + rates[m][k], best);
                used[k] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(rates, 0, &mut vec![false; rates[0].len()], 0.0, &mut best);
    best
}

fn lex_optimal_map(rates: &[Vec<f64>], best: f64, tol: f64) -> Vec<Option<usize>> {
    // lexicographically smallest terminal sequence among maximum-size optimal matchings
    let m = rates.len();
    let k = rates[0].len();
    let size = m.min(k);
    let mut out = None;
    fn go(
        rates: &[Vec<f64>],
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        acc: f64,
        target: (f64, f64, usize),
        out: &mut Option<Vec<Option<usize>>>,
    ) {
        if out.is_some() {
            return;
        }
        if row == rates.len() {
            let assigned = cur.iter().filter(|c| c.is_some()).count();
            if assigned == target.2 && (acc - target.0).abs() <= target.1 {
                *out = Some(cur.clone());
            }
            return;
        }
        for kk in 0..used.len() {
            if !used[kk] {
                used[kk] = true;
                cur.push(Some(kk));
                go(rates, row + 1, used, cur, acc + rates[row][kk], target, out);
                cur.pop();
                used[kk] = false;
            }
        }
        cur.push(None);
        go(rates, row + 1, used, cur, acc, target, out);
        cur.pop();
    }
    go(rates, 0, &mut vec![false; k], &mut Vec::new(), 0.0, (best, tol, size), &mut out);
    out.expect("an optimal matching exists")
}

// ---------------------------------------------------------------- criteria

fn c1_mmse() -> Check {
    let start = Instant::now();
    let mut worst_rel: f64 = 0.0;
    let mut worst_cap: f64 = 0.0;
    let mut n_inst = 0;
    for size in 4..=16 {
        for rep in 0..4 {
            let mut r = rng::stream(101, (size * 10 + rep) as u64);
            let h = random_matrix(size, size, &mut r);
            let p = [0.1, 1.0, 10.0, 100.0][rep];
            let w = precoding::mmse_multicast(&h, p).map_err(|e| e.to_string())?;
            let o = mmse_oracle(&h, p);
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    num += (w.w[(i, j)] - o[i][j]).norm_sqr();
                    den += o[i][j].norm_sqr();
                }
            }
            worst_rel = worst_rel.max((num / den).sqrt());
            let peak = w.max_feed_power();
            worst_cap = worst_cap.max((peak - p).abs() / p);
            ensure(w.feed_powers().iter().all(|&f| f <= p * (1.0 + 1e-9)), || "feed above cap".into())?;
            n_inst += 1;
        }
    }
    ensure(worst_rel <= 1e-10, || format!("oracle mismatch {worst_rel:.2e}"))?;
    ensure(worst_cap <= 1e-9, || format!("cap not active: {worst_cap:.2e}"))?;

    let mut leak = Vec::new();
    for rep in 0..5 {
        let h = random_matrix(8, 8, &mut rng::stream(202, rep));
        let mut this = Vec::new();
        for p in [1e2, 1e4, 1e6] {
            let w = precoding::mmse_multicast(&h, p).map_err(|e| e.to_string())?;
            let hw = &h * &w.w;
            let (mut off, mut diag) = (0.0, 0.0);
            for i in 0..8 {
                for j in 0..8 {
                    if i == j {
                        diag += hw[(i, j)].norm_sqr();
                    } else {
                        off += hw[(i, j)].norm_sqr();
                    }
                }
            }
            this.push((off / diag).sqrt());
        }
        ensure(this[0] > this[1] && this[1] > this[2], || format!("leakage not decreasing: {this:?}"))?;
        leak.push(this);
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!(
        "{n_inst} instances, max rel err {worst_rel:.1e}, cap err {worst_cap:.1e}, leakage {:.1e} -> {:.1e}",
        leak[0][0], leak[0][2]
    ))
}

fn c2_evaluators() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng::stream(303, seed);
        let k = r.random_range(1..=32usize);
        let n = r.random_range(k..=32usize);
        let slots = r.random_range(1..=3usize);
        let hs: Vec<CMatrix> = (0..slots).map(|_| random_matrix(k, n, &mut r)).collect();
        let w = random_matrix(n, k, &mut r);
        let ch = ChannelSet::from_matrices(hs.clone()).map_err(|e| e.to_string())?;
        let table = precoding::sinr_all(&ch, &w).map_err(|e| e.to_string())?;
        let sr = precoding::sum_rate(&table);
        let mut total = 0.0;
        for beam in 0..k {
            let mut min_sinr = f64::INFINITY;
            for (i, h) in hs.iter().enumerate() {
                let o = sinr_oracle(h, &w, beam);
                worst = worst.max((table.values[beam][i] - o).abs() / o.abs().max(1e-300));
                min_sinr = min_sinr.min(o);
            }
            let rate = (1.0 + min_sinr).log2();
            worst = worst.max((sr.per_beam[beam] - rate).abs() / rate.abs().max(1e-300));
            total += rate;
        }
        worst = worst.max((sr.total - total).abs() / total.abs().max(1e-300));
    }
    ensure(worst <= 1e-12, || format!("max relative deviation {worst:.2e}"))?;
    within(Duration::from_secs(5), start)?;
    Ok(format!("100 instances, max rel deviation {worst:.1e}"))
}

fn c3_rate_regions() -> Check {
    let start = Instant::now();
    let cfg = SweepConfig { p_max: 10.0, power_levels: 20, lambda_points: 21, fdm_points: 21, snd_points: 21 };
    let template = TwoUserChannel::symmetric_db(0.0, -2.0, cfg.p_max);
    let regions = access::region_sweep(&template, &cfg, &[Strategy::Ian, Strategy::Hk], Execution::available())
        .map_err(|e| e.to_string())?;
    let (ian, hk) = (&regions[0], &regions[1]);
    ensure(hk.points.len() == 21 * 21 * (2 * 20 - 1), || format!("HK sweep has {} points", hk.points.len()))?;
    ensure(access::frontier_dominates(&hk.frontier, &ian.frontier, 1e-12), || "HK frontier does not cover IAN".into())?;

    // index swap, on an asymmetric channel so the check is not vacuous
    let asym = TwoUserChannel { g11: 1.3, g21: 0.4, g12: 0.7, g22: 0.9, p1: 6.0, p2: 2.5, noise1: 1.0, noise2: 1.2 };
    for l1 in access::unit_grid(11) {
        for l2 in access::unit_grid(11) {
            let a = access::rate_hk(&asym, l1, l2);
            let b = access::rate_hk(&asym.swapped(), l2, l1);
            ensure(a.r1 == b.r2 && a.r2 == b.r1, || format!("HK swap mismatch at ({l1},{l2})"))?;
        }
    }
    let a = access::rate_ian(&asym);
    let b = access::rate_ian(&asym.swapped());
    ensure(a.r1 == b.r2 && a.r2 == b.r1, || "IAN swap mismatch".into())?;

    // zero cross gain: each region collapses to the single-user corner
    let z = TwoUserChannel { g21: 0.0, g12: 0.0, ..asym };
    let p_max = 6.0;
    let solo = RatePoint::new(access::capacity(p_max * z.g11 / z.noise1), access::capacity(p_max * z.g22 / z.noise2));
    let zcfg = SweepConfig { p_max, power_levels: 20, lambda_points: 21, fdm_points: 21, snd_points: 21 };
    for reg in access::region_sweep(&z, &zcfg, &[Strategy::Ian, Strategy::Hk], Execution::available())
        .map_err(|e| e.to_string())?
    {
        ensure(reg.frontier == vec![solo], || format!("{} frontier {:?}, expected [{solo:?}]", reg.strategy.name(), reg.frontier))?;
        ensure(reg.points.iter().all(|p| solo.dominates(&p.rate, 0.0)), || format!("{} exceeds single-user rates", reg.strategy.name()))?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("{} HK points, {} on frontier", hk.points.len(), hk.frontier.len()))
}

fn c4_detection() -> Check {
    let start = Instant::now();
    let layout = FrameLayout::new(460, 56);
    ensure(layout.len() == 516, || "frame length".into())?;
    let exec = Execution::available();
    let (snr, pfa, n_mc, n_cal) = (6.0, 0.01, 5000, 20_000);
    let mut notes = Vec::new();
    for kind in DetectorKind::ALL {
        for eps in [0.0, 2.0] {
            let det = detection::calibrate_threshold(&layout, kind, LinkPoint { snr_db: snr, eps_db: eps }, pfa, n_cal, 41, exec)
                .map_err(|e| e.to_string())?;
            let h0 = detection::detection_rate(&layout, &det, Hypothesis::H0, snr, 0.0, n_mc, 43, exec)
                .map_err(|e| e.to_string())?;
            if eps == 0.0 {
                ensure(h0.lo <= pfa && pfa <= h0.hi, || {
                    format!("{} Pfa {:.4} [{:.4}, {:.4}] misses target", kind.name(), h0.pd, h0.lo, h0.hi)
                })?;
                notes.push(format!("{} Pfa {:.4}", kind.name(), h0.pd));
            } else {
                ensure(h0.lo <= pfa, || format!("{} Pfa {:.4} above target under uncertainty", kind.name(), h0.pd))?;
            }
        }
    }
    let grid: Vec<f64> = (0..=60).map(|i| -10.0 + 0.25 * i as f64).collect();
    let mut cross = Vec::new();
    for kind in [DetectorKind::Ced, DetectorKind::Edscp] {
        let det = detection::calibrate_threshold(&layout, kind, LinkPoint { snr_db: snr, eps_db: 2.0 }, pfa, n_cal, 47, exec)
            .map_err(|e| e.to_string())?;
        let curve = detection::pd_curve(&layout, &det, &grid, snr, n_mc, 53, exec).map_err(|e| e.to_string())?;
        let x = detection::crossing(&curve, 0.9).ok_or_else(|| format!("{} never reaches Pd 0.9", kind.name()))?;
        cross.push(x);
    }
    let shift = cross[0] - cross[1];
    ensure(shift >= 5.0, || format!("CED {:.2} dB, EDSCP {:.2} dB, shift {shift:.2} dB < 5", cross[0], cross[1]))?;
    within(Duration::from_secs(120), start)?;
    Ok(format!("{}; Pd=0.9 at CED {:.2} dB, EDSCP {:.2} dB, shift {shift:.2} dB", notes.join(", "), cross[0], cross[1]))
}

fn c5_predistortion() -> Check {
    let start = Instant::now();
    let truth = HpaParams { alpha: Complex64::new(0.9, 0.1), beta: Complex64::new(-0.3, 0.07) };
    let mut r = rng::stream(505, 0);
    let input: Vec<Complex64> = (0..500).map(|_| rng::complex_normal(&mut r, 0.5)).collect();
    let output: Vec<Complex64> = input.iter().map(|&x| truth.alpha * x + truth.beta * x * x.norm_sqr()).collect();
    let fit = predistortion::fit_hpa(&input, &output).map_err(|e| e.to_string())?;
    let err = (fit.alpha - truth.alpha).norm().max((fit.beta - truth.beta).norm());
    ensure(err <= 1e-9, || format!("fit_hpa error {err:.2e}"))?;

    let hpa = HpaParams::default();
    let grid: Vec<f64> = (2..=8).map(f64::from).collect();
    let base = ChainConfig::default();
    ensure(base.imux.is_some(), || "IMUX disabled".into())?;
    let sweep = |loc| {
        let cfg = ChainConfig { spd_location: loc, ..base.clone() };
        predistortion::obo_sweep(&cfg, &hpa, &grid, 20_000, 9, Execution::available()).map_err(|e| e.to_string())
    };
    let onboard = sweep(SpdLocation::Onboard)?;
    let onground = sweep(SpdLocation::Onground)?;
    let none = sweep(SpdLocation::None)?;
    let mut min_gain = f64::INFINITY;
    let mut min_order = f64::INFINITY;
    for i in 0..grid.len() {
        let (a, g, n) = (&onboard[i], &onground[i], &none[i]);
        for p in [a, g, n] {
            ensure((p.obo_db - grid[i]).abs() < 1e-3, || format!("OBO {:.4} missed target {}", p.obo_db, grid[i]))?;
        }
        ensure(a.sinr_db > n.sinr_db, || format!("OBO {}: onboard {:.2} <= none {:.2}", grid[i], a.sinr_db, n.sinr_db))?;
        ensure(a.sinr_db >= g.sinr_db, || format!("OBO {}: onboard {:.2} < onground {:.2}", grid[i], a.sinr_db, g.sinr_db))?;
        min_gain = min_gain.min(a.sinr_db - n.sinr_db);
        min_order = min_order.min(a.sinr_db - g.sinr_db);
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!("fit err {err:.1e}; onboard over none >= {min_gain:.2} dB, over onground >= {min_order:.2} dB"))
}

fn c6_hungarian() -> Check {
    let start = Instant::now();
    for seed in 0..200u64 {
        let mut r = rng::stream(606, seed);
        let m = r.random_range(1..=7usize);
        let k = r.random_range(1..=7usize);
        let rates: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| r.random_range(0.0..5.0)).collect()).collect();
        let a = cognitive::assign_hungarian(&rates).map_err(|e| e.to_string())?;
        let best = exhaustive_assignment(&rates);
        ensure((a.objective - best).abs() <= 1e-12, || format!("seed {seed}: {} vs oracle {best}", a.objective))?;
        ensure((cognitive::objective(&rates, &a.carrier_to_terminal) - a.objective).abs() <= 1e-12, || {
            format!("seed {seed}: reported objective does not match the map")
        })?;
        let expect = lex_optimal_map(&rates, best, 1e-9);
        ensure(a.carrier_to_terminal == expect, || format!("seed {seed}: map {:?} vs {:?}", a.carrier_to_terminal, expect))?;

        let c = r.random_range(0.5..4.0);
        let scaled: Vec<Vec<f64>> = rates.iter().map(|row| row.iter().map(|v| v * c).collect()).collect();
        let s = cognitive::assign_hungarian(&scaled).map_err(|e| e.to_string())?;
        ensure(s.carrier_to_terminal == a.carrier_to_terminal, || format!("seed {seed}: scaling changed the assignment"))?;

        // shifting a row is neutral only when every carrier is served; a column
        // only when every terminal is
        if m <= k {
            let row = r.random_range(0..m);
            let mut shifted = rates.clone();
            shifted[row].iter_mut().for_each(|v| *v += 1.5);
            let s = cognitive::assign_hungarian(&shifted).map_err(|e| e.to_string())?;
            ensure(s.carrier_to_terminal == a.carrier_to_terminal, || format!("seed {seed}: row shift changed the assignment"))?;
        }
        if k <= m {
            let col = r.random_range(0..k);
            let mut shifted = rates.clone();
            shifted.iter_mut().for_each(|row| row[col] += 1.5);
            let s = cognitive::assign_hungarian(&shifted).map_err(|e| e.to_string())?;
            ensure(s.carrier_to_terminal == a.carrier_to_terminal, || format!("seed {seed}: column shift changed the assignment"))?;
        }
    }
    within(Duration::from_secs(5), start)?;
    Ok("200 instances match the exhaustive oracle".into())
}

fn c7_caching() -> Check {
    let start = Instant::now();
    let files = 100;
    for alpha in [0.6, 1.0, 1.4] {
        let model = caching::zipf_pmf(files, alpha).map_err(|e| e.to_string())?;
        let p = DeliveryParams { file_bits: 8e6, base_stations: 500.0, r_uc: 3e6, r_bc: 1e6 };
        let first = caching::delivery_times(1, &model, &p).map_err(|e| e.to_string())?;
        let last = caching::delivery_times(files + 1, &model, &p).map_err(|e| e.to_string())?;
        ensure(first.t_tot == p.file_bits * p.base_stations / p.r_uc, || format!("T_tot(1) = {}", first.t_tot))?;
        ensure(last.t_tot == p.file_bits * files as f64 / p.r_bc, || format!("T_tot(I+1) = {}", last.t_tot))?;
    }

    // continuous stationary point of s K F(x)/R_uc + s (x - 1)/R_bc with
    // F'(x) = -x^-alpha / H
    let mut notes = Vec::new();
    for alpha in [1.1, 1.2, 1.4, 1.6, 2.0] {
        let model = caching::zipf_pmf(files, alpha).map_err(|e| e.to_string())?;
        let h: f64 = (1..=files).map(|i| (i as f64).powf(-alpha)).sum();
        let p = DeliveryParams { file_bits: 1.0, base_stations: 500.0, r_uc: 3.0, r_bc: 1.0 };
        let x = (p.base_stations * p.r_bc / (p.r_uc * h)).powf(1.0 / alpha);
        let best = caching::optimal_threshold(&model, &p).map_err(|e| e.to_string())?;
        ensure((best.i_hat as f64 - x).abs() <= 1.0, || format!("alpha {alpha}: i_hat {} vs continuous {x:.2}", best.i_hat))?;
        notes.push(format!("a={alpha}:{}~{x:.1}", best.i_hat));

        let mut prev = 0;
        for k in (1..=2000).map(|k| k as f64) {
            let p = DeliveryParams { base_stations: k, ..p };
            let i = caching::optimal_threshold(&model, &p).map_err(|e| e.to_string())?.i_hat;
            ensure(i >= prev, || format!("alpha {alpha}: i_hat fell from {prev} to {i} at K={k}"))?;
            prev = i;
        }
    }
    within(Duration::from_secs(1), start)?;
    Ok(notes.join(" "))
}

fn c8_channel() -> Check {
    let start = Instant::now();
    let s = Scenario::default();
    ensure(s.beams == 71, || "default scenario is not 71 beams".into())?;
    let mut cir = Vec::new();
    for fr in 1..=4 {
        let reuse = ReusePattern::hexagonal(&s, fr).map_err(|e| e.to_string())?;
        cir.push(scenario::average_cir(&s, &reuse, 20, 1, Execution::available()).map_err(|e| e.to_string())?);
    }
    ensure(cir.windows(2).all(|w| w[1] > w[0]), || format!("CIR not increasing: {cir:?}"))?;
    let span = cir[3] - cir[0];
    ensure(span >= 20.0, || format!("CIR(4) - CIR(1) = {span:.2} dB"))?;
    within(Duration::from_secs(30), start)?;
    Ok(format!("CIR {:.1} / {:.1} / {:.1} / {:.1} dB", cir[0], cir[1], cir[2], cir[3]))
}

fn mbsat(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mbsat")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("mbsat {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

/// CSV text with the named column removed.
fn without_column(text: &str, column: &str) -> String {
    let Some(drop) = text.lines().next().and_then(|h| h.split(',').position(|c| c == column)) else {
        return text.to_string();
    };
    text.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != drop).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn outputs(manifest: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(manifest).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(v["outputs"].as_array().ok_or("manifest lacks outputs")?.iter().filter_map(|o| o.as_str().map(String::from)).collect())
}

fn c9_reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [(&str, &str); 7] = [
        ("channel-report", r#"{"n_mc": 2}"#),
        ("precoding-bench", r#"{"beam_counts": [7, 19], "users_per_frame": [1, 2], "trials": 2}"#),
        ("rate-region", r#"{"sweep": {"power_levels": 5, "lambda_points": 5}}"#),
        ("detection-pd", r#"{"n_calibration": 2000, "n_mc": 400, "isnr_min_db": -6, "isnr_max_db": 2, "isnr_step_db": 2}"#),
        ("spd-bench", r#"{"n_symbols": 2000, "obo_db": [3, 6], "lut_bins": 16, "chain": {"training_symbols": 400}}"#),
        ("carrier-assign", r#"{"instances": 2}"#),
        ("caching-threshold", r#"{}"#),
    ];
    let mut files = 0;
    for (cmd, cfg) in runs {
        let cfg_path = dir.path().join(format!("{cmd}.json"));
        std::fs::write(&cfg_path, cfg).map_err(|e| e.to_string())?;
        let first = dir.path().join(format!("{cmd}-a"));
        let again = dir.path().join(format!("{cmd}-b"));
        mbsat(&[cmd, "--config", cfg_path.to_str().unwrap(), "--seed", "7", "--out", first.to_str().unwrap()])?;
        let manifest = first.join("manifest.json");
        mbsat(&["replay", manifest.to_str().unwrap(), "--out", again.to_str().unwrap(), "--jobs", "1"])?;
        let names = outputs(&manifest)?;
        ensure(names == outputs(&again.join("manifest.json"))?, || format!("{cmd}: output lists differ"))?;
        ensure(!names.is_empty(), || format!("{cmd}: no outputs"))?;
        for name in names {
            let a = std::fs::read_to_string(first.join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read_to_string(again.join(&name)).map_err(|e| e.to_string())?;
            // wall-clock timing is the one column that cannot repeat
            let (a, b) = if name == "precoding_bench.csv" {
                (without_column(&a, "cpu_ms"), without_column(&b, "cpu_ms"))
            } else {
                (a, b)
            };
            ensure(a == b, || format!("{cmd}: {name} differs on replay"))?;
            files += 1;
        }
    }
    Ok(format!("7 subcommands, {files} CSVs identical on replay"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("mmse precoder", c1_mmse),
        ("sinr and sum-rate evaluators", c2_evaluators),
        ("rate regions", c3_rate_regions),
        ("interference detection", c4_detection),
        ("predistortion", c5_predistortion),
        ("hungarian assignment", c6_hungarian),
        ("caching threshold", c7_caching),
        ("channel model cir", c8_channel),
        ("cli reproducibility", c9_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = f();
        let t = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("criterion {} {name}: PASS ({t:.2} s) {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({t:.2} s) {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
