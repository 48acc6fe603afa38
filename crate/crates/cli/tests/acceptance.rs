//! Acceptance suite. Each test prints one verdict line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use common::*;
use tbcough_core::calibration::{brier, fit_isotonic, pava, youden_threshold};
use tbcough_core::conformal::{evaluate_sets, predict_sets, ConformalCalibrator, CougherScores};
use tbcough_core::dataset::FeatureMode;
use tbcough_core::dsp::{self, Waveform};
use tbcough_core::experiment::{run_experiment, write_outputs, ModeSelection, RunReport};
use tbcough_core::features::{self, summarize, N_AUDIO_FEATURES};
use tbcough_core::learners::Family;
use tbcough_core::metrics::{confusion_at, pr_auc, roc_auc, MetricSuite};
use tbcough_core::splits::{audit_plan_csv, build_nested_plan, write_plan_csv, Group};
use tbcough_core::Error;

const FEATURE_TOL: f64 = 1e-10;
const AUC_TOL: f64 = 1e-12;
const PAVA_TOL: f64 = 1e-12;
const YOUDEN_TOL: f64 = 1e-12;
const NULL_AUC_BAND: (f64, f64) = (0.42, 0.58);
const FUSION_WINS_NEEDED: usize = 18;
const ECE_WINS_NEEDED: usize = 16;
const PAIRED_SEEDS: u64 = 20;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(limit_s: u64, start: Instant) -> bool {
    start.elapsed() < Duration::from_secs(limit_s)
}

// ---------------------------------------------------------------- 1

/// Direct sums, insertion sort and the kurtosis expression as written.
fn brute_functionals(x: &[f64]) -> [f64; 9] {
    let l = x.len() as f64;
    let mut mu = 0.0;
    for v in x {
        mu += v;
    }
    mu /= l;
    let pow_sum = |k: i32| x.iter().map(|v| (v - mu).powi(k)).sum::<f64>();
    let sigma = (pow_sum(2) / (l - 1.0)).sqrt();
    let m2 = pow_sum(2) / l;
    let m3 = pow_sum(3) / l;
    let skew = (l * (l - 1.0)).sqrt() / (l - 2.0) * m3 / m2.powf(1.5);
    let kurt = (l + 1.0) * l / ((l - 1.0).powi(3) * (l - 2.0) * (l - 3.0)) * pow_sum(4)
        / sigma.powi(4)
        - 3.0 * (l - 1.0).powi(2) / ((l - 2.0) * (l - 3.0));
    let mut s = x.to_vec();
    for i in 1..s.len() {
        let mut j = i;
        while j > 0 && s[j - 1] > s[j] {
            s.swap(j - 1, j);
            j -= 1;
        }
    }
    let pct = |q: f64| {
        let h = q * (l - 1.0);
        let i = h.floor() as usize;
        if i + 1 >= s.len() {
            s[i]
        } else {
            s[i] + (h - i as f64) * (s[i + 1] - s[i])
        }
    };
    [
        mu,
        sigma,
        skew,
        kurt,
        pct(0.10),
        pct(0.25),
        pct(0.50),
        pct(0.75),
        pct(0.90),
    ]
}

fn random_trajectory(r: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let len = r.random_range(4..=64);
        let kind = r.random_range(0..3);
        let scale = 10f64.powf(r.random_range(-3.0..3.0));
        let x: Vec<f64> = (0..len)
            .map(|_| match kind {
                0 => Normal::new(0.0, scale).unwrap().sample(r),
                1 => Exp::new(1.0 / scale).unwrap().sample(r),
                _ => Normal::<f64>::new(0.0, 3.0).unwrap().sample(r).round() * scale,
            })
            .collect();
        if x.iter().any(|v| *v != x[0]) {
            return x;
        }
    }
}

fn random_waveform(r: &mut ChaCha8Rng, n: usize, rate: u32) -> Waveform {
    let noise = Normal::new(0.0, r.random_range(0.01..0.3)).unwrap();
    let tones: Vec<(f64, f64)> = (0..r.random_range(1..5))
        .map(|_| (r.random_range(80.0..6000.0), r.random_range(0.05..0.5)))
        .collect();
    let decay = r.random_range(1.0..20.0);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let tone: f64 = tones
                .iter()
                .map(|&(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum();
            (tone + noise.sample(r)) * (-decay * t).exp()
        })
        .collect();
    Waveform::new(samples, rate).unwrap()
}

#[test]
fn criterion_01_feature_fidelity() {
    let start = Instant::now();
    let mut r = rng(1);
    let mut shape_ok = N_AUDIO_FEATURES == 261;
    let mut n_waves = 0;
    for (rate, len) in [
        (16_000, 8_000),
        (16_000, 5_000),
        (44_100, 22_050),
        (48_000, 24_000),
    ] {
        for _ in 0..10 {
            let w = random_waveform(&mut r, len, rate);
            let spectra = dsp::analyze(&w).unwrap();
            let ff = features::frame_features(&spectra);
            let v = features::extract(&w).unwrap();
            shape_ok &= spectra.n_frames() == 32
                && ff.n_frames() == 32
                && v.as_slice().len() == 261
                && v.as_slice().iter().all(|x| x.is_finite());
            n_waves += 1;
        }
    }
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = random_trajectory(&mut r);
        let got = summarize(&x).unwrap().to_array();
        let want = brute_functionals(&x);
        for (g, w) in got.iter().zip(want) {
            let err = (g - w).abs() / w.abs().max(1.0);
            worst = if err.is_nan() {
                f64::INFINITY
            } else {
                worst.max(err)
            };
        }
    }
    let elapsed = start.elapsed();
    let pass = shape_ok && worst <= FEATURE_TOL && within(10, start);
    verdict(
        1,
        "feature fidelity",
        pass,
        &format!(
            "{n_waves} recordings give 32 frames x 261 values: {shape_ok}; worst functional error {worst:.1e} (tol {FEATURE_TOL:.0e}); {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(shape_ok);
    assert!(worst <= FEATURE_TOL, "worst {worst}");
    assert!(within(10, start));
}

// ---------------------------------------------------------------- 2

fn random_scored(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let tied = r.random_bool(0.5);
    let grid = r.random_range(2..30) as f64;
    let probs: Vec<f64> = (0..n)
        .map(|_| {
            if tied {
                r.random_range(0..=grid as u32) as f64 / grid
            } else {
                r.random::<f64>()
            }
        })
        .collect();
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    labels.shuffle(r);
    (probs, labels)
}

fn mann_whitney(p: &[f64], y: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                if p[i] > p[j] {
                    wins += 1.0;
                } else if p[i] == p[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn cutoff_average_precision(p: &[f64], y: &[bool]) -> f64 {
    let np = y.iter().filter(|&&v| v).count();
    let mut cuts = p.to_vec();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in cuts {
        let tp = (0..p.len()).filter(|&i| p[i] >= t && y[i]).count();
        let fp = (0..p.len()).filter(|&i| p[i] >= t && !y[i]).count();
        let recall = tp as f64 / np as f64;
        ap += (recall - prev) * (tp as f64 / (tp + fp) as f64);
        prev = recall;
    }
    ap
}

#[test]
fn criterion_02_metric_oracles() {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst_auc = 0.0f64;
    let mut ap_mismatch = 0;
    for i in 0..1000 {
        let n = r.random_range(2..=200);
        let (p, y) = random_scored(&mut r, n);
        worst_auc = worst_auc.max((roc_auc(&p, &y).unwrap() - mann_whitney(&p, &y)).abs());
        if i % 2 == 0 {
            let m = r.random_range(2..=50);
            let (p, y) = random_scored(&mut r, m);
            if pr_auc(&p, &y).unwrap() != cutoff_average_precision(&p, &y) {
                ap_mismatch += 1;
            }
        }
    }

    let probs = [0.9, 0.8, 0.5, 0.3, 0.3, 0.1];
    let labels = [true, false, true, true, false, false];
    let c = confusion_at(&probs, &labels, 0.5).unwrap();
    let at_half = MetricSuite::evaluate(&probs, &labels, 0.5).unwrap();
    let inclusive = MetricSuite::evaluate(&probs, &labels, 0.3).unwrap();
    let none_up = MetricSuite::evaluate(&probs, &labels, 0.95).unwrap();
    let one_class = MetricSuite::evaluate(&[0.2, 0.7], &[true, true], 0.5).unwrap();
    let third = 1.0 / 3.0;
    let hand = (c.tp, c.fp, c.tn, c.fn_) == (2, 1, 2, 1)
        && at_half.sens == Some(2.0 / 3.0)
        && at_half.spec == Some(2.0 / 3.0)
        && at_half.ppv == Some(2.0 / 3.0)
        && at_half.npv == Some(2.0 / 3.0)
        && at_half.uar == Some(2.0 / 3.0)
        && (at_half.roc_auc.unwrap() - 6.5 / 9.0).abs() < 1e-15
        && (at_half.pr_auc.unwrap() - 34.0 / 45.0).abs() < 1e-15
        && inclusive.sens == Some(1.0)
        && inclusive.spec == Some(third)
        && inclusive.ppv == Some(3.0 / 5.0)
        && inclusive.npv == Some(1.0)
        && none_up.sens == Some(0.0)
        && none_up.spec == Some(1.0)
        && none_up.ppv.is_none()
        && none_up.npv == Some(0.5)
        && none_up.uar == Some(0.5)
        && one_class.sens == Some(0.5)
        && one_class.spec.is_none()
        && one_class.uar.is_none()
        && one_class.roc_auc.is_none();

    let pass = worst_auc <= AUC_TOL && ap_mismatch == 0 && hand && within(30, start);
    verdict(
        2,
        "metric oracles",
        pass,
        &format!(
            "worst ROC AUC gap {worst_auc:.1e} (tol {AUC_TOL:.0e}); PR AUC mismatches {ap_mismatch}/500; hand examples {hand}; {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(worst_auc <= AUC_TOL);
    assert_eq!(ap_mismatch, 0);
    assert!(hand);
    assert!(within(30, start));
}

// ---------------------------------------------------------------- 3

/// Least squared error over every split into contiguous blocks whose means
/// do not decrease.
fn exhaustive_monotone_sse(y: &[f64]) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut sse = 0.0;
        let mut prev_mean = f64::NEG_INFINITY;
        let mut ok = true;
        let mut lo = 0;
        for hi in 1..=n {
            if hi == n || cuts & (1 << (hi - 1)) != 0 {
                let block = &y[lo..hi];
                let mean = block.iter().sum::<f64>() / block.len() as f64;
                if mean < prev_mean {
                    ok = false;
                    break;
                }
                sse += block.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                prev_mean = mean;
                lo = hi;
            }
        }
        if ok {
            best = best.min(sse);
        }
    }
    best
}

#[test]
fn criterion_03_isotonic_oracle() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut patterns = 0;
    for n in 1..=10usize {
        for bits in 0u32..(1 << n) {
            let y: Vec<f64> = (0..n).map(|i| ((bits >> i) & 1) as f64).collect();
            let fit = pava(&y, &vec![1.0; n]);
            let monotone = fit.windows(2).all(|w| w[0] <= w[1]);
            let sse: f64 = fit.iter().zip(&y).map(|(f, v)| (f - v).powi(2)).sum();
            let gap = (sse - exhaustive_monotone_sse(&y)).abs();
            worst = worst.max(if monotone { gap } else { f64::INFINITY });
            let labels: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                let scores: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
                let map = fit_isotonic(&scores, &labels).unwrap();
                let via_map: f64 = map
                    .apply(&scores)
                    .iter()
                    .zip(&y)
                    .map(|(f, v)| (f - v).powi(2))
                    .sum();
                worst = worst.max((via_map - sse).abs());
            }
            patterns += 1;
        }
    }
    let mut r = rng(3);
    let mut brier_up = 0;
    for _ in 0..1000 {
        let n = r.random_range(2..=200);
        let (p, y) = random_scored(&mut r, n);
        let map = fit_isotonic(&p, &y).unwrap();
        if brier(&map.apply(&p), &y).unwrap() > brier(&p, &y).unwrap() + PAVA_TOL {
            brier_up += 1;
        }
    }
    let pass = worst <= PAVA_TOL && brier_up == 0 && within(60, start);
    verdict(
        3,
        "isotonic oracle",
        pass,
        &format!(
            "{patterns} label patterns, worst SSE gap {worst:.1e} (tol {PAVA_TOL:.0e}); Brier increased on {brier_up}/1000 fits; {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(worst <= PAVA_TOL);
    assert_eq!(brier_up, 0);
    assert!(within(60, start));
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_youden_oracle() {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.random_range(2..=120);
        let (p, y) = random_scored(&mut r, n);
        let np = y.iter().filter(|&&v| v).count() as f64;
        let nn = y.len() as f64 - np;
        let j_at = |t: f64| {
            let c = confusion_at(&p, &y, t).unwrap();
            c.tp as f64 / np - c.fp as f64 / nn
        };
        let mut cuts = p.clone();
        cuts.push(f64::INFINITY);
        let best = cuts
            .iter()
            .map(|&t| j_at(t))
            .fold(f64::NEG_INFINITY, f64::max);
        let chosen = youden_threshold(&p, &y).unwrap();
        worst = worst
            .max((j_at(chosen.tau) - best).abs())
            .max((chosen.j - best).abs());
    }
    let pass = worst <= YOUDEN_TOL && within(10, start);
    verdict(
        4,
        "Youden oracle",
        pass,
        &format!(
            "500 instances, worst J gap {worst:.1e} (tol {YOUDEN_TOL:.0e}); {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(worst <= YOUDEN_TOL);
    assert!(within(10, start));
}

// ---------------------------------------------------------------- 5

fn exchangeable_scores(r: &mut ChaCha8Rng, n: usize, tag: &str) -> CougherScores {
    let noise = Normal::<f64>::new(0.0, 1.2).unwrap();
    let mut ids = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = r.random_bool(0.27);
        let z = if label { 0.8 } else { -0.8 } + noise.sample(r);
        ids.push(format!("{tag}{i:04}"));
        p.push(1.0 / (1.0 + (-z).exp()));
        y.push(label);
    }
    CougherScores::aggregate(&p, &ids, &y).unwrap()
}

#[test]
fn criterion_05_conformal_validity() {
    let start = Instant::now();
    const R: usize = 500;
    const N_CALIB: usize = 200;
    const N_TEST: usize = 200;
    let alphas = [0.10, 0.05];
    let mut r = rng(5);
    let mut coverage = [0.0; 2];
    let (mut monotone, mut nested) = (true, true);
    for _ in 0..R {
        let calib = exchangeable_scores(&mut r, N_CALIB, "c");
        let test = exchangeable_scores(&mut r, N_TEST, "t");
        let cal = ConformalCalibrator::fit(&calib, &alphas).unwrap();
        let q: Vec<f64> = alphas.iter().map(|&a| cal.q_hat(a).unwrap()).collect();
        monotone &= q[0] <= q[1];
        let sets: Vec<_> = q.iter().map(|&qh| predict_sets(&test, qh)).collect();
        for (k, s) in sets.iter().enumerate() {
            coverage[k] += evaluate_sets(s, test.labels()).unwrap().coverage / R as f64;
        }
        nested &= sets[0]
            .iter()
            .zip(&sets[1])
            .all(|(a, b)| (!a.positive || b.positive) && (!a.negative || b.negative));
    }
    let mut in_band = true;
    let mut detail = Vec::new();
    for (k, &a) in alphas.iter().enumerate() {
        let sigma = (a * (1.0 - a) / (R * N_TEST) as f64).sqrt();
        let lo = 1.0 - a - 3.0 * sigma;
        let hi = 1.0 - a + 1.0 / (N_CALIB as f64 + 1.0) + 3.0 * sigma;
        in_band &= (lo..=hi).contains(&coverage[k]);
        detail.push(format!(
            "alpha {a}: {:.4} in [{lo:.4}, {hi:.4}]",
            coverage[k]
        ));
    }
    let pass = in_band && monotone && nested && within(60, start);
    verdict(
        5,
        "conformal validity",
        pass,
        &format!(
            "{}; q_hat monotone {monotone}; sets nested {nested}; {:.2} s",
            detail.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(in_band, "{detail:?}");
    assert!(monotone && nested);
    assert!(within(60, start));
}

// ---------------------------------------------------------------- 6

fn random_groups(r: &mut ChaCha8Rng) -> Vec<Group> {
    let n = r.random_range(30..=200);
    let positives = (n as f64 * r.random_range(0.2..0.5)).round() as usize;
    let mut labels: Vec<bool> = (0..n).map(|i| i < positives).collect();
    labels.shuffle(r);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| Group {
            id: format!("g{i:03}"),
            label,
            n_recordings: r.random_range(1..=20),
        })
        .collect()
}

/// Recomputes every role set from scratch and checks the partitions.
fn independent_disjointness(n: usize, plan: &tbcough_core::splits::NestedPlan) -> bool {
    let all: BTreeSet<usize> = (0..n).collect();
    let mut tested = vec![0usize; n];
    for fp in &plan.folds {
        let test: BTreeSet<usize> = fp.test.iter().copied().collect();
        let calib: BTreeSet<usize> = fp.calib.iter().copied().collect();
        let tuning: BTreeSet<usize> = fp.tuning.iter().copied().collect();
        if test.len() != fp.test.len()
            || calib.len() != fp.calib.len()
            || tuning.len() != fp.tuning.len()
            || !test.is_disjoint(&calib)
            || !test.is_disjoint(&tuning)
            || !calib.is_disjoint(&tuning)
            || (&(&test | &calib) | &tuning) != all
        {
            return false;
        }
        let outer: BTreeSet<usize> = (0..n)
            .filter(|&i| plan.outer.assignment[i] == fp.fold)
            .collect();
        if outer != test {
            return false;
        }
        for &c in &test {
            tested[c] += 1;
        }
        let mut inner_union = BTreeSet::new();
        for j in 0..fp.inner_k {
            let members: BTreeSet<usize> = fp
                .tuning
                .iter()
                .zip(&fp.inner)
                .filter(|(_, &f)| f == j)
                .map(|(&c, _)| c)
                .collect();
            if members.is_empty() || !inner_union.is_disjoint(&members) {
                return false;
            }
            inner_union.extend(members);
        }
        if inner_union != tuning {
            return false;
        }
    }
    tested.iter().all(|&t| t == 1)
}

#[test]
fn criterion_06_leakage_audit() {
    let start = Instant::now();
    let mut r = rng(6);
    let (mut built, mut infeasible, mut violations, mut audit_failures) = (0, 0, 0, 0);
    let mut exported: Vec<Vec<u8>> = Vec::new();
    while built < 1000 {
        let groups = random_groups(&mut r);
        let outer_k = r.random_range(2..=10);
        let inner_k = r.random_range(2..=5);
        let frac = r.random_range(0.05..=0.3);
        let plan = match build_nested_plan(&groups, outer_k, inner_k, frac, r.random()) {
            Ok(p) => p,
            Err(Error::InvalidArgument(_)) => {
                infeasible += 1;
                assert!(
                    infeasible < 5000,
                    "generator produces too few feasible plans"
                );
                continue;
            }
            Err(e) => panic!("unexpected error {e}"),
        };
        built += 1;
        if !independent_disjointness(groups.len(), &plan) {
            violations += 1;
        }
        let mut csv = Vec::new();
        write_plan_csv(&mut csv, &plan, &groups).unwrap();
        match audit_plan_csv(csv.as_slice()) {
            Ok(a) if a.coughers == groups.len() && a.outer_folds == outer_k => {}
            _ => audit_failures += 1,
        }
        if exported.len() < 5 {
            exported.push(csv);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let mut cli_ok = true;
    for (i, csv) in exported.iter().enumerate() {
        let p = dir.path().join(format!("plan{i}.csv"));
        std::fs::write(&p, csv).unwrap();
        cli_ok &= tbcough(&["audit", p.to_str().unwrap()]).status.code() == Some(0);
    }
    let text = String::from_utf8(exported[0].clone()).unwrap();
    let tampered = text.replacen(",calib,", ",test,", 1);
    let tp = dir.path().join("tampered.csv");
    std::fs::write(&tp, tampered).unwrap();
    let tampered_code = tbcough(&["audit", tp.to_str().unwrap()]).status.code();
    cli_ok &= tampered_code == Some(4);

    let pass = violations == 0 && audit_failures == 0 && cli_ok && within(60, start);
    verdict(
        6,
        "leakage audit",
        pass,
        &format!(
            "{built} plans ({infeasible} infeasible draws skipped), {violations} role overlaps, {audit_failures} audit failures; `audit` subcommand on 5 plans ok, tampered plan exit {tampered_code:?}; {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert_eq!(violations, 0);
    assert_eq!(audit_failures, 0);
    assert!(cli_ok);
    assert!(within(60, start));
}

// ---------------------------------------------------------------- 7, 8

fn mean_fold_auc(report: &RunReport, mode: FeatureMode, family: Family) -> f64 {
    let block = report
        .blocks
        .iter()
        .find(|b| b.mode == mode && b.family == family)
        .unwrap();
    let aucs: Vec<f64> = block
        .folds
        .iter()
        .map(|f| f.cougher.metrics.roc_auc.unwrap())
        .collect();
    aucs.iter().sum::<f64>() / aucs.len() as f64
}

/// Mean over folds of waveform-level ECE (raw, isotonic).
fn mean_waveform_ece(report: &RunReport, mode: FeatureMode, family: Family) -> (f64, f64) {
    let block = report
        .blocks
        .iter()
        .find(|b| b.mode == mode && b.family == family)
        .unwrap();
    let k = block.folds.len() as f64;
    let raw = block
        .folds
        .iter()
        .map(|f| f.waveform.calibration.ece_raw)
        .sum::<f64>()
        / k;
    let cal = block
        .folds
        .iter()
        .map(|f| f.waveform.calibration.ece_cal)
        .sum::<f64>()
        / k;
    (raw, cal)
}

#[test]
fn criterion_07_null_control() {
    let start = Instant::now();
    let mut per_seed = Vec::new();
    for seed in 1..=PAIRED_SEEDS {
        let cfg = lr_experiment(synthetic(200, seed, 0.0, 0.0), ModeSelection::Fused);
        let report = run_experiment(&cfg).unwrap();
        per_seed.push(mean_fold_auc(&report, FeatureMode::Fused, Family::Lr));
    }
    let grand = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    let in_band = (NULL_AUC_BAND.0..=NULL_AUC_BAND.1).contains(&grand);
    let pass = in_band && within(600, start);
    let listed: Vec<String> = per_seed.iter().map(|v| format!("{v:.3}")).collect();
    verdict(
        7,
        "null control",
        pass,
        &format!(
            "mean cougher ROC AUC {grand:.3} over {PAIRED_SEEDS} seeds (band [{}, {}]); per seed [{}]; {:.1} s",
            NULL_AUC_BAND.0,
            NULL_AUC_BAND.1,
            listed.join(" "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(in_band, "grand mean {grand}");
    assert!(within(600, start));
}

#[test]
fn criterion_08_signal_and_fusion_ordering() {
    let start = Instant::now();
    let (mut fusion_wins, mut ece_wins) = (0, 0);
    let mut gaps = Vec::new();
    for seed in 1..=PAIRED_SEEDS {
        let cfg = lr_experiment(synthetic(200, seed, 0.5, 1.0), ModeSelection::Both);
        let report = run_experiment(&cfg).unwrap();
        let audio = mean_fold_auc(&report, FeatureMode::Audio, Family::Lr);
        let fused = mean_fold_auc(&report, FeatureMode::Fused, Family::Lr);
        fusion_wins += (fused > audio) as usize;
        let (raw, cal) = mean_waveform_ece(&report, FeatureMode::Fused, Family::Lr);
        ece_wins += (cal <= raw) as usize;
        gaps.push(format!("{:+.3}", fused - audio));
    }
    let pass =
        fusion_wins >= FUSION_WINS_NEEDED && ece_wins >= ECE_WINS_NEEDED && within(900, start);
    verdict(
        8,
        "signal and fusion ordering",
        pass,
        &format!(
            "fused > audio in {fusion_wins}/{PAIRED_SEEDS} (need {FUSION_WINS_NEEDED}); isotonic ECE <= raw in {ece_wins}/{PAIRED_SEEDS} (need {ECE_WINS_NEEDED}); fused minus audio AUC [{}]; {:.1} s",
            gaps.join(" "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(fusion_wins >= FUSION_WINS_NEEDED);
    assert!(ece_wins >= ECE_WINS_NEEDED);
    assert!(within(900, start));
}

// ---------------------------------------------------------------- 9

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_09_determinism_across_jobs() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_experiment(9));
    let mut trees = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = tbcough(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files = files_under(&out);
        assert!(files.remove(Path::new("timing.json")).is_some());
        trees.push(files);
    }
    let names_match = trees[0].keys().eq(trees[1].keys());
    let differing: Vec<String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let pass = names_match && differing.is_empty() && within(300, start);
    verdict(
        9,
        "determinism across --jobs",
        pass,
        &format!(
            "{} files compared, same names {names_match}, differing {differing:?}; {:.1} s",
            trees[0].len(),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(names_match);
    assert!(differing.is_empty());
    assert!(within(300, start));
}

// ---------------------------------------------------------------- 10

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares a table's skeleton with its golden file; `TBCOUGH_BLESS=1`
/// rewrites the golden files instead.
fn check_golden(out: &Path, name: &str) -> bool {
    let got = skeleton(&out.join(name), 2);
    let golden = golden_dir().join(name);
    if std::env::var("TBCOUGH_BLESS").as_deref() == Ok("1") {
        std::fs::write(&golden, &got).unwrap();
    }
    std::fs::read_to_string(&golden)
        .map(|want| want == got)
        .unwrap_or(false)
}

type FoldValues = BTreeMap<(String, String, String, String), Vec<f64>>;

/// (model, level, alpha, metric) to defined per-fold values, in file order.
fn fold_values(path: &Path) -> FoldValues {
    let (header, rows) = read_rows(path);
    assert_eq!(
        header,
        ["model", "fold", "level", "alpha", "metric", "value"]
    );
    let mut out: FoldValues = BTreeMap::new();
    for r in rows {
        let e = out
            .entry((r[0].clone(), r[2].clone(), r[3].clone(), r[4].clone()))
            .or_default();
        if !r[5].is_empty() {
            e.push(r[5].parse().unwrap());
        }
    }
    out
}

fn mean_std(v: &[f64]) -> (String, String, String) {
    if v.is_empty() {
        return (String::new(), String::new(), "0".into());
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean.to_string(), std.to_string(), v.len().to_string())
}

/// Recomputes every aggregate cell of the four tables from the fold file.
fn tables_match_fold_rows(out: &Path, mode: &str, families: &[&str]) -> Vec<String> {
    let fv = fold_values(&out.join(format!("folds_{mode}.csv")));
    let get = |fam: &str, level: &str, alpha: &str, metric: &str| -> Vec<f64> {
        fv.get(&(fam.into(), level.into(), alpha.into(), metric.into()))
            .cloned()
            .unwrap_or_default()
    };
    let mut bad = Vec::new();
    let cell = |header: &[String], row: &[String], col: &str| -> String {
        let i = header.iter().position(|h| h == col).unwrap();
        row[i].clone()
    };

    let (h, rows) = read_rows(&out.join(format!("classification_{mode}.csv")));
    for row in &rows {
        for level in ["waveform", "cougher"] {
            for fam in families {
                let (m, s, n) = mean_std(&get(fam, level, "", &row[0]));
                let col = format!("{level}_{fam}");
                if cell(&h, row, &format!("{col}_mean")) != m
                    || cell(&h, row, &format!("{col}_std")) != s
                    || cell(&h, row, &format!("{col}_n")) != n
                {
                    bad.push(format!("classification {} {col}", row[0]));
                }
            }
        }
    }
    let (h, rows) = read_rows(&out.join(format!("calibration_{mode}.csv")));
    for row in &rows {
        for fam in families {
            for kind in ["raw", "isotonic"] {
                let (m, s, n) = mean_std(&get(fam, &row[0], "", &format!("{}_{kind}", row[1])));
                let col = format!("{fam}_{kind}");
                if cell(&h, row, &format!("{col}_mean")) != m
                    || cell(&h, row, &format!("{col}_std")) != s
                    || cell(&h, row, &format!("{col}_n")) != n
                {
                    bad.push(format!("calibration {} {} {col}", row[0], row[1]));
                }
            }
        }
    }
    let (h, rows) = read_rows(&out.join(format!("conformal_{mode}.csv")));
    for row in &rows {
        for fam in families {
            let size = cell(&h, row, &format!("{fam}_set_size"));
            let shaped = size
                .split_once(" ± ")
                .and_then(|(_, rest)| rest.split_once(" ["))
                .is_some_and(|(_, s)| s.ends_with(']'));
            if !shaped {
                bad.push(format!("conformal {} {fam} set size cell {size:?}", row[1]));
            }
            for metric in ["coverage", "set_size"] {
                let (m, s, _) = mean_std(&get(fam, "cougher", &row[1], metric));
                if cell(&h, row, &format!("{fam}_{metric}_mean")) != m
                    || cell(&h, row, &format!("{fam}_{metric}_std")) != s
                {
                    bad.push(format!("conformal {} {fam} {metric}", row[1]));
                }
            }
        }
    }
    let (h, rows) = read_rows(&out.join(format!("selective_{mode}.csv")));
    for row in &rows {
        let (fam, alpha) = (&row[0], &row[1]);
        for (metric, num, den) in [
            ("accuracy", "n_correct", "n"),
            ("acc_singleton", "n_singleton_correct", "n_singleton"),
            ("acc_ambiguous", "n_ambiguous_correct", "n_ambiguous"),
            (
                "p_singleton_given_correct",
                "n_singleton_correct",
                "n_correct",
            ),
        ] {
            let (m, _, _) = mean_std(&get(fam, "cougher", alpha, metric));
            let d: f64 = get(fam, "cougher", alpha, den).iter().sum();
            let pooled = if d > 0.0 {
                (get(fam, "cougher", alpha, num).iter().sum::<f64>() / d).to_string()
            } else {
                String::new()
            };
            if cell(&h, row, &format!("{metric}_macro")) != m
                || cell(&h, row, &format!("{metric}_pooled")) != pooled
            {
                bad.push(format!("selective {fam} {alpha} {metric}"));
            }
        }
    }
    bad
}

fn svg_frame(doc: &roxmltree::Document) -> (f64, f64, f64, f64) {
    let r = doc
        .descendants()
        .find(|n| n.has_tag_name("rect") && n.attribute("fill") == Some("none"))
        .unwrap();
    let a = |k: &str| r.attribute(k).unwrap().parse::<f64>().unwrap();
    (a("x"), a("y"), a("width"), a("height"))
}

/// Every ROC polyline runs monotonically from (0, 0) to (1, 1).
fn roc_plot_ok(svg: &str) -> bool {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let (x, y, w, h) = svg_frame(&doc);
    let lines: Vec<Vec<(f64, f64)>> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| {
            n.attribute("points")
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (a, b) = p.split_once(',').unwrap();
                    let px: f64 = a.parse().unwrap();
                    let py: f64 = b.parse().unwrap();
                    ((px - x) / w, (y + h - py) / h)
                })
                .collect()
        })
        .collect();
    let close = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).abs() < 1e-3 && (p.1 - q.1).abs() < 1e-3;
    !lines.is_empty()
        && lines.iter().all(|l| {
            close(l[0], (0.0, 0.0))
                && close(*l.last().unwrap(), (1.0, 1.0))
                && l.windows(2).all(|s| s[1].0 >= s[0].0 && s[1].1 >= s[0].1)
        })
}

#[test]
fn criterion_10_schema_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let report = run_experiment(&tiny_experiment(10)).unwrap();
    write_outputs(&report, &out).unwrap();

    let mut failures = Vec::new();
    for mode in ["audio", "fused"] {
        for table in ["classification", "calibration", "conformal", "selective"] {
            let name = format!("{table}_{mode}.csv");
            if !check_golden(&out, &name) {
                failures.push(format!("{name} differs from golden skeleton"));
            }
        }
        failures.extend(tables_match_fold_rows(&out, mode, &["lr", "gbdt"]));
        if !out.join(format!("plots/{mode}_coverage.svg")).exists() {
            failures.push(format!("missing {mode} coverage plot"));
        }
    }

    let mut n_svg = 0;
    for e in std::fs::read_dir(out.join("plots")).unwrap() {
        let p = e.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        n_svg += 1;
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        match roxmltree::Document::parse(&text) {
            Ok(doc) if doc.root_element().has_tag_name("svg") => {}
            _ => failures.push(format!("{name} is not SVG")),
        }
        if name.ends_with("_roc.svg") && !roc_plot_ok(&text) {
            failures.push(format!("{name} ROC endpoints or monotonicity"));
        }
    }

    let mut no_alpha = tiny_experiment(10);
    no_alpha.alphas.clear();
    no_alpha.model = tbcough_core::experiment::FamilySelection::Lr;
    no_alpha.feature_mode = ModeSelection::Fused;
    let bare = dir.path().join("bare");
    write_outputs(&run_experiment(&no_alpha).unwrap(), &bare).unwrap();
    let coverage_plots = std::fs::read_dir(bare.join("plots"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .contains("coverage")
        })
        .count();
    if coverage_plots != 0 {
        failures.push("coverage plot written without alphas".into());
    }
    let (_, conformal_rows) = read_rows(&bare.join("conformal_fused.csv"));
    if !conformal_rows.is_empty() {
        failures.push("conformal rows written without alphas".into());
    }

    let pass = failures.is_empty();
    verdict(
        10,
        "schema fidelity",
        pass,
        &format!("8 tables against golden skeletons, aggregates recomputed from fold rows, {n_svg} SVGs parsed; problems {failures:?}"),
    );
    assert!(pass, "{failures:#?}");
}
