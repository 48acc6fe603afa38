#![allow(dead_code)]

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use tbcough_core::dataset::SyntheticConfig;
use tbcough_core::experiment::{DataSource, ExperimentConfig, FamilySelection, ModeSelection};
use tbcough_core::learners::{ClassWeight, GbdtGrid, LrGrid, Solver};

/// Writes one verdict line past the test harness's output capture.
pub fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "[acceptance] criterion {id:>2} {:<4} {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

pub fn synthetic(n: usize, seed: u64, audio: f64, clinical: f64) -> SyntheticConfig {
    SyntheticConfig {
        n_coughers: n,
        coughs_mean: 5.0,
        coughs_std: 2.0,
        coughs_min: 3,
        coughs_max: 12,
        signal_strength_audio: audio,
        signal_strength_clinical: clinical,
        seed,
        ..SyntheticConfig::default()
    }
}

pub fn small_lr_grid() -> LrGrid {
    LrGrid {
        c: vec![1e-3, 1e-2, 1e-1],
        class_weight: vec![ClassWeight::Balanced],
        solver: vec![Solver::Lbfgs],
    }
}

pub fn small_gbdt_grid() -> GbdtGrid {
    GbdtGrid {
        depth: vec![3],
        iterations: vec![20],
        learning_rate: vec![0.1],
        l2_leaf_reg: vec![3.0],
        subsample: vec![0.9],
        rsm: vec![0.7],
        class_weight: vec![ClassWeight::None, ClassWeight::Balanced],
    }
}

pub fn lr_experiment(data: SyntheticConfig, mode: ModeSelection) -> ExperimentConfig {
    ExperimentConfig {
        seed: data.seed,
        data: DataSource::Synthetic(data),
        feature_mode: mode,
        model: FamilySelection::Lr,
        lr_grid: small_lr_grid(),
        ..ExperimentConfig::default()
    }
}

/// Small two-family, two-mode experiment for end-to-end output checks.
pub fn tiny_experiment(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        data: DataSource::Synthetic(synthetic(90, seed, 0.5, 1.0)),
        feature_mode: ModeSelection::Both,
        model: FamilySelection::Both,
        outer_folds: 3,
        inner_folds: 3,
        lr_grid: small_lr_grid(),
        gbdt_grid: small_gbdt_grid(),
        ..ExperimentConfig::default()
    }
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

pub fn tbcough(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbcough"))
        .args(args)
        .env_remove("TBCOUGH_OUT")
        .output()
        .expect("spawn tbcough")
}

/// Header plus the key columns of every row: the structure of a table
/// without its numbers.
pub fn skeleton(path: &Path, key_columns: usize) -> String {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let mut out = rdr.headers().unwrap().iter().collect::<Vec<_>>().join(",");
    out.push('\n');
    for rec in rdr.records() {
        let rec = rec.unwrap();
        out.push_str(&rec.iter().take(key_columns).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}
