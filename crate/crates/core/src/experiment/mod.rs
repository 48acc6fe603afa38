//! Experiment configuration, orchestration and output emission.

pub mod plots;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{build_report, FoldRow, RunBlock, RunReport, Tables};

use crate::dataset::manifest::load_manifest;
use crate::dataset::scaler::BinaryScaling;
use crate::dataset::{generate_synthetic, Dataset, FeatureMode, FeatureTable, SyntheticConfig};
use crate::error::{Error, Result};
use crate::learners::{Family, GbdtGrid, LrGrid};
use crate::splits::{self, groups_of, NestedConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Manifest {
        path: PathBuf,
        /// Defaults to the manifest's directory.
        #[serde(default)]
        audio_root: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Audio,
    #[default]
    Fused,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<FeatureMode> {
        match self {
            ModeSelection::Audio => vec![FeatureMode::Audio],
            ModeSelection::Fused => vec![FeatureMode::Fused],
            ModeSelection::Both => vec![FeatureMode::Audio, FeatureMode::Fused],
        }
    }
}

impl std::str::FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "audio" => Ok(Self::Audio),
            "fused" => Ok(Self::Fused),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilySelection {
    Lr,
    Gbdt,
    #[default]
    Both,
}

impl FamilySelection {
    pub fn families(self) -> Vec<Family> {
        match self {
            FamilySelection::Lr => vec![Family::Lr],
            FamilySelection::Gbdt => vec![Family::Gbdt],
            FamilySelection::Both => vec![Family::Lr, Family::Gbdt],
        }
    }
}

impl std::str::FromStr for FamilySelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Self::Lr),
            "gbdt" => Ok(Self::Gbdt),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub feature_mode: ModeSelection,
    pub model: FamilySelection,
    pub alphas: Vec<f64>,
    pub calib_frac: f64,
    pub ece_bins: usize,
    pub seed: u64,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub lr_grid: LrGrid,
    pub gbdt_grid: GbdtGrid,
    pub binary_scaling: BinaryScaling,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; `None` uses every core. Never changes results.
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let n = NestedConfig::default();
        Self {
            data: DataSource::Synthetic(SyntheticConfig::default()),
            feature_mode: ModeSelection::default(),
            model: FamilySelection::default(),
            alphas: n.alphas,
            calib_frac: n.calib_frac,
            ece_bins: n.ece_bins,
            seed: n.seed,
            outer_folds: n.outer_folds,
            inner_folds: n.inner_folds,
            lr_grid: n.lr_grid,
            gbdt_grid: n.gbdt_grid,
            binary_scaling: n.binary_scaling,
            output_dir: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn nested(&self) -> NestedConfig {
        NestedConfig {
            outer_folds: self.outer_folds,
            inner_folds: self.inner_folds,
            calib_frac: self.calib_frac,
            alphas: self.alphas.clone(),
            ece_bins: self.ece_bins,
            seed: self.seed,
            lr_grid: self.lr_grid.clone(),
            gbdt_grid: self.gbdt_grid.clone(),
            binary_scaling: self.binary_scaling,
        }
    }

    /// Sets the master seed and, for synthetic data, the generator seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let DataSource::Synthetic(s) = &mut self.data {
            s.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nested().validate()?;
        let mut sorted = self.alphas.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("alphas contain duplicates".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Synthetic(s) => generate_synthetic(s),
            DataSource::Manifest { path, audio_root } => {
                let root = match audio_root {
                    Some(r) => r.clone(),
                    None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
                };
                Ok(load_manifest(path, &root)?.dataset)
            }
        }
    }
}

/// Runs every requested (feature mode, family) block on a dataset whose
/// features are already extracted.
pub fn run_on(cfg: &ExperimentConfig, ds: &Dataset, table: &FeatureTable) -> Result<RunReport> {
    cfg.validate()?;
    let nested = cfg.nested();
    let plan = splits::build_nested_plan(
        &groups_of(ds),
        cfg.outer_folds,
        cfg.inner_folds,
        cfg.calib_frac,
        cfg.seed,
    )?;
    let mut blocks = Vec::new();
    for mode in cfg.feature_mode.modes() {
        for family in cfg.model.families() {
            let run = splits::run_nested(ds, table, family, mode, &nested)?;
            debug_assert_eq!(run.plan, plan);
            blocks.push(RunBlock {
                mode,
                family,
                folds: run.folds,
            });
        }
    }
    build_report(cfg, ds, plan, blocks)
}

/// Loads data, extracts features and runs the configured blocks, on a
/// dedicated pool when `jobs` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let work = || -> Result<RunReport> {
        let ds = cfg.load_dataset()?;
        let table = FeatureTable::build(&ds)?;
        run_on(cfg, &ds, &table)
    };
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Writes files via temp-then-rename and removes everything it wrote if a
/// later write fails.
pub struct AtomicWriter {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl AtomicWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("")
        ));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn rollback(self) {
        for p in self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Writes the report JSON, config echo, summary tables, per-fold rows,
/// fold plan and plots under `dir`. Returns the written paths.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut w = AtomicWriter::new(dir)?;
    match emit_all(report, &mut w) {
        Ok(()) => Ok(w.written().to_vec()),
        Err(e) => {
            w.rollback();
            Err(e)
        }
    }
}

fn emit_all(report: &RunReport, w: &mut AtomicWriter) -> Result<()> {
    w.write(
        "config.json",
        serde_json::to_string_pretty(&report.config)?.as_bytes(),
    )?;
    w.write(
        "report.json",
        serde_json::to_string_pretty(report)?.as_bytes(),
    )?;
    w.write("fold_plan.csv", &report.fold_plan_csv()?)?;
    for (name, bytes) in report.table_files()? {
        w.write(&name, &bytes)?;
    }
    for (name, svg) in plots::render_all(report)? {
        w.write(&name, svg.as_bytes())?;
    }
    Ok(())
}
