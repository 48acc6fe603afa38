//! Logistic regression and gradient-boosted trees, their hyperparameter
//! grids, and a versioned JSON model format.

pub mod gbdt;
pub mod logistic;
pub mod optim;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gbdt::{fit_gbdt, BinnedMatrix, GbdtModel, GbdtParams};
pub use logistic::{fit_lr, LrModel, LrParams, Solver};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    /// Class `c` weighted by `N / (2 N_c)`.
    Balanced,
}

impl ClassWeight {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassWeight::None => "none",
            ClassWeight::Balanced => "balanced",
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn class_weights(y: &[bool], cw: ClassWeight) -> Vec<f64> {
    match cw {
        ClassWeight::None => vec![1.0; y.len()],
        ClassWeight::Balanced => {
            let n = y.len() as f64;
            let np = y.iter().filter(|&&v| v).count() as f64;
            let (wp, wn) = (n / (2.0 * np), n / (2.0 * (n - np)));
            y.iter().map(|&v| if v { wp } else { wn }).collect()
        }
    }
}

pub(crate) fn check_training(x: &Matrix, y: &[bool]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("training matrix"));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("training matrix"));
    }
    let np = y.iter().filter(|&&v| v).count();
    if np == 0 || np == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lr,
    Gbdt,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Lr => "lr",
            Family::Gbdt => "gbdt",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Family::Lr),
            "gbdt" => Ok(Family::Gbdt),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Params {
    Lr(LrParams),
    Gbdt(GbdtParams),
}

impl Params {
    pub fn family(&self) -> Family {
        match self {
            Params::Lr(_) => Family::Lr,
            Params::Gbdt(_) => Family::Gbdt,
        }
    }
}

/// Candidate sets for logistic regression, expanded with `c` varying
/// slowest and `solver` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrGrid {
    pub c: Vec<f64>,
    pub class_weight: Vec<ClassWeight>,
    pub solver: Vec<Solver>,
}

impl Default for LrGrid {
    fn default() -> Self {
        Self {
            c: vec![1e-4, 5e-4, 1e-3, 1e-2, 5e-2, 1e-1],
            class_weight: vec![ClassWeight::None, ClassWeight::Balanced],
            solver: vec![Solver::Lbfgs, Solver::NewtonCg],
        }
    }
}

impl LrGrid {
    pub fn candidates(&self) -> Vec<Params> {
        let mut out = Vec::new();
        for &c in &self.c {
            for &class_weight in &self.class_weight {
                for &solver in &self.solver {
                    out.push(Params::Lr(LrParams {
                        c,
                        class_weight,
                        solver,
                    }));
                }
            }
        }
        out
    }
}

/// Candidate sets for boosted trees, expanded in field order with `depth`
/// varying slowest and `class_weight` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtGrid {
    pub depth: Vec<usize>,
    pub iterations: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub l2_leaf_reg: Vec<f64>,
    pub subsample: Vec<f64>,
    pub rsm: Vec<f64>,
    pub class_weight: Vec<ClassWeight>,
}

impl Default for GbdtGrid {
    fn default() -> Self {
        Self {
            depth: vec![4, 6, 8],
            iterations: vec![400, 800, 1200],
            learning_rate: vec![0.03, 0.10],
            l2_leaf_reg: vec![1.0, 3.0, 10.0],
            subsample: vec![0.7, 0.9, 1.0],
            rsm: vec![0.7, 0.9, 1.0],
            class_weight: vec![ClassWeight::None, ClassWeight::Balanced],
        }
    }
}

impl GbdtGrid {
    pub fn candidates(&self) -> Vec<Params> {
        let mut out = Vec::new();
        for &depth in &self.depth {
            for &iterations in &self.iterations {
                for &learning_rate in &self.learning_rate {
                    for &l2_leaf_reg in &self.l2_leaf_reg {
                        for &subsample in &self.subsample {
                            for &rsm in &self.rsm {
                                for &class_weight in &self.class_weight {
                                    out.push(Params::Gbdt(GbdtParams {
                                        depth,
                                        iterations,
                                        learning_rate,
                                        l2_leaf_reg,
                                        subsample,
                                        rsm,
                                        class_weight,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Default search space of a family.
pub fn grid_candidates(family: Family) -> Vec<Params> {
    match family {
        Family::Lr => LrGrid::default().candidates(),
        Family::Gbdt => GbdtGrid::default().candidates(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "lowercase")]
pub enum Model {
    Lr(LrModel),
    Gbdt(GbdtModel),
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Lr(m) => m.n_features(),
            Model::Gbdt(m) => m.n_features,
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Model::Lr(m) => m.predict_proba(x),
            Model::Gbdt(m) => m.predict_proba(x),
        }
    }
}

/// Trains one candidate. `seed` only affects boosted trees.
pub fn fit(x: &Matrix, y: &[bool], params: &Params, seed: u64) -> Result<Model> {
    match params {
        Params::Lr(p) => fit_lr(x, y, p).map(Model::Lr),
        Params::Gbdt(p) => fit_gbdt(x, y, p, seed).map(Model::Gbdt),
    }
}

pub const MODEL_FORMAT: &str = "tbcough-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model: format tag, version, feature layout and training metadata
/// around the fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub metadata: serde_json::Map<String, serde_json::Value>,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, feature_names: Vec<String>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            n_features: model.n_features(),
            feature_names,
            metadata: serde_json::Map::new(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        if f.format != MODEL_FORMAT || f.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format {} v{}",
                f.format, f.version
            )));
        }
        if f.model.n_features() != f.n_features {
            return Err(Error::DimensionMismatch {
                expected: f.n_features,
                actual: f.model.n_features(),
            });
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
