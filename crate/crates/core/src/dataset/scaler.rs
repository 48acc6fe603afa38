use serde::{Deserialize, Serialize};

use crate::dataset::clinical::is_binary_column;
use crate::error::{Error, Result};
use crate::features::N_AUDIO_FEATURES;
use crate::matrix::Matrix;

/// Column-wise z-scoring with population standard deviation.
///
/// Columns with zero spread on the fit data keep mean 0 and std 1, so they
/// pass through unchanged, and are listed in `constant_columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant_columns: Vec<usize>,
    /// Columns left untouched because they are clinical 0/1 indicators.
    pub skipped_columns: Vec<usize>,
    pub fitted_on: String,
}

/// Whether 0/1 clinical indicators in a fused matrix are z-scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryScaling {
    #[default]
    Standardize,
    PassThrough,
}

impl StandardScaler {
    pub fn fit(x: &Matrix, fitted_on: impl Into<String>) -> Result<Self> {
        Self::fit_with(x, fitted_on, BinaryScaling::Standardize)
    }

    /// With [`BinaryScaling::PassThrough`], columns past the acoustic block
    /// that are binary clinical indicators keep their 0/1 values.
    pub fn fit_with(
        x: &Matrix,
        fitted_on: impl Into<String>,
        binary: BinaryScaling,
    ) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyInput("scaler fit matrix"));
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("scaler fit matrix"));
        }
        let n = x.rows() as f64;
        let d = x.cols();
        let mut means = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for r in x.iter_rows() {
            for j in 0..d {
                vars[j] += (r[j] - means[j]).powi(2);
            }
        }
        let mut stds: Vec<f64> = vars.iter().map(|v| (v / n).sqrt()).collect();
        let mut constant_columns = Vec::new();
        let mut skipped_columns = Vec::new();
        for j in 0..d {
            let skip = binary == BinaryScaling::PassThrough
                && j >= N_AUDIO_FEATURES
                && is_binary_column(j - N_AUDIO_FEATURES);
            if skip {
                skipped_columns.push(j);
                means[j] = 0.0;
                stds[j] = 1.0;
            } else if stds[j] <= 1e-12 * (1.0 + means[j].abs()) {
                constant_columns.push(j);
                means[j] = 0.0;
                stds[j] = 1.0;
            }
        }
        Ok(Self {
            means,
            stds,
            constant_columns,
            skipped_columns,
            fitted_on: fitted_on.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        for j in 0..row.len() {
            out[j] = (row[j] - self.means[j]) / self.stds[j];
        }
        Ok(())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.cols(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.apply_row(x.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }
}
