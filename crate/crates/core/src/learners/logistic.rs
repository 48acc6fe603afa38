//! L2-penalised logistic regression with an unpenalised intercept.

use serde::{Deserialize, Serialize};

use super::optim::{lbfgs, newton_cg};
use super::{check_training, class_weights, sigmoid, softplus, ClassWeight};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Max-norm gradient tolerance on the weight-normalised objective.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITER: usize = 10_000;
const LBFGS_MEMORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Limited-memory quasi-Newton.
    Lbfgs,
    /// Truncated Newton on Hessian-vector products.
    NewtonCg,
}

impl Solver {
    pub fn tag(self) -> &'static str {
        match self {
            Solver::Lbfgs => "lbfgs",
            Solver::NewtonCg => "newton_cg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// Inverse regularisation strength.
    pub c: f64,
    pub class_weight: ClassWeight,
    pub solver: Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    /// Intercept first, then one coefficient per feature.
    pub theta: Vec<f64>,
    pub c: f64,
    pub class_weight: ClassWeight,
    pub solver_tag: String,
    pub iterations: usize,
    pub converged: bool,
}

impl LrModel {
    pub fn n_features(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.theta[0]
            + self.theta[1..]
                .iter()
                .zip(row)
                .map(|(t, x)| t * x)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| sigmoid(self.decision(r))).collect())
    }
}

/// Weighted penalised negative log-likelihood and its derivatives.
pub struct LrObjective<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    w: Vec<f64>,
    inv_c: f64,
}

impl<'a> LrObjective<'a> {
    pub fn new(x: &'a Matrix, y: &'a [bool], c: f64, class_weight: ClassWeight) -> Self {
        Self {
            x,
            y,
            w: class_weights(y, class_weight),
            inv_c: 1.0 / c,
        }
    }

    fn z(&self, theta: &[f64], row: &[f64]) -> f64 {
        theta[0] + theta[1..].iter().zip(row).map(|(t, x)| t * x).sum::<f64>()
    }

    /// Value; gradient written into `g`.
    pub fn value_grad(&self, theta: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut loss = 0.0;
        for (i, row) in self.x.iter_rows().enumerate() {
            let z = self.z(theta, row);
            let y = if self.y[i] { 1.0 } else { 0.0 };
            loss += self.w[i] * (softplus(z) - y * z);
            let r = self.w[i] * (sigmoid(z) - y);
            g[0] += r;
            for (gj, xj) in g[1..].iter_mut().zip(row) {
                *gj += r * xj;
            }
        }
        let mut pen = 0.0;
        for j in 1..theta.len() {
            pen += theta[j] * theta[j];
            g[j] += theta[j] * self.inv_c;
        }
        loss + 0.5 * pen * self.inv_c
    }

    fn scaled_value_grad(&self, theta: &[f64], g: &mut [f64], scale: f64) -> f64 {
        let v = self.value_grad(theta, g);
        g.iter_mut().for_each(|x| *x *= scale);
        v * scale
    }

    /// Hessian-vector product at `theta`.
    pub fn hess_vec(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.x.iter_rows().enumerate() {
            let p = sigmoid(self.z(theta, row));
            let xv = v[0] + v[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            let s = self.w[i] * p * (1.0 - p) * xv;
            out[0] += s;
            for (o, xj) in out[1..].iter_mut().zip(row) {
                *o += s * xj;
            }
        }
        for j in 1..v.len() {
            out[j] += v[j] * self.inv_c;
        }
    }
}

pub fn fit_lr(x: &Matrix, y: &[bool], params: &LrParams) -> Result<LrModel> {
    check_training(x, y)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    let obj = LrObjective::new(x, y, params.c, params.class_weight);
    let theta0 = vec![0.0; x.cols() + 1];
    // the tolerance applies to the objective divided by the total weight
    let scale = 1.0 / obj.w.iter().sum::<f64>();
    let m = match params.solver {
        Solver::Lbfgs => lbfgs(
            |t, g| obj.scaled_value_grad(t, g, scale),
            theta0,
            LBFGS_MEMORY,
            GRADIENT_TOLERANCE,
            MAX_ITER,
        ),
        Solver::NewtonCg => newton_cg(
            |t, g| obj.scaled_value_grad(t, g, scale),
            |t, v, out| {
                obj.hess_vec(t, v, out);
                out.iter_mut().for_each(|o| *o *= scale);
            },
            theta0,
            GRADIENT_TOLERANCE,
            MAX_ITER,
        ),
    };
    if m.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic regression parameters"));
    }
    Ok(LrModel {
        theta: m.x,
        c: params.c,
        class_weight: params.class_weight,
        solver_tag: params.solver.tag().to_string(),
        iterations: m.iterations,
        converged: m.converged,
    })
}
