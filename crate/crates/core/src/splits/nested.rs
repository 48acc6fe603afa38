//! One outer fold of the nested protocol: inner grid search, isotonic fit
//! on out-of-fold predictions, threshold and conformal calibration on the
//! held-out calibration coughers, and evaluation on the test fold.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_nested_plan, groups_of, FoldPlan, NestedPlan};
use crate::calibration::{
    fit_isotonic, youden_threshold, CalibrationReport, IsotonicMap, Level, ThresholdPair,
};
use crate::conformal::{
    evaluate_sets, predict_sets, selective_metrics, ConformalCalibrator, CougherScores,
    PredictionSet, SelectiveMetrics, SetEvaluation,
};
use crate::dataset::scaler::BinaryScaling;
use crate::dataset::{Dataset, FeatureMode, FeatureTable, StandardScaler};
use crate::error::{Error, Result};
use crate::learners::gbdt::{fit_gbdt_binned, BinnedMatrix, DEFAULT_MAX_BINS};
use crate::learners::{self, Family, GbdtGrid, LrGrid, Model, Params};
use crate::matrix::Matrix;
use crate::metrics::{confusion_at, MetricSuite};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub calib_frac: f64,
    pub alphas: Vec<f64>,
    pub ece_bins: usize,
    pub seed: u64,
    pub lr_grid: LrGrid,
    pub gbdt_grid: GbdtGrid,
    pub binary_scaling: BinaryScaling,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            outer_folds: 10,
            inner_folds: 5,
            calib_frac: 0.15,
            alphas: vec![0.10, 0.05],
            ece_bins: crate::calibration::DEFAULT_ECE_BINS,
            seed: 42,
            lr_grid: LrGrid::default(),
            gbdt_grid: GbdtGrid::default(),
            binary_scaling: BinaryScaling::default(),
        }
    }
}

impl NestedConfig {
    pub fn candidates(&self, family: Family) -> Vec<Params> {
        match family {
            Family::Lr => self.lr_grid.candidates(),
            Family::Gbdt => self.gbdt_grid.candidates(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::Config("fold counts must be at least 2".into()));
        }
        if !(self.calib_frac > 0.0 && self.calib_frac <= 0.5) {
            return Err(Error::Config(format!(
                "calib_frac must lie in (0, 0.5], got {}",
                self.calib_frac
            )));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {a}")));
        }
        if self.ece_bins == 0 {
            return Err(Error::Config("ece_bins must be positive".into()));
        }
        if self.lr_grid.candidates().is_empty() || self.gbdt_grid.candidates().is_empty() {
            return Err(Error::Config("a search grid is empty".into()));
        }
        Ok(())
    }
}

/// One fit recorded by the leakage audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub stage: String,
    pub n_fit_coughers: usize,
}

/// Predictions and metrics at one aggregation level of the test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    /// Recording ids at waveform level, cougher ids at cougher level.
    pub ids: Vec<String>,
    pub cougher_ids: Vec<String>,
    pub labels: Vec<bool>,
    pub raw: Vec<f64>,
    pub calibrated: Vec<f64>,
    pub tau: f64,
    pub metrics: MetricSuite,
    pub calibration: CalibrationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalResult {
    pub alpha: f64,
    pub k: usize,
    pub q_hat: f64,
    /// Aligned with the cougher-level ids of the test fold.
    pub sets: Vec<PredictionSet>,
    pub point_preds: Vec<bool>,
    pub evaluation: SetEvaluation,
    pub selective: SelectiveMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub family: Family,
    pub mode: FeatureMode,
    pub seed: u64,
    pub params: Params,
    /// Mean inner validation UAR of every candidate, in grid order.
    pub candidate_scores: Vec<f64>,
    pub n_test_coughers: usize,
    pub n_calib_coughers: usize,
    pub n_tuning_coughers: usize,
    /// Out-of-fold probabilities of the chosen candidate on the tuning rows.
    pub oof: Vec<f64>,
    pub thresholds: ThresholdPair,
    pub waveform: LevelResult,
    pub cougher: LevelResult,
    pub conformal: Vec<ConformalResult>,
    pub scaler: StandardScaler,
    pub isotonic: IsotonicMap,
    pub calibrator: ConformalCalibrator,
    #[serde(skip)]
    pub model: Option<Model>,
    pub audit: Vec<AuditRecord>,
}

#[derive(Debug, Clone)]
pub struct NestedRun {
    pub plan: NestedPlan,
    pub folds: Vec<FoldResult>,
}

/// Columns of the feature table used by `mode`.
pub fn mode_matrix(table: &FeatureTable, mode: FeatureMode) -> Matrix {
    if mode.dim() == table.features.cols() {
        table.features.clone()
    } else {
        table.features.select_cols(&FeatureTable::columns(mode))
    }
}

pub fn run_nested(
    ds: &Dataset,
    table: &FeatureTable,
    family: Family,
    mode: FeatureMode,
    cfg: &NestedConfig,
) -> Result<NestedRun> {
    cfg.validate()?;
    let groups = groups_of(ds);
    let plan = build_nested_plan(
        &groups,
        cfg.outer_folds,
        cfg.inner_folds,
        cfg.calib_frac,
        cfg.seed,
    )?;
    let x = mode_matrix(table, mode);
    let folds = plan
        .folds
        .par_iter()
        .map(|fp| run_fold_on(ds, table, &x, fp, family, mode, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(NestedRun { plan, folds })
}

pub fn run_fold(
    ds: &Dataset,
    table: &FeatureTable,
    fp: &FoldPlan,
    family: Family,
    mode: FeatureMode,
    cfg: &NestedConfig,
) -> Result<FoldResult> {
    cfg.validate()?;
    fp.check_disjoint(ds.n_coughers())?;
    run_fold_on(ds, table, &mode_matrix(table, mode), fp, family, mode, cfg)
}

struct Audit<'a> {
    forbidden: BTreeSet<usize>,
    table: &'a FeatureTable,
    records: Vec<AuditRecord>,
}

impl Audit<'_> {
    /// Fails unless every fitted row belongs to `allowed` and none to the
    /// fold's test or calibration coughers.
    fn check(&mut self, stage: String, rows: &[usize], allowed: &[usize]) -> Result<()> {
        let allowed: BTreeSet<usize> = allowed.iter().copied().collect();
        let mut used = BTreeSet::new();
        for &r in rows {
            let c = self.table.cougher_index[r];
            if self.forbidden.contains(&c) || !allowed.contains(&c) {
                return Err(Error::Leakage(format!(
                    "{stage}: fitted on held-out cougher #{c}"
                )));
            }
            used.insert(c);
        }
        self.records.push(AuditRecord {
            stage,
            n_fit_coughers: used.len(),
        });
        Ok(())
    }
}

fn fit_scaled(
    x: &Matrix,
    rows: &[usize],
    cfg: &NestedConfig,
    stage: &str,
) -> Result<(StandardScaler, Matrix)> {
    let sub = x.select_rows(rows);
    let scaler = StandardScaler::fit_with(&sub, stage, cfg.binary_scaling)?;
    let scaled = scaler.apply(&sub)?;
    Ok((scaler, scaled))
}

fn select_labels(labels: &[bool], rows: &[usize]) -> Vec<bool> {
    rows.iter().map(|&r| labels[r]).collect()
}

fn fit_candidate(
    params: &Params,
    x: &Matrix,
    binned: Option<&BinnedMatrix>,
    y: &[bool],
    seed: u64,
) -> Result<Model> {
    match (params, binned) {
        (Params::Gbdt(p), Some(b)) => fit_gbdt_binned(b, y, p, seed).map(|(m, _)| Model::Gbdt(m)),
        _ => learners::fit(x, y, params, seed),
    }
}

fn uar_at_youden(probs: &[f64], labels: &[bool]) -> Result<f64> {
    let tau = youden_threshold(probs, labels)?.tau;
    MetricSuite::from_counts(&confusion_at(probs, labels, tau)?)
        .uar
        .ok_or(Error::SingleClass)
}

fn run_fold_on(
    ds: &Dataset,
    table: &FeatureTable,
    x: &Matrix,
    fp: &FoldPlan,
    family: Family,
    mode: FeatureMode,
    cfg: &NestedConfig,
) -> Result<FoldResult> {
    let candidates = cfg.candidates(family);
    let mut audit = Audit {
        forbidden: fp.test.iter().chain(&fp.calib).copied().collect(),
        table,
        records: Vec::new(),
    };

    // inner search: per inner fold, scale on its training part and score
    // every candidate on its validation part
    let tuning_rows = table.rows_for(&fp.tuning);
    let mut val_preds: Vec<(Vec<usize>, Vec<Vec<f64>>)> = Vec::with_capacity(fp.inner_k);
    let mut scores = vec![0.0; candidates.len()];
    for j in 0..fp.inner_k {
        let train_c = fp.inner_complement(j);
        let train_rows = table.rows_for(&train_c);
        let val_rows = table.rows_for(&fp.inner_members(j));
        audit.check(format!("inner {j} scaler"), &train_rows, &train_c)?;
        let (scaler, xs_train) = fit_scaled(x, &train_rows, cfg, "inner")?;
        let xs_val = scaler.apply(&x.select_rows(&val_rows))?;
        let y_train = select_labels(&table.labels, &train_rows);
        let y_val = select_labels(&table.labels, &val_rows);
        let binned = match family {
            Family::Gbdt => Some(BinnedMatrix::new(&xs_train, DEFAULT_MAX_BINS)?),
            Family::Lr => None,
        };
        audit.check(format!("inner {j} models"), &train_rows, &train_c)?;
        let seed = derive_seed(fp.seed, 10 + j as u64);
        let preds = candidates
            .par_iter()
            .map(|p| {
                fit_candidate(p, &xs_train, binned.as_ref(), &y_train, seed)?.predict_proba(&xs_val)
            })
            .collect::<Result<Vec<_>>>()?;
        for (s, p) in scores.iter_mut().zip(&preds) {
            *s += uar_at_youden(p, &y_val)? / fp.inner_k as f64;
        }
        val_preds.push((val_rows, preds));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let params = candidates[best];

    let mut oof = vec![f64::NAN; tuning_rows.len()];
    for (rows, preds) in &val_preds {
        for (&r, &p) in rows.iter().zip(&preds[best]) {
            let pos = tuning_rows
                .binary_search(&r)
                .expect("validation row lies in the tuning pool");
            oof[pos] = p;
        }
    }
    let y_tuning = select_labels(&table.labels, &tuning_rows);
    let isotonic = fit_isotonic(&oof, &y_tuning)?;

    audit.check("final scaler".into(), &tuning_rows, &fp.tuning)?;
    let (scaler, xs_tuning) = fit_scaled(x, &tuning_rows, cfg, "tuning")?;
    audit.check("final model".into(), &tuning_rows, &fp.tuning)?;
    let model = learners::fit(&xs_tuning, &y_tuning, &params, derive_seed(fp.seed, 1000))?;

    let cougher_ids = |rows: &[usize]| -> Vec<String> {
        rows.iter()
            .map(|&r| ds.coughers()[table.cougher_index[r]].id.clone())
            .collect()
    };

    // calibration subset: thresholds and conformal quantiles
    let calib_rows = table.rows_for(&fp.calib);
    let y_calib = select_labels(&table.labels, &calib_rows);
    let calib_cal =
        isotonic.apply(&model.predict_proba(&scaler.apply(&x.select_rows(&calib_rows))?)?);
    let calib_ids = cougher_ids(&calib_rows);
    let yw = youden_threshold(&calib_cal, &y_calib)?;
    let calib_scores = CougherScores::aggregate(&calib_cal, &calib_ids, &y_calib)?;
    let ys = youden_threshold(calib_scores.p_pos(), calib_scores.labels())?;
    let thresholds = ThresholdPair {
        tau_w: yw.tau,
        tau_s: ys.tau,
        j_w: yw.j,
        j_s: ys.j,
    };
    let calibrator = ConformalCalibrator::fit(&calib_scores, &cfg.alphas)?;

    // test fold
    let test_rows = table.rows_for(&fp.test);
    let y_test = select_labels(&table.labels, &test_rows);
    let test_raw = model.predict_proba(&scaler.apply(&x.select_rows(&test_rows))?)?;
    let test_cal = isotonic.apply(&test_raw);
    let test_ids = cougher_ids(&test_rows);
    let waveform = LevelResult {
        ids: test_rows
            .iter()
            .map(|&r| table.recording_ids[r].clone())
            .collect(),
        cougher_ids: test_ids.clone(),
        labels: y_test.clone(),
        metrics: MetricSuite::evaluate(&test_cal, &y_test, thresholds.tau_w)?,
        calibration: CalibrationReport::compute(
            Level::Waveform,
            &test_raw,
            &test_cal,
            &y_test,
            cfg.ece_bins,
        )?,
        raw: test_raw.clone(),
        calibrated: test_cal.clone(),
        tau: thresholds.tau_w,
    };
    let raw_c = CougherScores::aggregate(&test_raw, &test_ids, &y_test)?;
    let cal_c = CougherScores::aggregate(&test_cal, &test_ids, &y_test)?;
    let cougher = LevelResult {
        ids: cal_c.ids().to_vec(),
        cougher_ids: cal_c.ids().to_vec(),
        labels: cal_c.labels().to_vec(),
        raw: raw_c.p_pos().to_vec(),
        calibrated: cal_c.p_pos().to_vec(),
        tau: thresholds.tau_s,
        metrics: MetricSuite::evaluate(cal_c.p_pos(), cal_c.labels(), thresholds.tau_s)?,
        calibration: CalibrationReport::compute(
            Level::Cougher,
            raw_c.p_pos(),
            cal_c.p_pos(),
            cal_c.labels(),
            cfg.ece_bins,
        )?,
    };

    let point_preds: Vec<bool> = cal_c
        .p_pos()
        .iter()
        .map(|&p| p >= thresholds.tau_s)
        .collect();
    let conformal = calibrator
        .quantiles
        .iter()
        .map(|q| {
            let sets = predict_sets(&cal_c, q.q_hat);
            Ok(ConformalResult {
                alpha: q.alpha,
                k: q.k,
                q_hat: q.q_hat,
                evaluation: evaluate_sets(&sets, cal_c.labels())?,
                selective: selective_metrics(&point_preds, &sets, cal_c.labels())?,
                point_preds: point_preds.clone(),
                sets,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FoldResult {
        fold: fp.fold,
        family,
        mode,
        seed: fp.seed,
        params,
        candidate_scores: scores,
        n_test_coughers: fp.test.len(),
        n_calib_coughers: fp.calib.len(),
        n_tuning_coughers: fp.tuning.len(),
        oof,
        thresholds,
        waveform,
        cougher,
        conformal,
        scaler,
        isotonic,
        calibrator,
        model: Some(model),
        audit: audit.records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate_synthetic, SyntheticConfig};
    use crate::learners::logistic::Solver;
    use crate::learners::ClassWeight;

    fn small_config() -> NestedConfig {
        NestedConfig {
            outer_folds: 3,
            inner_folds: 3,
            lr_grid: LrGrid {
                c: vec![1e-3, 1e-1],
                class_weight: vec![ClassWeight::Balanced],
                solver: vec![Solver::Lbfgs],
            },
            gbdt_grid: GbdtGrid {
                depth: vec![2],
                iterations: vec![10],
                learning_rate: vec![0.1],
                l2_leaf_reg: vec![3.0],
                subsample: vec![1.0],
                rsm: vec![1.0],
                class_weight: vec![ClassWeight::None, ClassWeight::Balanced],
            },
            ..NestedConfig::default()
        }
    }

    fn small_dataset(seed: u64) -> Dataset {
        generate_synthetic(&SyntheticConfig {
            n_coughers: 90,
            coughs_mean: 4.0,
            coughs_std: 1.0,
            coughs_min: 3,
            coughs_max: 8,
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn folds_produce_consistent_outputs() {
        let ds = small_dataset(3);
        let table = FeatureTable::build(&ds).unwrap();
        let cfg = small_config();
        for family in [Family::Lr, Family::Gbdt] {
            let run = run_nested(&ds, &table, family, FeatureMode::Fused, &cfg).unwrap();
            assert_eq!(run.folds.len(), 3);
            let tested: usize = run.folds.iter().map(|f| f.n_test_coughers).sum();
            assert_eq!(tested, ds.n_coughers());
            for f in &run.folds {
                assert!(f.oof.iter().all(|p| (0.0..=1.0).contains(p)));
                assert_eq!(f.cougher.ids.len(), f.n_test_coughers);
                assert_eq!(f.conformal.len(), 2);
                assert!(f
                    .audit
                    .iter()
                    .all(|a| a.n_fit_coughers <= f.n_tuning_coughers));
                assert_eq!(f.params.family(), family);
            }
        }
    }

    #[test]
    fn deleting_a_test_cougher_leaves_training_untouched() {
        let ds = small_dataset(5);
        let table = FeatureTable::build(&ds).unwrap();
        let cfg = small_config();
        let groups = groups_of(&ds);
        let plan = build_nested_plan(&groups, 3, 3, 0.15, cfg.seed).unwrap();
        let fp = &plan.folds[0];
        let full = run_fold(&ds, &table, fp, Family::Lr, FeatureMode::Fused, &cfg).unwrap();

        let victim = ds.coughers()[fp.test[0]].id.clone();
        let reduced = ds.without(&BTreeSet::from([victim.clone()])).unwrap();
        let reduced_table = FeatureTable::build(&reduced).unwrap();
        let remap = |list: &[usize]| -> Vec<usize> {
            list.iter()
                .filter_map(|&i| {
                    let id = &ds.coughers()[i].id;
                    reduced.coughers().iter().position(|c| &c.id == id)
                })
                .collect()
        };
        let fp2 = FoldPlan {
            test: remap(&fp.test),
            calib: remap(&fp.calib),
            tuning: remap(&fp.tuning),
            ..fp.clone()
        };
        let cut = run_fold(
            &reduced,
            &reduced_table,
            &fp2,
            Family::Lr,
            FeatureMode::Fused,
            &cfg,
        )
        .unwrap();
        assert_eq!(full.params, cut.params);
        assert_eq!(full.candidate_scores, cut.candidate_scores);
        assert_eq!(full.scaler.means, cut.scaler.means);
        assert_eq!(full.scaler.stds, cut.scaler.stds);
        assert_eq!(full.model, cut.model);
        assert_eq!(full.isotonic, cut.isotonic);
        assert_eq!(full.thresholds, cut.thresholds);
        assert_eq!(full.calibrator, cut.calibrator);
        assert!(!cut.cougher.ids.contains(&victim));
    }

    #[test]
    fn a_plan_that_mixes_roles_is_rejected() {
        let ds = small_dataset(7);
        let table = FeatureTable::build(&ds).unwrap();
        let cfg = small_config();
        let plan = build_nested_plan(&groups_of(&ds), 3, 3, 0.15, cfg.seed).unwrap();
        let mut fp = plan.folds[1].clone();
        let leaked = fp.test[0];
        let pos = fp.tuning.partition_point(|&c| c < leaked);
        fp.tuning.insert(pos, leaked);
        fp.inner.insert(pos, 0);
        let err = run_fold(&ds, &table, &fp, Family::Lr, FeatureMode::Audio, &cfg).unwrap_err();
        assert!(matches!(err, Error::Leakage(_)));
    }
}
