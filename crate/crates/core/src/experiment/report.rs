//! Per-fold rows and the aggregate tables derived from them.

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::dataset::{Dataset, DatasetSummary, FeatureMode};
use crate::error::Result;
use crate::learners::Family;
use crate::splits::{
    groups_of, nested::LevelResult, write_plan_csv, FoldResult, Group, NestedPlan,
};

pub const REPORT_FORMAT: &str = "tbcough-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBlock {
    pub mode: FeatureMode,
    pub family: Family,
    pub folds: Vec<FoldResult>,
}

/// One number of one fold. `value` is empty when undefined, e.g. a PPV with
/// no predicted positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub mode: FeatureMode,
    pub model: Family,
    pub fold: usize,
    pub level: String,
    pub alpha: Option<f64>,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.into_inner().map_err(|e| e.into_error().into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub mode: FeatureMode,
    pub classification: Table,
    pub calibration: Table,
    pub conformal: Table,
    pub selective: Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub groups: Vec<Group>,
    pub plan: NestedPlan,
    pub blocks: Vec<RunBlock>,
    pub fold_rows: Vec<FoldRow>,
    pub tables: Vec<Tables>,
}

/// Classification metrics in table order: key and display label.
pub const CLASSIFICATION_METRICS: [(&str, &str); 8] = [
    ("threshold", "Threshold"),
    ("roc_auc", "ROC AUC"),
    ("pr_auc", "PR AUC"),
    ("uar", "UAR"),
    ("sensitivity", "Sensitivity"),
    ("specificity", "Specificity"),
    ("ppv", "PPV"),
    ("npv", "NPV"),
];

pub const LEVELS: [&str; 2] = ["waveform", "cougher"];

pub const SELECTIVE_METRICS: [&str; 4] = [
    "accuracy",
    "acc_singleton",
    "acc_ambiguous",
    "p_singleton_given_correct",
];

fn level_rows(r: &LevelResult) -> Vec<(String, Option<f64>)> {
    let m = &r.metrics;
    let c = &r.calibration;
    [
        ("threshold", Some(r.tau)),
        ("roc_auc", m.roc_auc),
        ("pr_auc", m.pr_auc),
        ("uar", m.uar),
        ("sensitivity", m.sens),
        ("specificity", m.spec),
        ("ppv", m.ppv),
        ("npv", m.npv),
        ("brier_raw", Some(c.brier_raw)),
        ("brier_isotonic", Some(c.brier_cal)),
        ("ece_raw", Some(c.ece_raw)),
        ("ece_isotonic", Some(c.ece_cal)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .chain(std::iter::once((
        "n".to_string(),
        Some(r.labels.len() as f64),
    )))
    .collect()
}

fn fold_rows_of(block: &RunBlock) -> Vec<FoldRow> {
    let mut out = Vec::new();
    for f in &block.folds {
        let mut push = |level: &str, alpha: Option<f64>, metric: &str, value: Option<f64>| {
            out.push(FoldRow {
                mode: block.mode,
                model: block.family,
                fold: f.fold,
                level: level.to_string(),
                alpha,
                metric: metric.to_string(),
                value,
            })
        };
        for (level, r) in [("waveform", &f.waveform), ("cougher", &f.cougher)] {
            for (k, v) in level_rows(r) {
                push(level, None, &k, v);
            }
        }
        for c in &f.conformal {
            let a = Some(c.alpha);
            let e = &c.evaluation;
            let s = &c.selective;
            push("cougher", a, "q_hat", Some(c.q_hat));
            push("cougher", a, "coverage", Some(e.coverage));
            push("cougher", a, "set_size", Some(e.mean_size));
            push("cougher", a, "singleton_rate", Some(e.singleton_rate));
            push("cougher", a, "empty_rate", Some(e.empty_rate));
            push("cougher", a, "accuracy", Some(s.accuracy));
            push("cougher", a, "acc_singleton", s.acc_singleton);
            push("cougher", a, "acc_ambiguous", s.acc_ambiguous);
            push(
                "cougher",
                a,
                "p_singleton_given_correct",
                s.p_singleton_given_correct,
            );
            let labels = &f.cougher.labels;
            let mut counts = [0usize; 6];
            for ((set, &p), &y) in c.sets.iter().zip(&c.point_preds).zip(labels) {
                let ok = (p == y) as usize;
                counts[0] += 1;
                counts[1] += ok;
                if set.is_singleton() {
                    counts[2] += 1;
                    counts[3] += ok;
                } else if set.size() == 2 {
                    counts[4] += 1;
                    counts[5] += ok;
                }
            }
            for (name, v) in [
                "n",
                "n_correct",
                "n_singleton",
                "n_singleton_correct",
                "n_ambiguous",
                "n_ambiguous_correct",
            ]
            .iter()
            .zip(counts)
            {
                push("cougher", a, name, Some(v as f64));
            }
        }
    }
    out
}

/// Mean and sample standard deviation over the defined values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn stat(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Stat {
        mean,
        std,
        n: values.len(),
    })
}

/// Defined values of one metric across folds, in fold order.
pub fn select(
    rows: &[FoldRow],
    mode: FeatureMode,
    model: Family,
    level: &str,
    alpha: Option<f64>,
    metric: &str,
) -> Vec<f64> {
    rows.iter()
        .filter(|r| {
            r.mode == mode
                && r.model == model
                && r.level == level
                && r.alpha == alpha
                && r.metric == metric
        })
        .filter_map(|r| r.value)
        .collect()
}

fn pm(s: Option<Stat>) -> String {
    match s {
        Some(s) => format!("{:.2} ± {:.2}", s.mean, s.std),
        None => "n/a".into(),
    }
}

fn raw(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stat_cells(s: Option<Stat>) -> [String; 3] {
    [
        raw(s.map(|s| s.mean)),
        raw(s.map(|s| s.std)),
        s.map(|s| s.n).unwrap_or(0).to_string(),
    ]
}

fn classification_table(rows: &[FoldRow], mode: FeatureMode, families: &[Family]) -> Table {
    let mut header = vec!["metric".to_string(), "label".to_string()];
    for level in LEVELS {
        for fam in families {
            let col = format!("{level}_{}", fam.as_str());
            header.extend([
                col.clone(),
                format!("{col}_mean"),
                format!("{col}_std"),
                format!("{col}_n"),
            ]);
        }
    }
    let body = CLASSIFICATION_METRICS
        .iter()
        .map(|(key, label)| {
            let mut r = vec![key.to_string(), label.to_string()];
            for level in LEVELS {
                for &fam in families {
                    let s = stat(&select(rows, mode, fam, level, None, key));
                    r.push(pm(s));
                    r.extend(stat_cells(s));
                }
            }
            r
        })
        .collect();
    Table {
        name: format!("classification_{}", mode.as_str()),
        header,
        rows: body,
    }
}

fn calibration_table(rows: &[FoldRow], mode: FeatureMode, families: &[Family]) -> Table {
    let mut header = vec!["level".to_string(), "metric".to_string()];
    for fam in families {
        for kind in ["raw", "isotonic"] {
            let col = format!("{}_{kind}", fam.as_str());
            header.extend([
                col.clone(),
                format!("{col}_mean"),
                format!("{col}_std"),
                format!("{col}_n"),
            ]);
        }
    }
    let mut body = Vec::new();
    for level in LEVELS {
        for metric in ["brier", "ece"] {
            let mut r = vec![level.to_string(), metric.to_string()];
            for &fam in families {
                for kind in ["raw", "isotonic"] {
                    let s = stat(&select(
                        rows,
                        mode,
                        fam,
                        level,
                        None,
                        &format!("{metric}_{kind}"),
                    ));
                    r.push(pm(s));
                    r.extend(stat_cells(s));
                }
            }
            body.push(r);
        }
    }
    Table {
        name: format!("calibration_{}", mode.as_str()),
        header,
        rows: body,
    }
}

fn conformal_table(
    rows: &[FoldRow],
    mode: FeatureMode,
    families: &[Family],
    alphas: &[f64],
) -> Table {
    let mut header = vec!["level".to_string(), "alpha".to_string()];
    for fam in families {
        let f = fam.as_str();
        header.extend([
            format!("{f}_coverage"),
            format!("{f}_set_size"),
            format!("{f}_coverage_mean"),
            format!("{f}_coverage_std"),
            format!("{f}_set_size_mean"),
            format!("{f}_set_size_std"),
            format!("{f}_singleton_rate_mean"),
        ]);
    }
    let mut body = Vec::new();
    for &alpha in alphas {
        let mut r = vec!["cougher".to_string(), alpha.to_string()];
        for &fam in families {
            let cov = stat(&select(rows, mode, fam, "cougher", Some(alpha), "coverage"));
            let size = stat(&select(rows, mode, fam, "cougher", Some(alpha), "set_size"));
            let single = stat(&select(
                rows,
                mode,
                fam,
                "cougher",
                Some(alpha),
                "singleton_rate",
            ));
            r.push(pm(cov));
            r.push(match single {
                Some(s1) => format!("{} [{:.2}]", pm(size), s1.mean),
                None => pm(size),
            });
            r.extend([
                raw(cov.map(|s| s.mean)),
                raw(cov.map(|s| s.std)),
                raw(size.map(|s| s.mean)),
                raw(size.map(|s| s.std)),
                raw(single.map(|s| s.mean)),
            ]);
        }
        body.push(r);
    }
    Table {
        name: format!("conformal_{}", mode.as_str()),
        header,
        rows: body,
    }
}

/// Macro is the mean of per-fold values; pooled recomputes each ratio from
/// the summed per-fold counts.
pub fn pooled(
    rows: &[FoldRow],
    mode: FeatureMode,
    fam: Family,
    alpha: f64,
    metric: &str,
) -> Option<f64> {
    let sum = |m: &str| -> f64 {
        select(rows, mode, fam, "cougher", Some(alpha), m)
            .iter()
            .sum()
    };
    let (num, den) = match metric {
        "accuracy" => ("n_correct", "n"),
        "acc_singleton" => ("n_singleton_correct", "n_singleton"),
        "acc_ambiguous" => ("n_ambiguous_correct", "n_ambiguous"),
        "p_singleton_given_correct" => ("n_singleton_correct", "n_correct"),
        _ => return None,
    };
    let d = sum(den);
    (d > 0.0).then(|| sum(num) / d)
}

fn selective_table(
    rows: &[FoldRow],
    mode: FeatureMode,
    families: &[Family],
    alphas: &[f64],
) -> Table {
    let mut header = vec!["model".to_string(), "alpha".to_string()];
    for m in SELECTIVE_METRICS {
        header.extend([format!("{m}_macro"), format!("{m}_pooled")]);
    }
    let mut body = Vec::new();
    for &fam in families {
        for &alpha in alphas {
            let mut r = vec![fam.as_str().to_string(), alpha.to_string()];
            for m in SELECTIVE_METRICS {
                r.push(raw(stat(&select(
                    rows,
                    mode,
                    fam,
                    "cougher",
                    Some(alpha),
                    m,
                ))
                .map(|s| s.mean)));
                r.push(raw(pooled(rows, mode, fam, alpha, m)));
            }
            body.push(r);
        }
    }
    Table {
        name: format!("selective_{}", mode.as_str()),
        header,
        rows: body,
    }
}

/// Assembles the report. Tables are computed only from the fold rows, so
/// they can be recomputed from the emitted per-fold CSV.
pub fn build_report(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    plan: NestedPlan,
    blocks: Vec<RunBlock>,
) -> Result<RunReport> {
    let fold_rows: Vec<FoldRow> = blocks.iter().flat_map(fold_rows_of).collect();
    let mut tables = Vec::new();
    for mode in cfg.feature_mode.modes() {
        let families: Vec<Family> = blocks
            .iter()
            .filter(|b| b.mode == mode)
            .map(|b| b.family)
            .collect();
        tables.push(Tables {
            mode,
            classification: classification_table(&fold_rows, mode, &families),
            calibration: calibration_table(&fold_rows, mode, &families),
            conformal: conformal_table(&fold_rows, mode, &families, &cfg.alphas),
            selective: selective_table(&fold_rows, mode, &families, &cfg.alphas),
        });
    }
    // thread count goes to timing.json so reports match across --jobs
    let config = ExperimentConfig {
        jobs: None,
        ..cfg.clone()
    };
    Ok(RunReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config,
        dataset: ds.summary(),
        groups: groups_of(ds),
        plan,
        blocks,
        fold_rows,
        tables,
    })
}

pub const FOLD_ROW_COLUMNS: [&str; 6] = ["model", "fold", "level", "alpha", "metric", "value"];

impl RunReport {
    pub fn fold_plan_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_plan_csv(&mut buf, &self.plan, &self.groups)?;
        Ok(buf)
    }

    pub fn fold_rows_csv(&self, mode: FeatureMode) -> Result<Vec<u8>> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(FOLD_ROW_COLUMNS)?;
        for r in self.fold_rows.iter().filter(|r| r.mode == mode) {
            wr.write_record([
                r.model.as_str().to_string(),
                r.fold.to_string(),
                r.level.clone(),
                raw(r.alpha),
                r.metric.clone(),
                raw(r.value),
            ])?;
        }
        wr.into_inner().map_err(|e| e.into_error().into())
    }

    /// Every CSV table file with its relative name.
    pub fn table_files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut out = Vec::new();
        for t in &self.tables {
            for table in [
                &t.classification,
                &t.calibration,
                &t.conformal,
                &t.selective,
            ] {
                out.push((format!("{}.csv", table.name), table.to_csv()?));
            }
            out.push((
                format!("folds_{}.csv", t.mode.as_str()),
                self.fold_rows_csv(t.mode)?,
            ));
        }
        Ok(out)
    }
}
