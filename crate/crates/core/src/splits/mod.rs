//! Cougher-disjoint stratified splitting, the nested validation plan and
//! its CSV export and audit.

pub mod nested;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use nested::{run_fold, run_nested, FoldResult, NestedConfig, NestedRun};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// One participant as seen by the splitter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: String,
    pub label: bool,
    pub n_recordings: usize,
}

pub fn groups_of(ds: &Dataset) -> Vec<Group> {
    ds.coughers()
        .iter()
        .map(|c| Group {
            id: c.id.clone(),
            label: c.tb_label,
            n_recordings: c.recordings.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedFoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold of each input group, aligned with the input order.
    pub assignment: Vec<usize>,
}

impl GroupedFoldPlan {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Largest gap between a fold's positive rate and the overall rate.
    pub fn max_prevalence_gap(&self, groups: &[Group]) -> f64 {
        let overall = groups.iter().filter(|g| g.label).count() as f64 / groups.len() as f64;
        (0..self.k)
            .map(|f| {
                let m = self.members(f);
                let pos = m.iter().filter(|&&i| groups[i].label).count() as f64;
                (pos / m.len().max(1) as f64 - overall).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Greedy stratified grouped k-fold.
///
/// Each class is handled separately, positives first. Its groups are
/// shuffled with `seed`, stably sorted by descending recording count, and
/// each goes to the fold with the fewest groups of that class, then the
/// fewest groups overall, then the fewest recordings, then the lowest index.
pub fn stratified_group_kfold(groups: &[Group], k: usize, seed: u64) -> Result<GroupedFoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    for class in [true, false] {
        let n = groups.iter().filter(|g| g.label == class).count();
        if n < k {
            return Err(Error::InvalidArgument(format!(
                "{n} {} coughers cannot fill {k} folds",
                if class { "positive" } else { "negative" }
            )));
        }
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|&a, &b| groups[b].n_recordings.cmp(&groups[a].n_recordings));

    let mut assignment = vec![usize::MAX; groups.len()];
    let mut n_groups = vec![0usize; k];
    let mut n_recs = vec![0usize; k];
    for class in [true, false] {
        let mut n_class = vec![0usize; k];
        for &i in order.iter().filter(|&&i| groups[i].label == class) {
            let f = (0..k)
                .min_by_key(|&f| (n_class[f], n_groups[f], n_recs[f], f))
                .expect("k >= 2");
            assignment[i] = f;
            n_class[f] += 1;
            n_groups[f] += 1;
            n_recs[f] += groups[i].n_recordings;
        }
    }
    Ok(GroupedFoldPlan {
        k,
        seed,
        assignment,
    })
}

/// Stratified cougher-level split of `pool` (indices into `groups`) into
/// calibration and tuning parts.
///
/// The calibration size `round(frac * n)` is apportioned across classes by
/// largest remainder; within a class the members are drawn after a seeded
/// shuffle. Both outputs are sorted.
pub fn carve_calibration(
    groups: &[Group],
    pool: &[usize],
    frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(frac > 0.0 && frac <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "calibration fraction must lie in (0, 0.5], got {frac}"
        )));
    }
    let classes: [Vec<usize>; 2] = [
        pool.iter().copied().filter(|&i| groups[i].label).collect(),
        pool.iter().copied().filter(|&i| !groups[i].label).collect(),
    ];
    let total = (frac * pool.len() as f64).round() as usize;
    let exact: Vec<f64> = classes
        .iter()
        .map(|c| total as f64 * c.len() as f64 / pool.len().max(1) as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - quota.iter().sum::<usize>();
    let mut by_remainder = [0usize, 1];
    by_remainder
        .sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &c in by_remainder.iter().cycle() {
        if left == 0 {
            break;
        }
        quota[c] += 1;
        left -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut calib = Vec::new();
    let mut tuning = Vec::new();
    for (c, members) in classes.iter().enumerate() {
        let name = if c == 0 { "positive" } else { "negative" };
        if quota[c] == 0 || quota[c] >= members.len() {
            return Err(Error::InvalidArgument(format!(
                "calibration split leaves the {name} class empty in one part ({} of {})",
                quota[c],
                members.len()
            )));
        }
        let mut m = members.clone();
        m.shuffle(&mut rng);
        calib.extend_from_slice(&m[..quota[c]]);
        tuning.extend_from_slice(&m[quota[c]..]);
    }
    calib.sort_unstable();
    tuning.sort_unstable();
    Ok((calib, tuning))
}

/// Roles of every cougher within one outer fold. All lists hold sorted
/// indices into the dataset's cougher list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold: usize,
    pub seed: u64,
    pub test: Vec<usize>,
    pub calib: Vec<usize>,
    pub tuning: Vec<usize>,
    /// Inner fold of each tuning cougher, aligned with `tuning`.
    pub inner: Vec<usize>,
    pub inner_k: usize,
}

impl FoldPlan {
    pub fn inner_members(&self, j: usize) -> Vec<usize> {
        self.tuning
            .iter()
            .zip(&self.inner)
            .filter(|(_, &f)| f == j)
            .map(|(&c, _)| c)
            .collect()
    }

    pub fn inner_complement(&self, j: usize) -> Vec<usize> {
        self.tuning
            .iter()
            .zip(&self.inner)
            .filter(|(_, &f)| f != j)
            .map(|(&c, _)| c)
            .collect()
    }

    /// Fails if a cougher holds two roles or the roles miss a cougher.
    pub fn check_disjoint(&self, n_coughers: usize) -> Result<()> {
        let mut seen = vec![false; n_coughers];
        for (role, list) in [
            ("test", &self.test),
            ("calib", &self.calib),
            ("tuning", &self.tuning),
        ] {
            for &c in list {
                if c >= n_coughers || seen[c] {
                    return Err(Error::Leakage(format!(
                        "outer fold {}: cougher #{c} appears twice (second time as {role})",
                        self.fold
                    )));
                }
                seen[c] = true;
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Leakage(format!(
                "outer fold {}: cougher #{c} has no role",
                self.fold
            )));
        }
        if self.inner.len() != self.tuning.len() || self.inner.iter().any(|&j| j >= self.inner_k) {
            return Err(Error::Leakage(format!(
                "outer fold {}: inner assignment is inconsistent",
                self.fold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedPlan {
    pub outer: GroupedFoldPlan,
    pub folds: Vec<FoldPlan>,
}

/// Seed of outer fold `f` under the master seed.
pub fn fold_seed(master: u64, fold: usize) -> u64 {
    derive_seed(master, fold as u64)
}

pub fn build_nested_plan(
    groups: &[Group],
    outer_k: usize,
    inner_k: usize,
    calib_frac: f64,
    seed: u64,
) -> Result<NestedPlan> {
    let outer = stratified_group_kfold(groups, outer_k, seed)?;
    let mut folds = Vec::with_capacity(outer_k);
    for f in 0..outer_k {
        let fs = fold_seed(seed, f);
        let test = outer.members(f);
        let pool: Vec<usize> = (0..groups.len())
            .filter(|&i| outer.assignment[i] != f)
            .collect();
        let (calib, tuning) = carve_calibration(groups, &pool, calib_frac, derive_seed(fs, 1))?;
        let sub: Vec<Group> = tuning.iter().map(|&i| groups[i].clone()).collect();
        let inner = stratified_group_kfold(&sub, inner_k, derive_seed(fs, 2))?;
        let plan = FoldPlan {
            fold: f,
            seed: fs,
            test,
            calib,
            tuning,
            inner: inner.assignment,
            inner_k,
        };
        plan.check_disjoint(groups.len())?;
        folds.push(plan);
    }
    Ok(NestedPlan { outer, folds })
}

pub const PLAN_COLUMNS: [&str; 4] = ["cougher_id", "outer_fold", "role", "inner_fold"];

/// One row per (outer fold, cougher); `inner_fold` is empty unless the role
/// is `tuning`.
pub fn write_plan_csv<W: Write>(out: W, plan: &NestedPlan, groups: &[Group]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(PLAN_COLUMNS)?;
    for fp in &plan.folds {
        let mut rows: Vec<(usize, &str, String)> = Vec::with_capacity(groups.len());
        rows.extend(fp.test.iter().map(|&c| (c, "test", String::new())));
        rows.extend(fp.calib.iter().map(|&c| (c, "calib", String::new())));
        rows.extend(
            fp.tuning
                .iter()
                .zip(&fp.inner)
                .map(|(&c, j)| (c, "tuning", j.to_string())),
        );
        rows.sort_by_key(|r| r.0);
        for (c, role, inner) in rows {
            wr.write_record([groups[c].id.as_str(), &fp.fold.to_string(), role, &inner])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanAudit {
    pub coughers: usize,
    pub outer_folds: usize,
    pub rows: usize,
}

/// Verifies an exported plan: within each outer fold every cougher holds
/// exactly one role, each cougher is tested in exactly one fold, and inner
/// folds appear exactly on tuning rows. Violations are leakage errors;
/// unreadable rows are data errors.
pub fn audit_plan_csv<R: Read>(input: R) -> Result<PlanAudit> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != PLAN_COLUMNS {
        return Err(Error::MalformedRow {
            row: 1,
            reason: format!("header must be {}", PLAN_COLUMNS.join(",")),
        });
    }
    let mut per_fold: BTreeMap<usize, BTreeMap<String, (String, Option<usize>)>> = BTreeMap::new();
    let mut all: BTreeSet<String> = BTreeSet::new();
    let mut n_rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |reason: String| Error::MalformedRow { row: line, reason };
        let id = rec.get(0).unwrap_or("").to_string();
        let fold: usize = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad("outer_fold is not an integer".into()))?;
        let role = rec.get(2).unwrap_or("").to_string();
        if !matches!(role.as_str(), "test" | "calib" | "tuning") {
            return Err(bad(format!("unknown role {role:?}")));
        }
        let inner = match rec.get(3).unwrap_or("") {
            "" => None,
            s => Some(
                s.parse()
                    .map_err(|_| bad("inner_fold is not an integer".into()))?,
            ),
        };
        if (role == "tuning") != inner.is_some() {
            return Err(Error::Leakage(format!(
                "row {line}: cougher {id} has role {role} with inner fold {inner:?}"
            )));
        }
        if id.is_empty() {
            return Err(bad("empty cougher_id".into()));
        }
        all.insert(id.clone());
        n_rows += 1;
        if let Some((prev, _)) = per_fold
            .entry(fold)
            .or_default()
            .insert(id.clone(), (role.clone(), inner))
        {
            return Err(Error::Leakage(format!(
                "outer fold {fold}: cougher {id} appears as both {prev} and {role}"
            )));
        }
    }
    if per_fold.is_empty() {
        return Err(Error::EmptyInput("fold plan"));
    }
    let mut tested: BTreeMap<&str, usize> = BTreeMap::new();
    for (fold, members) in &per_fold {
        if members.len() != all.len() {
            return Err(Error::Leakage(format!(
                "outer fold {fold} assigns {} of {} coughers",
                members.len(),
                all.len()
            )));
        }
        for (id, (role, _)) in members {
            if role == "test" {
                *tested.entry(id.as_str()).or_default() += 1;
            }
        }
    }
    for id in &all {
        match tested.get(id.as_str()) {
            Some(1) => {}
            Some(n) => {
                return Err(Error::Leakage(format!(
                    "cougher {id} is tested in {n} outer folds"
                )))
            }
            None => return Err(Error::Leakage(format!("cougher {id} is never tested"))),
        }
    }
    Ok(PlanAudit {
        coughers: all.len(),
        outer_folds: per_fold.len(),
        rows: n_rows,
    })
}
