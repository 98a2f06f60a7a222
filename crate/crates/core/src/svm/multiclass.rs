//! One-vs-one multi-class model and cross-validated grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binary::{train_binary, BinarySvm, RbfParams, SmoOptions};
use crate::error::{Error, Result};
use crate::features::{Standardizer, FEATURE_NAMES, FEATURE_ORDER_TAG};

/// Binary machine separating class `pos` (+1) from class `neg` (-1).
#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    pub pos: usize,
    pub neg: usize,
    pub svm: BinarySvm,
}

/// Standardizer plus one binary machine per unordered class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub labels: Vec<String>,
    pub feature_order: String,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub machines: Vec<PairMachine>,
    /// Free-form metadata stored alongside the model (sorted by key).
    pub meta: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub votes: Vec<usize>,
    /// `(pos, neg, decision value)` per pair machine.
    pub pair_decisions: Vec<(usize, usize, f64)>,
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn params(&self) -> Option<RbfParams> {
        self.machines.first().map(|m| m.svm.params)
    }

    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.svm.converged)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key, value)),
        }
        self.meta.sort();
    }

    /// Checks that features laid out as `order` / `names` can be fed to
    /// this model.
    pub fn check_feature_order(&self, order: &str, names: &[&str]) -> Result<()> {
        let same_names = self.feature_names.len() == names.len()
            && self.feature_names.iter().zip(names).all(|(a, b)| a == b);
        if self.feature_order != order || !same_names {
            return Err(Error::FeatureOrderMismatch {
                expected: format!("{} [{}]", self.feature_order, self.feature_names.join(",")),
                found: format!("{order} [{}]", names.join(",")),
            });
        }
        Ok(())
    }

    /// Classifies a raw (unstandardized) feature vector.
    ///
    /// Each pair machine votes for one class. Ties in the vote count go to
    /// the class whose winning pair decisions have the larger summed
    /// magnitude, then to the earlier class.
    pub fn predict(&self, raw: &[f64]) -> Result<Prediction> {
        let z = self.standardizer.transform(raw)?;
        let k = self.n_classes();
        let mut votes = vec![0usize; k];
        let mut strength = vec![0.0f64; k];
        let mut pair_decisions = Vec::with_capacity(self.machines.len());
        for m in &self.machines {
            let (label, d) = m.svm.predict(&z)?;
            let winner = if label > 0 { m.pos } else { m.neg };
            votes[winner] += 1;
            strength[winner] += d.abs();
            pair_decisions.push((m.pos, m.neg, d));
        }
        let mut class = 0;
        for c in 1..k {
            if votes[c] > votes[class] || (votes[c] == votes[class] && strength[c] > strength[class]) {
                class = c;
            }
        }
        Ok(Prediction {
            class,
            votes,
            pair_decisions,
        })
    }
}

fn check_classes(y: &[usize], n_classes: usize, labels: &[String], min_count: usize) -> Result<Vec<usize>> {
    if n_classes < 2 {
        return Err(Error::SingleClassData);
    }
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(Error::LabelMismatch(format!(
                "class index {c} outside 0..{n_classes}"
            )));
        }
        counts[c] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClassData);
    }
    if let Some((c, &count)) = counts.iter().enumerate().find(|(_, &n)| n < min_count) {
        return Err(Error::ClassTooSmall {
            label: labels.get(c).cloned().unwrap_or_else(|| c.to_string()),
            count,
            required: min_count,
        });
    }
    Ok(counts)
}

/// Fits the standardizer on `x` and trains one machine per class pair on the
/// standardized features. `y[t]` indexes into `labels`.
pub fn train_multiclass(
    x: &[&[f64]],
    y: &[usize],
    labels: &[String],
    params: RbfParams,
    opts: &SmoOptions,
) -> Result<SvmModel> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    check_classes(y, labels.len(), labels, 2)?;
    let standardizer = Standardizer::fit(x)?;
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| standardizer.transform(r))
        .collect::<Result<_>>()?;

    let k = labels.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(pos, neg)| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (row, &c) in z.iter().zip(y) {
                if c == pos || c == neg {
                    xs.push(row.as_slice());
                    ys.push(if c == pos { 1.0 } else { -1.0 });
                }
            }
            let svm = train_binary(&xs, &ys, params, opts)?;
            Ok(PairMachine { pos, neg, svm })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SvmModel {
        labels: labels.to_vec(),
        feature_order: FEATURE_ORDER_TAG.to_string(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        standardizer,
        machines,
        meta: Vec::new(),
    })
}

/// Assigns each sample to one of `folds` folds, stratified by class: the
/// samples of each class are shuffled with a seeded generator and dealt
/// round-robin.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; y.len()];
    let mut offset = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&t| y[t] == c).collect();
        idx.shuffle(&mut rng);
        for (pos, &t) in idx.iter().enumerate() {
            fold_of[t] = (pos + offset) % folds;
        }
        // Rotate the starting fold so small classes don't all pile into fold 0.
        offset = (offset + idx.len()) % folds;
    }
    fold_of
}

/// Hyperparameter grid and cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub folds: usize,
    /// Seeds the fold assignment.
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma: vec![0.001, 0.01, 0.1, 1.0],
            folds: 5,
            seed: 42,
        }
    }
}

impl GridSpec {
    pub fn new(c: &[f64], gamma: &[f64], folds: usize, seed: u64) -> Self {
        Self {
            c: c.to_vec(),
            gamma: gamma.to_vec(),
            folds,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: RbfParams,
    pub best_accuracy: f64,
    pub folds: usize,
    pub seed: u64,
    /// Sorted by C, then gamma.
    pub table: Vec<GridCell>,
}

fn sorted_unique(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} grid is empty")));
    }
    let mut v = values.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} grid has non-finite values")));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Stratified k-fold cross-validated accuracy for every `(C, gamma)` cell.
/// Each fold refits the standardizer on its own training part. The best cell
/// maximizes accuracy; ties go to the smaller C, then the smaller gamma.
pub fn grid_search(
    x: &[&[f64]],
    y: &[usize],
    labels: &[String],
    grid: &GridSpec,
    opts: &SmoOptions,
) -> Result<GridSearchResult> {
    let (folds, seed) = (grid.folds, grid.seed);
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    let cs = sorted_unique(&grid.c, "C")?;
    let gammas = sorted_unique(&grid.gamma, "gamma")?;
    let k = labels.len();
    check_classes(y, k, labels, folds)?;
    let fold_of = stratified_folds(y, k, folds, seed);

    let cells: Vec<RbfParams> = cs
        .iter()
        .flat_map(|&c| gammas.iter().map(move |&gamma| RbfParams { c, gamma }))
        .collect();
    for p in &cells {
        p.validate()?;
    }

    let table = cells
        .par_iter()
        .map(|&p| {
            let mut correct = 0usize;
            let mut converged = true;
            for f in 0..folds {
                let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for t in 0..x.len() {
                    if fold_of[t] == f {
                        vx.push(x[t]);
                        vy.push(y[t]);
                    } else {
                        tx.push(x[t]);
                        ty.push(y[t]);
                    }
                }
                let model = train_multiclass(&tx, &ty, labels, p, opts)?;
                converged &= model.converged();
                for (row, &truth) in vx.iter().zip(&vy) {
                    if model.predict(row)?.class == truth {
                        correct += 1;
                    }
                }
            }
            Ok(GridCell {
                c: p.c,
                gamma: p.gamma,
                accuracy: correct as f64 / x.len() as f64,
                converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, cell) in table.iter().enumerate() {
        if cell.accuracy > table[best].accuracy {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best: RbfParams {
            c: table[best].c,
            gamma: table[best].gamma,
        },
        best_accuracy: table[best].accuracy,
        folds,
        seed,
        table,
    })
}
