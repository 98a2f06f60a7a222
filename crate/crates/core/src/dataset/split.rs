use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 42,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// `(train, test)` sizes for `n` samples: the test side gets
    /// `ceil(n (1 - f))`, the train side the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize) {
        let test = ((n as f64) * (1.0 - self.train_fraction) - 1e-9).ceil().max(0.0) as usize;
        let test = test.min(n);
        (n - test, test)
    }
}

/// Partitions sample indices `0..classes.len()` into sorted `(train, test)`
/// index lists.
///
/// With stratification, each class receives a train quota proportional to
/// its size (floors first, leftover slots to the largest fractional parts,
/// earlier classes winning ties); members are chosen by a seeded shuffle per
/// class.
pub fn split_indices(classes: &[usize], n_classes: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n = classes.len();
    let (n_train, _) = spec.sizes(n);
    if n_train == 0 || n_train == n {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot be split at fraction {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::with_capacity(n_train);

    if spec.stratified {
        let members: Vec<Vec<usize>> = (0..n_classes)
            .map(|c| (0..n).filter(|&t| classes[t] == c).collect())
            .collect();
        if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| m.len() == 1) {
            return Err(Error::ClassTooSmall {
                label: c.to_string(),
                count: m.len(),
                required: 2,
            });
        }
        let exact: Vec<f64> = members
            .iter()
            .map(|m| m.len() as f64 * n_train as f64 / n as f64)
            .collect();
        let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
        let mut left = n_train - quota.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &c in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if quota[c] < members[c].len() {
                quota[c] += 1;
                left -= 1;
            }
        }
        for (c, m) in members.into_iter().enumerate() {
            let mut m = m;
            m.shuffle(&mut rng);
            train.extend_from_slice(&m[..quota[c]]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        train.extend_from_slice(&all[..n_train]);
    }

    train.sort_unstable();
    let mut in_train = vec![false; n];
    for &t in &train {
        in_train[t] = true;
    }
    let test = (0..n).filter(|&t| !in_train[t]).collect();
    Ok((train, test))
}

/// Splits a manifest into `(train, test)` manifests (entries keep manifest
/// order).
pub fn split(m: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest)> {
    let classes: Vec<usize> = m
        .entries()
        .iter()
        .map(|e| m.label_index(&e.label).expect("manifest labels are validated"))
        .collect();
    let (train, test) = split_indices(&classes, m.labels().len(), spec).map_err(|e| match e {
        Error::ClassTooSmall { label, count, required } => Error::ClassTooSmall {
            label: label
                .parse::<usize>()
                .ok()
                .and_then(|c| m.labels().get(c).cloned())
                .unwrap_or(label),
            count,
            required,
        },
        other => other,
    })?;
    Ok((m.subset(&train), m.subset(&test)))
}
