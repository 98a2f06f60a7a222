//! Accuracy and confusion matrices.

use serde::{Deserialize, Serialize};

use super::cache::FeatureRecord;
use crate::error::{Error, Result};
use crate::svm::SvmModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Rows divided by their sums; all-zero for classes absent from the data.
    pub normalized: Vec<Vec<f64>>,
    pub class_counts: Vec<usize>,
    pub empty_rows: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Builds a report from class indices into `labels`.
    pub fn from_predictions(labels: &[String], truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: pred.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::InsufficientData("no samples to evaluate".into()));
        }
        let k = labels.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::LabelMismatch(format!("class index outside 0..{k}")));
            }
            confusion[t][p] += 1;
        }
        let class_counts: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
        let empty_rows: Vec<bool> = class_counts.iter().map(|&n| n == 0).collect();
        let normalized = confusion
            .iter()
            .zip(&class_counts)
            .map(|(row, &n)| {
                row.iter()
                    .map(|&v| if n == 0 { 0.0 } else { v as f64 / n as f64 })
                    .collect()
            })
            .collect();
        let correct = (0..k).map(|c| confusion[c][c]).sum();
        let mut warnings = Vec::new();
        for (c, &e) in empty_rows.iter().enumerate() {
            if e {
                warnings.push(format!("class '{}' has no test samples", labels[c]));
            }
        }
        Ok(Self {
            labels: labels.to_vec(),
            total: truth.len(),
            correct,
            accuracy: correct as f64 / truth.len() as f64,
            confusion,
            normalized,
            class_counts,
            empty_rows,
            seed: None,
            config_digest: None,
            warnings,
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.labels.len()).map(|c| self.normalized[c][c]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let w = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(8);
        let mut s = format!(
            "accuracy: {:.4} ({}/{})\n\nnormalized confusion (rows = true, columns = predicted)\n{:w$}",
            self.accuracy, self.correct, self.total, ""
        );
        for l in &self.labels {
            s.push_str(&format!(" {l:>w$}"));
        }
        s.push_str(&format!(" {:>6}\n", "n"));
        for (c, l) in self.labels.iter().enumerate() {
            s.push_str(&format!("{l:w$}"));
            for v in &self.normalized[c] {
                s.push_str(&format!(" {v:>w$.3}"));
            }
            s.push_str(&format!(" {:>6}\n", self.class_counts[c]));
        }
        for warn in &self.warnings {
            s.push_str(&format!("warning: {warn}\n"));
        }
        s
    }
}

/// Classifies every record and compares against its label. Record labels
/// must all be model labels.
pub fn evaluate(model: &SvmModel, records: &[&FeatureRecord]) -> Result<(EvalReport, Vec<usize>)> {
    let mut truth = Vec::with_capacity(records.len());
    let mut pred = Vec::with_capacity(records.len());
    for r in records {
        let t = model.labels.iter().position(|l| *l == r.label).ok_or_else(|| {
            Error::LabelMismatch(format!(
                "label '{}' of {} is not one of the model labels [{}]",
                r.label,
                r.path,
                model.labels.join(",")
            ))
        })?;
        truth.push(t);
        pred.push(model.predict(r.features.as_slice())?.class);
    }
    Ok((EvalReport::from_predictions(&model.labels, &truth, &pred)?, pred))
}
