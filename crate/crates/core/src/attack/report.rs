use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Conditions worth surfacing next to an attack result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum AttackFlag {
    /// Zero vectors could not be normalized and were clustered as-is.
    ZeroVectors { count: usize },
    /// All points coincide; nothing can be separated.
    DegenerateInput,
    /// These anchors ended nearer another cluster's centroid than their own.
    AnchorDrift { labels: Vec<usize> },
    /// Centroids came from farthest-point seeding and labels from cluster sizes.
    AnchorFree,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub predicted: Vec<usize>,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes absent from the truth.
    pub per_class_recall: Vec<Option<f64>>,
    pub iterations: usize,
    pub flags: Vec<AttackFlag>,
}

/// Accuracy, confusion matrix and per-class recall over `classes` labels.
pub fn score(predicted: &[usize], truth: &[usize], classes: usize) -> Result<AttackReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::LabelOutOfRange { label: p.max(t), classes });
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let accuracy = if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 };
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    Ok(AttackReport {
        predicted: predicted.to_vec(),
        accuracy,
        confusion,
        per_class_recall,
        iterations: 0,
        flags: Vec::new(),
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    samples: usize,
    accuracy: f64,
    per_class_recall: &'a [Option<f64>],
    iterations: usize,
    flags: &'a [AttackFlag],
}

impl AttackReport {
    /// Per-sample CSV: `sample_id,predicted,true`.
    pub fn write_csv<W: Write>(&self, w: W, sample_ids: &[usize], truth: &[usize]) -> Result<()> {
        if sample_ids.len() != self.predicted.len() || truth.len() != self.predicted.len() {
            return Err(Error::Shape("sample ids, predictions and labels differ in length".into()));
        }
        let rows: Vec<Vec<String>> = sample_ids
            .iter()
            .zip(&self.predicted)
            .zip(truth)
            .map(|((id, p), t)| vec![id.to_string(), p.to_string(), t.to_string()])
            .collect();
        crate::data::write_results_csv(w, &["sample_id", "predicted", "true"], &rows)
    }

    /// One-line JSON summary: accuracy, per-class recall, iterations, flags.
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Summary {
            samples: self.predicted.len(),
            accuracy: self.accuracy,
            per_class_recall: &self.per_class_recall,
            iterations: self.iterations,
            flags: &self.flags,
        })?)
    }
}
