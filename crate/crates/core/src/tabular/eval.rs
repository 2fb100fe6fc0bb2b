use serde::{Deserialize, Serialize};

use super::{Classifier, LabeledDataset, Result, TabularError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes absent from the evaluated set.
    pub per_class_recall: Vec<Option<f64>>,
    pub n: usize,
}

pub fn evaluate_predictions(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<EvaluationReport> {
    if truth.len() != predicted.len() {
        return Err(TabularError::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(TabularError::InvalidDataset("nothing to evaluate".into()));
    }
    if let Some(c) = truth.iter().chain(predicted).find(|&&c| c >= n_classes) {
        return Err(TabularError::InvalidDataset(format!(
            "class id {c} out of range for {n_classes} classes"
        )));
    }
    let mut confusion = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[k] as f64 / total as f64)
        })
        .collect();
    Ok(EvaluationReport {
        accuracy: correct as f64 / truth.len() as f64,
        confusion,
        per_class_recall,
        n: truth.len(),
    })
}

pub fn evaluate<M: Classifier + ?Sized>(
    model: &M,
    ds: &LabeledDataset,
) -> Result<EvaluationReport> {
    if model.n_classes() != ds.n_classes() {
        return Err(TabularError::DimensionMismatch {
            expected: model.n_classes(),
            got: ds.n_classes(),
        });
    }
    let predicted = (0..ds.n_samples())
        .map(|i| model.predict(&ds.row(i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(&ds.labels, &predicted, ds.n_classes())
}
