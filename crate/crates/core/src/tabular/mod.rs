//! From-scratch classifiers for geometric feature vectors: multinomial
//! logistic regression, a Gini random forest, a one-vs-one RBF SVM, and a
//! three-hidden-layer perceptron. All use 64-bit reals and are
//! deterministic for a fixed configuration and seed.

mod eval;
mod forest;
mod logreg;
mod mlp;
mod model;
mod svm;

pub use eval::{evaluate, evaluate_predictions, EvaluationReport};
pub use forest::{
    feature_importances, train_forest, DecisionTree, ForestConfig, ForestModel, MaxFeatures,
    TreeNode,
};
pub use logreg::{logreg_objective, train_logreg, LogRegConfig, LogRegModel};
pub use mlp::{train_mlp, Activation, DenseLayer, MlpConfig, MlpModel};
pub use model::{ModelFile, ModelKind, Preprocessing, TrainedModel, MODEL_FILE_VERSION};
pub use svm::{rbf_kernel, train_svm, vote, BinaryMachine, SvmConfig, SvmModel};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("training data contains fewer than two classes")]
    SingleClassDataset,
    #[error("class `{0}` has no training samples")]
    EmptyClass(String),
    #[error("solver did not converge after {iterations} iterations (KKT gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

pub type Result<T> = std::result::Result<T, TabularError>;

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub subject_ids: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        subject_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        let bad = |m: String| Err(TabularError::InvalidDataset(m));
        if n == 0 || d == 0 {
            return bad(format!("empty feature matrix ({n}×{d})"));
        }
        if labels.len() != n || subject_ids.len() != n {
            return bad(format!(
                "{n} rows but {} labels and {} subject ids",
                labels.len(),
                subject_ids.len()
            ));
        }
        if let Some(l) = labels.iter().find(|l| **l >= class_names.len()) {
            return bad(format!(
                "label {l} out of range for {} classes",
                class_names.len()
            ));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return bad("non-finite feature value".into());
        }
        Ok(Self {
            features,
            labels,
            class_names,
            subject_ids,
        })
    }

    /// Convenience constructor with generated class names and subject ids.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(TabularError::InvalidDataset("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| TabularError::InvalidDataset(e.to_string()))?;
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let names = (0..n_classes).map(|k| format!("class{k}")).collect();
        Self::new(features, labels, names, ids)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    fn require_two_classes(&self) -> Result<()> {
        if self.class_counts().iter().filter(|c| **c > 0).count() < 2 {
            return Err(TabularError::SingleClassDataset);
        }
        Ok(())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let features = self.features.select(ndarray::Axis(0), idx);
        Self::new(
            features,
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
            idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
        )
    }
}

pub trait Classifier {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// Class id for a row already known to have `n_features` entries.
    fn predict_row(&self, x: &[f64]) -> usize;

    fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features() {
            return Err(TabularError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.predict_row(x))
    }
}
