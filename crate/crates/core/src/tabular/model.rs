//! Self-describing JSON model files: the fitted classifier plus the
//! normalization statistics and feature mask it was trained behind.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    Classifier, ForestModel, LabeledDataset, LogRegModel, MlpModel, Result, SvmModel, TabularError,
};
use crate::geometry::{FeatureMask, NormalizationStats};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logreg,
    Forest,
    Svm,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Logreg,
        ModelKind::Forest,
        ModelKind::Svm,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Forest => "forest",
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "logreg" | "logistic" => Ok(ModelKind::Logreg),
            "forest" | "rf" => Ok(ModelKind::Forest),
            "svm" => Ok(ModelKind::Svm),
            "mlp" | "nn" => Ok(ModelKind::Mlp),
            _ => Err(format!(
                "unknown model `{s}` (expected logreg, forest, svm or mlp)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum TrainedModel {
    Logreg(LogRegModel),
    Forest(ForestModel),
    Svm(SvmModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Logreg(_) => ModelKind::Logreg,
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            TrainedModel::Logreg(m) => m,
            TrainedModel::Forest(m) => m,
            TrainedModel::Svm(m) => m,
            TrainedModel::Mlp(m) => m,
        }
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }

    fn predict_row(&self, x: &[f64]) -> usize {
        self.inner().predict_row(x)
    }
}

/// Applied to raw feature vectors before the classifier: z-score first,
/// then the mask.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub normalization: Option<NormalizationStats>,
    pub mask: Option<FeatureMask>,
}

impl Preprocessing {
    pub fn input_dim(&self) -> Option<usize> {
        self.normalization
            .as_ref()
            .map(NormalizationStats::dim)
            .or_else(|| self.mask.as_ref().map(|m| m.selected.len()))
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let geo = |e: crate::geometry::GeometryError| match e {
            crate::geometry::GeometryError::DimensionMismatch { expected, got } => {
                TabularError::DimensionMismatch { expected, got }
            }
            other => TabularError::InvalidDataset(other.to_string()),
        };
        let mut v = match &self.normalization {
            Some(n) => n.apply(raw).map_err(geo)?,
            None => raw.to_vec(),
        };
        if let Some(m) = &self.mask {
            v = m.apply(&v).map_err(geo)?;
        }
        Ok(v)
    }

    pub fn apply_dataset(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        let rows = (0..ds.n_samples())
            .map(|i| self.apply(&ds.row(i).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let d = rows.first().map_or(0, Vec::len);
        let features = Array2::from_shape_vec((rows.len(), d), rows.concat())
            .map_err(|e| TabularError::InvalidDataset(e.to_string()))?;
        LabeledDataset::new(
            features,
            ds.labels.clone(),
            ds.class_names.clone(),
            ds.subject_ids.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub task: String,
    pub class_names: Vec<String>,
    /// Names of the raw input columns, before the mask.
    pub feature_names: Vec<String>,
    pub preprocessing: Preprocessing,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(
        task: impl Into<String>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        preprocessing: Preprocessing,
        seed: Option<u64>,
        model: TrainedModel,
    ) -> Self {
        Self {
            version: MODEL_FILE_VERSION,
            task: task.into(),
            class_names,
            feature_names,
            preprocessing,
            seed,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self =
            serde_json::from_str(s).map_err(|e| TabularError::ModelFile(e.to_string()))?;
        if m.version != MODEL_FILE_VERSION {
            return Err(TabularError::ModelFile(format!(
                "unsupported version {} (expected {MODEL_FILE_VERSION})",
                m.version
            )));
        }
        if m.class_names.len() != m.model.n_classes() {
            return Err(TabularError::ModelFile(format!(
                "{} class names for a {}-class model",
                m.class_names.len(),
                m.model.n_classes()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        crate::fsutil::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| TabularError::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Predict from an unnormalized, unmasked feature vector.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<usize> {
        if raw.len() != self.feature_names.len() {
            return Err(TabularError::DimensionMismatch {
                expected: self.feature_names.len(),
                got: raw.len(),
            });
        }
        self.model.predict(&self.preprocessing.apply(raw)?)
    }
}
