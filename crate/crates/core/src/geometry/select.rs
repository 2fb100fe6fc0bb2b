use serde::{Deserialize, Serialize};

use super::features::{FEATURE_COUNT, FEATURE_NAMES};
use super::{GeometryError, Result};

/// The six-feature subset found most predictive on the original annotated
/// ear data.
pub const REFERENCE_SELECTION: [&str; 6] = [
    "obi_sba",
    "t_sa",
    "t_sba",
    "intno_obi",
    "intno_sba",
    "rect_area",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ThresholdRule {
    /// Keep features whose importance is at least the mean importance.
    MeanImportance,
    Fixed(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::MeanImportance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub selected: Vec<bool>,
    /// Importance cutoff that produced the mask; `None` for masks built by
    /// feature name.
    pub threshold: Option<f64>,
}

impl FeatureMask {
    pub fn all(dim: usize) -> Self {
        Self {
            selected: vec![true; dim],
            threshold: None,
        }
    }

    pub fn from_names(names: &[&str]) -> Result<Self> {
        let mut selected = vec![false; FEATURE_COUNT];
        for n in names {
            let i = FEATURE_NAMES
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| GeometryError::UnknownFeature(n.to_string()))?;
            selected[i] = true;
        }
        if !selected.iter().any(|s| *s) {
            return Err(GeometryError::EmptySelection(f64::NAN));
        }
        Ok(Self {
            selected,
            threshold: None,
        })
    }

    pub fn reference() -> Self {
        Self::from_names(&REFERENCE_SELECTION).expect("reference names are valid")
    }

    pub fn indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.then_some(i))
            .collect()
    }

    pub fn selected_names(&self) -> Vec<&'static str> {
        self.indices()
            .into_iter()
            .filter_map(|i| FEATURE_NAMES.get(i).copied())
            .collect()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.selected.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.selected.len(),
                got: v.len(),
            });
        }
        Ok(v.iter()
            .zip(&self.selected)
            .filter_map(|(x, s)| s.then_some(*x))
            .collect())
    }
}

/// Keep features with `importance >= threshold`.
pub fn select_features(importances: &[f64], rule: ThresholdRule) -> Result<FeatureMask> {
    if importances.is_empty() {
        return Err(GeometryError::InvalidImportances("empty".into()));
    }
    if let Some(bad) = importances.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(GeometryError::InvalidImportances(format!(
            "importance {bad} is not a non-negative number"
        )));
    }
    let sum: f64 = importances.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(GeometryError::InvalidImportances(format!(
            "importances sum to {sum}, expected 1"
        )));
    }
    let threshold = match rule {
        ThresholdRule::MeanImportance => sum / importances.len() as f64,
        ThresholdRule::Fixed(t) => t,
    };
    let selected: Vec<bool> = importances.iter().map(|v| *v >= threshold).collect();
    if !selected.iter().any(|s| *s) {
        return Err(GeometryError::EmptySelection(threshold));
    }
    Ok(FeatureMask {
        selected,
        threshold: Some(threshold),
    })
}
