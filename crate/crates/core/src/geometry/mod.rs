//! Geometric ear features computed from eight anthropometric landmarks.
//!
//! The pipeline is: [`EarLandmarks`] → [`extract_features`] (14 distances plus
//! two areas) → [`fit_normalizer`] / [`NormalizationStats::apply`] (z-scoring
//! with training-set statistics) → [`select_features`] (importance threshold).
//!
//! All coordinates are image pixels with `y` increasing downward. Right-ear
//! landmark sets are mirrored to the left-ear convention before any feature
//! is computed, so "front" (the face junction, Obs/Obi) is always on the left
//! and the postaurale on the right.

mod features;
mod io;
mod landmarks;
mod normalize;
mod polygon;
mod select;

pub use features::{
    distances, extract_features, extract_features_lenient, polygon_area, rectangle_area,
    GeometricFeatureVector, ZeroDistance, DISTANCE_PAIRS, FEATURE_COUNT, FEATURE_NAMES,
};
pub use io::{read_feature_csv, write_feature_csv, FeatureRow, LandmarkCoords, LandmarkFile};
pub use landmarks::{EarLandmarks, Landmark, Point, Side, Violation};
pub use normalize::{apply_normalizer, fit_normalizer, NormalizationStats};
pub use polygon::{is_simple_polygon, shoelace_area};
pub use select::{select_features, FeatureMask, ThresholdRule, REFERENCE_SELECTION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid landmark `{field}`: {message}")]
    InvalidLandmark { field: String, message: String },
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),
    #[error("hexagon Obs-Sa-Pa-Sba-Obi-T is self-intersecting")]
    SelfIntersectingPolygon,
    #[error("feature column {0} is constant on the training set")]
    ConstantFeature(usize),
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid importances: {0}")]
    InvalidImportances(String),
    #[error("no feature passes the selection threshold {0}")]
    EmptySelection(f64),
    #[error("unknown feature name `{0}`")]
    UnknownFeature(String),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
