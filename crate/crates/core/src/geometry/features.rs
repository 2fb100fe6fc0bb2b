use serde::{Deserialize, Serialize};

use super::landmarks::{EarLandmarks, Landmark, Point};
use super::polygon::{is_simple_polygon, shoelace_area};
use super::{GeometryError, Result};

pub const FEATURE_COUNT: usize = 16;

/// Column names, in feature-vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "obs_obi",
    "sa_sba",
    "sa_pa",
    "pa_sba",
    "obi_sba",
    "obi_pa",
    "t_obs",
    "t_sa",
    "t_pa",
    "t_sba",
    "t_obi",
    "pra_pa",
    "intno_obi",
    "intno_sba",
    "rect_area",
    "poly_area",
];

/// Landmark pairs for the 14 distance features, in vector order.
pub const DISTANCE_PAIRS: [(Landmark, Landmark); 14] = [
    (Landmark::Obs, Landmark::Obi),
    (Landmark::Sa, Landmark::Sba),
    (Landmark::Sa, Landmark::Pa),
    (Landmark::Pa, Landmark::Sba),
    (Landmark::Obi, Landmark::Sba),
    (Landmark::Obi, Landmark::Pa),
    (Landmark::T, Landmark::Obs),
    (Landmark::T, Landmark::Sa),
    (Landmark::T, Landmark::Pa),
    (Landmark::T, Landmark::Sba),
    (Landmark::T, Landmark::Obi),
    (Landmark::Pra, Landmark::Pa),
    (Landmark::Intno, Landmark::Obi),
    (Landmark::Intno, Landmark::Sba),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricFeatureVector(pub [f64; FEATURE_COUNT]);

impl GeometricFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }

    pub fn rect_area(&self) -> f64 {
        self.0[14]
    }

    pub fn poly_area(&self) -> f64 {
        self.0[15]
    }
}

impl TryFrom<&[f64]> for GeometricFeatureVector {
    type Error = GeometryError;

    fn try_from(v: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_COUNT] =
            v.try_into().map_err(|_| GeometryError::DimensionMismatch {
                expected: FEATURE_COUNT,
                got: v.len(),
            })?;
        Ok(Self(arr))
    }
}

/// A Table-I distance that came out exactly zero under lenient extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroDistance {
    pub feature: usize,
    pub pair: (Landmark, Landmark),
}

/// The 14 pairwise Euclidean distances, without any invariant checks.
pub fn distances(lm: &EarLandmarks) -> [f64; 14] {
    DISTANCE_PAIRS.map(|(a, b)| lm.get(a).distance(lm.get(b)))
}

/// Axis-aligned ear rectangle: front edge at the outermost of Obs/Obi, top at
/// Sa, rear at Pa, bottom at Sba.
pub fn rectangle_area(lm: &EarLandmarks) -> Result<f64> {
    let lm = lm.canonicalize(None);
    let width = lm.pa.x - lm.obs.x.min(lm.obi.x);
    let height = lm.sba.y - lm.sa.y;
    if !(width > 0.0) || !(height > 0.0) {
        return Err(GeometryError::DegenerateLandmarks(format!(
            "ear rectangle has width {width} and height {height}"
        )));
    }
    Ok(width * height)
}

/// Area of the hexagon Obs → Sa → Pa → Sba → Obi → T.
pub fn polygon_area(lm: &EarLandmarks) -> Result<f64> {
    let hexagon: [Point; 6] = [lm.obs, lm.sa, lm.pa, lm.sba, lm.obi, lm.t];
    if !is_simple_polygon(&hexagon) {
        return Err(GeometryError::SelfIntersectingPolygon);
    }
    let area = shoelace_area(&hexagon);
    if !(area > 0.0) {
        return Err(GeometryError::DegenerateLandmarks(
            "ear polygon has zero area".into(),
        ));
    }
    Ok(area)
}

fn check_basic(lm: &EarLandmarks) -> Result<()> {
    for l in Landmark::ALL {
        let p = lm.get(l);
        if !p.x.is_finite() || !p.y.is_finite() || p.x < 0.0 || p.y < 0.0 {
            return Err(GeometryError::InvalidLandmark {
                field: l.name().into(),
                message: format!("({}, {}) is not a finite non-negative pixel", p.x, p.y),
            });
        }
    }
    if lm.sa == lm.sba || lm.sa.y >= lm.sba.y {
        return Err(GeometryError::DegenerateLandmarks(
            "superaurale must lie strictly above subaurale".into(),
        ));
    }
    Ok(())
}

fn assemble(lm: &EarLandmarks) -> Result<GeometricFeatureVector> {
    let lm = lm.canonicalize(None);
    let d = distances(&lm);
    let mut out = [0.0; FEATURE_COUNT];
    out[..14].copy_from_slice(&d);
    out[14] = rectangle_area(&lm)?;
    out[15] = polygon_area(&lm)?;
    Ok(GeometricFeatureVector(out))
}

/// All 16 features. Any two coincident landmarks are an error.
pub fn extract_features(lm: &EarLandmarks) -> Result<GeometricFeatureVector> {
    check_basic(lm)?;
    let pts = lm.points();
    for (i, a) in pts.iter().enumerate() {
        for (j, b) in pts.iter().enumerate().skip(i + 1) {
            if a == b {
                return Err(GeometryError::DegenerateLandmarks(format!(
                    "`{}` and `{}` coincide",
                    Landmark::ALL[i].name(),
                    Landmark::ALL[j].name()
                )));
            }
        }
    }
    assemble(lm)
}

/// Like [`extract_features`] but tolerates coincident landmarks, returning
/// the zero-length distances as warnings. Coincident Sa/Sba is still an
/// error because the ear height would vanish.
pub fn extract_features_lenient(
    lm: &EarLandmarks,
) -> Result<(GeometricFeatureVector, Vec<ZeroDistance>)> {
    check_basic(lm)?;
    let v = assemble(lm)?;
    let warnings = DISTANCE_PAIRS
        .iter()
        .enumerate()
        .filter(|(i, _)| v.0[*i] == 0.0)
        .map(|(feature, &pair)| ZeroDistance { feature, pair })
        .collect();
    Ok((v, warnings))
}
