use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{GeometricFeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use super::landmarks::{EarLandmarks, Point, Side};
use super::{GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkCoords {
    pub obs: [f64; 2],
    pub obi: [f64; 2],
    pub t: [f64; 2],
    pub sa: [f64; 2],
    pub sba: [f64; 2],
    pub pa: [f64; 2],
    pub pra: [f64; 2],
    pub intno: [f64; 2],
}

/// One annotated image: `{"image", "side", "landmarks": {"obs": [x, y], ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkFile {
    pub image: String,
    pub side: Side,
    pub landmarks: LandmarkCoords,
}

impl LandmarkFile {
    pub fn from_landmarks(image: impl Into<String>, lm: &EarLandmarks) -> Self {
        let c = |p: Point| [p.x, p.y];
        Self {
            image: image.into(),
            side: lm.side,
            landmarks: LandmarkCoords {
                obs: c(lm.obs),
                obi: c(lm.obi),
                t: c(lm.t),
                sa: c(lm.sa),
                sba: c(lm.sba),
                pa: c(lm.pa),
                pra: c(lm.pra),
                intno: c(lm.intno),
            },
        }
    }

    pub fn to_landmarks(&self) -> EarLandmarks {
        let l = &self.landmarks;
        EarLandmarks::from_points(
            [l.obs, l.obi, l.t, l.sa, l.sba, l.pa, l.pra, l.intno].map(Point::from),
            self.side,
        )
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landmark file serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|source| GeometryError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    pub features: GeometricFeatureVector,
}

/// CSV with a `subject_id` column followed by the 16 feature columns.
pub fn write_feature_csv<W: Write>(out: W, rows: &[FeatureRow]) -> Result<()> {
    let csv_err = |e: csv::Error| GeometryError::Csv {
        path: "<output>".into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.subject_id.clone()];
        rec.extend(row.features.0.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R, source_name: &str) -> Result<Vec<FeatureRow>> {
    let err = |message: String| GeometryError::Csv {
        path: source_name.to_string(),
        message,
    };
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(format!("missing column `{name}`")))
    };
    let id_col = col("subject_id")?;
    let feature_cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(format!("line {line}: {e}")))?;
        let mut features = [0.0f64; FEATURE_COUNT];
        for (slot, &c) in features.iter_mut().zip(&feature_cols) {
            let cell = rec.get(c).unwrap_or("");
            *slot = cell
                .trim()
                .parse()
                .map_err(|_| err(format!("line {line}: `{cell}` is not a number")))?;
            if !slot.is_finite() {
                return Err(err(format!("line {line}: non-finite value")));
            }
        }
        rows.push(FeatureRow {
            subject_id: rec.get(id_col).unwrap_or("").to_string(),
            features: GeometricFeatureVector(features),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "image": "ears/s001.png",
        "side": "right",
        "landmarks": {
            "obs": [160.0, 30.0], "obi": [156.0, 95.0], "t": [148.0, 62.0],
            "sa": [130.0, 10.0], "sba": [138.0, 120.0], "pa": [95.0, 55.0],
            "pra": [162.0, 40.0], "intno": [142.5, 80.25]
        }
    }"#;

    #[test]
    fn parses_landmark_file() {
        let f = LandmarkFile::from_json(SAMPLE).unwrap();
        assert_eq!(f.side, Side::Right);
        let lm = f.to_landmarks();
        assert_eq!(lm.intno, Point::new(142.5, 80.25));
        assert!(lm.violations().is_empty());
        let back = LandmarkFile::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_unknown_and_missing_fields() {
        let extra = SAMPLE.replace("\"t\":", "\"ear\": [1.0, 1.0], \"t\":");
        assert!(LandmarkFile::from_json(&extra).is_err());
        let missing = SAMPLE.replace("\"pra\": [162.0, 40.0],", "");
        assert!(LandmarkFile::from_json(&missing).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let rows = vec![
            FeatureRow {
                subject_id: "s1".into(),
                features: GeometricFeatureVector(std::array::from_fn(|i| i as f64 / 3.0)),
            },
            FeatureRow {
                subject_id: "s2".into(),
                features: GeometricFeatureVector([1e-7; 16]),
            },
        ];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("subject_id,obs_obi,sa_sba,"));
        let back = read_feature_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn bad_cell_reports_line() {
        let mut text = String::from("subject_id");
        for n in FEATURE_NAMES {
            text.push(',');
            text.push_str(n);
        }
        text.push_str("\na");
        text.push_str(&",1".repeat(15));
        text.push_str(",x\n");
        let e = read_feature_csv(text.as_bytes(), "f.csv").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
