use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};

/// A pixel position. `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// The eight anthropometric ear landmarks, in annotation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Landmark {
    /// Otobasion superius: upper limit of the ear-face junction.
    Obs,
    /// Otobasion inferius: lower limit of the ear-face junction.
    Obi,
    /// Tragus.
    T,
    /// Superaurale: highest point of the auricle.
    Sa,
    /// Subaurale: lowest point of the auricle.
    Sba,
    /// Postaurale: outermost rear point of the ear curve.
    Pa,
    /// Preaurale: front side at helix-attachment level.
    Pra,
    /// Intertragic notch.
    Intno,
}

impl Landmark {
    pub const ALL: [Landmark; 8] = [
        Landmark::Obs,
        Landmark::Obi,
        Landmark::T,
        Landmark::Sa,
        Landmark::Sba,
        Landmark::Pa,
        Landmark::Pra,
        Landmark::Intno,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Landmark::Obs => "obs",
            Landmark::Obi => "obi",
            Landmark::T => "t",
            Landmark::Sa => "sa",
            Landmark::Sba => "sba",
            Landmark::Pa => "pa",
            Landmark::Pra => "pra",
            Landmark::Intno => "intno",
        }
    }

    pub fn from_name(name: &str) -> Option<Landmark> {
        Landmark::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// A field-level invariant violation, suitable for reporting back to an
/// annotation client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarLandmarks {
    pub obs: Point,
    pub obi: Point,
    pub t: Point,
    pub sa: Point,
    pub sba: Point,
    pub pa: Point,
    pub pra: Point,
    pub intno: Point,
    pub side: Side,
}

impl EarLandmarks {
    /// Build from points listed in [`Landmark::ALL`] order.
    pub fn from_points(points: [Point; 8], side: Side) -> Self {
        let [obs, obi, t, sa, sba, pa, pra, intno] = points;
        Self {
            obs,
            obi,
            t,
            sa,
            sba,
            pa,
            pra,
            intno,
            side,
        }
    }

    pub fn points(&self) -> [Point; 8] {
        [
            self.obs, self.obi, self.t, self.sa, self.sba, self.pa, self.pra, self.intno,
        ]
    }

    pub fn get(&self, landmark: Landmark) -> Point {
        match landmark {
            Landmark::Obs => self.obs,
            Landmark::Obi => self.obi,
            Landmark::T => self.t,
            Landmark::Sa => self.sa,
            Landmark::Sba => self.sba,
            Landmark::Pa => self.pa,
            Landmark::Pra => self.pra,
            Landmark::Intno => self.intno,
        }
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        let p = self.points().map(f);
        Self::from_points(p, self.side)
    }

    /// Mirror a right-ear set into the left-ear convention.
    ///
    /// `x → image_width − x`. When the image width is unknown the largest
    /// landmark `x` is used instead; every feature is translation invariant,
    /// so the choice of axis only matters for keeping coordinates
    /// non-negative.
    pub fn canonicalize(&self, image_width: Option<f64>) -> Self {
        match self.side {
            Side::Left => *self,
            Side::Right => {
                let width = image_width
                    .unwrap_or_else(|| self.points().iter().map(|p| p.x).fold(f64::MIN, f64::max));
                let mut out = self.map(|p| Point::new(width - p.x, p.y));
                out.side = Side::Left;
                out
            }
        }
    }

    /// Every invariant violation of this set, checked in the canonical
    /// (left-ear) frame. Empty means valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for l in Landmark::ALL {
            let p = self.get(l);
            if !p.x.is_finite() || !p.y.is_finite() {
                out.push(Violation::new(l.name(), "coordinates must be finite"));
            } else if p.x < 0.0 || p.y < 0.0 {
                out.push(Violation::new(l.name(), "coordinates must be non-negative"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        for (i, a) in Landmark::ALL.iter().enumerate() {
            for b in &Landmark::ALL[i + 1..] {
                if self.get(*a) == self.get(*b) {
                    out.push(Violation::new(
                        b.name(),
                        format!("coincides with `{}`", a.name()),
                    ));
                }
            }
        }
        if self.sa.y >= self.sba.y {
            out.push(Violation::new(
                "sa",
                "superaurale must lie above subaurale (sa.y < sba.y)",
            ));
        }
        let canon = self.canonicalize(None);
        if canon.pa.x < canon.obs.x.max(canon.obi.x) {
            out.push(Violation::new(
                "pa",
                "postaurale must be the outermost rear point (x beyond obs and obi)",
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(GeometryError::InvalidLandmark {
                field: v.field,
                message: v.message,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> EarLandmarks {
        EarLandmarks {
            obs: Point::new(40.0, 30.0),
            obi: Point::new(44.0, 95.0),
            t: Point::new(52.0, 62.0),
            sa: Point::new(70.0, 10.0),
            sba: Point::new(62.0, 120.0),
            pa: Point::new(105.0, 55.0),
            pra: Point::new(38.0, 40.0),
            intno: Point::new(58.0, 80.0),
            side: Side::Left,
        }
    }

    #[test]
    fn valid_sample_has_no_violations() {
        assert!(sample().violations().is_empty());
    }

    #[test]
    fn sa_below_sba_is_reported() {
        let mut lm = sample();
        lm.sa = Point::new(70.0, 130.0);
        let v = lm.violations();
        assert!(v.iter().any(|v| v.field == "sa"), "{v:?}");
    }

    #[test]
    fn coincident_points_are_reported() {
        let mut lm = sample();
        lm.pra = lm.t;
        assert!(lm.violations().iter().any(|v| v.field == "pra"));
    }

    #[test]
    fn negative_coordinates_rejected() {
        let mut lm = sample();
        lm.obs.x = -1.0;
        assert!(matches!(
            lm.validate(),
            Err(GeometryError::InvalidLandmark { field, .. }) if field == "obs"
        ));
    }

    #[test]
    fn right_ear_is_mirrored() {
        let left = sample();
        let right = left.map(|p| Point::new(200.0 - p.x, p.y));
        let right = EarLandmarks {
            side: Side::Right,
            ..right
        };
        assert!(right.violations().is_empty());
        let canon = right.canonicalize(Some(200.0));
        assert_eq!(canon.side, Side::Left);
        for (a, b) in canon.points().iter().zip(left.points()) {
            assert!((a.x - b.x).abs() < 1e-12 && a.y == b.y);
        }
    }

    #[test]
    fn landmark_names_round_trip() {
        for l in Landmark::ALL {
            assert_eq!(Landmark::from_name(l.name()), Some(l));
        }
        assert_eq!(Landmark::from_name("ear"), None);
    }
}
