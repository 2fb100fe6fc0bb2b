//! Procedural data for benchmarks and tests: landmark sets whose scale is
//! driven by gender, and ear-silhouette images.

use rand::Rng;

use crate::augment::ImageBuffer;
use crate::dataset::{Gender, Task};
use crate::geometry::{
    extract_features, fit_normalizer, polygon_area, EarLandmarks, NormalizationStats, Point, Side,
};
use crate::rng::{normal, stream};
use crate::tabular::LabeledDataset;

/// Left-ear landmark template in ear-height units, listed in
/// [`crate::geometry::Landmark::ALL`] order.
pub const TEMPLATE: [(f64, f64); 8] = [
    (0.10, 0.18), // obs
    (0.14, 0.80), // obi
    (0.20, 0.50), // t
    (0.42, 0.00), // sa
    (0.34, 1.00), // sba
    (0.72, 0.42), // pa
    (0.06, 0.26), // pra
    (0.30, 0.66), // intno
];

#[derive(Debug, Clone)]
pub struct LandmarkGenerator {
    /// Ear height in pixels at scale 1.
    pub base_height: f64,
    /// Per-coordinate Gaussian jitter, in ear-height units.
    pub shape_jitter: f64,
    /// Canvas used for placement and right-ear mirroring.
    pub canvas: f64,
}

impl Default for LandmarkGenerator {
    fn default() -> Self {
        Self {
            base_height: 60.0,
            shape_jitter: 0.02,
            canvas: 256.0,
        }
    }
}

impl LandmarkGenerator {
    /// One valid landmark set at the given scale factor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64, side: Side) -> EarLandmarks {
        let h = self.base_height * scale;
        loop {
            let room = (self.canvas - 1.2 * h).max(1.0);
            let ox = 0.1 * h + rng.random::<f64>() * room;
            let oy = 0.1 * h + rng.random::<f64>() * room;
            let pts = TEMPLATE.map(|(x, y)| {
                Point::new(
                    ox + h * (x + self.shape_jitter * normal(rng)),
                    oy + h * (y + self.shape_jitter * normal(rng)),
                )
            });
            let mut lm = EarLandmarks::from_points(pts, Side::Left);
            if side == Side::Right {
                lm = lm.map(|p| Point::new(self.canvas - p.x, p.y));
                lm.side = Side::Right;
            }
            if lm.violations().is_empty() && polygon_area(&lm.canonicalize(None)).is_ok() {
                return lm;
            }
        }
    }
}

/// Log-scale shift between the two genders for a given Bayes accuracy when
/// each gender's log-scale is normal with standard deviation `sigma` and the
/// classes are balanced: accuracy = Φ(shift / 2σ).
pub fn log_scale_shift(bayes_accuracy: f64, sigma: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let z = Normal::standard().inverse_cdf(bayes_accuracy);
    2.0 * sigma * z
}

/// Gender-labelled landmark sets in which males have larger ears.
///
/// Log-scale is `±shift/2 + N(0, sigma²)`, with `shift` chosen for the
/// requested Bayes accuracy on the scale alone. Sides are random.
pub fn gender_scaled_landmarks(
    n_female: usize,
    n_male: usize,
    bayes_accuracy: f64,
    seed: u64,
) -> Vec<(EarLandmarks, Gender)> {
    const SIGMA: f64 = 0.05;
    let shift = log_scale_shift(bayes_accuracy, SIGMA);
    let gen = LandmarkGenerator::default();
    let mut rng = stream(seed, 0);
    let mut out = Vec::with_capacity(n_female + n_male);
    let genders = std::iter::repeat(Gender::Female)
        .take(n_female)
        .chain(std::iter::repeat(Gender::Male).take(n_male));
    for g in genders {
        let centre = match g {
            Gender::Female => -shift / 2.0,
            Gender::Male => shift / 2.0,
        };
        let scale = (centre + SIGMA * normal(&mut rng)).exp();
        let side = if rng.random::<bool>() {
            Side::Left
        } else {
            Side::Right
        };
        out.push((gen.sample(&mut rng, scale, side), g));
    }
    out
}

/// Train/test sets for the gender benchmark: 150 female and 188 male
/// subjects, 20% of each gender held out (270/68), all 16 features
/// z-scored with statistics fitted on the training rows.
pub fn gender_benchmark(bayes_accuracy: f64, seed: u64) -> GenderBenchmark {
    use rand::seq::SliceRandom;

    let data = gender_scaled_landmarks(150, 188, bayes_accuracy, seed);
    let mut rng = stream(seed, 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for g in [Gender::Female, Gender::Male] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].1 == g).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * 0.2).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    let rows = |ix: &[usize]| -> Vec<Vec<f64>> {
        ix.iter()
            .map(|&i| {
                extract_features(&data[i].0)
                    .expect("generated landmarks are valid")
                    .as_slice()
                    .to_vec()
            })
            .collect()
    };
    let (train_raw, test_raw) = (rows(&train), rows(&test));
    let stats = fit_normalizer(&train_raw).expect("non-constant features");
    let build = |ix: &[usize], raw: &[Vec<f64>]| {
        let z = stats.apply_rows(raw).expect("dimension");
        let labels = ix.iter().map(|&i| data[i].1 as usize).collect();
        let mut ds = LabeledDataset::from_rows(&z, labels, 2).expect("valid dataset");
        ds.class_names = Task::Gender.class_names();
        ds.subject_ids = ix.iter().map(|i| format!("g{i:03}")).collect();
        ds
    };
    GenderBenchmark {
        train: build(&train, &train_raw),
        test: build(&test, &test_raw),
        normalization: stats,
    }
}

#[derive(Debug, Clone)]
pub struct GenderBenchmark {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub normalization: NormalizationStats,
}

/// Shape of a rendered ear silhouette.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarShape {
    /// Ear height in pixels.
    pub height: f64,
    /// Width of the upper auricle relative to the height.
    pub aspect: f64,
    /// Lobe radius relative to the height.
    pub lobe: f64,
    /// Concha size relative to the auricle.
    pub concha: f64,
    /// In-plane rotation, radians.
    pub rotation: f64,
}

/// Per-image viewing conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisance {
    /// Ear centre offset from the canvas centre, pixels.
    pub shift: (f64, f64),
    pub skin: f64,
    pub background: f64,
    pub noise_sd: f64,
}

impl EarShape {
    fn random<R: Rng + ?Sized>(rng: &mut R, height: f64) -> Self {
        Self {
            height,
            aspect: rng.random_range(0.50..0.70),
            lobe: rng.random_range(0.16..0.24),
            concha: rng.random_range(0.40..0.60),
            rotation: 0.0,
        }
    }
}

impl Nuisance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_shift: f64) -> Self {
        let skin = rng.random_range(150.0..230.0);
        Self {
            shift: (
                rng.random_range(-max_shift..=max_shift),
                rng.random_range(-max_shift..=max_shift),
            ),
            skin,
            background: skin - rng.random_range(50.0..110.0),
            noise_sd: rng.random_range(2.0..10.0),
        }
    }
}

/// Soft membership of a point in an axis-aligned ellipse, with a roughly
/// one-pixel transition band.
fn ellipse_cover(u: f64, v: f64, cu: f64, cv: f64, ru: f64, rv: f64) -> f64 {
    let r = (((u - cu) / ru).powi(2) + ((v - cv) / rv).powi(2)).sqrt();
    (0.5 + (1.0 - r) * ru.min(rv)).clamp(0.0, 1.0)
}

/// Grayscale `size × size` ear silhouette: an elliptic auricle with a
/// brighter helix rim, a lobe, and a dark concha, on a flat background with
/// Gaussian pixel noise.
pub fn render_ear<R: Rng + ?Sized>(
    shape: &EarShape,
    view: &Nuisance,
    size: usize,
    rng: &mut R,
) -> ImageBuffer {
    let h = shape.height;
    let (sin, cos) = shape.rotation.sin_cos();
    let c = size as f64 / 2.0;
    let (ax_u, ax_v) = (shape.aspect * h / 2.0, 0.36 * h);
    let lobe_r = shape.lobe * h;
    ImageBuffer::from_fn(size, size, 1, |x, y, _| {
        let (dx, dy) = (
            x as f64 + 0.5 - c - view.shift.0,
            y as f64 + 0.5 - c - view.shift.1,
        );
        // into the ear frame
        let u = cos * dx + sin * dy;
        let v = -sin * dx + cos * dy;
        let auricle = ellipse_cover(u, v, 0.0, -0.12 * h, ax_u, ax_v);
        let lobe = ellipse_cover(u, v, -0.12 * h, 0.30 * h, lobe_r, 1.1 * lobe_r);
        let outer = auricle.max(lobe);
        let inner = ellipse_cover(u, v, 0.0, -0.12 * h, 0.8 * ax_u, 0.8 * ax_v);
        let concha = ellipse_cover(
            u,
            v,
            -0.08 * h,
            0.02 * h,
            shape.concha * 0.6 * ax_u,
            shape.concha * 0.6 * ax_v,
        );
        let ear = view.skin * (1.0 - 0.15 * inner - 0.35 * concha);
        let value = view.background + outer * (ear - view.background) + view.noise_sd * normal(rng);
        value.round().clamp(0.0, 255.0) as u8
    })
    .expect("non-empty canvas")
}

/// Settings for the procedural transfer-learning benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteConfig {
    pub size: usize,
    pub min_height: f64,
    pub max_height: f64,
    /// Ear-centre jitter in pixels.
    pub max_shift: f64,
    pub max_rotation: f64,
}

impl Default for SilhouetteConfig {
    fn default() -> Self {
        Self {
            size: 64,
            min_height: 20.0,
            max_height: 44.0,
            max_shift: 3.0,
            max_rotation: 0.25,
        }
    }
}

/// Source-domain set: `n` images of `subjects` individuals. Each
/// individual has a fixed ear shape (size included); every image varies
/// scale by ±4%, rotation, position, skin and background tone, and noise.
pub fn silhouette_domain_set(
    cfg: &SilhouetteConfig,
    subjects: usize,
    n: usize,
    seed: u64,
) -> (Vec<ImageBuffer>, Vec<usize>) {
    let mut rng = stream(seed, 10);
    let ids: Vec<EarShape> = (0..subjects)
        .map(|_| {
            let h = rng.random_range(cfg.min_height..cfg.max_height);
            EarShape::random(&mut rng, h)
        })
        .collect();
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % subjects;
        let mut s = ids[k];
        s.height *= rng.random_range(0.96..1.04);
        s.rotation = rng.random_range(-cfg.max_rotation..=cfg.max_rotation);
        let view = Nuisance::random(&mut rng, cfg.max_shift);
        images.push(render_ear(&s, &view, cfg.size, &mut rng));
        labels.push(k);
    }
    (images, labels)
}

/// Target set: `n` images, each with a freshly drawn ear shape whose height
/// falls in one of `classes` equal-width bins between the configured
/// bounds; the bin is the label.
pub fn silhouette_size_set(
    cfg: &SilhouetteConfig,
    classes: usize,
    n: usize,
    seed: u64,
) -> (Vec<ImageBuffer>, Vec<usize>) {
    let mut rng = stream(seed, 20);
    let width = (cfg.max_height - cfg.min_height) / classes as f64;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        let lo = cfg.min_height + width * k as f64;
        let h = rng.random_range(lo..lo + width);
        let mut s = EarShape::random(&mut rng, h);
        s.rotation = rng.random_range(-cfg.max_rotation..=cfg.max_rotation);
        let view = Nuisance::random(&mut rng, cfg.max_shift);
        images.push(render_ear(&s, &view, cfg.size, &mut rng));
        labels.push(k);
    }
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_valid() {
        let pts = TEMPLATE.map(|(x, y)| Point::new(10.0 + 50.0 * x, 10.0 + 50.0 * y));
        let lm = EarLandmarks::from_points(pts, Side::Left);
        assert!(lm.violations().is_empty());
        extract_features(&lm).unwrap();
    }

    #[test]
    fn shift_for_97_percent() {
        let s = log_scale_shift(0.97, 0.05);
        assert!((s - 2.0 * 0.05 * 1.880_793_6).abs() < 1e-6, "{s}");
    }

    #[test]
    fn generated_sets_extract_cleanly() {
        let data = gender_scaled_landmarks(20, 20, 0.97, 1);
        assert_eq!(data.len(), 40);
        for (lm, _) in &data {
            extract_features(lm).unwrap();
        }
        assert!(data.iter().any(|(l, _)| l.side == Side::Right));
    }
}
