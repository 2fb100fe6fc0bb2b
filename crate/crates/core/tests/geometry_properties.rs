use earmetrics_core::geometry::{
    distances, extract_features, fit_normalizer, is_simple_polygon, polygon_area, shoelace_area,
    EarLandmarks, Point, Side,
};
use earmetrics_core::rng::stream;
use earmetrics_core::synthetic::LandmarkGenerator;
use proptest::prelude::*;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn random_left_ears(n: usize, seed: u64) -> Vec<EarLandmarks> {
    let gen = LandmarkGenerator {
        canvas: 400.0,
        ..Default::default()
    };
    let mut rng = stream(seed, 0);
    (0..n)
        .map(|_| {
            let s = 0.6 + rng.random::<f64>();
            gen.sample(&mut rng, s, Side::Left)
        })
        .collect()
}

/// Star-shaped hexagon around a random centre with random radii.
fn random_hexagon<R: Rng>(rng: &mut R) -> Vec<Point> {
    // one angle per sixth of the circle keeps every gap below π
    let sector = std::f64::consts::TAU / 6.0;
    let angles: Vec<f64> = (0..6)
        .map(|i| (i as f64 + rng.random::<f64>()) * sector)
        .collect();
    let (cx, cy) = (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0);
    angles
        .iter()
        .map(|a| {
            let r = 5.0 + rng.random::<f64>() * 100.0;
            Point::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn fan_area(v: &[Point]) -> f64 {
    let mut s = 0.0;
    for i in 1..v.len() - 1 {
        let (a, b, c) = (v[0], v[i], v[i + 1]);
        s += 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    }
    s.abs()
}

#[test]
fn shoelace_agrees_with_fan_triangulation() {
    let mut rng = stream(2024, 0);
    for _ in 0..100 {
        let hex = random_hexagon(&mut rng);
        assert!(is_simple_polygon(&hex));
        let (a, b) = (shoelace_area(&hex), fan_area(&hex));
        assert!(close(a, b, 1e-9), "{a} vs {b}");
    }
}

#[test]
fn features_are_translation_invariant() {
    let mut rng = stream(7, 1);
    for lm in random_left_ears(100, 7) {
        let (dx, dy) = (rng.random::<f64>() * 300.0, rng.random::<f64>() * 300.0);
        let moved = lm.map(|p| Point::new(p.x + dx, p.y + dy));
        let a = extract_features(&lm).unwrap();
        let b = extract_features(&moved).unwrap();
        for i in 0..16 {
            assert!(
                close(a.0[i], b.0[i], 1e-9),
                "feature {i}: {} {}",
                a.0[i],
                b.0[i]
            );
        }
    }
}

#[test]
fn distances_and_polygon_are_rotation_invariant() {
    let mut rng = stream(8, 1);
    for lm in random_left_ears(100, 8) {
        let theta = (rng.random::<f64>() - 0.5) * 0.6;
        let (s, c) = theta.sin_cos();
        let (cx, cy) = (200.0, 200.0);
        let rot = lm.map(|p| {
            let (x, y) = (p.x - cx, p.y - cy);
            Point::new(cx + c * x - s * y, cy + s * x + c * y)
        });
        let (d0, d1) = (distances(&lm), distances(&rot));
        for i in 0..14 {
            assert!(close(d0[i], d1[i], 1e-9), "distance {i}");
        }
        let (p0, p1) = (polygon_area(&lm).unwrap(), polygon_area(&rot).unwrap());
        assert!(close(p0, p1, 1e-9 * p0), "{p0} {p1}");
    }
}

#[test]
fn rectangle_area_is_not_rotation_invariant() {
    let lm = random_left_ears(1, 9).remove(0);
    let (s, c) = 0.3f64.sin_cos();
    let rot = lm.map(|p| {
        Point::new(
            200.0 + c * (p.x - 100.0) - s * (p.y - 100.0),
            200.0 + s * (p.x - 100.0) + c * (p.y - 100.0),
        )
    });
    let a = extract_features(&lm).unwrap().rect_area();
    let b = earmetrics_core::geometry::rectangle_area(&rot).unwrap();
    assert!((a - b).abs() > 1.0);
}

#[test]
fn features_scale_equivariantly() {
    let mut rng = stream(10, 1);
    for lm in random_left_ears(100, 10) {
        let k = 0.25 + rng.random::<f64>() * 4.0;
        let scaled = lm.map(|p| Point::new(k * p.x, k * p.y));
        let a = extract_features(&lm).unwrap();
        let b = extract_features(&scaled).unwrap();
        for i in 0..14 {
            assert!(close(b.0[i], k * a.0[i], 1e-9 * k * a.0[i]), "distance {i}");
        }
        for i in 14..16 {
            assert!(
                close(b.0[i], k * k * a.0[i], 1e-9 * k * k * a.0[i]),
                "area {i}"
            );
        }
    }
}

#[test]
fn rectangle_matches_direct_recomputation() {
    for lm in random_left_ears(100, 11) {
        let f = extract_features(&lm).unwrap();
        let width = lm.pa.x - lm.obs.x.min(lm.obi.x);
        let height = lm.sba.y - lm.sa.y;
        assert_eq!(f.rect_area(), width * height);
    }
}

#[test]
fn normalized_training_matrix_is_standard() {
    let rows: Vec<Vec<f64>> = random_left_ears(300, 12)
        .iter()
        .map(|lm| extract_features(lm).unwrap().0.to_vec())
        .collect();
    let stats = fit_normalizer(&rows).unwrap();
    let z = stats.apply_rows(&rows).unwrap();
    let refit = fit_normalizer(&z).unwrap();
    for j in 0..16 {
        assert!(refit.mean[j].abs() < 1e-9);
        assert!((refit.std[j] - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn hexagon_reversal_preserves_area(seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        let hex = random_hexagon(&mut rng);
        let mut rev = hex.clone();
        rev.reverse();
        prop_assert!(close(shoelace_area(&hex), shoelace_area(&rev), 1e-9));
    }
}
