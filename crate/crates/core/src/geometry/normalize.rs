use serde::{Deserialize, Serialize};

use super::features::GeometricFeatureVector;
use super::{GeometryError, Result};

/// Per-column z-score statistics fitted on a training matrix.
///
/// `std` is the population (divide-by-n) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fitted_on: usize,
}

/// Fit column means and population standard deviations (two-pass).
pub fn fit_normalizer<R: AsRef<[f64]>>(rows: &[R]) -> Result<NormalizationStats> {
    let n = rows.len();
    if n < 2 {
        return Err(GeometryError::TooFewRows(n));
    }
    let d = rows[0].as_ref().len();
    let mut mean = vec![0.0; d];
    for r in rows {
        let r = r.as_ref();
        if r.len() != d {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                got: r.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            let dx = x - m;
            *v += dx * dx;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    for (i, (s, m)) in std.iter().zip(&mean).enumerate() {
        // a constant column can leave a few ulps of spread after the mean
        // division; anything at that level is still constant
        if !(*s > 8.0 * f64::EPSILON * m.abs()) {
            return Err(GeometryError::ConstantFeature(i));
        }
    }
    Ok(NormalizationStats {
        mean,
        std,
        fitted_on: n,
    })
}

impl NormalizationStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn apply_rows<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r.as_ref())).collect()
    }
}

/// z-score a full 16-feature vector with training statistics.
pub fn apply_normalizer(
    v: &GeometricFeatureVector,
    stats: &NormalizationStats,
) -> Result<GeometricFeatureVector> {
    GeometricFeatureVector::try_from(stats.apply(v.as_slice())?.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_column() {
        let rows = [[1.0], [2.0], [3.0]];
        let s = fit_normalizer(&rows).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z: Vec<f64> = rows.iter().map(|r| s.apply(r).unwrap()[0]).collect();
        assert!((z[0] + 1.224744871391589).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert!((z[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_are_constant() {
        let rows = vec![[0.1, 7.3]; 5];
        assert!(matches!(
            fit_normalizer(&rows),
            Err(GeometryError::ConstantFeature(0))
        ));
    }

    #[test]
    fn single_row_rejected() {
        assert!(matches!(
            fit_normalizer(&[[1.0, 2.0]]),
            Err(GeometryError::TooFewRows(1))
        ));
    }

    #[test]
    fn mean_maps_to_zero() {
        let rows: Vec<[f64; 16]> = (0..4)
            .map(|i| std::array::from_fn(|j| (i * 16 + j) as f64 * 1.5 + (j * j) as f64))
            .collect();
        let s = fit_normalizer(&rows).unwrap();
        let m = GeometricFeatureVector(s.mean.clone().try_into().unwrap());
        let z = apply_normalizer(&m, &s).unwrap();
        assert!(z.0.iter().all(|v| *v == 0.0));
    }

    /// Welford's streaming update, kept independent of the two-pass fit.
    fn welford(col: &[f64]) -> (f64, f64) {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for &x in col {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        (mean, (m2 / n).sqrt())
    }

    #[test]
    fn matches_streaming_oracle_on_random_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..16)
                    .map(|j| rng.random::<f64>() * (j + 1) as f64 * 40.0)
                    .collect()
            })
            .collect();
        let s = fit_normalizer(&rows).unwrap();
        for j in 0..16 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let (m, sd) = welford(&col);
            assert!((s.mean[j] - m).abs() < 1e-12 * m.abs().max(1.0), "mean {j}");
            assert!((s.std[j] - sd).abs() < 1e-12 * sd.max(1.0), "std {j}");
        }
    }

    #[test]
    fn refit_after_normalizing_is_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                (0..16)
                    .map(|_| 100.0 + rng.random::<f64>() * 900.0)
                    .collect()
            })
            .collect();
        let s = fit_normalizer(&rows).unwrap();
        let z = s.apply_rows(&rows).unwrap();
        let again = fit_normalizer(&z).unwrap();
        for j in 0..16 {
            assert!(again.mean[j].abs() < 1e-9);
            assert!((again.std[j] - 1.0).abs() < 1e-9);
        }
    }
}
