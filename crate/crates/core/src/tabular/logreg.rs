use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{Classifier, LabeledDataset, Result, TabularError};
use crate::numeric::{argmax, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Weight on `½‖W‖²`; biases are not penalized.
    pub l2_lambda: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1.0,
            max_iter: 20_000,
            tol: 1e-6,
        }
    }
}

/// Multinomial logistic regression: `p(k | x) = softmax(W x + b)_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// `k × d`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub l2_lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Summed cross-entropy plus `λ/2 ‖W‖²`, with its gradient.
pub fn logreg_objective(
    weights: &Array2<f64>,
    biases: &Array1<f64>,
    ds: &LabeledDataset,
    l2_lambda: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let logits = ds.features.dot(&weights.t()) + biases;
    let mut loss = 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let mut resid = logits;
    for (mut row, &y) in resid.axis_iter_mut(Axis(0)).zip(&ds.labels) {
        let z = row.to_vec();
        let lse = log_sum_exp(&z);
        loss += lse - z[y];
        row.mapv_inplace(|v| (v - lse).exp());
        row[y] -= 1.0;
    }
    let grad_w = resid.t().dot(&ds.features) + &(weights * l2_lambda);
    let grad_b = resid.sum_axis(Axis(0));
    (loss, grad_w, grad_b)
}

/// Full-batch gradient descent with Armijo backtracking, preconditioned by a
/// fixed diagonal bound on the Hessian (`¼Σx² + λ` per weight column, `¼n`
/// per bias). The trial step doubles after each accepted iteration because
/// the bound is loose once predictions saturate.
pub fn train_logreg(ds: &LabeledDataset, cfg: &LogRegConfig) -> Result<LogRegModel> {
    if !(cfg.l2_lambda >= 0.0) || !cfg.l2_lambda.is_finite() {
        return Err(TabularError::InvalidConfig(format!(
            "l2_lambda = {} must be finite and non-negative",
            cfg.l2_lambda
        )));
    }
    ds.require_two_classes()?;
    let (k, d) = (ds.n_classes(), ds.n_features());
    let n = ds.n_samples() as f64;
    let col_scale: Array1<f64> = ds
        .features
        .map(|v| v * v)
        .sum_axis(Axis(0))
        .mapv(|s| 1.0 / (0.25 * s + cfg.l2_lambda).max(1e-12));
    let bias_scale = 1.0 / (0.25 * n);

    let mut w = Array2::<f64>::zeros((k, d));
    let mut b = Array1::<f64>::zeros(k);
    let (mut f, mut gw, mut gb) = logreg_objective(&w, &b, ds, cfg.l2_lambda);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let gnorm = gw
            .iter()
            .chain(gb.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if gnorm < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let dw = &gw * &col_scale;
        let db = &gb * bias_scale;
        let decrease: f64 = (&gw * &dw).sum() + (&gb * &db).sum();
        step = (step * 2.0).min(1e8);
        loop {
            let w_new = &w - &(&dw * step);
            let b_new = &b - &(&db * step);
            let (f_new, gw_new, gb_new) = logreg_objective(&w_new, &b_new, ds, cfg.l2_lambda);
            if f_new <= f - 0.5 * step * decrease {
                w = w_new;
                b = b_new;
                f = f_new;
                gw = gw_new;
                gb = gb_new;
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
        if step < 1e-16 {
            // no further decrease is representable
            break;
        }
    }
    Ok(LogRegModel {
        weights: w,
        biases: b,
        l2_lambda: cfg.l2_lambda,
        iterations,
        converged,
    })
}

impl LogRegModel {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .outer_iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        crate::numeric::softmax_in_place(&mut z);
        z
    }
}

impl Classifier for LogRegModel {
    fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn predict_row(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}
