//! Multilayer perceptron with exactly three hidden layers and a softmax
//! output, trained by mini-batch SGD on mean cross-entropy.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, LabeledDataset, Result, TabularError};
use crate::numeric::{argmax, log_sum_exp};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: [usize; 3],
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: [32, 32, 32],
            activation: Activation::Tanh,
            learning_rate: 0.05,
            epochs: 500,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// `out × in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Three hidden layers followed by the output layer.
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
    pub config: MlpConfig,
}

impl MlpModel {
    /// Xavier-uniform weights, zero biases.
    pub fn new(n_features: usize, n_classes: usize, cfg: &MlpConfig) -> Result<Self> {
        if cfg.hidden.contains(&0) {
            return Err(TabularError::InvalidConfig(format!(
                "hidden widths must be positive, got {:?}",
                cfg.hidden
            )));
        }
        if n_features == 0 || n_classes < 2 {
            return Err(TabularError::InvalidConfig(
                "need at least one feature and two classes".into(),
            ));
        }
        let mut rng = stream(cfg.seed, 0);
        let widths = [
            n_features,
            cfg.hidden[0],
            cfg.hidden[1],
            cfg.hidden[2],
            n_classes,
        ];
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        rng.random_range(-limit..limit)
                    }),
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation: cfg.activation,
            config: *cfg,
        })
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weights.t()) + &layer.biases;
            if l < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        self.forward(x)
            .pop()
            .expect("output layer")
            .into_raw_vec_and_offset()
            .0
    }

    /// Mean cross-entropy over `rows` and its gradient per layer.
    pub fn loss_and_gradients(
        &self,
        ds: &LabeledDataset,
        rows: &[usize],
    ) -> (f64, Vec<DenseLayer>) {
        let x = ds.features.select(Axis(0), rows);
        let acts = self.forward(x.view());
        let n = rows.len() as f64;
        let mut delta = acts.last().expect("output").clone();
        let mut loss = 0.0;
        for (r, &i) in rows.iter().enumerate() {
            let mut z = delta.row_mut(r);
            let zs = z.to_vec();
            let lse = log_sum_exp(&zs);
            let y = ds.labels[i];
            loss += lse - zs[y];
            z.mapv_inplace(|v| (v - lse).exp());
            z[y] -= 1.0;
        }
        delta /= n;
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&acts[l]);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut d = delta.dot(&self.layers[l].weights);
                d.zip_mut_with(&acts[l], |g, &a| *g *= self.activation.derivative(a));
                delta = d;
            }
            grads.push(DenseLayer {
                weights: gw,
                biases: gb,
            });
        }
        grads.reverse();
        (loss / n, grads)
    }

    pub fn sgd_step(&mut self, grads: &[DenseLayer], lr: f64) {
        for (p, g) in self.layers.iter_mut().zip(grads) {
            p.weights.scaled_add(-lr, &g.weights);
            p.biases.scaled_add(-lr, &g.biases);
        }
    }
}

/// Mini-batch SGD; the sample order is reshuffled each epoch from `seed`.
pub fn train_mlp(ds: &LabeledDataset, cfg: &MlpConfig) -> Result<MlpModel> {
    ds.require_two_classes()?;
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(TabularError::InvalidConfig(
            "batch_size and learning_rate must be positive".into(),
        ));
    }
    let mut model = MlpModel::new(ds.n_features(), ds.n_classes(), cfg)?;
    let mut rng = stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..ds.n_samples()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grads) = model.loss_and_gradients(ds, batch);
            model.sgd_step(&grads, cfg.learning_rate);
        }
    }
    if model
        .layers
        .iter()
        .any(|l| l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()))
    {
        return Err(TabularError::Diverged(
            "non-finite parameters after training; lower the learning rate".into(),
        ));
    }
    Ok(model)
}

impl Classifier for MlpModel {
    fn n_features(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    fn n_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    fn predict_row(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}
