use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{softmax_rows, Cache};
use super::{CnnError, Conv2d, Dense, Layer, Result, SgdConfig, Tensor};
use crate::numeric::{log_sum_exp, relative_error};
use crate::rng::{normal, stream};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Conv(k×k, pad k/2) → ReLU → MaxPool blocks, then Flatten → Dense →
/// Softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    /// `[channels, height, width]`
    pub input: [usize; 3],
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Dropout before the dense head.
    pub dropout: Option<f64>,
}

impl ArchSpec {
    /// Three blocks of 16, 32 and 64 channels.
    pub fn earnet_s(input: [usize; 3]) -> Self {
        Self {
            input,
            conv_channels: vec![16, 32, 64],
            kernel: 3,
            dropout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub version: u32,
    pub arch: ArchSpec,
    pub layers: Vec<Layer>,
    pub num_classes: usize,
    /// Training configuration of the most recent stage, if any.
    pub config: Option<SgdConfig>,
}

/// Per-layer `(weight, bias)` gradients; `None` for layers without
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Times the input was perturbed to move pre-activations off a kink.
    pub resamples: usize,
}

fn he_normal(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let sd = (2.0 / fan_in as f64).sqrt();
    (0..n).map(|_| sd * normal(rng)).collect()
}

fn dense_head(inputs: usize, outputs: usize, lr_multiplier: f64, rng: &mut ChaCha8Rng) -> Dense {
    Dense {
        inputs,
        outputs,
        weight: he_normal(rng, inputs * outputs, inputs),
        bias: vec![0.0; outputs],
        lr_multiplier,
    }
}

/// He-normal weights and zero biases; layer `i` draws from
/// `stream(seed, i)`.
pub fn init_model(arch: &ArchSpec, num_classes: usize, seed: u64) -> Result<CnnModel> {
    if num_classes < 2 {
        return Err(CnnError::InvalidConfig(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if arch.kernel == 0 || arch.conv_channels.contains(&0) || arch.input.contains(&0) {
        return Err(CnnError::IncompatibleShapes(format!(
            "degenerate architecture {arch:?}"
        )));
    }
    if let Some(p) = arch.dropout {
        if !(0.0..1.0).contains(&p) {
            return Err(CnnError::InvalidConfig(format!(
                "dropout {p} outside [0, 1)"
            )));
        }
    }
    let mut layers = Vec::new();
    let mut shape = arch.input.to_vec();
    let mut in_c = arch.input[0];
    for &out_c in &arch.conv_channels {
        let mut rng = stream(seed, layers.len() as u64);
        let fan_in = in_c * arch.kernel * arch.kernel;
        layers.push(Layer::Conv(Conv2d {
            in_channels: in_c,
            out_channels: out_c,
            kernel_h: arch.kernel,
            kernel_w: arch.kernel,
            stride: 1,
            pad: arch.kernel / 2,
            weight: he_normal(&mut rng, out_c * fan_in, fan_in),
            bias: vec![0.0; out_c],
            lr_multiplier: 1.0,
        }));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool);
        in_c = out_c;
    }
    layers.push(Layer::Flatten);
    if let Some(p) = arch.dropout {
        layers.push(Layer::Dropout { p });
    }
    for l in &layers {
        shape = l.output_shape(&shape)?;
    }
    let mut rng = stream(seed, layers.len() as u64);
    layers.push(Layer::Dense(dense_head(
        shape[0],
        num_classes,
        1.0,
        &mut rng,
    )));
    layers.push(Layer::Softmax);
    let m = CnnModel {
        version: CHECKPOINT_VERSION,
        arch: arch.clone(),
        layers,
        num_classes,
        config: None,
    };
    m.validate()?;
    Ok(m)
}

/// Fresh head with `new_classes` outputs and the given learning-rate
/// multiplier; every other parameter is kept.
pub fn replace_head(
    model: &CnnModel,
    new_classes: usize,
    lr_multiplier: f64,
    seed: u64,
) -> Result<CnnModel> {
    if new_classes < 2 {
        return Err(CnnError::InvalidConfig(format!(
            "need at least 2 classes, got {new_classes}"
        )));
    }
    let mut m = model.clone();
    let h = m.head_index();
    let inputs = match &m.layers[h] {
        Layer::Dense(d) => d.inputs,
        _ => unreachable!("head_index points at a dense layer"),
    };
    let mut rng = stream(seed, h as u64);
    m.layers[h] = Layer::Dense(dense_head(inputs, new_classes, lr_multiplier, &mut rng));
    m.num_classes = new_classes;
    Ok(m)
}

impl CnnModel {
    /// Shape chain, a Dense → Softmax ending, and exactly one Softmax.
    pub fn validate(&self) -> Result<()> {
        let mut shape = self.arch.input.to_vec();
        for l in &self.layers {
            shape = l.output_shape(&shape)?;
        }
        let n = self.layers.len();
        let softmaxes = self
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::Softmax))
            .count();
        if n < 2
            || softmaxes != 1
            || !matches!(self.layers[n - 1], Layer::Softmax)
            || !matches!(self.layers[n - 2], Layer::Dense(_))
        {
            return Err(CnnError::IncompatibleShapes(
                "network must end in Dense → Softmax with a single Softmax".into(),
            ));
        }
        if shape != [self.num_classes] {
            return Err(CnnError::IncompatibleShapes(format!(
                "output {shape:?} does not match {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn head_index(&self) -> usize {
        self.layers.len() - 2
    }

    pub fn head(&self) -> &Dense {
        match &self.layers[self.head_index()] {
            Layer::Dense(d) => d,
            _ => unreachable!("validated model ends in Dense → Softmax"),
        }
    }

    pub fn set_head_multiplier(&mut self, m: f64) {
        let h = self.head_index();
        if let Layer::Dense(d) = &mut self.layers[h] {
            d.lr_multiplier = m;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b, _)| w.len() + b.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape.len() != 4 || x.shape[1..] != self.arch.input {
            let mut expected = vec![x.batch()];
            expected.extend_from_slice(&self.arch.input);
            return Err(CnnError::ShapeMismatch {
                expected,
                got: x.shape.clone(),
            });
        }
        Ok(())
    }

    /// Class probabilities `[N, classes]` (inference: dropout off).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let logits = self.logits(x)?;
        Ok(softmax_rows(&logits))
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers[..self.layers.len() - 1] {
            h = l.forward(h, None)?.0;
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let p = self.logits(x)?;
        Ok(p.data
            .chunks(self.num_classes)
            .map(crate::numeric::argmax)
            .collect())
    }

    /// Mean cross-entropy of the softmax output and its gradient. `rng`
    /// enables dropout.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor,
        labels: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let n = x.batch();
        if labels.len() != n || n == 0 {
            return Err(CnnError::ShapeMismatch {
                expected: vec![n],
                got: vec![labels.len()],
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(CnnError::LabelOutOfRange {
                label: l,
                classes: self.num_classes,
            });
        }
        let body = &self.layers[..self.layers.len() - 1];
        let mut caches: Vec<Cache> = Vec::with_capacity(body.len());
        let mut h = x.clone();
        for l in body {
            let (y, c) = l.forward(h, rng.as_deref_mut())?;
            caches.push(c);
            h = y;
        }
        let k = self.num_classes;
        let mut loss = 0.0;
        let mut grad = h;
        for (row, &y) in grad.data.chunks_mut(k).zip(labels) {
            let lse = log_sum_exp(row);
            loss += lse - row[y];
            for v in row.iter_mut() {
                *v = (*v - lse).exp() / n as f64;
            }
            row[y] -= 1.0 / n as f64;
        }
        let mut grads = vec![None; body.len()];
        for (i, (l, c)) in body.iter().zip(caches).enumerate().rev() {
            let (dx, g) = l.backward(grad, c);
            grads[i] = g;
            grad = dx;
        }
        grads.push(None);
        Ok((loss / n as f64, Gradients { layers: grads }))
    }

    /// `θ ← θ − global_lr · multiplier(layer) · g`.
    pub fn apply_gradients(&mut self, g: &Gradients, global_lr: f64) {
        for (l, lg) in self.layers.iter_mut().zip(&g.layers) {
            if let (Some((w, b, mult)), Some((gw, gb))) = (l.params_mut(), lg) {
                let step = global_lr * mult;
                for (p, d) in w.iter_mut().zip(gw) {
                    *p -= step * d;
                }
                for (p, d) in b.iter_mut().zip(gb) {
                    *p -= step * d;
                }
            }
        }
    }

    /// Smallest distance of any ReLU input from 0 and of any max-pool
    /// winner from its runner-up.
    fn kink_margin(&self, x: &Tensor) -> Result<f64> {
        let mut h = x.clone();
        let mut margin = f64::INFINITY;
        for l in &self.layers[..self.layers.len() - 1] {
            match l {
                Layer::Relu => {
                    margin = h.data.iter().fold(margin, |m, v| m.min(v.abs()));
                }
                Layer::MaxPool => {
                    let (c, hh, w) = (h.shape[1], h.shape[2], h.shape[3]);
                    for plane in 0..h.batch() * c {
                        let base = plane * hh * w;
                        for oy in 0..hh / 2 {
                            for ox in 0..w / 2 {
                                let mut v = [0usize, 1, w, w + 1]
                                    .map(|d| h.data[base + 2 * oy * w + 2 * ox + d]);
                                v.sort_by(|a, b| b.total_cmp(a));
                                // ties among dead ReLU outputs stay tied
                                if v[0] > 0.0 {
                                    margin = margin.min(v[0] - v[1]);
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
            h = l.forward(h, None)?.0;
        }
        Ok(margin)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| CnnError::Checkpoint(e.to_string()))?;
        if m.version != CHECKPOINT_VERSION {
            return Err(CnnError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                m.version
            )));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        crate::fsutil::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| CnnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

const KINK_GUARD: f64 = 1e-6;
/// Layers with more weights than this are checked on a 1% subsample.
const FULL_CHECK_LIMIT: usize = 4096;

/// Compare `grads` with central differences of the loss at `(x, label)`.
/// Returns the largest relative error and the number of parameters
/// compared.
pub fn gradient_error(
    model: &CnnModel,
    x: &Tensor,
    label: usize,
    grads: &Gradients,
    eps: f64,
    seed: u64,
) -> Result<(f64, usize)> {
    let loss = |m: &CnnModel| -> Result<f64> {
        let logits = m.logits(x)?;
        let row = &logits.data[..m.num_classes];
        Ok(log_sum_exp(row) - row[label])
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for li in 0..model.layers.len() {
        let Some((w, b, _)) = model.layers[li].params() else {
            continue;
        };
        let (gw, gb) = grads.layers[li]
            .as_ref()
            .expect("parametric layer has gradients");
        let (nw, nb) = (w.len(), b.len());
        let weight_idx: Vec<usize> = if nw > FULL_CHECK_LIMIT {
            let take = (nw / 100).max(64);
            let mut v = sample(&mut stream(seed, li as u64), nw, take).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..nw).collect()
        };
        let targets = weight_idx
            .into_iter()
            .map(|i| (false, i))
            .chain((0..nb).map(|i| (true, i)));
        for (is_bias, i) in targets {
            let analytic = if is_bias { gb[i] } else { gw[i] };
            let set = |m: &mut CnnModel, delta: f64| {
                let (pw, pb, _) = m.layers[li].params_mut().expect("parametric");
                if is_bias {
                    pb[i] += delta;
                } else {
                    pw[i] += delta;
                }
            };
            let orig = if is_bias { b[i] } else { w[i] };
            set(&mut probe, eps);
            let up = loss(&probe)?;
            set(&mut probe, -2.0 * eps);
            let down = loss(&probe)?;
            // restore exactly
            let (pw, pb, _) = probe.layers[li].params_mut().expect("parametric");
            if is_bias {
                pb[i] = orig;
            } else {
                pw[i] = orig;
            }
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic, numeric));
            checked += 1;
        }
    }
    Ok((worst, checked))
}

/// Backprop vs central differences for a single sample (`[C, H, W]` or
/// `[1, C, H, W]`), dropout off. If any ReLU input or max-pool margin is
/// within 1e-6 of a kink the input is perturbed with seeded noise and
/// re-checked.
pub fn gradient_check(
    model: &CnnModel,
    sample_x: &Tensor,
    label: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut x = if sample_x.shape.len() == 3 {
        let mut s = vec![1];
        s.extend_from_slice(&sample_x.shape);
        sample_x.clone().reshape(s)?
    } else {
        sample_x.clone()
    };
    let mut rng = stream(seed, u64::MAX);
    let mut resamples = 0;
    while model.kink_margin(&x)? < KINK_GUARD {
        if resamples == 100 {
            return Err(CnnError::InvalidConfig(
                "could not move the input away from activation kinks".into(),
            ));
        }
        for v in &mut x.data {
            *v += rng.random_range(-0.05..0.05);
        }
        resamples += 1;
    }
    let (_, grads) = model.loss_and_gradients(&x, &[label], None)?;
    let (max_rel_error, checked) = gradient_error(model, &x, label, &grads, eps, seed)?;
    Ok(GradCheckReport {
        max_rel_error,
        checked,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(shape: [usize; 3], seed: u64) -> Tensor {
        let mut rng = stream(seed, 3);
        let n = shape.iter().product();
        Tensor::new(
            vec![1, shape[0], shape[1], shape[2]],
            (0..n).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn head_matches_class_count() {
        let m = init_model(&ArchSpec::earnet_s([1, 16, 16]), 2, 0).unwrap();
        assert_eq!(m.head().outputs, 2);
        assert_eq!(m.layers.len(), 3 * 3 + 3);
        assert_eq!(m.head().inputs, 64 * 2 * 2);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = ArchSpec::earnet_s([3, 8, 8]);
        assert_eq!(init_model(&a, 5, 7).unwrap(), init_model(&a, 5, 7).unwrap());
        assert_ne!(init_model(&a, 5, 7).unwrap(), init_model(&a, 5, 8).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = init_model(&ArchSpec::earnet_s([1, 8, 8]), 4, 1).unwrap();
        let mut x = random_input([1, 8, 8], 2);
        x.data.iter_mut().for_each(|v| *v *= 50.0);
        let p = m.forward(&x).unwrap();
        assert!((p.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.data.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn too_small_input_is_rejected() {
        let r = init_model(&ArchSpec::earnet_s([1, 4, 4]), 2, 0);
        assert!(matches!(r, Err(CnnError::IncompatibleShapes(_))));
    }

    #[test]
    fn gradient_check_passes_on_8x8() {
        let m = init_model(&ArchSpec::earnet_s([1, 8, 8]), 3, 11).unwrap();
        let x = random_input([1, 8, 8], 12);
        let r = gradient_check(&m, &x, 1, 1e-5, 0).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert!(r.checked > 100);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let m = init_model(&ArchSpec::earnet_s([1, 8, 8]), 3, 11).unwrap();
        let x = random_input([1, 8, 8], 12);
        let (_, mut g) = m.loss_and_gradients(&x, &[1], None).unwrap();
        g.layers[0].as_mut().unwrap().0[4] += 0.1;
        let (err, _) = gradient_error(&m, &x, 1, &g, 1e-5, 0).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn replace_head_keeps_the_body() {
        let m = init_model(&ArchSpec::earnet_s([1, 8, 8]), 205, 3).unwrap();
        let r = replace_head(&m, 2, 10.0, 9).unwrap();
        assert_eq!(r.head().outputs, 2);
        assert_eq!(r.head().lr_multiplier, 10.0);
        let h = m.head_index();
        assert_eq!(r.layers[..h], m.layers[..h]);
        assert_eq!(replace_head(&m, 2, 10.0, 9).unwrap(), r);
        assert_eq!(
            m.param_count() - r.param_count(),
            (205 - 2) * (m.head().inputs + 1)
        );
        r.validate().unwrap();
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init_model(&ArchSpec::earnet_s([1, 8, 8]), 3, 4).unwrap();
        let back = CnnModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.layers.pop();
        assert!(CnnModel::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn input_shape_is_checked() {
        let m = init_model(&ArchSpec::earnet_s([1, 8, 8]), 3, 4).unwrap();
        let x = random_input([1, 9, 8], 0);
        assert!(matches!(m.forward(&x), Err(CnnError::ShapeMismatch { .. })));
    }
}
