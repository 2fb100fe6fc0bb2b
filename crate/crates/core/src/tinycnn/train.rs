use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{center_crop, five_crop_offsets, replace_head, CnnError, CnnModel, Result, Tensor};
use crate::augment::{is_image_path, ImageBuffer};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub global_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Learning-rate multiplier of the (re)initialized head.
    pub last_layer_multiplier: f64,
    /// Train on five crops of this size (cycling one crop per epoch) and
    /// evaluate on the centre crop; `None` uses whole images.
    pub crop: Option<usize>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            global_lr: 1e-4,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            last_layer_multiplier: 10.0,
            crop: None,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.global_lr > 0.0) || !self.global_lr.is_finite() {
            return Err(CnnError::InvalidConfig(format!(
                "global_lr {} must be positive",
                self.global_lr
            )));
        }
        if !(self.last_layer_multiplier >= 1.0) {
            return Err(CnnError::InvalidConfig(format!(
                "last_layer_multiplier {} must be at least 1",
                self.last_layer_multiplier
            )));
        }
        if self.batch_size == 0 {
            return Err(CnnError::InvalidConfig(
                "batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Equally sized images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub images: Vec<ImageBuffer>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl ImageDataset {
    pub fn new(
        images: Vec<ImageBuffer>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(CnnError::ShapeMismatch {
                expected: vec![images.len()],
                got: vec![labels.len()],
            });
        }
        if let Some(first) = images.first() {
            let dims = (first.width, first.height, first.channels);
            if let Some(bad) = images
                .iter()
                .find(|i| (i.width, i.height, i.channels) != dims)
            {
                return Err(CnnError::ShapeMismatch {
                    expected: vec![dims.2, dims.1, dims.0],
                    got: vec![bad.channels, bad.height, bad.width],
                });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(CnnError::LabelOutOfRange {
                label: l,
                classes: class_names.len(),
            });
        }
        Ok(Self {
            images,
            labels,
            class_names,
        })
    }

    /// `dir/<class>/*.png`, classes in sorted folder order, each image
    /// resized to `size × size` if given.
    pub fn from_folder(dir: &Path, size: Option<usize>) -> Result<Self> {
        let io = |e: std::io::Error| CnnError::Input {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut classes: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        classes.sort();
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let mut names = Vec::new();
        for (k, cdir) in classes.iter().enumerate() {
            names.push(
                cdir.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
            );
            let mut files: Vec<_> = std::fs::read_dir(cdir)
                .map_err(io)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_image_path(p))
                .collect();
            files.sort();
            for f in files {
                let img = ImageBuffer::load(&f).map_err(|e| CnnError::Input {
                    path: f.display().to_string(),
                    message: e.to_string(),
                })?;
                images.push(match size {
                    Some(s) => img.resized(s, s),
                    None => img,
                });
                labels.push(k);
            }
        }
        Self::new(images, labels, names)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[C, H, W]` of the network input after optional cropping.
    pub fn input_shape(&self, crop: Option<usize>) -> Option<[usize; 3]> {
        self.images.first().map(|i| {
            let (h, w) = crop.map_or((i.height, i.width), |c| (c, c));
            [i.channels, h, w]
        })
    }
}

/// `[N, C, H, W]` with intensities scaled to `[0, 1]`.
pub fn to_tensor(images: &[&ImageBuffer]) -> Result<Tensor> {
    let first = images.first().ok_or(CnnError::EmptyDataset("batch"))?;
    let (c, h, w) = (first.channels, first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(img.data[(y * w + x) * c + ch] as f64 / 255.0);
                }
            }
        }
    }
    Tensor::new(vec![images.len(), c, h, w], data)
}

fn crop_by_index(img: &ImageBuffer, size: usize, index: usize) -> Result<ImageBuffer> {
    let (r, c) = five_crop_offsets(img.height, img.width, size)?[index % 5];
    let ch = img.channels;
    let mut data = Vec::with_capacity(size * size * ch);
    for y in r..r + size {
        let s = (y * img.width + c) * ch;
        data.extend_from_slice(&img.data[s..s + size * ch]);
    }
    Ok(ImageBuffer::new(size, size, ch, data).expect("crop inside the image"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub stage: String,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

/// One SGD update on a batch; returns the batch loss before the update.
pub fn train_step(
    model: &mut CnnModel,
    x: &Tensor,
    labels: &[usize],
    global_lr: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let (loss, g) = model.loss_and_gradients(x, labels, rng)?;
    if !loss.is_finite() {
        return Err(CnnError::NonFinite);
    }
    model.apply_gradients(&g, global_lr);
    Ok(loss)
}

/// Train for `cfg.epochs` epochs; returns the mean loss per epoch. Epoch
/// `e` shuffles from `stream(seed, e)` and, with cropping, uses crop
/// `e mod 5` of every image.
pub fn train_epochs(
    model: &mut CnnModel,
    ds: &ImageDataset,
    cfg: &SgdConfig,
    stage: &str,
    log: &mut Vec<LogRow>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(CnnError::EmptyDataset("training"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut means = Vec::with_capacity(cfg.epochs);
    let mut step = log.len();
    for epoch in 0..cfg.epochs {
        let mut rng = stream(cfg.seed, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let owned: Vec<ImageBuffer>;
            let refs: Vec<&ImageBuffer> = match cfg.crop {
                Some(size) => {
                    owned = batch
                        .iter()
                        .map(|&i| crop_by_index(&ds.images[i], size, epoch))
                        .collect::<Result<_>>()?;
                    owned.iter().collect()
                }
                None => batch.iter().map(|&i| &ds.images[i]).collect(),
            };
            let x = to_tensor(&refs)?;
            let labels: Vec<usize> = batch.iter().map(|&i| ds.labels[i]).collect();
            let mut drop_rng = stream(derive_seed(cfg.seed, epoch as u64), step as u64);
            let loss = train_step(model, &x, &labels, cfg.global_lr, Some(&mut drop_rng))?;
            total += loss * batch.len() as f64;
            log.push(LogRow {
                step,
                stage: stage.to_string(),
                epoch,
                loss,
                lr: cfg.global_lr,
            });
            step += 1;
        }
        means.push(total / ds.len() as f64);
    }
    model.config = Some(*cfg);
    Ok(means)
}

/// Fraction of correctly classified images (centre crop when `crop` is
/// set).
pub fn evaluate_accuracy(model: &CnnModel, ds: &ImageDataset, crop: Option<usize>) -> Result<f64> {
    if ds.is_empty() {
        return Err(CnnError::EmptyDataset("evaluation"));
    }
    let mut correct = 0;
    for chunk in (0..ds.len()).collect::<Vec<_>>().chunks(64) {
        let owned: Vec<ImageBuffer>;
        let refs: Vec<&ImageBuffer> = match crop {
            Some(size) => {
                owned = chunk
                    .iter()
                    .map(|&i| center_crop(&ds.images[i], size))
                    .collect::<Result<_>>()?;
                owned.iter().collect()
            }
            None => chunk.iter().map(|&i| &ds.images[i]).collect(),
        };
        let pred = model.predict(&to_tensor(&refs)?)?;
        correct += pred
            .iter()
            .zip(chunk)
            .filter(|(p, &i)| **p == ds.labels[i])
            .count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub classes: usize,
    pub samples: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub stages: Vec<StageReport>,
    /// Accuracy on the held-out target set, when one was given.
    pub validation_accuracy: Option<f64>,
    pub log: Vec<LogRow>,
}

/// Stage 1 trains `base` on the domain set behind a head sized to the
/// domain classes; stage 2 swaps in a fresh head for the target classes and
/// trains on the target set. With `domain_cfg.epochs == 0` this is
/// single-stage training on the target set. Each stage's head uses that
/// stage's `last_layer_multiplier`.
pub fn two_stage_finetune(
    base: &CnnModel,
    domain: &ImageDataset,
    target: &ImageDataset,
    domain_cfg: &SgdConfig,
    target_cfg: &SgdConfig,
    validation: Option<&ImageDataset>,
) -> Result<(CnnModel, FinetuneReport)> {
    domain_cfg.validate()?;
    target_cfg.validate()?;
    if target.is_empty() {
        return Err(CnnError::EmptyDataset("target"));
    }
    let mut log = Vec::new();
    let mut stages = Vec::new();
    let mut model = base.clone();
    if domain_cfg.epochs > 0 {
        if domain.is_empty() {
            return Err(CnnError::EmptyDataset("domain"));
        }
        model = replace_head(
            &model,
            domain.num_classes(),
            domain_cfg.last_layer_multiplier,
            domain_cfg.seed,
        )?;
        let losses = train_epochs(&mut model, domain, domain_cfg, "domain", &mut log)?;
        stages.push(StageReport {
            stage: "domain".into(),
            classes: domain.num_classes(),
            samples: domain.len(),
            epoch_losses: losses,
        });
    }
    model = replace_head(
        &model,
        target.num_classes(),
        target_cfg.last_layer_multiplier,
        target_cfg.seed,
    )?;
    let losses = train_epochs(&mut model, target, target_cfg, "target", &mut log)?;
    stages.push(StageReport {
        stage: "target".into(),
        classes: target.num_classes(),
        samples: target.len(),
        epoch_losses: losses,
    });
    let validation_accuracy = validation
        .map(|v| evaluate_accuracy(&model, v, target_cfg.crop))
        .transpose()?;
    Ok((
        model,
        FinetuneReport {
            stages,
            validation_accuracy,
            log,
        },
    ))
}
