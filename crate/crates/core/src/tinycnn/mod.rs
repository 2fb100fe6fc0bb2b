//! A small convolutional network with hand-written backpropagation, crop
//! pipelines, head replacement, and two-stage fine-tuning (source domain
//! first, then the small target set).

mod crop;
mod layers;
mod model;
mod tensor;
mod train;

pub use crop::{center_crop, center_offset, five_crop, five_crop_offsets, CropMode, CropSpec};
pub use layers::{Conv2d, Dense, Layer};
pub use model::{
    gradient_check, gradient_error, init_model, replace_head, ArchSpec, CnnModel, GradCheckReport,
    Gradients, CHECKPOINT_VERSION,
};
pub use tensor::Tensor;
pub use train::{
    evaluate_accuracy, to_tensor, train_epochs, train_step, two_stage_finetune, FinetuneReport,
    ImageDataset, LogRow, SgdConfig, StageReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("incompatible layer shapes: {0}")]
    IncompatibleShapes(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("crop size {size} exceeds canvas {canvas}")]
    SizeTooLarge { size: usize, canvas: usize },
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("training produced non-finite values")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, CnnError>;
