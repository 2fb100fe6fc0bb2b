//! Deterministic offline augmentation: 55 fixed photometric variants per
//! source image (flip, brightness shifts and gains, Gaussian blur, pixel
//! dropout, unsharp masking), written as PNG with a CSV manifest.

mod buffer;
mod pipeline;
mod plan;
mod transform;

pub use buffer::ImageBuffer;
pub use pipeline::{
    augment_dataset, augment_images, collect_sources, output_name, AugmentSummary, ManifestRow,
    SourceImage,
};
pub use plan::{default_plan, AugmentationPlan, DEFAULT_PLAN_LEN};
pub use transform::{apply, blur_float, gaussian_kernel, Transform};

use std::path::{Path, PathBuf};

/// Lower-case extensions of the decodable input formats.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn is_image_path(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid transform parameter: {0}")]
    InvalidTransformParam(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("cannot read image {path}: {message}")]
    UnreadableImage { path: PathBuf, message: String },
    #[error("no input images")]
    EmptyInput,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AugmentError>;
