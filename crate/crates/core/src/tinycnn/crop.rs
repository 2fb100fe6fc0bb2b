use serde::{Deserialize, Serialize};

use super::{CnnError, Result};
use crate::augment::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    FiveCropTrain,
    CenterCropTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub canvas: usize,
    pub size: usize,
}

impl CropSpec {
    pub fn new(canvas: usize, size: usize) -> Result<Self> {
        if size == 0 || size >= canvas {
            return Err(CnnError::SizeTooLarge { size, canvas });
        }
        Ok(Self { canvas, size })
    }

    /// 224 px crops of a 256 px canvas.
    pub fn standard_224() -> Self {
        Self {
            canvas: 256,
            size: 224,
        }
    }

    /// 227 px crops of a 256 px canvas.
    pub fn standard_227() -> Self {
        Self {
            canvas: 256,
            size: 227,
        }
    }
}

fn check(h: usize, w: usize, size: usize) -> Result<()> {
    if size == 0 || size > h || size > w {
        return Err(CnnError::SizeTooLarge {
            size,
            canvas: h.min(w),
        });
    }
    Ok(())
}

pub fn center_offset(h: usize, w: usize, size: usize) -> Result<(usize, usize)> {
    check(h, w, size)?;
    Ok(((h - size) / 2, (w - size) / 2))
}

/// `(row, col)` offsets: four corners (top-left, top-right, bottom-left,
/// bottom-right) then the centre.
pub fn five_crop_offsets(h: usize, w: usize, size: usize) -> Result<[(usize, usize); 5]> {
    let c = center_offset(h, w, size)?;
    let (r, q) = (h - size, w - size);
    Ok([(0, 0), (0, q), (r, 0), (r, q), c])
}

fn crop_at(img: &ImageBuffer, row: usize, col: usize, size: usize) -> ImageBuffer {
    let ch = img.channels;
    let mut data = Vec::with_capacity(size * size * ch);
    for y in row..row + size {
        let start = (y * img.width + col) * ch;
        data.extend_from_slice(&img.data[start..start + size * ch]);
    }
    ImageBuffer::new(size, size, ch, data).expect("crop inside the source")
}

pub fn five_crop(img: &ImageBuffer, size: usize) -> Result<[ImageBuffer; 5]> {
    let offs = five_crop_offsets(img.height, img.width, size)?;
    Ok(offs.map(|(r, c)| crop_at(img, r, c, size)))
}

pub fn center_crop(img: &ImageBuffer, size: usize) -> Result<ImageBuffer> {
    let (r, c) = center_offset(img.height, img.width, size)?;
    Ok(crop_at(img, r, c, size))
}
