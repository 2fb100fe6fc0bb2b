use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{AugmentError, ImageBuffer, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    FlipHorizontal,
    BrightnessAdd {
        delta: i32,
    },
    BrightnessMul {
        factor: f64,
    },
    GaussianBlur {
        sigma: f64,
    },
    PixelDropout {
        p: f64,
        seed: u64,
    },
    /// Unsharp mask with an inner blur of σ = 1.
    Sharpen {
        alpha: f64,
    },
}

impl Transform {
    /// Stable identifier used in output file names and the manifest.
    pub fn id(&self) -> String {
        match *self {
            Transform::FlipHorizontal => "flip_h".into(),
            Transform::BrightnessAdd { delta } if delta < 0 => format!("add_m{}", -delta),
            Transform::BrightnessAdd { delta } => format!("add_p{delta}"),
            Transform::BrightnessMul { factor } => format!("mul_{factor}"),
            Transform::GaussianBlur { sigma } => format!("blur_{sigma}"),
            Transform::PixelDropout { p, .. } => format!("dropout_{p}"),
            Transform::Sharpen { alpha } => format!("sharpen_{alpha}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AugmentError::InvalidTransformParam(m));
        match *self {
            Transform::FlipHorizontal | Transform::BrightnessAdd { .. } => Ok(()),
            Transform::BrightnessMul { factor } if !(factor > 0.0 && factor.is_finite()) => {
                bad(format!("brightness factor {factor} must be positive"))
            }
            Transform::GaussianBlur { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                bad(format!("blur sigma {sigma} must be positive"))
            }
            Transform::PixelDropout { p, .. } if !(p > 0.0 && p < 1.0) => {
                bad(format!("dropout probability {p} must lie in (0, 1)"))
            }
            Transform::Sharpen { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("sharpen alpha {alpha} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Discrete Gaussian of radius `⌈3σ⌉`: each tap is the Gaussian mass over
/// its unit pixel interval, renormalized to sum to 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let n = Normal::new(0.0, sigma).expect("sigma > 0");
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| n.cdf(i as f64 + 0.5) - n.cdf(i as f64 - 0.5))
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Separable blur with edge replication, unrounded.
pub fn blur_float(img: &ImageBuffer, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h, ch) = (img.width as isize, img.height as isize, img.channels);
    let src: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
    let idx = |x: isize, y: isize, c: usize| ((y * w + x) as usize) * ch + c;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                tmp[idx(x, y, c)] = k
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * src[idx((x + t as isize - r).clamp(0, w - 1), y, c)])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out[idx(x, y, c)] = k
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * tmp[idx(x, (y + t as isize - r).clamp(0, h - 1), c)])
                    .sum();
            }
        }
    }
    out
}

pub fn apply(t: &Transform, img: &ImageBuffer) -> Result<ImageBuffer> {
    t.validate()?;
    let mut out = img.clone();
    match *t {
        Transform::FlipHorizontal => {
            let (w, ch) = (img.width, img.channels);
            for (src, dst) in img.data.chunks(w * ch).zip(out.data.chunks_mut(w * ch)) {
                for x in 0..w {
                    dst[x * ch..(x + 1) * ch].copy_from_slice(&src[(w - 1 - x) * ch..(w - x) * ch]);
                }
            }
        }
        Transform::BrightnessAdd { delta } => {
            for v in &mut out.data {
                *v = (*v as i32 + delta).clamp(0, 255) as u8;
            }
        }
        Transform::BrightnessMul { factor } => {
            for v in &mut out.data {
                *v = to_u8(*v as f64 * factor);
            }
        }
        Transform::GaussianBlur { sigma } => {
            out.data = blur_float(img, sigma).into_iter().map(to_u8).collect();
        }
        Transform::PixelDropout { p, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for px in out.data.chunks_mut(img.channels) {
                if rng.random::<f64>() < p {
                    px.fill(0);
                }
            }
        }
        Transform::Sharpen { alpha } => {
            let blurred = blur_float(img, 1.0);
            for (v, b) in out.data.iter_mut().zip(blurred) {
                let x = *v as f64;
                *v = to_u8(x + alpha * (x - b));
            }
        }
    }
    Ok(out)
}
