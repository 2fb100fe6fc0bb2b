use serde::{Deserialize, Serialize};

use super::Transform;
use crate::rng::derive_seed;

pub const DEFAULT_PLAN_LEN: usize = 55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub name: String,
    pub transforms: Vec<Transform>,
}

impl AugmentationPlan {
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// The fixed 55-variant recipe: 1 flip, 12 brightness offsets (±5 … ±55),
/// 10 brightness gains (0.5 … 1.5 without 1.0), 7 blur levels, 10 dropout
/// rates (0.01 … 0.10) and 15 sharpen strengths (0.5 … 2.0 without 1.0).
/// Dropout seeds are derived from `master_seed`.
pub fn default_plan(master_seed: u64) -> AugmentationPlan {
    let mut t = vec![Transform::FlipHorizontal];
    t.extend(
        (-55..=55)
            .step_by(10)
            .map(|delta| Transform::BrightnessAdd { delta }),
    );
    t.extend(
        (5..=15)
            .filter(|&k| k != 10)
            .map(|k| Transform::BrightnessMul {
                factor: k as f64 / 10.0,
            }),
    );
    t.extend([0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0].map(|sigma| Transform::GaussianBlur { sigma }));
    t.extend((1..=10u64).map(|k| Transform::PixelDropout {
        p: k as f64 / 100.0,
        seed: derive_seed(master_seed, k),
    }));
    t.extend((5..=20).filter(|&k| k != 10).map(|k| Transform::Sharpen {
        alpha: k as f64 / 10.0,
    }));
    AugmentationPlan {
        name: "default".into(),
        transforms: t,
    }
}
