use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LinearError;
use crate::rng;

/// Gaussian clouds with a shared axis-aligned covariance.
///
/// Two classes sit at `∓separation/2` along the first axis. With more classes,
/// class `k` sits at `separation/√2` along axis `k`, so every pair of means is
/// `separation` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub per_class: usize,
    pub num_classes: usize,
    pub separation: f64,
    /// Per-axis variances; its length is the input dimension.
    pub spectrum: Vec<f64>,
}

impl GaussianSpec {
    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }
}

/// Draw `[d × n]` points (columns, grouped by class) and their labels.
pub fn synthesize_gaussian_classes(spec: &GaussianSpec, seed: u64) -> Result<(DMatrix<f64>, Vec<u32>), LinearError> {
    let d = spec.dim();
    if d == 0 {
        return Err(LinearError::InvalidSpectrum("empty spectrum".into()));
    }
    if let Some(v) = spec.spectrum.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(LinearError::InvalidSpectrum(format!("variance {v} must be positive")));
    }
    if spec.num_classes < 2 {
        return Err(LinearError::TooFewClasses);
    }
    if spec.num_classes > 2 && spec.num_classes > d {
        return Err(LinearError::InvalidConfig(format!(
            "{} classes need at least as many dimensions, got {d}",
            spec.num_classes
        )));
    }
    if !spec.separation.is_finite() {
        return Err(LinearError::InvalidConfig("separation must be finite".into()));
    }
    let n = spec.per_class * spec.num_classes;
    let mut gen = rng::seeded(seed);
    let scales: Vec<f64> = spec.spectrum.iter().map(|v| v.sqrt()).collect();
    let mut x = DMatrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.num_classes {
        let (axis, offset) = if spec.num_classes == 2 {
            (0, if class == 0 { -0.5 } else { 0.5 } * spec.separation)
        } else {
            (class, spec.separation / std::f64::consts::SQRT_2)
        };
        for _ in 0..spec.per_class {
            let col = labels.len();
            for r in 0..d {
                x[(r, col)] = scales[r] * gen.sample::<f64, _>(StandardNormal);
            }
            x[(axis, col)] += offset;
            labels.push(class as u32);
        }
    }
    Ok((x, labels))
}
