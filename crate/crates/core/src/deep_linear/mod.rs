//! Deep linear networks trained by full-batch gradient descent.
//!
//! The network maps `x ↦ W_L ⋯ W_1 x` and is trained on
//! `½ Σ_i ‖W_L ⋯ W_1 x_i − y_i‖²`. Data live in the principal-component
//! basis of the training inputs, where the Gram matrix `X Xᵀ` is diagonal with
//! entries `s_j` (the squared singular values of the centered data). In that
//! basis each coordinate of the collapsed separator `w = W_L ⋯ W_1` relaxes
//! geometrically toward the least-squares optimum:
//!
//! ```text
//! w_j(n) ≈ λ_j^n w_j(0) + (1 − λ_j^n) w_j^opt,    λ_j = 1 − γ s_j L
//! ```
//!
//! [`train_gd`] simulates the factored dynamics, [`closed_form_trajectory`]
//! evaluates the relaxation law, and [`forget_time`] / [`forget_rate`]
//! characterise when an initially correct point flips sign.

mod closed_form;
mod data;
mod experiment;
mod gd;
mod noise;
mod pca;
mod solve;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use closed_form::{
    closed_form_margin, closed_form_trajectory, forget_rate, forget_time, relaxation_factors,
};
pub use data::{synthesize_gaussian_classes, GaussianSpec};
pub use experiment::{
    geometric_spectrum, log_checkpoints, noisy_training_log, run_noise_forgetting, trajectory_log,
    NoiseForgettingConfig, NoiseForgettingRun,
};
pub use gd::{initial_factors, sample_steps, train_gd, train_gd_at};
pub use noise::{inject_label_noise, NoiseKind};
pub use pca::{pca_rotate, TargetEncoding};
pub use solve::optimal_separator;

#[derive(Debug, Error, PartialEq)]
pub enum LinearError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate data: all points identical")]
    DegenerateData,
    #[error("label {label} invalid for {encoding} targets")]
    InvalidLabel { label: u32, encoding: &'static str },
    #[error("Gram matrix is rank deficient (smallest/largest eigenvalue {ratio:e}); supply a ridge")]
    RankDeficient { ratio: f64 },
    #[error("unstable step: γ·s_1·L = {product} must be below 1")]
    Stability { product: f64 },
    #[error("loss diverged at step {step}: {loss} exceeds 10× the initial {initial} (γ·s_1·L = {product})")]
    Diverged {
        step: usize,
        loss: f64,
        initial: f64,
        product: f64,
    },
    #[error("relaxation factor λ_{index} = {lambda} outside (-1, 1]")]
    LambdaOutOfRange { index: usize, lambda: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("noise rate {0} outside [0, 1]")]
    InvalidNoiseRate(f64),
    #[error("label noise needs at least two classes")]
    TooFewClasses,
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
}

impl LinearError {
    pub fn kind(&self) -> &'static str {
        match self {
            LinearError::TooFewPoints { .. } => "too_few_points",
            LinearError::DegenerateData => "degenerate_data",
            LinearError::InvalidLabel { .. } => "invalid_label",
            LinearError::RankDeficient { .. } => "rank_deficient",
            LinearError::Stability { .. } => "stability",
            LinearError::Diverged { .. } => "diverged",
            LinearError::LambdaOutOfRange { .. } => "lambda_out_of_range",
            LinearError::InvalidConfig(_) => "invalid_config",
            LinearError::Dimension(_) => "dimension",
            LinearError::InvalidNoiseRate(_) => "invalid_noise_rate",
            LinearError::TooFewClasses => "too_few_classes",
            LinearError::InvalidSpectrum(_) => "invalid_spectrum",
        }
    }
}

/// Hyper-parameters of one gradient-descent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    /// Number of factor matrices `L`.
    pub depth: usize,
    /// Learning rate `γ`.
    pub gamma: f64,
    /// Number of GD iterations `N`.
    pub steps: usize,
    /// Norm scale of the initial collapsed separator.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Width of the hidden factors; `d + c` when absent.
    #[serde(default)]
    pub hidden_width: Option<usize>,
    pub seed: u64,
}

fn default_init_scale() -> f64 {
    1e-2
}

impl LinearConfig {
    /// Learning rate that puts `γ·s_1·L` at `ratio` for the given data.
    pub fn gamma_for_ratio(ratio: f64, data: &SpectralData, depth: usize) -> f64 {
        ratio / (data.top_curvature() * depth as f64)
    }

    pub fn stability_product(&self, data: &SpectralData) -> f64 {
        self.gamma * data.top_curvature() * self.depth as f64
    }
}

/// Training data expressed in the principal-component basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// `[d × n]` centered, rotated inputs; columns are points.
    pub x: DMatrix<f64>,
    /// `[c × n]` regression targets (`±1` rows for binary, one-hot otherwise).
    pub targets: DMatrix<f64>,
    pub labels: Vec<u32>,
    pub encoding: TargetEncoding,
    /// Singular values of the centered data matrix, non-increasing.
    pub singular_values: Vec<f64>,
    /// `[d × d]` orthonormal basis; column `j` is the `j`-th principal axis.
    pub basis: DMatrix<f64>,
    /// Mean removed before rotation.
    pub mean: DVector<f64>,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.x.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.targets.nrows()
    }

    /// Eigenvalues `s_j` of `X Xᵀ` in the rotated basis (squared singular values).
    pub fn curvatures(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s * s).collect()
    }

    pub fn top_curvature(&self) -> f64 {
        self.singular_values.first().map_or(0.0, |s| s * s)
    }

    /// Center and rotate raw `[d × m]` points with this data's mean and basis.
    pub fn project(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>, LinearError> {
        if raw.nrows() != self.dim() {
            return Err(LinearError::Dimension(format!(
                "points have {} features, basis has {}",
                raw.nrows(),
                self.dim()
            )));
        }
        let mut centered = raw.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(self.basis.transpose() * centered)
    }

    /// `½ ‖W X − Y‖²_F`.
    pub fn loss(&self, w: &DMatrix<f64>) -> f64 {
        0.5 * (w * &self.x - &self.targets).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Simulated,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// Collapsed separator `[c × d]`.
    pub separator: DMatrix<f64>,
    pub loss: f64,
}

/// Separators recorded at sorted GD iterations, always including 0 and `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub source: TrajectorySource,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(source: TrajectorySource, points: Vec<TrajectoryPoint>) -> Result<Self, LinearError> {
        if points.is_empty() || points[0].step != 0 {
            return Err(LinearError::InvalidConfig(
                "trajectory must start at step 0".into(),
            ));
        }
        if points.windows(2).any(|p| p[1].step <= p[0].step) {
            return Err(LinearError::InvalidConfig(
                "trajectory steps must increase".into(),
            ));
        }
        Ok(Self { source, points })
    }

    pub fn initial(&self) -> &DMatrix<f64> {
        &self.points[0].separator
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory is nonempty")
    }

    pub fn steps(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.step).collect()
    }

    /// Signed margins `w(n)·y·x` of a binary point along the trajectory.
    pub fn margins(&self, x: &[f64], y: f64) -> Result<Vec<f64>, LinearError> {
        let first = self.initial();
        if first.nrows() != 1 || first.ncols() != x.len() {
            return Err(LinearError::Dimension(format!(
                "margin needs a 1×{} separator, trajectory holds {}×{}",
                x.len(),
                first.nrows(),
                first.ncols()
            )));
        }
        Ok(self
            .points
            .iter()
            .map(|p| y * p.separator.row(0).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    /// Largest `‖w_a(n) − w_b(n)‖ / scale` over the steps both trajectories share.
    pub fn max_relative_deviation(&self, other: &Trajectory, scale: f64) -> f64 {
        let mut j = 0;
        let mut worst: f64 = 0.0;
        for p in &self.points {
            while j < other.points.len() && other.points[j].step < p.step {
                j += 1;
            }
            if j < other.points.len() && other.points[j].step == p.step {
                worst = worst.max((&p.separator - &other.points[j].separator).norm() / scale);
            }
        }
        worst
    }

    /// `step,loss,w_0,…` rows; multi-output separators are flattened row-major.
    pub fn to_csv(&self) -> String {
        let first = self.initial();
        let mut out = String::from("step,loss");
        for r in 0..first.nrows() {
            for c in 0..first.ncols() {
                if first.nrows() == 1 {
                    out.push_str(&format!(",w_{c}"));
                } else {
                    out.push_str(&format!(",w_{r}_{c}"));
                }
            }
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{},{}", p.step, p.loss));
            for r in 0..p.separator.nrows() {
                for c in 0..p.separator.ncols() {
                    out.push_str(&format!(",{}", p.separator[(r, c)]));
                }
            }
            out.push('\n');
        }
        out
    }
}
