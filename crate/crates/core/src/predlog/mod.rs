//! Checkpoint prediction logs: the contract between a training run and every
//! analysis in this crate.
//!
//! A log holds, for each logged checkpoint, the class-probability rows the
//! model assigned to a fixed set of examples, together with their labels and
//! (optionally) the label-noise record of a corrupted training set. The last
//! checkpoint is the final model.

mod format;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::probs::{argmax, ProbMatrix};
use crate::rng;

pub use format::{decode, encode, FORMAT_VERSION, MAGIC};
pub use synth::{synthesize_log, CorrectnessPlan, SynthSpec};

/// Absolute tolerance on every probability row sum.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: file does not start with PLOG")]
    BadMagic,
    #[error("unsupported format version byte {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("truncated file: need {needed} bytes, found {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("{field} must be at least 1")]
    ZeroDimension { field: &'static str },
    #[error("unknown flag bits {0:#04x}")]
    InvalidFlags(u8),
    #[error("checkpoint ids not strictly increasing at position {position}")]
    CheckpointOrder { position: usize },
    #[error("label {label} of example {example} outside 0..{num_classes}")]
    LabelOutOfRange {
        example: usize,
        label: u32,
        num_classes: usize,
    },
    #[error("true label {label} of example {example} outside 0..{num_classes}")]
    TrueLabelOutOfRange {
        example: usize,
        label: u32,
        num_classes: usize,
    },
    #[error("noise mask byte {value} for example {example} is not 0 or 1")]
    NoiseMaskValue { example: usize, value: u8 },
    #[error("probability {value} at checkpoint {checkpoint}, example {example}, class {class} outside [0, 1]")]
    ProbabilityRange {
        checkpoint: usize,
        example: usize,
        class: usize,
        value: f32,
    },
    #[error("row sum {sum} at checkpoint {checkpoint}, example {example} deviates from 1 by more than 1e-3")]
    RowSum {
        checkpoint: usize,
        example: usize,
        sum: f64,
    },
    #[error("{field} has length {found}, expected {expected}")]
    ShapeMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid generator description: {0}")]
    InvalidSpec(String),
    #[error("validation fraction {0} outside (0, 1) or selects no example")]
    InvalidFraction(f64),
}

impl LogError {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            LogError::Io(_) => "io",
            LogError::BadMagic => "bad_magic",
            LogError::UnsupportedVersion(_) => "unsupported_version",
            LogError::Truncated { .. } => "truncated",
            LogError::DimensionMismatch { .. } => "dimension_mismatch",
            LogError::ZeroDimension { .. } => "zero_dimension",
            LogError::InvalidFlags(_) => "invalid_flags",
            LogError::CheckpointOrder { .. } => "checkpoint_order",
            LogError::LabelOutOfRange { .. } => "label_out_of_range",
            LogError::TrueLabelOutOfRange { .. } => "true_label_out_of_range",
            LogError::NoiseMaskValue { .. } => "noise_mask_value",
            LogError::ProbabilityRange { .. } => "probability_range",
            LogError::RowSum { .. } => "row_sum",
            LogError::ShapeMismatch { .. } => "shape_mismatch",
            LogError::Manifest(_) => "manifest",
            LogError::InvalidSpec(_) => "invalid_spec",
            LogError::InvalidFraction(_) => "invalid_fraction",
        }
    }

    /// The offending field, where one can be named.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            LogError::DimensionMismatch { field, .. }
            | LogError::ZeroDimension { field }
            | LogError::ShapeMismatch { field, .. } => Some(field),
            LogError::CheckpointOrder { .. } => Some("checkpoints"),
            LogError::LabelOutOfRange { .. } => Some("labels"),
            LogError::TrueLabelOutOfRange { .. } => Some("true_labels"),
            LogError::NoiseMaskValue { .. } => Some("noise_mask"),
            LogError::ProbabilityRange { .. } | LogError::RowSum { .. } => Some("probabilities"),
            LogError::InvalidFlags(_) => Some("flags"),
            _ => None,
        }
    }
}

/// Record of which labels were corrupted and what they were originally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseRecord {
    pub mask: Vec<bool>,
    pub true_labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    /// Epoch ids, strictly increasing; the last one is the final model.
    pub checkpoints: Vec<u32>,
    pub num_examples: usize,
    pub num_classes: usize,
    /// Row-major `[checkpoint][example][class]`.
    pub probabilities: Vec<f32>,
    pub labels: Vec<u32>,
    pub noise: Option<NoiseRecord>,
    pub split_name: String,
    pub metadata: BTreeMap<String, Value>,
}

/// Header-level description of a log, as reported by `inspect`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LogManifest {
    pub format_version: u8,
    pub num_checkpoints: usize,
    pub num_examples: usize,
    pub num_classes: usize,
    pub dtype: &'static str,
    pub has_noise_mask: bool,
    pub split_name: String,
    pub metadata: BTreeMap<String, Value>,
}

impl PredictionLog {
    pub fn num_checkpoints(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn final_index(&self) -> usize {
        self.checkpoints.len() - 1
    }

    pub fn final_epoch(&self) -> u32 {
        self.checkpoints[self.final_index()]
    }

    /// Position of an epoch id among the logged checkpoints.
    pub fn index_of(&self, epoch: u32) -> Option<usize> {
        self.checkpoints.binary_search(&epoch).ok()
    }

    /// The `[examples × classes]` block of one checkpoint.
    pub fn checkpoint_probs(&self, ck: usize) -> &[f32] {
        let block = self.num_examples * self.num_classes;
        &self.probabilities[ck * block..(ck + 1) * block]
    }

    pub fn row(&self, ck: usize, example: usize) -> &[f32] {
        let k = self.num_classes;
        let start = (ck * self.num_examples + example) * k;
        &self.probabilities[start..start + k]
    }

    pub fn prediction(&self, ck: usize, example: usize) -> usize {
        argmax(self.row(ck, example))
    }

    pub fn predictions(&self, ck: usize) -> Vec<usize> {
        (0..self.num_examples).map(|i| self.prediction(ck, i)).collect()
    }

    pub fn is_correct(&self, ck: usize, example: usize) -> bool {
        self.prediction(ck, example) == self.labels[example] as usize
    }

    /// Per-example correctness flags at one checkpoint.
    pub fn correctness(&self, ck: usize) -> Vec<bool> {
        (0..self.num_examples).map(|i| self.is_correct(ck, i)).collect()
    }

    pub fn prob_matrix(&self, ck: usize) -> ProbMatrix {
        ProbMatrix::from_f32(self.num_classes, self.checkpoint_probs(ck))
    }

    pub fn manifest(&self) -> LogManifest {
        LogManifest {
            format_version: FORMAT_VERSION,
            num_checkpoints: self.num_checkpoints(),
            num_examples: self.num_examples,
            num_classes: self.num_classes,
            dtype: format::DTYPE,
            has_noise_mask: self.noise.is_some(),
            split_name: self.split_name.clone(),
            metadata: self.metadata.clone(),
        }
    }

    /// Check every structural and numerical invariant of a log.
    pub fn validate(&self) -> Result<(), LogError> {
        if self.checkpoints.is_empty() {
            return Err(LogError::ZeroDimension {
                field: "num_checkpoints",
            });
        }
        if self.num_examples == 0 {
            return Err(LogError::ZeroDimension {
                field: "num_examples",
            });
        }
        if self.num_classes == 0 {
            return Err(LogError::ZeroDimension {
                field: "num_classes",
            });
        }
        let expected = self.checkpoints.len() * self.num_examples * self.num_classes;
        if self.probabilities.len() != expected {
            return Err(LogError::ShapeMismatch {
                field: "probabilities",
                expected,
                found: self.probabilities.len(),
            });
        }
        if self.labels.len() != self.num_examples {
            return Err(LogError::ShapeMismatch {
                field: "labels",
                expected: self.num_examples,
                found: self.labels.len(),
            });
        }
        check_checkpoint_order(&self.checkpoints)?;
        check_labels(&self.labels, self.num_classes)?;
        if let Some(noise) = &self.noise {
            if noise.mask.len() != self.num_examples {
                return Err(LogError::ShapeMismatch {
                    field: "noise_mask",
                    expected: self.num_examples,
                    found: noise.mask.len(),
                });
            }
            if noise.true_labels.len() != self.num_examples {
                return Err(LogError::ShapeMismatch {
                    field: "true_labels",
                    expected: self.num_examples,
                    found: noise.true_labels.len(),
                });
            }
            check_true_labels(&noise.true_labels, self.num_classes)?;
        }
        check_probabilities(&self.probabilities, self.num_examples, self.num_classes)
    }
}

pub(crate) fn check_checkpoint_order(ids: &[u32]) -> Result<(), LogError> {
    match ids.windows(2).position(|w| w[1] <= w[0]) {
        Some(p) => Err(LogError::CheckpointOrder { position: p + 1 }),
        None => Ok(()),
    }
}

pub(crate) fn check_labels(labels: &[u32], num_classes: usize) -> Result<(), LogError> {
    match labels.iter().position(|&l| l as usize >= num_classes) {
        Some(i) => Err(LogError::LabelOutOfRange {
            example: i,
            label: labels[i],
            num_classes,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_true_labels(labels: &[u32], num_classes: usize) -> Result<(), LogError> {
    match labels.iter().position(|&l| l as usize >= num_classes) {
        Some(i) => Err(LogError::TrueLabelOutOfRange {
            example: i,
            label: labels[i],
            num_classes,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_probabilities(
    probs: &[f32],
    num_examples: usize,
    num_classes: usize,
) -> Result<(), LogError> {
    for (r, row) in probs.chunks_exact(num_classes).enumerate() {
        let (checkpoint, example) = (r / num_examples, r % num_examples);
        let mut sum = 0.0f64;
        for (class, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(LogError::ProbabilityRange {
                    checkpoint,
                    example,
                    class,
                    value: v,
                });
            }
            sum += v as f64;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(LogError::RowSum {
                checkpoint,
                example,
                sum,
            });
        }
    }
    Ok(())
}

/// Read and validate a PLOG v1 file.
pub fn read_log(path: impl AsRef<Path>) -> Result<PredictionLog, LogError> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

/// Validate and write a log as PLOG v1.
pub fn write_log(log: &PredictionLog, path: impl AsRef<Path>) -> Result<(), LogError> {
    let bytes = encode(log)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Disjoint validation/test index sets covering `0..num_examples`.
///
/// The indices are shuffled with the generator of [`crate::rng`] and the
/// first `round_half_up(fraction * num_examples)` become the validation set.
/// Both sets are returned sorted.
pub fn split_validation(
    num_examples: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), LogError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LogError::InvalidFraction(fraction));
    }
    let val_size = rng::round_half_up(fraction * num_examples as f64);
    if val_size == 0 {
        return Err(LogError::InvalidFraction(fraction));
    }
    let mut gen = rng::seeded(seed);
    let order = rng::shuffled_indices(num_examples, &mut gen);
    let mut val = order[..val_size].to_vec();
    let mut test = order[val_size..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    Ok((val, test))
}
