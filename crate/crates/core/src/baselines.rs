//! Comparison methods that only need the prediction log.

use serde::Serialize;
use thiserror::Error;

use crate::forget_metrics::MetricsError;
use crate::knowledge_fusion::{check_disjoint, FusionError};
use crate::predlog::PredictionLog;
use crate::probs::{argmax, ProbMatrix};
use crate::rng::round_half_up;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("ensemble size {k} outside 1..={available}")]
    SizeOutOfRange { k: usize, available: usize },
    #[error(transparent)]
    Sets(#[from] FusionError),
}

impl BaselineError {
    pub fn kind(&self) -> &'static str {
        match self {
            BaselineError::SizeOutOfRange { .. } => "size_out_of_range",
            BaselineError::Sets(e) => e.kind(),
        }
    }
}

impl From<MetricsError> for BaselineError {
    fn from(e: MetricsError) -> Self {
        BaselineError::Sets(e.into())
    }
}

fn check_size(log: &PredictionLog, k: usize) -> Result<(), BaselineError> {
    if k == 0 || k > log.num_checkpoints() {
        return Err(BaselineError::SizeOutOfRange {
            k,
            available: log.num_checkpoints(),
        });
    }
    Ok(())
}

fn mean_of(log: &PredictionLog, positions: &[usize]) -> ProbMatrix {
    let mut out = ProbMatrix::zeros(log.num_examples, log.num_classes);
    for &ck in positions {
        for i in 0..log.num_examples {
            for (acc, &p) in out.row_mut(i).iter_mut().zip(log.row(ck, i)) {
                *acc += p as f64;
            }
        }
    }
    let count = positions.len() as f64;
    for i in 0..log.num_examples {
        for v in out.row_mut(i) {
            *v /= count;
        }
    }
    out
}

/// Mean probabilities of the last `k` checkpoints.
pub fn horizontal_ensemble(log: &PredictionLog, k: usize) -> Result<ProbMatrix, BaselineError> {
    check_size(log, k)?;
    let c = log.num_checkpoints();
    let positions: Vec<usize> = (c - k..c).collect();
    Ok(mean_of(log, &positions))
}

/// Positions `round(j * (c - 1) / (k - 1))`, `j = 0..k`; just the final one for `k = 1`.
pub fn fixed_jump_positions(num_checkpoints: usize, k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![num_checkpoints - 1];
    }
    (0..k)
        .map(|j| round_half_up(j as f64 * (num_checkpoints - 1) as f64 / (k - 1) as f64))
        .collect()
}

/// Mean probabilities of `k` checkpoints spread evenly over the run, always
/// including the final one.
pub fn fixed_jumps_ensemble(log: &PredictionLog, k: usize) -> Result<ProbMatrix, BaselineError> {
    check_size(log, k)?;
    Ok(mean_of(log, &fixed_jump_positions(log.num_checkpoints(), k)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EarlyStopping {
    pub best_epoch: u32,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

fn count_correct(log: &PredictionLog, ck: usize, rows: &[usize]) -> usize {
    rows.iter()
        .filter(|&&i| argmax(log.row(ck, i)) == log.labels[i] as usize)
        .count()
}

/// Checkpoint with the best validation accuracy (earliest on ties) and its
/// test accuracy.
pub fn early_stopping(
    log: &PredictionLog,
    val: &[usize],
    test: &[usize],
) -> Result<EarlyStopping, BaselineError> {
    check_disjoint(val, test, log.num_examples)?;
    let (best, best_count) = (0..log.num_checkpoints())
        .map(|ck| (ck, count_correct(log, ck, val)))
        .rev()
        .max_by_key(|&(_, c)| c)
        .expect("log has a checkpoint");
    Ok(EarlyStopping {
        best_epoch: log.checkpoints[best],
        val_accuracy: best_count as f64 / val.len() as f64,
        test_accuracy: count_correct(log, best, test) as f64 / test.len() as f64,
    })
}
