//! Forgetting statistics of a prediction log.
//!
//! With `E` the final checkpoint and `M_e` the examples a checkpoint gets
//! wrong, the forget fraction at `e` counts examples right at `e` but wrong at
//! `E`, and the learn fraction counts examples wrong at `e` but right at `E`.
//! Everything is counted in integers; fractions only appear at the API edge,
//! so `acc_E = acc_e + L_e - F_e` holds exactly on the counts.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::predlog::PredictionLog;
use crate::probs::{argmax, ProbMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("example subset is empty")]
    EmptySubset,
    #[error("example index {index} out of range for {len} examples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("checkpoint {0} is not in the log")]
    UnknownCheckpoint(u32),
    #[error("log carries no noise mask")]
    MissingNoiseMask,
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("labels have length {labels}, matrix has {rows} rows")]
    LengthMismatch { labels: usize, rows: usize },
}

impl MetricsError {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricsError::EmptySubset => "empty_subset",
            MetricsError::IndexOutOfRange { .. } => "index_out_of_range",
            MetricsError::UnknownCheckpoint(_) => "unknown_checkpoint",
            MetricsError::MissingNoiseMask => "missing_noise_mask",
            MetricsError::InvalidQuantile(_) => "invalid_quantile",
            MetricsError::LengthMismatch { .. } => "length_mismatch",
        }
    }
}

pub(crate) fn check_subset(subset: &[usize], len: usize) -> Result<(), MetricsError> {
    if subset.is_empty() {
        return Err(MetricsError::EmptySubset);
    }
    match subset.iter().find(|&&i| i >= len) {
        Some(&index) => Err(MetricsError::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

/// All example indices of a log, for analyses over the whole evaluation set.
pub fn all_examples(log: &PredictionLog) -> Vec<usize> {
    (0..log.num_examples).collect()
}

/// Fraction of `subset` whose argmax matches its label.
pub fn accuracy(probs: &ProbMatrix, labels: &[u32], subset: &[usize]) -> Result<f64, MetricsError> {
    if labels.len() != probs.num_rows() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            rows: probs.num_rows(),
        });
    }
    check_subset(subset, probs.num_rows())?;
    let hits = subset
        .iter()
        .filter(|&&i| argmax(probs.row(i)) == labels[i] as usize)
        .count();
    Ok(hits as f64 / subset.len() as f64)
}

/// `M_e`: the members of `subset` misclassified at checkpoint `epoch`, sorted.
pub fn mislabeled_set(
    log: &PredictionLog,
    epoch: u32,
    subset: &[usize],
) -> Result<Vec<usize>, MetricsError> {
    let ck = log
        .index_of(epoch)
        .ok_or(MetricsError::UnknownCheckpoint(epoch))?;
    match subset.iter().find(|&&i| i >= log.num_examples) {
        Some(&index) => Err(MetricsError::IndexOutOfRange {
            index,
            len: log.num_examples,
        }),
        None => {
            let mut out: Vec<usize> = subset
                .iter()
                .copied()
                .filter(|&i| !log.is_correct(ck, i))
                .collect();
            out.sort_unstable();
            Ok(out)
        }
    }
}

/// Integer counts behind one point of the forget curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ForgetCounts {
    pub epoch: u32,
    /// Correct at this checkpoint.
    pub correct: usize,
    /// Correct here, wrong at the final checkpoint.
    pub forgotten: usize,
    /// Wrong here, correct at the final checkpoint.
    pub learned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgetCurve {
    pub subset_size: usize,
    pub final_correct: usize,
    pub records: Vec<ForgetCounts>,
}

impl ForgetCurve {
    fn frac(&self, count: usize) -> f64 {
        count as f64 / self.subset_size as f64
    }

    pub fn accuracy(&self, i: usize) -> f64 {
        self.frac(self.records[i].correct)
    }

    pub fn forget(&self, i: usize) -> f64 {
        self.frac(self.records[i].forgotten)
    }

    pub fn learn(&self, i: usize) -> f64 {
        self.frac(self.records[i].learned)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.frac(self.final_correct)
    }

    pub fn max_forget(&self) -> f64 {
        (0..self.records.len()).map(|i| self.forget(i)).fold(0.0, f64::max)
    }

    /// `final_correct == correct + learned - forgotten` at every checkpoint.
    pub fn identity_holds(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.correct + r.learned == self.final_correct + r.forgotten)
    }

    /// `epoch,acc,F,L` rows with shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,acc,F,L\n");
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch,
                self.accuracy(i),
                self.forget(i),
                self.learn(i)
            ));
        }
        out
    }
}

/// Forget and learn fractions of every checkpoint relative to the final one.
pub fn forget_curve(log: &PredictionLog, subset: &[usize]) -> Result<ForgetCurve, MetricsError> {
    check_subset(subset, log.num_examples)?;
    let last = log.final_index();
    let final_ok: Vec<bool> = subset.iter().map(|&i| log.is_correct(last, i)).collect();
    let final_correct = final_ok.iter().filter(|&&b| b).count();
    let records = (0..log.num_checkpoints())
        .into_par_iter()
        .map(|ck| {
            let mut counts = ForgetCounts {
                epoch: log.checkpoints[ck],
                correct: 0,
                forgotten: 0,
                learned: 0,
            };
            for (&i, &fin) in subset.iter().zip(&final_ok) {
                let here = log.is_correct(ck, i);
                counts.correct += here as usize;
                counts.forgotten += (here && !fin) as usize;
                counts.learned += (!here && fin) as usize;
            }
            counts
        })
        .collect();
    Ok(ForgetCurve {
        subset_size: subset.len(),
        final_correct,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExampleHistory {
    pub index: usize,
    pub epochs_correct: usize,
    pub last_correct_epoch: Option<u32>,
    pub final_correct: bool,
}

pub fn example_histories(
    log: &PredictionLog,
    subset: &[usize],
) -> Result<Vec<ExampleHistory>, MetricsError> {
    check_subset(subset, log.num_examples)?;
    let last = log.final_index();
    Ok(subset
        .iter()
        .map(|&i| {
            let correct_at: Vec<usize> = (0..log.num_checkpoints())
                .filter(|&ck| log.is_correct(ck, i))
                .collect();
            ExampleHistory {
                index: i,
                epochs_correct: correct_at.len(),
                last_correct_epoch: correct_at.last().map(|&ck| log.checkpoints[ck]),
                final_correct: log.is_correct(last, i),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemorizationRecord {
    pub epoch: u32,
    /// Loss threshold computed on the previous checkpoint.
    pub threshold: f64,
    pub clean_count: usize,
    pub noisy_count: usize,
    pub difference: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemorizationCurve {
    pub quantile: f64,
    pub definition: &'static str,
    pub records: Vec<MemorizationRecord>,
}

pub const MEMORIZATION_DEFINITION: &str = "per checkpoint t>0: examples whose cross-entropy on the \
     observed label at t-1 exceeds the quantile (linear interpolation) of that checkpoint's losses, \
     wrong at t-1 and correct at t; clean and noisy counts split by the noise mask";

/// Linear-interpolation quantile of an unsorted sample.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cross_entropy(p: f32) -> f64 {
    -(p as f64).max(1e-30).ln()
}

/// Newly memorized high-loss examples per checkpoint, split by the noise mask.
pub fn noisy_memorization_curve(
    log: &PredictionLog,
    loss_quantile: f64,
) -> Result<MemorizationCurve, MetricsError> {
    if !(0.0..=1.0).contains(&loss_quantile) {
        return Err(MetricsError::InvalidQuantile(loss_quantile));
    }
    let noise = log.noise.as_ref().ok_or(MetricsError::MissingNoiseMask)?;
    let records = (1..log.num_checkpoints())
        .map(|ck| {
            let prev = ck - 1;
            let losses: Vec<f64> = (0..log.num_examples)
                .map(|i| cross_entropy(log.row(prev, i)[log.labels[i] as usize]))
                .collect();
            let threshold = quantile(&losses, loss_quantile);
            let (mut clean_count, mut noisy_count) = (0, 0);
            for i in 0..log.num_examples {
                let newly = !log.is_correct(prev, i) && log.is_correct(ck, i);
                if newly && losses[i] > threshold {
                    if noise.mask[i] {
                        noisy_count += 1;
                    } else {
                        clean_count += 1;
                    }
                }
            }
            MemorizationRecord {
                epoch: log.checkpoints[ck],
                threshold,
                clean_count,
                noisy_count,
                difference: clean_count as i64 - noisy_count as i64,
            }
        })
        .collect();
    Ok(MemorizationCurve {
        quantile: loss_quantile,
        definition: MEMORIZATION_DEFINITION,
        records,
    })
}
