//! Forgetting along the principal-component sweep of a linear model, and its
//! overlap with forgetting along the checkpoints of a trained model.
//!
//! `S(k)` holds the points the least-squares map `W_opt` gets wrong but some
//! truncation `W(k')`, `k' > k`, gets right, where `W(k)` keeps only the first
//! `k` principal coordinates. `M(n)` holds the points the final checkpoint gets
//! wrong but some logged checkpoint after `n` gets right.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::deep_linear::{optimal_separator, LinearError, SpectralData};
use crate::predlog::PredictionLog;
use crate::probs::argmax;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("truncation {k} outside 0..={d}")]
    KOutOfRange { k: usize, d: usize },
    #[error("correspondence needs at least two distinct {axis} values")]
    DegenerateRange { axis: &'static str },
    #[error("{0} points but {1} labels")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

impl SpectralError {
    pub fn kind(&self) -> &'static str {
        match self {
            SpectralError::KOutOfRange { .. } => "k_out_of_range",
            SpectralError::DegenerateRange { .. } => "degenerate_range",
            SpectralError::LengthMismatch(..) => "length_mismatch",
            SpectralError::Linear(e) => e.kind(),
        }
    }
}

/// `W_opt` (in the principal basis) with every coordinate from `k` on zeroed.
pub fn pc_truncated_classifier(w_opt: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, SpectralError> {
    let d = w_opt.ncols();
    if k > d {
        return Err(SpectralError::KOutOfRange { k, d });
    }
    let mut w = w_opt.clone();
    w.columns_mut(k, d - k).fill(0.0);
    Ok(w)
}

/// Class decisions of a collapsed map on `[d × n]` points. A single output row
/// is read as a binary score (class 1 when positive); otherwise the highest
/// output wins, lowest index on ties.
pub fn classify(w: &DMatrix<f64>, points: &DMatrix<f64>) -> Vec<u32> {
    let scores = w * points;
    (0..points.ncols())
        .map(|i| {
            if scores.nrows() == 1 {
                u32::from(scores[(0, i)] > 0.0)
            } else {
                let col: Vec<f64> = scores.column(i).iter().copied().collect();
                argmax(&col) as u32
            }
        })
        .collect()
}

/// Index sets keyed by a sweep variable (truncation `k` or checkpoint id `n`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgottenSets {
    pub keys: Vec<u32>,
    /// Sorted example indices for each key.
    pub sets: Vec<Vec<usize>>,
}

impl ForgottenSets {
    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    pub fn get(&self, key: u32) -> Option<&[usize]> {
        self.keys
            .binary_search(&key)
            .ok()
            .map(|i| self.sets[i].as_slice())
    }

    /// Each set contains the next one.
    pub fn is_nested(&self) -> bool {
        self.sets
            .windows(2)
            .all(|w| w[1].iter().all(|i| w[0].binary_search(i).is_ok()))
    }

    fn from_last_correct(keys: Vec<u32>, final_wrong: &[bool], last_correct: &[Option<usize>]) -> Self {
        let sets = (0..keys.len())
            .map(|pos| {
                (0..final_wrong.len())
                    .filter(|&i| final_wrong[i] && last_correct[i].is_some_and(|lc| lc > pos))
                    .collect()
            })
            .collect();
        Self { keys, sets }
    }
}

/// `S(k)` for `k = 0..d` from a correctness sweep over truncations `0..=d`.
fn sets_from_sweep(correct: &[Vec<bool>], d: usize) -> ForgottenSets {
    let n = correct[0].len();
    let final_wrong: Vec<bool> = correct[d].iter().map(|c| !c).collect();
    let last_correct: Vec<Option<usize>> = (0..n)
        .map(|i| (0..=d).rev().find(|&k| correct[k][i]))
        .collect();
    ForgottenSets::from_last_correct((0..d as u32).collect(), &final_wrong, &last_correct)
}

/// `S(k)`, `k = 0..d`, for the points and labels of `data` under `w_opt`.
pub fn spectral_forgotten_sets(data: &SpectralData, w_opt: &DMatrix<f64>) -> Result<ForgottenSets, SpectralError> {
    spectral_forgotten_sets_on(w_opt, &data.x, &data.labels)
}

/// `S(k)` for arbitrary rotated `[d × n]` points, e.g. a held-out split.
pub fn spectral_forgotten_sets_on(
    w_opt: &DMatrix<f64>,
    points: &DMatrix<f64>,
    labels: &[u32],
) -> Result<ForgottenSets, SpectralError> {
    if points.ncols() != labels.len() {
        return Err(SpectralError::LengthMismatch(points.ncols(), labels.len()));
    }
    if points.nrows() != w_opt.ncols() {
        return Err(LinearError::Dimension(format!(
            "separator has {} coordinates, points have {}",
            w_opt.ncols(),
            points.nrows()
        ))
        .into());
    }
    let d = w_opt.ncols();
    let correct = truncation_correctness(w_opt, points, labels)?;
    Ok(sets_from_sweep(&correct, d))
}

fn truncation_correctness(
    w_opt: &DMatrix<f64>,
    points: &DMatrix<f64>,
    labels: &[u32],
) -> Result<Vec<Vec<bool>>, SpectralError> {
    (0..=w_opt.ncols())
        .map(|k| {
            let w = pc_truncated_classifier(w_opt, k)?;
            Ok(classify(&w, points)
                .iter()
                .zip(labels)
                .map(|(p, l)| p == l)
                .collect())
        })
        .collect()
}

/// `M(n)` for every logged checkpoint `n`.
pub fn model_forgotten_sets(log: &PredictionLog) -> ForgottenSets {
    let c = log.num_checkpoints();
    let correct: Vec<Vec<bool>> = (0..c).map(|ck| log.correctness(ck)).collect();
    let final_wrong: Vec<bool> = correct[c - 1].iter().map(|x| !x).collect();
    let last_correct: Vec<Option<usize>> = (0..log.num_examples)
        .map(|i| (0..c).rev().find(|&ck| correct[ck][i]))
        .collect();
    ForgottenSets::from_last_correct(log.checkpoints.clone(), &final_wrong, &last_correct)
}

/// A log whose checkpoint `k` holds the predictions of `W(k)`, `k = 0..=d`.
/// Binary maps give `[1 − σ, σ]` of the score; others a softmax.
pub fn truncation_log(
    w_opt: &DMatrix<f64>,
    points: &DMatrix<f64>,
    labels: &[u32],
) -> Result<PredictionLog, SpectralError> {
    let steps: Vec<_> = (0..=w_opt.ncols())
        .map(|k| {
            Ok(crate::deep_linear::TrajectoryPoint {
                step: k,
                separator: pc_truncated_classifier(w_opt, k)?,
                loss: 0.0,
            })
        })
        .collect::<Result<_, SpectralError>>()?;
    let traj = crate::deep_linear::Trajectory::new(crate::deep_linear::TrajectorySource::ClosedForm, steps)?;
    let mut log = crate::deep_linear::trajectory_log(&traj, points, labels, None)?;
    log.split_name = "truncation".into();
    Ok(log)
}

/// Linear map `n = α k + β` between the truncation and checkpoint axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub alpha: f64,
    pub beta: f64,
}

impl Correspondence {
    pub fn apply(&self, k: f64) -> f64 {
        self.alpha * k + self.beta
    }
}

/// Map the smallest and largest `k` onto the smallest and largest `n`.
pub fn fit_correspondence(k_keys: &[u32], n_keys: &[u32]) -> Result<Correspondence, SpectralError> {
    let span = |keys: &[u32], axis| {
        let lo = keys.iter().min().copied();
        let hi = keys.iter().max().copied();
        match (lo, hi) {
            (Some(lo), Some(hi)) if hi > lo => Ok((lo as f64, hi as f64)),
            _ => Err(SpectralError::DegenerateRange { axis }),
        }
    };
    let (k0, k1) = span(k_keys, "k")?;
    let (n0, n1) = span(n_keys, "n")?;
    let alpha = (n1 - n0) / (k1 - k0);
    Ok(Correspondence {
        alpha,
        beta: n0 - alpha * k0,
    })
}

/// Both sweeps together with the correspondence that aligns them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSets {
    pub spectral: ForgottenSets,
    pub model: ForgottenSets,
    pub correspondence: Correspondence,
}

impl SpectralSets {
    /// Fit the correspondence unless `override_with` supplies one.
    pub fn new(
        spectral: ForgottenSets,
        model: ForgottenSets,
        override_with: Option<Correspondence>,
    ) -> Result<Self, SpectralError> {
        let correspondence = match override_with {
            Some(c) => c,
            None => fit_correspondence(&spectral.keys, &model.keys)?,
        };
        Ok(Self {
            spectral,
            model,
            correspondence,
        })
    }
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Intersection counts and ratios over every `(k, n)` pair. Cells with an empty
/// denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapMatrices {
    pub k_keys: Vec<u32>,
    pub n_keys: Vec<u32>,
    pub s_sizes: Vec<usize>,
    pub m_sizes: Vec<usize>,
    pub intersections: Vec<Vec<usize>>,
    /// `|S(k) ∩ M(n)| / |S(k)|`
    pub over_spectral: Vec<Vec<Option<f64>>>,
    /// `|S(k) ∩ M(n)| / |M(n)|`
    pub over_model: Vec<Vec<Option<f64>>>,
    pub correspondence: Correspondence,
}

pub fn overlap_matrices(sets: &SpectralSets) -> OverlapMatrices {
    let s = &sets.spectral;
    let m = &sets.model;
    let intersections: Vec<Vec<usize>> = s
        .sets
        .iter()
        .map(|sk| m.sets.iter().map(|mn| intersection_size(sk, mn)).collect())
        .collect();
    let s_sizes = s.sizes();
    let m_sizes = m.sizes();
    let over_spectral = intersections
        .iter()
        .zip(&s_sizes)
        .map(|(row, &sk)| row.iter().map(|&x| ratio(x, sk)).collect())
        .collect();
    let over_model = intersections
        .iter()
        .map(|row| row.iter().zip(&m_sizes).map(|(&x, &mn)| ratio(x, mn)).collect())
        .collect();
    OverlapMatrices {
        k_keys: s.keys.clone(),
        n_keys: m.keys.clone(),
        s_sizes,
        m_sizes,
        intersections,
        over_spectral,
        over_model,
        correspondence: sets.correspondence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalCell {
    pub k: u32,
    pub n: u32,
    pub over_spectral: Option<f64>,
    pub over_model: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    OverSpectral,
    OverModel,
}

impl OverlapMatrices {
    /// For each `k`, the logged `n` closest to `α k + β` (the smaller on ties).
    pub fn matched_diagonal(&self) -> Vec<DiagonalCell> {
        self.k_keys
            .iter()
            .enumerate()
            .map(|(row, &k)| {
                let target = self.correspondence.apply(k as f64);
                let col = (0..self.n_keys.len())
                    .min_by(|&a, &b| {
                        let da = (self.n_keys[a] as f64 - target).abs();
                        let db = (self.n_keys[b] as f64 - target).abs();
                        da.total_cmp(&db)
                    })
                    .expect("model sweep is nonempty");
                DiagonalCell {
                    k,
                    n: self.n_keys[col],
                    over_spectral: self.over_spectral[row][col],
                    over_model: self.over_model[row][col],
                }
            })
            .collect()
    }

    /// `k` rows by `n` columns; undefined cells are left empty.
    pub fn ratio_csv(&self, kind: RatioKind) -> String {
        let grid = match kind {
            RatioKind::OverSpectral => &self.over_spectral,
            RatioKind::OverModel => &self.over_model,
        };
        let mut out = String::from("k");
        for n in &self.n_keys {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
        for (k, row) in self.k_keys.iter().zip(grid) {
            out.push_str(&k.to_string());
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// `axis,key,size` rows for both size curves.
    pub fn sizes_csv(&self) -> String {
        let mut out = String::from("axis,key,size\n");
        for (k, s) in self.k_keys.iter().zip(&self.s_sizes) {
            out.push_str(&format!("k,{k},{s}\n"));
        }
        for (n, s) in self.n_keys.iter().zip(&self.m_sizes) {
            out.push_str(&format!("n,{n},{s}\n"));
        }
        out
    }

    pub fn header_json(&self) -> Value {
        let mut map = BTreeMap::new();
        map.insert("alpha", Value::from(self.correspondence.alpha));
        map.insert("beta", Value::from(self.correspondence.beta));
        map.insert("k_keys", Value::from(self.k_keys.clone()));
        map.insert("n_keys", Value::from(self.n_keys.clone()));
        serde_json::to_value(map).expect("header serializes")
    }
}

/// Convenience: least-squares map plus `S(k)` on the training points.
pub fn spectral_sets_for(data: &SpectralData, ridge: Option<f64>) -> Result<(DMatrix<f64>, ForgottenSets), SpectralError> {
    let w_opt = optimal_separator(data, ridge)?;
    let sets = spectral_forgotten_sets(data, &w_opt)?;
    Ok((w_opt, sets))
}
