//! Knowledge Fusion: combine the final model with window-averaged earlier
//! checkpoints that got right what the final model gets wrong.
//!
//! Fitting is greedy on a validation set. Each round scores every remaining
//! candidate checkpoint by how much of the validation set it classifies
//! correctly while the current fused predictor does not, takes the best one,
//! averages its probabilities over a window of neighbouring epochs, and grid
//! searches the mixing weight `eps` of
//!
//! ```text
//! fused <- eps * window_mean(A) + (1 - eps) * fused
//! ```
//!
//! Rounds continue until no weight `eps > 0` improves validation accuracy, the
//! candidates run out, or an optional step budget is spent. Inference replays
//! the fitted steps in order, starting from the final checkpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forget_metrics::{check_subset, MetricsError};
use crate::predlog::PredictionLog;
use crate::probs::{argmax, mix_value, ProbMatrix};

pub const DEFAULT_WINDOW: u32 = 1;
pub const DEFAULT_EPS_STEP: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Subset(#[from] MetricsError),
    #[error("checkpoint {0} is not in the log")]
    UnknownCheckpoint(u32),
    #[error("epsilon grid step {0} does not divide 1 evenly")]
    InvalidEpsStep(f64),
    #[error("epsilon {0} outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("matrix has {rows} rows and {classes} classes, log has {examples} examples and {log_classes} classes")]
    DimensionMismatch {
        rows: usize,
        classes: usize,
        examples: usize,
        log_classes: usize,
    },
    #[error("validation and test sets share example {0}")]
    OverlappingSets(usize),
}

impl FusionError {
    pub fn kind(&self) -> &'static str {
        match self {
            FusionError::Subset(e) => e.kind(),
            FusionError::UnknownCheckpoint(_) => "unknown_checkpoint",
            FusionError::InvalidEpsStep(_) => "invalid_eps_step",
            FusionError::InvalidEpsilon(_) => "invalid_epsilon",
            FusionError::DimensionMismatch { .. } => "dimension_mismatch",
            FusionError::OverlappingSets(_) => "overlapping_sets",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStep {
    pub epoch: u32,
    pub epsilon: f64,
}

/// Output of fitting: ordered alternative epochs with their weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub window: u32,
    pub eps_grid_step: f64,
    pub steps: Vec<FusionStep>,
    /// Validation accuracy of the final model, then after each accepted step.
    pub val_accuracy_trace: Vec<f64>,
    pub split_seed: Option<u64>,
}

impl FusionPlan {
    pub fn empty(window: u32, eps_grid_step: f64) -> Self {
        Self {
            window,
            eps_grid_step,
            steps: Vec::new(),
            val_accuracy_trace: Vec::new(),
            split_seed: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub window: u32,
    pub eps_step: f64,
    /// Upper bound on accepted steps; `Some(1)` gives the single-step variant.
    pub max_steps: Option<usize>,
    /// Recorded in the plan for provenance only.
    pub split_seed: Option<u64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            eps_step: DEFAULT_EPS_STEP,
            max_steps: None,
            split_seed: None,
        }
    }
}

/// Grid `{0, 1/m, ..., 1}` for a step `1/m`.
pub fn eps_grid(step: f64) -> Result<Vec<f64>, FusionError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(FusionError::InvalidEpsStep(step));
    }
    let m = (1.0 / step).round();
    if (m * step - 1.0).abs() > 1e-9 {
        return Err(FusionError::InvalidEpsStep(step));
    }
    let m = m as usize;
    Ok((0..=m).map(|i| i as f64 / m as f64).collect())
}

/// Checkpoint positions whose epoch id lies within `w` of `center`.
fn window_positions(log: &PredictionLog, center: u32, w: u32) -> Vec<usize> {
    let lo = center.saturating_sub(w);
    let hi = center.saturating_add(w);
    (0..log.num_checkpoints())
        .filter(|&ck| (lo..=hi).contains(&log.checkpoints[ck]))
        .collect()
}

/// Window mean restricted to `rows`, summed in ascending checkpoint order.
fn window_rows(log: &PredictionLog, center: u32, w: u32, rows: &[usize]) -> ProbMatrix {
    let positions = window_positions(log, center, w);
    let k = log.num_classes;
    let mut out = ProbMatrix::zeros(rows.len(), k);
    for &ck in &positions {
        for (r, &i) in rows.iter().enumerate() {
            for (acc, &p) in out.row_mut(r).iter_mut().zip(log.row(ck, i)) {
                *acc += p as f64;
            }
        }
    }
    let count = positions.len() as f64;
    for r in 0..rows.len() {
        for v in out.row_mut(r) {
            *v /= count;
        }
    }
    out
}

/// Mean probability matrix over the logged checkpoints with epoch ids in
/// `[center - w, center + w]`; the window is clipped at the ends of the log.
pub fn window_average(log: &PredictionLog, center: u32, w: u32) -> Result<ProbMatrix, FusionError> {
    log.index_of(center)
        .ok_or(FusionError::UnknownCheckpoint(center))?;
    let rows: Vec<usize> = (0..log.num_examples).collect();
    Ok(window_rows(log, center, w, &rows))
}

/// Per checkpoint, the count of `rows` that the checkpoint classifies
/// correctly while `current_pred` (aligned with `rows`) does not.
fn forget_counts(log: &PredictionLog, current_pred: &[usize], rows: &[usize]) -> Vec<usize> {
    (0..log.num_checkpoints())
        .into_par_iter()
        .map(|ck| {
            rows.iter()
                .zip(current_pred)
                .filter(|&(&i, &pred)| {
                    let label = log.labels[i] as usize;
                    pred != label && log.is_correct(ck, i)
                })
                .count()
        })
        .collect()
}

/// Forget fraction of every checkpoint with `current` standing in for the
/// final model. `current` covers all examples of the log.
pub fn forget_relative(
    current: &ProbMatrix,
    log: &PredictionLog,
    subset: &[usize],
) -> Result<Vec<f64>, FusionError> {
    if current.num_rows() != log.num_examples || current.num_classes() != log.num_classes {
        return Err(FusionError::DimensionMismatch {
            rows: current.num_rows(),
            classes: current.num_classes(),
            examples: log.num_examples,
            log_classes: log.num_classes,
        });
    }
    check_subset(subset, log.num_examples)?;
    let pred: Vec<usize> = subset.iter().map(|&i| argmax(current.row(i))).collect();
    Ok(forget_counts(log, &pred, subset)
        .into_iter()
        .map(|c| c as f64 / subset.len() as f64)
        .collect())
}

fn correct_count(probs: &ProbMatrix, labels: &[u32], rows: &[usize]) -> usize {
    rows.iter()
        .enumerate()
        .filter(|&(r, &i)| argmax(probs.row(r)) == labels[i] as usize)
        .count()
}

/// Correct count of `eps * alt + (1 - eps) * current` without materialising it.
fn mixed_correct_count(
    current: &ProbMatrix,
    alt: &ProbMatrix,
    eps: f64,
    labels: &[u32],
    rows: &[usize],
) -> usize {
    let mut buf = vec![0.0; current.num_classes()];
    rows.iter()
        .enumerate()
        .filter(|&(r, &i)| {
            for ((b, &c), &a) in buf.iter_mut().zip(current.row(r)).zip(alt.row(r)) {
                *b = mix_value(c, a, eps);
            }
            argmax(&buf) == labels[i] as usize
        })
        .count()
}

/// Greedy validation-driven fit of a fusion plan.
pub fn fit_fusion_plan(
    log: &PredictionLog,
    val: &[usize],
    opts: &FitOptions,
) -> Result<FusionPlan, FusionError> {
    check_subset(val, log.num_examples)?;
    let grid = eps_grid(opts.eps_step)?;
    let w = opts.window;
    let last = log.final_index();
    let final_epoch = log.final_epoch();
    let n_val = val.len() as f64;

    let mut current = log.prob_matrix(last).select_rows(val);
    let mut current_correct = correct_count(&current, &log.labels, val);
    let mut plan = FusionPlan {
        window: w,
        eps_grid_step: opts.eps_step,
        steps: Vec::new(),
        val_accuracy_trace: vec![current_correct as f64 / n_val],
        split_seed: opts.split_seed,
    };

    // Epoch ids still eligible; the final model and its window never are.
    let mut explore: Vec<u32> = log
        .checkpoints
        .iter()
        .copied()
        .filter(|&e| final_epoch.abs_diff(e) > w)
        .collect();

    while !explore.is_empty() && opts.max_steps.is_none_or(|m| plan.steps.len() < m) {
        let pred = current.predictions();
        let counts = forget_counts(log, &pred, val);
        // earliest epoch wins ties: explore is ascending and max_by_key keeps the last max
        let alt = explore
            .iter()
            .rev()
            .copied()
            .max_by_key(|&e| counts[log.index_of(e).expect("explore holds logged epochs")])
            .expect("explore is nonempty");
        explore.retain(|&e| e.abs_diff(alt) > w);

        let alt_probs = window_rows(log, alt, w, val);
        let scores: Vec<usize> = grid
            .par_iter()
            .map(|&eps| mixed_correct_count(&current, &alt_probs, eps, &log.labels, val))
            .collect();
        // smallest eps among the best; eps = 0 reproduces the current accuracy
        let (best_idx, &best_correct) = scores
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|&(_, &c)| c)
            .expect("grid is nonempty");
        debug_assert!(best_correct >= current_correct);
        if best_idx == 0 {
            break;
        }
        let eps = grid[best_idx];
        current = current.mix(&alt_probs, eps);
        current_correct = best_correct;
        plan.steps.push(FusionStep { epoch: alt, epsilon: eps });
        plan.val_accuracy_trace.push(current_correct as f64 / n_val);
    }
    Ok(plan)
}

/// Predictor that replays a plan over a log.
#[derive(Debug, Clone, Copy)]
pub struct FusedPredictor<'a> {
    pub log: &'a PredictionLog,
    pub plan: &'a FusionPlan,
}

impl<'a> FusedPredictor<'a> {
    pub fn new(log: &'a PredictionLog, plan: &'a FusionPlan) -> Result<Self, FusionError> {
        for step in &plan.steps {
            log.index_of(step.epoch)
                .ok_or(FusionError::UnknownCheckpoint(step.epoch))?;
            if !(0.0..=1.0).contains(&step.epsilon) {
                return Err(FusionError::InvalidEpsilon(step.epsilon));
            }
        }
        Ok(Self { log, plan })
    }

    /// Fused probabilities for `rows`, in row order.
    pub fn probabilities(&self, rows: &[usize]) -> Result<ProbMatrix, FusionError> {
        check_subset(rows, self.log.num_examples)?;
        let mut prob = self.log.prob_matrix(self.log.final_index()).select_rows(rows);
        for step in &self.plan.steps {
            let alt = window_rows(self.log, step.epoch, self.plan.window, rows);
            prob = prob.mix(&alt, step.epsilon);
        }
        Ok(prob)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    /// Rows follow the order of the requested subset.
    pub probabilities: ProbMatrix,
    pub predictions: Vec<usize>,
}

pub fn apply_fusion(
    log: &PredictionLog,
    plan: &FusionPlan,
    subset: &[usize],
) -> Result<FusedOutput, FusionError> {
    let probabilities = FusedPredictor::new(log, plan)?.probabilities(subset)?;
    let predictions = probabilities.predictions();
    Ok(FusedOutput {
        probabilities,
        predictions,
    })
}

/// One row of a method comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub method: String,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub single_model_accuracy: f64,
    pub improvement: f64,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "method,val_acc,test_acc,single_acc,improvement";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method,
            self.val_accuracy,
            self.test_accuracy,
            self.single_model_accuracy,
            self.improvement
        )
    }
}

pub fn reports_to_csv(reports: &[EvaluationReport]) -> String {
    let mut out = format!("{}\n", EvaluationReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub(crate) fn check_disjoint(
    val: &[usize],
    test: &[usize],
    num_examples: usize,
) -> Result<(), FusionError> {
    check_subset(val, num_examples)?;
    check_subset(test, num_examples)?;
    let mut seen = vec![false; num_examples];
    for &i in val {
        seen[i] = true;
    }
    match test.iter().find(|&&i| seen[i]) {
        Some(&i) => Err(FusionError::OverlappingSets(i)),
        None => Ok(()),
    }
}

fn subset_accuracy(probs: &ProbMatrix, labels: &[u32], rows: &[usize]) -> f64 {
    correct_count(probs, labels, rows) as f64 / rows.len() as f64
}

/// Validation and test accuracy of an arbitrary predictor over all examples,
/// next to the final model's test accuracy.
pub fn evaluate_probs(
    method: &str,
    probs: &ProbMatrix,
    log: &PredictionLog,
    val: &[usize],
    test: &[usize],
) -> Result<EvaluationReport, FusionError> {
    check_disjoint(val, test, log.num_examples)?;
    let single = subset_accuracy(
        &log.prob_matrix(log.final_index()).select_rows(test),
        &log.labels,
        test,
    );
    let test_accuracy = subset_accuracy(&probs.select_rows(test), &log.labels, test);
    Ok(EvaluationReport {
        method: method.to_string(),
        val_accuracy: subset_accuracy(&probs.select_rows(val), &log.labels, val),
        test_accuracy,
        single_model_accuracy: single,
        improvement: test_accuracy - single,
    })
}

pub fn evaluate_plan(
    log: &PredictionLog,
    plan: &FusionPlan,
    val: &[usize],
    test: &[usize],
) -> Result<EvaluationReport, FusionError> {
    check_disjoint(val, test, log.num_examples)?;
    let all: Vec<usize> = (0..log.num_examples).collect();
    let fused = FusedPredictor::new(log, plan)?.probabilities(&all)?;
    evaluate_probs("knowledge_fusion", &fused, log, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forget_metrics::{fixtures::table_log, forget_curve};
    use crate::predlog::{synthesize_log, SynthSpec};
    use std::collections::BTreeMap;

    fn log_from_rows(checkpoints: Vec<u32>, k: usize, labels: Vec<u32>, probs: Vec<f32>) -> PredictionLog {
        let log = PredictionLog {
            checkpoints,
            num_examples: labels.len(),
            num_classes: k,
            probabilities: probs,
            labels,
            noise: None,
            split_name: "test".into(),
            metadata: BTreeMap::new(),
        };
        log.validate().unwrap();
        log
    }

    #[test]
    fn grid_values() {
        assert_eq!(eps_grid(0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(eps_grid(0.01).unwrap().len(), 101);
        assert_eq!(eps_grid(0.01).unwrap()[7], 0.07);
        assert!(eps_grid(0.3).is_err());
        assert!(eps_grid(0.0).is_err());
    }

    #[test]
    fn window_zero_is_center() {
        let log = table_log();
        let m = window_average(&log, 1, 0).unwrap();
        assert_eq!(m, log.prob_matrix(1));
    }

    #[test]
    fn window_clips_at_first_checkpoint() {
        let log = table_log();
        let m = window_average(&log, 0, 1).unwrap();
        let (a, b) = (log.prob_matrix(0), log.prob_matrix(1));
        for (i, v) in m.as_slice().iter().enumerate() {
            assert_eq!(*v, (a.as_slice()[i] + b.as_slice()[i]) / 2.0);
        }
        assert_eq!(window_average(&log, 5, 1), Err(FusionError::UnknownCheckpoint(5)));
    }

    #[test]
    fn window_of_three_hand_mean() {
        let log = log_from_rows(
            vec![0, 1, 2],
            2,
            vec![0],
            vec![0.5, 0.5, 0.25, 0.75, 1.0, 0.0],
        );
        let m = window_average(&log, 1, 1).unwrap();
        assert_eq!(m.row(0), &[0.5833333333333334, 0.4166666666666667]);
    }

    #[test]
    fn window_uses_epoch_ids_not_positions() {
        // ids 0, 5, 6: a window of 1 around 5 holds {5, 6} only
        let log = log_from_rows(
            vec![0, 5, 6],
            2,
            vec![0],
            vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
        );
        assert_eq!(window_average(&log, 5, 1).unwrap().row(0), &[0.25, 0.75]);
    }

    #[test]
    fn forget_relative_reduces_to_forget_curve() {
        let log = table_log();
        let all = [0, 1, 2, 3];
        let scores = forget_relative(&log.prob_matrix(2), &log, &all).unwrap();
        // e1 gets {0, 1} right and the final model only misses 2
        assert_eq!(scores, vec![0.25, 0.0, 0.0]);
        let curve = forget_curve(&log, &all).unwrap();
        for (i, s) in scores.iter().enumerate() {
            assert_eq!(*s, curve.forget(i));
        }
    }

    #[test]
    fn forget_relative_perfect_current_scores_zero() {
        let log = table_log();
        let mut perfect = ProbMatrix::zeros(4, 3);
        for (i, &l) in log.labels.iter().enumerate() {
            perfect.row_mut(i)[l as usize] = 1.0;
        }
        let scores = forget_relative(&perfect, &log, &[0, 1, 2, 3]).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_checkpoint_gives_empty_plan() {
        let log = synthesize_log(&SynthSpec::random_walk(1, 30, 3), 2).unwrap();
        let val: Vec<usize> = (0..30).collect();
        let plan = fit_fusion_plan(&log, &val, &FitOptions::default()).unwrap();
        assert!(plan.steps.is_empty());
        let fused = apply_fusion(&log, &plan, &val).unwrap();
        assert_eq!(fused.predictions, log.predictions(0));
    }

    #[test]
    fn perfect_final_model_gives_empty_plan() {
        let mut schedule = vec![vec![false; 10]; 5];
        schedule.push(vec![true; 10]);
        let labels = (0..10).map(|i| i % 3).collect();
        let log = synthesize_log(&SynthSpec::scheduled(schedule, labels, 3), 4).unwrap();
        let val: Vec<usize> = (0..10).collect();
        let plan = fit_fusion_plan(&log, &val, &FitOptions::default()).unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(plan.val_accuracy_trace, vec![1.0]);
    }

    #[test]
    fn single_full_weight_step_reproduces_checkpoint() {
        let log = synthesize_log(&SynthSpec::random_walk(4, 25, 4), 8).unwrap();
        let plan = FusionPlan {
            window: 0,
            eps_grid_step: 0.01,
            steps: vec![FusionStep { epoch: 1, epsilon: 1.0 }],
            val_accuracy_trace: vec![],
            split_seed: None,
        };
        let rows: Vec<usize> = (0..25).collect();
        let fused = apply_fusion(&log, &plan, &rows).unwrap();
        assert_eq!(fused.predictions, log.predictions(1));
        let missing = FusionPlan {
            steps: vec![FusionStep { epoch: 9, epsilon: 0.5 }],
            ..plan
        };
        assert_eq!(
            apply_fusion(&log, &missing, &rows).unwrap_err(),
            FusionError::UnknownCheckpoint(9)
        );
    }

    #[test]
    fn empty_plan_has_zero_improvement() {
        let log = synthesize_log(&SynthSpec::random_walk(3, 20, 3), 1).unwrap();
        let (val, test): (Vec<usize>, Vec<usize>) = (0..20).partition(|i| i % 2 == 0);
        let report = evaluate_plan(&log, &FusionPlan::empty(1, 0.01), &val, &test).unwrap();
        assert_eq!(report.improvement, 0.0);
        assert_eq!(
            evaluate_plan(&log, &FusionPlan::empty(1, 0.01), &val, &val).unwrap_err().kind(),
            "overlapping_sets"
        );
    }

    #[test]
    fn max_steps_bounds_plan_length() {
        let log = synthesize_log(&SynthSpec::random_walk(30, 200, 5), 3).unwrap();
        let val: Vec<usize> = (0..100).collect();
        let opts = FitOptions {
            max_steps: Some(1),
            ..FitOptions::default()
        };
        assert!(fit_fusion_plan(&log, &val, &opts).unwrap().steps.len() <= 1);
    }

    #[test]
    fn plan_json_shape() {
        let plan = FusionPlan {
            window: 1,
            eps_grid_step: 0.01,
            steps: vec![FusionStep { epoch: 3, epsilon: 0.25 }],
            val_accuracy_trace: vec![0.5, 0.75],
            split_seed: Some(4),
        };
        let v: serde_json::Value = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(v["steps"][0]["epoch"], 3);
        assert_eq!(v["steps"][0]["epsilon"], 0.25);
        assert_eq!(v["split_seed"], 4);
        assert_eq!(FusionPlan::from_json(&plan.to_json()).unwrap(), plan);
    }
}
