use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    inject_label_noise, pca_rotate, synthesize_gaussian_classes, train_gd_at, GaussianSpec, LinearConfig,
    LinearError, NoiseKind, TargetEncoding, Trajectory,
};
use crate::forget_metrics::{all_examples, forget_curve, ForgetCurve};
use crate::predlog::{NoiseRecord, PredictionLog};
use crate::probs::argmax;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// f32 probabilities whose argmax is still `winner` after rounding.
fn rounded_keeping_winner(row: &[f64], winner: usize) -> Vec<f32> {
    let mut out: Vec<f32> = row.iter().map(|&v| v as f32).collect();
    if argmax(&out) != winner {
        let runner_up = out
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != winner)
            .map(|(_, &v)| v)
            .fold(0.0f32, f32::max);
        out[winner] = runner_up + 1e-6;
    }
    out
}

/// Prediction log of a trajectory on rotated `[d × m]` points.
///
/// Only trajectory points whose step is in `steps` become checkpoints (all of
/// them when `steps` is `None`). Binary separators give `[1 − σ(w·x), σ(w·x)]`;
/// multi-output separators give `softmax(W x)`.
pub fn trajectory_log(
    traj: &Trajectory,
    points: &DMatrix<f64>,
    labels: &[u32],
    steps: Option<&[usize]>,
) -> Result<PredictionLog, LinearError> {
    let w_first = traj.initial();
    if w_first.ncols() != points.nrows() || labels.len() != points.ncols() {
        return Err(LinearError::Dimension(format!(
            "separator is {:?}, points {:?}, {} labels",
            w_first.shape(),
            points.shape(),
            labels.len()
        )));
    }
    let chosen: Vec<_> = traj
        .points
        .iter()
        .filter(|p| steps.is_none_or(|s| s.contains(&p.step)))
        .collect();
    if chosen.is_empty() {
        return Err(LinearError::InvalidConfig("no trajectory step selected".into()));
    }
    let num_classes = if w_first.nrows() == 1 { 2 } else { w_first.nrows() };
    let mut checkpoints = Vec::with_capacity(chosen.len());
    let mut probabilities = Vec::with_capacity(chosen.len() * points.ncols() * num_classes);
    for p in &chosen {
        let step = u32::try_from(p.step)
            .map_err(|_| LinearError::InvalidConfig(format!("step {} exceeds u32", p.step)))?;
        checkpoints.push(step);
        let scores = &p.separator * points;
        for i in 0..points.ncols() {
            let (row, winner) = if scores.nrows() == 1 {
                let p1 = sigmoid(scores[(0, i)]);
                (vec![1.0 - p1, p1], usize::from(scores[(0, i)] > 0.0))
            } else {
                let col: Vec<f64> = scores.column(i).iter().copied().collect();
                let winner = argmax(&col);
                (softmax(&col), winner)
            };
            probabilities.extend(rounded_keeping_winner(&row, winner));
        }
    }
    let log = PredictionLog {
        checkpoints,
        num_examples: points.ncols(),
        num_classes,
        probabilities,
        labels: labels.to_vec(),
        noise: None,
        split_name: "linear".into(),
        metadata: BTreeMap::new(),
    };
    log.validate()
        .map_err(|e| LinearError::InvalidConfig(format!("trajectory log invalid: {e}")))?;
    Ok(log)
}

/// Setup for comparing forgetting on clean and label-noise training sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseForgettingConfig {
    pub data: GaussianSpec,
    pub noise_rate: f64,
    #[serde(default = "default_kind")]
    pub noise_kind: NoiseKind,
    pub depth: usize,
    /// Learning rate expressed as `γ·s_1·L`.
    pub stability_ratio: f64,
    pub steps: usize,
    pub init_scale: f64,
    /// Held-out points drawn per class for the forget curve.
    pub test_per_class: usize,
    /// Approximate number of logged checkpoints, spaced geometrically in `1..=steps`.
    pub checkpoints: usize,
    pub seed: u64,
}

fn default_kind() -> NoiseKind {
    NoiseKind::Symmetric
}

impl Default for NoiseForgettingConfig {
    fn default() -> Self {
        Self {
            data: GaussianSpec {
                per_class: 100,
                num_classes: 2,
                separation: 3.0,
                spectrum: geometric_spectrum(4.0, 0.004, 10),
            },
            noise_rate: 0.3,
            noise_kind: NoiseKind::Symmetric,
            depth: 2,
            stability_ratio: 0.5,
            steps: 3000,
            init_scale: 1e-2,
            test_per_class: 1000,
            checkpoints: 60,
            seed: 0,
        }
    }
}

/// `count` values from `top` down to `bottom`, evenly spaced in log scale.
pub fn geometric_spectrum(top: f64, bottom: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    let ratio = (bottom / top).ln() / (count - 1) as f64;
    (0..count).map(|i| top * (ratio * i as f64).exp()).collect()
}

/// Geometric checkpoint grid in `1..=steps`, always ending at `steps`.
pub fn log_checkpoints(steps: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..count.max(1))
        .map(|i| {
            let t = if count <= 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            ((steps as f64).powf(t).round() as usize).clamp(1, steps.max(1))
        })
        .collect();
    out.push(steps.max(1));
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseForgettingRun {
    pub noise_rate: f64,
    pub stability_product: f64,
    pub max_forget: f64,
    pub final_test_accuracy: f64,
    pub curve: ForgetCurve,
    pub flipped: usize,
}

/// Train on Gaussian classes with a fraction of labels corrupted and measure
/// the forget curve on clean held-out points.
///
/// Every random draw except the noise derives from `seed`, so runs that differ
/// only in `noise_rate` see the same data and initialization.
pub fn run_noise_forgetting(config: &NoiseForgettingConfig) -> Result<NoiseForgettingRun, LinearError> {
    if config.data.num_classes != 2 {
        return Err(LinearError::InvalidConfig("the forgetting experiment is binary".into()));
    }
    let (raw, clean) = synthesize_gaussian_classes(&config.data, config.seed)?;
    let test_spec = GaussianSpec {
        per_class: config.test_per_class,
        ..config.data.clone()
    };
    let (raw_test, test_labels) = synthesize_gaussian_classes(&test_spec, config.seed.wrapping_add(1))?;
    let (noisy, mask) = inject_label_noise(
        &clean,
        2,
        config.noise_rate,
        config.noise_kind,
        config.seed.wrapping_add(2),
    )?;

    let data = pca_rotate(&raw, &noisy, TargetEncoding::Binary)?;
    let gamma = LinearConfig::gamma_for_ratio(config.stability_ratio, &data, config.depth);
    let linear = LinearConfig {
        depth: config.depth,
        gamma,
        steps: config.steps,
        init_scale: config.init_scale,
        hidden_width: None,
        seed: config.seed.wrapping_add(3),
    };
    let checkpoints = log_checkpoints(config.steps, config.checkpoints);
    let traj = train_gd_at(&linear, &data, &checkpoints)?;
    let test_points = data.project(&raw_test)?;
    let mut log = trajectory_log(&traj, &test_points, &test_labels, Some(&checkpoints))?;
    log.split_name = "test".into();
    log.metadata = BTreeMap::from([
        ("noise_rate".to_string(), Value::from(config.noise_rate)),
        ("seed".to_string(), Value::from(config.seed)),
    ]);
    let curve = forget_curve(&log, &all_examples(&log))
        .map_err(|e| LinearError::InvalidConfig(e.to_string()))?;
    Ok(NoiseForgettingRun {
        noise_rate: config.noise_rate,
        stability_product: linear.stability_product(&data),
        max_forget: curve.max_forget(),
        final_test_accuracy: curve.final_accuracy(),
        curve,
        flipped: mask.iter().filter(|&&m| m).count(),
    })
}

/// Training-split log for a noise run, carrying the mask and clean labels.
pub fn noisy_training_log(
    traj: &Trajectory,
    data: &super::SpectralData,
    clean_labels: &[u32],
    mask: &[bool],
) -> Result<PredictionLog, LinearError> {
    let mut log = trajectory_log(traj, &data.x, &data.labels, None)?;
    log.noise = Some(NoiseRecord {
        mask: mask.to_vec(),
        true_labels: clean_labels.to_vec(),
    });
    log.split_name = "train".into();
    log.validate()
        .map_err(|e| LinearError::InvalidConfig(format!("trajectory log invalid: {e}")))?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep_linear::{TrajectoryPoint, TrajectorySource};

    #[test]
    fn sigmoid_probabilities_follow_the_sign() {
        let traj = Trajectory::new(
            TrajectorySource::ClosedForm,
            vec![
                TrajectoryPoint {
                    step: 0,
                    separator: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                    loss: 0.0,
                },
                TrajectoryPoint {
                    step: 5,
                    separator: DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
                    loss: 0.0,
                },
            ],
        )
        .unwrap();
        let points = DMatrix::from_column_slice(2, 2, &[2.0, 0.0, -1.0, 0.0]);
        let log = trajectory_log(&traj, &points, &[1, 0], None).unwrap();
        assert_eq!(log.checkpoints, vec![0, 5]);
        assert_eq!(log.correctness(0), vec![true, true]);
        assert_eq!(log.correctness(1), vec![false, false]);
        let p = log.row(0, 0);
        assert!((p[1] as f64 - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-7);
        let only_last = trajectory_log(&traj, &points, &[1, 0], Some(&[5])).unwrap();
        assert_eq!(only_last.checkpoints, vec![5]);
    }

    #[test]
    fn rounding_never_changes_the_decision() {
        let tiny = 1e-12;
        let row = [0.5 - tiny, 0.5 + tiny];
        let out = rounded_keeping_winner(&row, 1);
        assert_eq!(argmax(&out), 1);
        assert!(((out[0] + out[1]) as f64 - 1.0).abs() < 1e-5);
        assert_eq!(rounded_keeping_winner(&[0.5, 0.5], 0), vec![0.5, 0.5]);
    }

    #[test]
    fn checkpoint_grid() {
        let g = log_checkpoints(1000, 4);
        assert_eq!(g, vec![1, 10, 100, 1000]);
        assert_eq!(log_checkpoints(5, 1), vec![5]);
    }

    #[test]
    fn spectrum_endpoints() {
        let s = geometric_spectrum(4.0, 0.004, 4);
        assert!((s[0] - 4.0).abs() < 1e-12);
        assert!((s[1] - 0.4).abs() < 1e-12);
        assert!((s[3] - 0.004).abs() < 1e-12);
    }

    #[test]
    fn small_noise_run_is_deterministic() {
        let cfg = NoiseForgettingConfig {
            steps: 200,
            test_per_class: 50,
            checkpoints: 10,
            ..Default::default()
        };
        let a = run_noise_forgetting(&cfg).unwrap();
        let b = run_noise_forgetting(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.flipped, 60);
        assert!(a.curve.identity_holds());
        assert!(a.stability_product < 1.0);
    }
}
