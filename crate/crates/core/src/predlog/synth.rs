//! Synthetic prediction logs for tests, fuzzing and demos.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use super::{LogError, PredictionLog};
use crate::rng::{self, bounded};

/// How per-checkpoint predictions evolve.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrectnessPlan {
    /// `schedule[checkpoint][example]`: whether the argmax must equal the label.
    Schedule(Vec<Vec<bool>>),
    /// Per-example logits follow a Gaussian random walk drifting toward the
    /// label, which produces both learning and forgetting.
    RandomWalk {
        initial_scale: f64,
        step_scale: f64,
        drift: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_checkpoints: usize,
    pub num_examples: usize,
    pub num_classes: usize,
    pub plan: CorrectnessPlan,
    /// Fixed labels; drawn uniformly when absent.
    pub labels: Option<Vec<u32>>,
    /// Fixed epoch ids; `0..num_checkpoints` when absent.
    pub checkpoint_ids: Option<Vec<u32>>,
}

impl SynthSpec {
    pub fn random_walk(num_checkpoints: usize, num_examples: usize, num_classes: usize) -> Self {
        Self {
            num_checkpoints,
            num_examples,
            num_classes,
            plan: CorrectnessPlan::RandomWalk {
                initial_scale: 1.0,
                step_scale: 0.8,
                drift: 0.25,
            },
            labels: None,
            checkpoint_ids: None,
        }
    }

    pub fn scheduled(schedule: Vec<Vec<bool>>, labels: Vec<u32>, num_classes: usize) -> Self {
        Self {
            num_checkpoints: schedule.len(),
            num_examples: labels.len(),
            num_classes,
            plan: CorrectnessPlan::Schedule(schedule),
            labels: Some(labels),
            checkpoint_ids: None,
        }
    }
}

fn softmax_f32(logits: &[f64]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / total) as f32).collect()
}

/// Generate a valid log from a description. Deterministic given `seed`.
pub fn synthesize_log(spec: &SynthSpec, seed: u64) -> Result<PredictionLog, LogError> {
    let (c, n, k) = (spec.num_checkpoints, spec.num_examples, spec.num_classes);
    if c == 0 || n == 0 || k == 0 {
        return Err(LogError::InvalidSpec("dimensions must be at least 1".into()));
    }
    let mut gen = rng::seeded(seed);
    let labels = match &spec.labels {
        Some(l) if l.len() != n => {
            return Err(LogError::ShapeMismatch {
                field: "labels",
                expected: n,
                found: l.len(),
            })
        }
        Some(l) => l.clone(),
        None => (0..n).map(|_| bounded(&mut gen, k) as u32).collect(),
    };
    let checkpoints = match &spec.checkpoint_ids {
        Some(ids) if ids.len() != c => {
            return Err(LogError::ShapeMismatch {
                field: "checkpoint_ids",
                expected: c,
                found: ids.len(),
            })
        }
        Some(ids) => ids.clone(),
        None => (0..c as u32).collect(),
    };

    let mut probabilities = Vec::with_capacity(c * n * k);
    match &spec.plan {
        CorrectnessPlan::Schedule(schedule) => {
            if schedule.len() != c {
                return Err(LogError::ShapeMismatch {
                    field: "schedule",
                    expected: c,
                    found: schedule.len(),
                });
            }
            for (ck, flags) in schedule.iter().enumerate() {
                if flags.len() != n {
                    return Err(LogError::ShapeMismatch {
                        field: "schedule",
                        expected: n,
                        found: flags.len(),
                    });
                }
                for (i, &correct) in flags.iter().enumerate() {
                    if !correct && k < 2 {
                        return Err(LogError::InvalidSpec(format!(
                            "checkpoint {ck} example {i} scheduled incorrect with a single class"
                        )));
                    }
                    let label = labels[i] as usize;
                    let winner = if correct {
                        label
                    } else {
                        let r = bounded(&mut gen, k - 1);
                        if r < label {
                            r
                        } else {
                            r + 1
                        }
                    };
                    let mut logits: Vec<f64> =
                        (0..k).map(|_| gen.sample::<f64, _>(StandardNormal)).collect();
                    let runner_up = logits
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != winner)
                        .map(|(_, &z)| z)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if k > 1 {
                        logits[winner] = runner_up + 1.0 + gen.random::<f64>();
                    }
                    probabilities.extend(softmax_f32(&logits));
                }
            }
        }
        CorrectnessPlan::RandomWalk {
            initial_scale,
            step_scale,
            drift,
        } => {
            let mut logits: Vec<f64> = (0..n * k)
                .map(|_| initial_scale * gen.sample::<f64, _>(StandardNormal))
                .collect();
            for _ in 0..c {
                for (i, row) in logits.chunks_exact_mut(k).enumerate() {
                    for (j, z) in row.iter_mut().enumerate() {
                        *z += step_scale * gen.sample::<f64, _>(StandardNormal);
                        if j == labels[i] as usize {
                            *z += drift;
                        }
                    }
                    probabilities.extend(softmax_f32(row));
                }
            }
        }
    }

    let log = PredictionLog {
        checkpoints,
        num_examples: n,
        num_classes: k,
        probabilities,
        labels,
        noise: None,
        split_name: "synthetic".into(),
        metadata: BTreeMap::from([("generator_seed".to_string(), Value::from(seed))]),
    };
    log.validate()?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> (Vec<Vec<bool>>, Vec<u32>) {
        let t = |v: [u8; 4]| v.iter().map(|&b| b == 1).collect::<Vec<_>>();
        (
            vec![t([1, 0, 1, 0]), t([1, 1, 0, 0]), t([1, 1, 0, 1])],
            vec![0, 1, 2, 1],
        )
    }

    #[test]
    fn schedule_is_honoured() {
        let (schedule, labels) = table();
        let log = synthesize_log(&SynthSpec::scheduled(schedule.clone(), labels, 3), 9).unwrap();
        for (ck, flags) in schedule.iter().enumerate() {
            assert_eq!(&log.correctness(ck), flags);
        }
    }

    #[test]
    fn all_correct_schedule_gives_full_accuracy() {
        let schedule = vec![vec![true; 20]; 4];
        let labels = (0..20).map(|i| i % 5).collect();
        let log = synthesize_log(&SynthSpec::scheduled(schedule, labels, 5), 1).unwrap();
        for ck in 0..4 {
            assert!(log.correctness(ck).iter().all(|&c| c));
        }
    }

    #[test]
    fn seeds_change_values_not_compliance() {
        let (schedule, labels) = table();
        let spec = SynthSpec::scheduled(schedule.clone(), labels, 3);
        let a = synthesize_log(&spec, 1).unwrap();
        let b = synthesize_log(&spec, 2).unwrap();
        assert_ne!(a.probabilities, b.probabilities);
        for ck in 0..3 {
            assert_eq!(a.correctness(ck), schedule[ck]);
            assert_eq!(b.correctness(ck), schedule[ck]);
        }
    }

    #[test]
    fn schedule_shape_mismatch() {
        let spec = SynthSpec {
            num_checkpoints: 2,
            ..SynthSpec::scheduled(vec![vec![true; 3]], vec![0, 0, 0], 2)
        };
        assert_eq!(synthesize_log(&spec, 0).unwrap_err().kind(), "shape_mismatch");
        let ragged = SynthSpec::scheduled(vec![vec![true; 3], vec![true; 2]], vec![0, 0, 0], 2);
        assert_eq!(synthesize_log(&ragged, 0).unwrap_err().kind(), "shape_mismatch");
    }

    #[test]
    fn random_walk_is_valid_and_deterministic() {
        let spec = SynthSpec::random_walk(7, 40, 4);
        let a = synthesize_log(&spec, 5).unwrap();
        assert_eq!(a, synthesize_log(&spec, 5).unwrap());
        a.validate().unwrap();
    }
}
