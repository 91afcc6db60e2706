use serde::{Deserialize, Serialize};

use super::LinearError;
use crate::rng::{self, bounded, round_half_up};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// A selected label moves to one of the other classes uniformly.
    Symmetric,
    /// A selected label `l` becomes `(l + 1) mod c`.
    Asymmetric,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(NoiseKind::Symmetric),
            "asymmetric" => Ok(NoiseKind::Asymmetric),
            other => Err(format!("unknown noise kind {other:?}")),
        }
    }
}

/// Corrupt exactly `round(p·n)` labels.
///
/// The selected indices are the first `round(p·n)` entries of a seeded
/// shuffle of `0..n`. They are then visited in ascending order; for
/// symmetric noise each draws `r = bounded(c − 1)` and takes class `r` if
/// `r < l`, else `r + 1`. Returns the noisy labels and the mask of changed
/// positions.
pub fn inject_label_noise(
    labels: &[u32],
    num_classes: usize,
    p: f64,
    kind: NoiseKind,
    seed: u64,
) -> Result<(Vec<u32>, Vec<bool>), LinearError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LinearError::InvalidNoiseRate(p));
    }
    if num_classes < 2 {
        return Err(LinearError::TooFewClasses);
    }
    if let Some(&label) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(LinearError::InvalidLabel {
            label,
            encoding: "class-index",
        });
    }
    let n = labels.len();
    let mut gen = rng::seeded(seed);
    let mut selected = rng::shuffled_indices(n, &mut gen);
    selected.truncate(round_half_up(p * n as f64).min(n));
    selected.sort_unstable();

    let mut noisy = labels.to_vec();
    let mut mask = vec![false; n];
    for i in selected {
        let l = labels[i] as usize;
        let new = match kind {
            NoiseKind::Symmetric => {
                let r = bounded(&mut gen, num_classes - 1);
                if r < l {
                    r
                } else {
                    r + 1
                }
            }
            NoiseKind::Asymmetric => (l + 1) % num_classes,
        };
        noisy[i] = new as u32;
        mask[i] = true;
    }
    Ok((noisy, mask))
}
