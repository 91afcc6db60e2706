use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{LinearError, SpectralData};

/// How labels become regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetEncoding {
    /// Labels `0`/`1` become a single row of `-1`/`+1`.
    Binary,
    /// Labels become one-hot columns of height `num_classes`.
    OneHot { num_classes: usize },
}

impl TargetEncoding {
    fn name(&self) -> &'static str {
        match self {
            TargetEncoding::Binary => "binary",
            TargetEncoding::OneHot { .. } => "one-hot",
        }
    }

    pub fn num_outputs(&self) -> usize {
        match self {
            TargetEncoding::Binary => 1,
            TargetEncoding::OneHot { num_classes } => *num_classes,
        }
    }

    pub(crate) fn targets(&self, labels: &[u32]) -> Result<DMatrix<f64>, LinearError> {
        let mut y = DMatrix::zeros(self.num_outputs(), labels.len());
        for (i, &label) in labels.iter().enumerate() {
            match self {
                TargetEncoding::Binary if label <= 1 => {
                    y[(0, i)] = if label == 1 { 1.0 } else { -1.0 };
                }
                TargetEncoding::OneHot { num_classes } if (label as usize) < *num_classes => {
                    y[(label as usize, i)] = 1.0;
                }
                _ => {
                    return Err(LinearError::InvalidLabel {
                        label,
                        encoding: self.name(),
                    })
                }
            }
        }
        Ok(y)
    }
}

/// Center `[d × n]` points and express them in the eigenbasis of their
/// scatter matrix, largest eigenvalue first.
///
/// Each basis vector is signed so its largest-magnitude entry is positive
/// (the first such entry on ties), which makes the rotation deterministic.
pub fn pca_rotate(
    raw: &DMatrix<f64>,
    labels: &[u32],
    encoding: TargetEncoding,
) -> Result<SpectralData, LinearError> {
    let (d, n) = raw.shape();
    if n < 2 {
        return Err(LinearError::TooFewPoints { needed: 2, got: n });
    }
    if labels.len() != n {
        return Err(LinearError::Dimension(format!(
            "{} labels for {n} points",
            labels.len()
        )));
    }
    if d == 0 {
        return Err(LinearError::Dimension("points have no features".into()));
    }
    let targets = encoding.targets(labels)?;

    let mean: DVector<f64> = raw.column_mean();
    let mut centered = raw.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    if centered.iter().all(|&v| v == 0.0) {
        return Err(LinearError::DegenerateData);
    }

    let scatter = &centered * centered.transpose();
    let eig = SymmetricEigen::new(scatter);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 1..d {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.set_column(dst, &(v * sign));
    }
    let singular_values = order
        .iter()
        .map(|&j| eig.eigenvalues[j].max(0.0).sqrt())
        .collect();

    let x = basis.transpose() * &centered;
    Ok(SpectralData {
        x,
        targets,
        labels: labels.to_vec(),
        encoding,
        singular_values,
        basis,
        mean,
    })
}
