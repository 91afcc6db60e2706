use nalgebra::DMatrix;

use super::{LinearError, SpectralData};

/// Gram eigenvalue ratio below which the problem counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Least-squares minimiser of `½ ‖W X − Y‖²` over the collapsed map `W` (`[c × d]`).
///
/// With `ridge = Some(r)` the Gram matrix is regularised by `r·I`, which also
/// lifts the rank requirement.
pub fn optimal_separator(data: &SpectralData, ridge: Option<f64>) -> Result<DMatrix<f64>, LinearError> {
    let d = data.dim();
    let mut gram = &data.x * data.x.transpose();
    let s = data.curvatures();
    let top = s[0];
    let bottom = s[d - 1];
    match ridge {
        Some(r) if !(r >= 0.0 && r.is_finite()) => {
            return Err(LinearError::InvalidConfig(format!("ridge {r} must be non-negative")));
        }
        Some(r) => {
            for j in 0..d {
                gram[(j, j)] += r;
            }
        }
        None => {}
    }
    let effective_ratio = (bottom + ridge.unwrap_or(0.0)) / (top + ridge.unwrap_or(0.0));
    if !(effective_ratio > RANK_TOLERANCE) {
        return Err(LinearError::RankDeficient { ratio: bottom / top });
    }
    let rhs = data.x.clone() * data.targets.transpose();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(LinearError::RankDeficient { ratio: bottom / top })?;
    let mut wt = chol.solve(&rhs);
    // one refinement pass against round-off
    let residual = &rhs - &gram * &wt;
    wt += chol.solve(&residual);
    Ok(wt.transpose())
}
