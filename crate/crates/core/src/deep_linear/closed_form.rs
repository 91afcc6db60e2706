use nalgebra::DMatrix;

use super::gd::sample_steps;
use super::{LinearConfig, LinearError, SpectralData, Trajectory, TrajectoryPoint, TrajectorySource};

/// `λ_j = 1 − γ s_j L` for every principal coordinate; each must lie in `(-1, 1]`.
pub fn relaxation_factors(config: &LinearConfig, data: &SpectralData) -> Result<Vec<f64>, LinearError> {
    lambdas(&data.curvatures(), config.gamma, config.depth)
}

fn lambdas(curvatures: &[f64], gamma: f64, depth: usize) -> Result<Vec<f64>, LinearError> {
    curvatures
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let lambda = 1.0 - gamma * s * depth as f64;
            if lambda > -1.0 && lambda <= 1.0 {
                Ok(lambda)
            } else {
                Err(LinearError::LambdaOutOfRange { index, lambda })
            }
        })
        .collect()
}

fn check_shapes(w0: &DMatrix<f64>, w_opt: &DMatrix<f64>, d: usize) -> Result<(), LinearError> {
    if w0.shape() != w_opt.shape() || w0.ncols() != d {
        return Err(LinearError::Dimension(format!(
            "w0 is {:?}, w_opt is {:?}, data has {d} coordinates",
            w0.shape(),
            w_opt.shape()
        )));
    }
    Ok(())
}

/// Per-coordinate relaxation `w_j(n) = λ_j^n w_j(0) + (1 − λ_j^n) w_j^opt`,
/// evaluated at [`sample_steps`] of `config.steps`.
pub fn closed_form_trajectory(
    config: &LinearConfig,
    data: &SpectralData,
    w0: &DMatrix<f64>,
    w_opt: &DMatrix<f64>,
) -> Result<Trajectory, LinearError> {
    check_shapes(w0, w_opt, data.dim())?;
    let lambda = relaxation_factors(config, data)?;
    let points = sample_steps(config.steps)
        .into_iter()
        .map(|step| {
            let mut w = w_opt.clone();
            for (j, &l) in lambda.iter().enumerate() {
                let decay = pow_steps(l, step);
                for r in 0..w.nrows() {
                    w[(r, j)] = decay * w0[(r, j)] + (1.0 - decay) * w_opt[(r, j)];
                }
            }
            let loss = data.loss(&w);
            TrajectoryPoint {
                step,
                separator: w,
                loss,
            }
        })
        .collect();
    Trajectory::new(TrajectorySource::ClosedForm, points)
}

fn pow_steps(lambda: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(k) => lambda.powi(k),
        Err(_) => lambda.powf(n as f64),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closed-form margin `F(n) = y · w(n) · x` of a binary point at real `n`,
/// with `λ^n = exp(n ln λ)`. Needs every `λ_j > 0` unless `n` is whole.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_margin(
    x: &[f64],
    y: f64,
    w0: &[f64],
    w_opt: &[f64],
    curvatures: &[f64],
    gamma: f64,
    depth: usize,
    n: f64,
) -> Result<f64, LinearError> {
    check_lengths(x, w0, w_opt, curvatures)?;
    let lambda = lambdas(curvatures, gamma, depth)?;
    let w: Vec<f64> = lambda
        .iter()
        .zip(w0.iter().zip(w_opt))
        .map(|(&l, (&a, &b))| {
            let decay = l.powf(n);
            decay * a + (1.0 - decay) * b
        })
        .collect();
    Ok(y * dot(&w, x))
}

fn check_lengths(x: &[f64], w0: &[f64], w_opt: &[f64], s: &[f64]) -> Result<(), LinearError> {
    let d = x.len();
    if w0.len() != d || w_opt.len() != d || s.len() != d {
        return Err(LinearError::Dimension(format!(
            "x has {d} coordinates, w0 {}, w_opt {}, curvatures {}",
            w0.len(),
            w_opt.len(),
            s.len()
        )));
    }
    Ok(())
}

/// First-order rate of change of the margin at `n = 0`:
/// `−γ y L Σ_j (w_j(0) − w_j^opt) s_j x_j`.
pub fn forget_rate(
    x: &[f64],
    y: f64,
    w0: &[f64],
    w_opt: &[f64],
    curvatures: &[f64],
    gamma: f64,
    depth: usize,
) -> Result<f64, LinearError> {
    check_lengths(x, w0, w_opt, curvatures)?;
    let sum: f64 = (0..x.len())
        .map(|j| (w0[j] - w_opt[j]) * curvatures[j] * x[j])
        .sum();
    Ok(-gamma * y * depth as f64 * sum)
}

/// First recorded step at which an initially correct binary point has margin
/// `≤ 0`. `None` when the point is never forgotten or starts out wrong.
pub fn forget_time(traj: &Trajectory, x: &[f64], y: f64) -> Result<Option<usize>, LinearError> {
    let margins = traj.margins(x, y)?;
    if margins[0] <= 0.0 {
        return Ok(None);
    }
    Ok(margins
        .iter()
        .position(|&m| m <= 0.0)
        .map(|i| traj.points[i].step))
}
