use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LinearConfig, LinearError, SpectralData, Trajectory, TrajectoryPoint, TrajectorySource};
use crate::rng::{self, Generator};

/// Runs up to this many steps are recorded at every iteration.
pub const DENSE_SAMPLING_LIMIT: usize = 2000;

/// Recorded iterations for a run of `n` steps: all of them up to
/// [`DENSE_SAMPLING_LIMIT`], otherwise `0` plus a geometric grid ending at `n`.
pub fn sample_steps(n: usize) -> Vec<usize> {
    if n <= DENSE_SAMPLING_LIMIT {
        return (0..=n).collect();
    }
    let count = DENSE_SAMPLING_LIMIT;
    let ln_n = (n as f64).ln();
    let mut steps = vec![0];
    for i in 0..count {
        let s = ((ln_n * i as f64 / (count - 1) as f64).exp().round() as usize).clamp(1, n);
        if *steps.last().unwrap() != s {
            steps.push(s);
        }
    }
    if *steps.last().unwrap() != n {
        steps.push(n);
    }
    steps
}

fn gaussian(rows: usize, cols: usize, gen: &mut Generator) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gen.sample::<f64, _>(StandardNormal))
}

fn orthonormal_columns(rows: usize, cols: usize, gen: &mut Generator) -> DMatrix<f64> {
    gaussian(rows, cols, gen).qr().q()
}

fn product(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut p = factors[0].clone();
    for w in &factors[1..] {
        p = w * p;
    }
    p
}

fn check_config(config: &LinearConfig, data: &SpectralData) -> Result<usize, LinearError> {
    if config.depth == 0 {
        return Err(LinearError::InvalidConfig("depth must be at least 1".into()));
    }
    if !(config.gamma >= 0.0 && config.gamma.is_finite()) {
        return Err(LinearError::InvalidConfig(format!("learning rate {} must be non-negative", config.gamma)));
    }
    if !(config.init_scale > 0.0 && config.init_scale.is_finite()) {
        return Err(LinearError::InvalidConfig(format!("init_scale {} must be positive", config.init_scale)));
    }
    let product = config.stability_product(data);
    if product >= 1.0 {
        return Err(LinearError::Stability { product });
    }
    let (d, c) = (data.dim(), data.num_outputs());
    let width = config.hidden_width.unwrap_or(d + c);
    if config.depth > 1 && width < d + c {
        return Err(LinearError::InvalidConfig(format!(
            "hidden width {width} must be at least d + c = {}",
            d + c
        )));
    }
    Ok(width)
}

/// Factors `[W_1, …, W_L]` whose product is a small random map
/// `init_scale · G / √d` with `G` standard normal.
///
/// For `L > 1` the factors are near-isometries: `W_1` has orthonormal
/// columns, hidden factors are orthogonal and `W_L` completes the product with
/// `W_L W_Lᵀ = I`. Every factor then passes the end-to-end gradient through
/// unchanged, so the collapsed map moves at rate `γ L` per unit curvature.
pub fn initial_factors(config: &LinearConfig, data: &SpectralData) -> Result<Vec<DMatrix<f64>>, LinearError> {
    let width = check_config(config, data)?;
    let (d, c) = (data.dim(), data.num_outputs());
    let mut gen = rng::seeded(config.seed);
    let w0 = gaussian(c, d, &mut gen) * (config.init_scale / (d as f64).sqrt());
    if config.depth == 1 {
        return Ok(vec![w0]);
    }

    let mut factors = vec![orthonormal_columns(width, d, &mut gen)];
    for _ in 0..config.depth - 2 {
        factors.push(orthonormal_columns(width, width, &mut gen));
    }
    let p = product(&factors);
    let mut extended = DMatrix::zeros(width, width);
    extended.view_mut((0, 0), (width, d)).copy_from(&p);
    extended
        .view_mut((0, d), (width, width - d))
        .copy_from(&gaussian(width, width - d, &mut gen));
    let q = extended.qr().q();
    let complement = q.columns(d, c).into_owned();

    // C = (I − w0 w0ᵀ)^{1/2}
    let gap = DMatrix::<f64>::identity(c, c) - &w0 * w0.transpose();
    let eig = SymmetricEigen::new(gap);
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return Err(LinearError::InvalidConfig(format!(
            "init_scale {} too large for a balanced start",
            config.init_scale
        )));
    }
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let last = &w0 * p.transpose() + root * complement.transpose();
    factors.push(last);
    Ok(factors)
}

/// Full-batch GD on all factors, recording the product at [`sample_steps`].
pub fn train_gd(config: &LinearConfig, data: &SpectralData) -> Result<Trajectory, LinearError> {
    train_gd_at(config, data, &sample_steps(config.steps))
}

/// Like [`train_gd`] with caller-chosen recorded steps (`0` is always
/// recorded; steps past `config.steps` are ignored).
pub fn train_gd_at(config: &LinearConfig, data: &SpectralData, record: &[usize]) -> Result<Trajectory, LinearError> {
    let mut factors = initial_factors(config, data)?;
    let mut wanted: Vec<usize> = record.iter().copied().filter(|&s| s <= config.steps).collect();
    wanted.push(0);
    wanted.sort_unstable();
    wanted.dedup();

    let gram = &data.x * data.x.transpose();
    let cross = &data.targets * data.x.transpose();
    let target_energy = data.targets.norm_squared();
    let loss_of = |w: &DMatrix<f64>| {
        let wg = w * &gram;
        0.5 * (w.dot(&wg) - 2.0 * w.dot(&cross) + target_energy)
    };
    let product_check = config.stability_product(data);
    let depth = factors.len();

    let mut w = product(&factors);
    let initial_loss = loss_of(&w);
    let mut points = Vec::with_capacity(wanted.len());
    let mut next = 0;
    for step in 0..=config.steps {
        let loss = loss_of(&w);
        if !loss.is_finite() || loss > 10.0 * initial_loss.max(f64::MIN_POSITIVE) {
            return Err(LinearError::Diverged {
                step,
                loss,
                initial: initial_loss,
                product: product_check,
            });
        }
        if next < wanted.len() && wanted[next] == step {
            points.push(TrajectoryPoint {
                step,
                separator: w.clone(),
                loss,
            });
            next += 1;
        }
        if step == config.steps {
            break;
        }
        let grad = &w * &gram - &cross;
        if depth == 1 {
            factors[0] -= grad * config.gamma;
        } else {
            // prefix[l] = W_{l-1} ⋯ W_1 (identity for l = 0), suffix[l] = W_L ⋯ W_{l+1}
            let mut prefix = Vec::with_capacity(depth);
            prefix.push(DMatrix::<f64>::identity(data.dim(), data.dim()));
            for l in 1..depth {
                let p = &factors[l - 1] * &prefix[l - 1];
                prefix.push(p);
            }
            let mut suffix = vec![DMatrix::<f64>::identity(data.num_outputs(), data.num_outputs()); depth];
            for l in (0..depth - 1).rev() {
                suffix[l] = &suffix[l + 1] * &factors[l + 1];
            }
            for l in 0..depth {
                let g = suffix[l].transpose() * &grad * prefix[l].transpose();
                factors[l] -= g * config.gamma;
            }
        }
        w = product(&factors);
    }
    Trajectory::new(TrajectorySource::Simulated, points)
}
