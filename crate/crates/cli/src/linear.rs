//! `linear`: simulated gradient descent next to the closed-form relaxation.

use std::path::{Path, PathBuf};

use forgefuse_core::deep_linear::{
    closed_form_margin, closed_form_trajectory, forget_rate, forget_time, optimal_separator, train_gd, GaussianSpec,
    LinearConfig, TargetEncoding, Trajectory,
};
use serde::Deserialize;
use serde_json::json;

use crate::error::CliError;
use crate::features;
use crate::output::{Outputs, Plot, Table};
use crate::OutArgs;

/// Step used for the central-difference slope of the closed-form margin.
const SLOPE_STEP: f64 = 1e-3;

/// Run description read from JSON. Exactly one of `data`/`features` and one of
/// `gamma`/`stability_ratio` must be given.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    data: Option<GaussianSpec>,
    /// Relative paths are resolved against the configuration file.
    features: Option<PathBuf>,
    /// Seed for the data generator; the run seed when absent.
    data_seed: Option<u64>,
    depth: usize,
    gamma: Option<f64>,
    /// Learning rate given as `γ·s_1·L`.
    stability_ratio: Option<f64>,
    steps: usize,
    #[serde(default = "default_init_scale")]
    init_scale: f64,
    hidden_width: Option<usize>,
    #[serde(default)]
    seed: u64,
    ridge: Option<f64>,
}

fn default_init_scale() -> f64 {
    1e-2
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid("io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid("config", format!("{}: {e}", path.display())))
}

fn per_step_deviation(a: &Trajectory, b: &Trajectory, scale: f64) -> Vec<f64> {
    a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| (&p.separator - &q.separator).norm() / scale)
        .collect()
}

pub fn run(config_path: &Path, seed: Option<u64>, out: &OutArgs) -> Result<String, CliError> {
    let cfg = read_config(config_path)?;
    let seed = seed.unwrap_or(cfg.seed);
    let features_path = cfg.features.as_ref().map(|p| match config_path.parent() {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.clone(),
    });
    let mut inputs: Vec<&Path> = vec![config_path];
    inputs.extend(features_path.as_deref());
    let binary_tables = ["forget_times", "slope_check"];
    let outputs = Outputs::plan(
        &out.out_dir,
        out.format,
        &inputs,
        &["trajectory", "closed_form", "comparison", binary_tables[0], binary_tables[1]],
        &["report.json"],
    )?;

    let (raw, labels) = match (&cfg.data, &features_path) {
        (Some(spec), None) => features::generate(spec, cfg.data_seed.unwrap_or(seed))?,
        (None, Some(path)) => features::read_features(path)?,
        _ => return Err(CliError::invalid("config", "give exactly one of \"data\" and \"features\"")),
    };
    let data = features::rotate(&raw, &labels)?;
    let gamma = match (cfg.gamma, cfg.stability_ratio) {
        (Some(g), None) => g,
        (None, Some(r)) => LinearConfig::gamma_for_ratio(r, &data, cfg.depth),
        _ => return Err(CliError::invalid("config", "give exactly one of \"gamma\" and \"stability_ratio\"")),
    };
    let config = LinearConfig {
        depth: cfg.depth,
        gamma,
        steps: cfg.steps,
        init_scale: cfg.init_scale,
        hidden_width: cfg.hidden_width,
        seed,
    };

    let sim = train_gd(&config, &data)?;
    let w_opt = optimal_separator(&data, cfg.ridge)?;
    let cf = closed_form_trajectory(&config, &data, sim.initial(), &w_opt)?;
    let scale = if w_opt.norm() > 0.0 { w_opt.norm() } else { 1.0 };
    let deviation = per_step_deviation(&sim, &cf, scale);

    outputs.table(
        "trajectory",
        &Table::from_csv(&sim.to_csv())?,
        Some(Plot::Lines { x: "step", ys: vec!["loss"], title: "simulated loss".into() }),
    )?;
    outputs.table(
        "closed_form",
        &Table::from_csv(&cf.to_csv())?,
        Some(Plot::Lines { x: "step", ys: vec!["loss"], title: "closed-form loss".into() }),
    )?;
    let mut comparison = Table::new(["step", "loss", "closed_form_loss", "deviation"]);
    for ((p, q), dev) in sim.points.iter().zip(&cf.points).zip(&deviation) {
        comparison.push(vec![p.step.to_string(), p.loss.to_string(), q.loss.to_string(), dev.to_string()]);
    }
    outputs.table(
        "comparison",
        &comparison,
        Some(Plot::Lines {
            x: "step",
            ys: vec!["deviation"],
            title: "distance to the closed form relative to the optimum".into(),
        }),
    )?;

    // Forget times and the first-order rate need a single score per point.
    let mut times = Table::new(["index", "label", "simulated", "closed_form"]);
    let mut slopes = Table::new(["index", "label", "forget_rate", "closed_form_slope", "abs_error"]);
    let (mut forgotten_sim, mut forgotten_cf, mut worst_slope) = (0usize, 0usize, 0.0f64);
    if data.encoding == TargetEncoding::Binary {
        let s = data.curvatures();
        let w0: Vec<f64> = sim.initial().row(0).iter().copied().collect();
        let wo: Vec<f64> = w_opt.row(0).iter().copied().collect();
        for i in 0..data.num_points() {
            let x: Vec<f64> = data.x.column(i).iter().copied().collect();
            let y = data.targets[(0, i)];
            let a = forget_time(&sim, &x, y)?;
            let b = forget_time(&cf, &x, y)?;
            forgotten_sim += a.is_some() as usize;
            forgotten_cf += b.is_some() as usize;
            let cell = |t: Option<usize>| t.map(|t| t.to_string()).unwrap_or_default();
            times.push(vec![i.to_string(), data.labels[i].to_string(), cell(a), cell(b)]);

            let rate = forget_rate(&x, y, &w0, &wo, &s, gamma, config.depth)?;
            let margin = |n: f64| closed_form_margin(&x, y, &w0, &wo, &s, gamma, config.depth, n);
            let slope = (margin(SLOPE_STEP)? - margin(-SLOPE_STEP)?) / (2.0 * SLOPE_STEP);
            let err = (rate - slope).abs();
            worst_slope = worst_slope.max(err);
            slopes.push(vec![
                i.to_string(),
                data.labels[i].to_string(),
                rate.to_string(),
                slope.to_string(),
                err.to_string(),
            ]);
        }
    }
    outputs.table(binary_tables[0], &times, None)?;
    outputs.table(binary_tables[1], &slopes, None)?;

    let report = json!({
        "gamma": gamma,
        "depth": config.depth,
        "steps": config.steps,
        "seed": seed,
        "stability_product": config.stability_product(&data),
        "singular_values": data.singular_values,
        "max_deviation": deviation.iter().cloned().fold(0.0, f64::max),
        "final_loss": sim.last().loss,
        "final_closed_form_loss": cf.last().loss,
        "optimal_loss": data.loss(&w_opt),
        "forgotten_simulated": forgotten_sim,
        "forgotten_closed_form": forgotten_cf,
        "max_slope_error": worst_slope,
        "binary": data.encoding == TargetEncoding::Binary,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    outputs.file("report.json", &text)?;
    Ok(report.to_string())
}
