//! `spectral`: forgetting under principal-component truncation against
//! forgetting along a logged run.

use std::path::{Path, PathBuf};

use forgefuse_core::spectral_overlap::{
    model_forgotten_sets, overlap_matrices, spectral_sets_for, truncation_log, Correspondence, RatioKind,
    SpectralSets,
};
use serde_json::json;

use crate::commands::load;
use crate::error::CliError;
use crate::features;
use crate::output::{num, Outputs, Plot, Table};
use crate::OutArgs;

pub enum Points {
    Features(PathBuf),
    Generator(PathBuf),
}

pub fn run(
    points: &Points,
    log_path: Option<&Path>,
    seed: u64,
    ridge: Option<f64>,
    correspondence: Option<(f64, f64)>,
    out: &OutArgs,
) -> Result<String, CliError> {
    let points_path = match points {
        Points::Features(p) | Points::Generator(p) => p.as_path(),
    };
    let mut inputs = vec![points_path];
    inputs.extend(log_path);
    let outputs = Outputs::plan(
        &out.out_dir,
        out.format,
        &inputs,
        &["sizes", "overlap_over_spectral", "overlap_over_model", "diagonal"],
        &["header.json"],
    )?;

    let (raw, labels) = match points {
        Points::Features(p) => features::read_features(p)?,
        Points::Generator(p) => features::generate(&features::read_generator(p)?, seed)?,
    };
    let data = features::rotate(&raw, &labels)?;
    let (w_opt, spectral) = spectral_sets_for(&data, ridge)?;
    let log = match log_path {
        Some(p) => {
            let log = load(p)?;
            if log.num_examples != data.num_points() {
                return Err(CliError::invalid(
                    "length_mismatch",
                    format!("log has {} examples, points file has {}", log.num_examples, data.num_points()),
                )
                .with_field(Some("num_examples")));
            }
            if let Some(i) = (0..log.num_examples).find(|&i| log.labels[i] != labels[i]) {
                return Err(CliError::invalid(
                    "label_mismatch",
                    format!("example {i} is labelled {} in the log and {} in the points", log.labels[i], labels[i]),
                )
                .with_field(Some("labels")));
            }
            log
        }
        None => truncation_log(&w_opt, &data.x, &data.labels)?,
    };
    let model = model_forgotten_sets(&log);
    // The truncation sweep logs W(k) as checkpoint k, so the axes coincide.
    let identity = log_path.is_none().then_some((1.0, 0.0));
    let override_with = correspondence
        .or(identity)
        .map(|(alpha, beta)| Correspondence { alpha, beta });
    let sets = SpectralSets::new(spectral, model, override_with)?;
    let overlap = overlap_matrices(&sets);

    outputs.table("sizes", &Table::from_csv(&overlap.sizes_csv())?, None)?;
    outputs.table(
        "overlap_over_spectral",
        &Table::from_csv(&overlap.ratio_csv(RatioKind::OverSpectral))?,
        Some(Plot::Heatmap { title: "|S(k) ∩ M(n)| / |S(k)|".into() }),
    )?;
    outputs.table(
        "overlap_over_model",
        &Table::from_csv(&overlap.ratio_csv(RatioKind::OverModel))?,
        Some(Plot::Heatmap { title: "|S(k) ∩ M(n)| / |M(n)|".into() }),
    )?;
    let diagonal = overlap.matched_diagonal();
    let mut table = Table::new(["k", "n", "over_spectral", "over_model"]);
    for cell in &diagonal {
        table.push(vec![cell.k.to_string(), cell.n.to_string(), num(cell.over_spectral), num(cell.over_model)]);
    }
    outputs.table(
        "diagonal",
        &table,
        Some(Plot::Lines {
            x: "k",
            ys: vec!["over_spectral", "over_model"],
            title: "overlap along the matched diagonal".into(),
        }),
    )?;
    let mut header = serde_json::to_string_pretty(&overlap.header_json()).expect("header serializes");
    header.push('\n');
    outputs.file("header.json", &header)?;

    Ok(json!({
        "points": data.num_points(),
        "dim": data.dim(),
        "alpha": overlap.correspondence.alpha,
        "beta": overlap.correspondence.beta,
        "self_consistency": log_path.is_none(),
    })
    .to_string())
}
