//! Subcommands that work on a single prediction log.

use std::collections::BTreeMap;
use std::path::Path;

use forgefuse_core::baselines::{early_stopping, fixed_jumps_ensemble, horizontal_ensemble};
use forgefuse_core::forget_metrics::{all_examples, example_histories, forget_curve, noisy_memorization_curve};
use forgefuse_core::knowledge_fusion::{evaluate_plan, evaluate_probs, fit_fusion_plan, reports_to_csv, FitOptions};
use forgefuse_core::predlog::{read_log, split_validation};
use forgefuse_core::PredictionLog;
use serde_json::json;

use crate::error::{log_input, CliError};
use crate::output::{Outputs, Plot, Table};
use crate::{Method, OutArgs, SplitArgs, Subset};

pub fn load(path: &Path) -> Result<PredictionLog, CliError> {
    read_log(path).map_err(|e| log_input(path, e))
}

fn split(log: &PredictionLog, args: &SplitArgs) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    Ok(split_validation(log.num_examples, args.val_fraction, args.split_seed)?)
}

fn must_exist(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::invalid("io", format!("{}: no such file", path.display())))
    }
}

pub fn inspect(path: &Path) -> Result<String, CliError> {
    let log = load(path)?;
    let last = log.final_index();
    let correct = log.correctness(last).iter().filter(|&&c| c).count();
    let summary = json!({
        "valid": true,
        "manifest": log.manifest(),
        "checkpoints": log.checkpoints,
        "final_accuracy": correct as f64 / log.num_examples as f64,
    });
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

pub fn forget(path: &Path, subset: Subset, split_args: &SplitArgs, out: &OutArgs) -> Result<String, CliError> {
    must_exist(path)?;
    let outputs = Outputs::plan(
        &out.out_dir,
        out.format,
        &[path],
        &["forget_curve", "example_history", "epochs_correct_histogram", "last_correct_histogram"],
        &[],
    )?;
    let log = load(path)?;
    let rows = match subset {
        Subset::All => all_examples(&log),
        Subset::Val => split(&log, split_args)?.0,
        Subset::Test => split(&log, split_args)?.1,
    };
    let curve = forget_curve(&log, &rows)?;
    outputs.table(
        "forget_curve",
        &Table::from_csv(&curve.to_csv())?,
        Some(Plot::Lines {
            x: "epoch",
            ys: vec!["acc", "F", "L"],
            title: "forget curve".into(),
        }),
    )?;

    let histories = example_histories(&log, &rows)?;
    let mut table = Table::new(["index", "epochs_correct", "last_correct_epoch", "final_correct"]);
    for h in &histories {
        table.push(vec![
            h.index.to_string(),
            h.epochs_correct.to_string(),
            h.last_correct_epoch.map(|e| e.to_string()).unwrap_or_default(),
            h.final_correct.to_string(),
        ]);
    }
    outputs.table("example_history", &table, None)?;

    // Histograms over examples the final model gets wrong after having been
    // right at some checkpoint.
    let forgotten: Vec<_> = histories.iter().filter(|h| !h.final_correct && h.epochs_correct > 0).collect();
    let mut by_count = vec![0usize; log.num_checkpoints() + 1];
    let mut by_epoch: BTreeMap<u32, usize> = log.checkpoints.iter().map(|&e| (e, 0)).collect();
    for h in &forgotten {
        by_count[h.epochs_correct] += 1;
        if let Some(e) = h.last_correct_epoch {
            *by_epoch.entry(e).or_default() += 1;
        }
    }
    let denom = forgotten.len();
    let frac = |c: usize| if denom == 0 { String::new() } else { (c as f64 / denom as f64).to_string() };
    let mut table = Table::new(["epochs_correct", "examples", "fraction"]);
    for (count, &n) in by_count.iter().enumerate().skip(1) {
        table.push(vec![count.to_string(), n.to_string(), frac(n)]);
    }
    outputs.table(
        "epochs_correct_histogram",
        &table,
        Some(Plot::Lines {
            x: "epochs_correct",
            ys: vec!["fraction"],
            title: "forgotten examples by epochs correct".into(),
        }),
    )?;
    let mut table = Table::new(["epoch", "examples", "fraction"]);
    for (epoch, &n) in &by_epoch {
        table.push(vec![epoch.to_string(), n.to_string(), frac(n)]);
    }
    outputs.table(
        "last_correct_histogram",
        &table,
        Some(Plot::Lines {
            x: "epoch",
            ys: vec!["fraction"],
            title: "forgotten examples by last correct epoch".into(),
        }),
    )?;

    Ok(json!({
        "examples": rows.len(),
        "final_accuracy": curve.final_accuracy(),
        "max_forget": curve.max_forget(),
        "forgotten_examples": denom,
    })
    .to_string())
}

pub fn fuse(
    path: &Path,
    split_args: &SplitArgs,
    window: u32,
    eps_step: f64,
    max_steps: Option<usize>,
    out: &OutArgs,
) -> Result<String, CliError> {
    must_exist(path)?;
    let outputs = Outputs::plan(&out.out_dir, out.format, &[path], &["evaluation", "val_trace"], &["fusion_plan.json"])?;
    let log = load(path)?;
    let (val, test) = split(&log, split_args)?;
    let opts = FitOptions {
        window,
        eps_step,
        max_steps,
        split_seed: Some(split_args.split_seed),
    };
    let plan = fit_fusion_plan(&log, &val, &opts)?;
    let single = evaluate_probs("final_model", &log.prob_matrix(log.final_index()), &log, &val, &test)?;
    let fused = evaluate_plan(&log, &plan, &val, &test)?;

    let mut plan_json = plan.to_json();
    plan_json.push('\n');
    outputs.file("fusion_plan.json", &plan_json)?;
    outputs.table("evaluation", &Table::from_csv(&reports_to_csv(&[single, fused.clone()]))?, None)?;
    let mut trace = Table::new(["step", "epoch", "epsilon", "val_acc"]);
    for (i, acc) in plan.val_accuracy_trace.iter().enumerate() {
        let (epoch, eps) = match i.checked_sub(1).map(|j| plan.steps[j]) {
            Some(s) => (s.epoch.to_string(), s.epsilon.to_string()),
            None => (log.final_epoch().to_string(), String::new()),
        };
        trace.push(vec![i.to_string(), epoch, eps, acc.to_string()]);
    }
    outputs.table(
        "val_trace",
        &trace,
        Some(Plot::Lines {
            x: "step",
            ys: vec!["val_acc"],
            title: "validation accuracy per fusion step".into(),
        }),
    )?;
    Ok(json!({
        "steps": plan.steps.len(),
        "val_accuracy": fused.val_accuracy,
        "test_accuracy": fused.test_accuracy,
        "single_model_accuracy": fused.single_model_accuracy,
        "improvement": fused.improvement,
    })
    .to_string())
}

pub fn baseline(
    path: &Path,
    method: Method,
    k: Option<usize>,
    split_args: &SplitArgs,
    out: &OutArgs,
) -> Result<String, CliError> {
    must_exist(path)?;
    let size = match (method, k) {
        (Method::Horizontal | Method::FixedJumps, None) => {
            return Err(CliError::invalid("usage", "--k is required for horizontal and fixed-jumps"))
        }
        (_, k) => k,
    };
    let outputs = Outputs::plan(&out.out_dir, out.format, &[path], &["evaluation"], &[])?;
    let log = load(path)?;
    let (val, test) = split(&log, split_args)?;
    let final_probs = log.prob_matrix(log.final_index());
    let single = evaluate_probs("final_model", &final_probs, &log, &val, &test)?;
    let report = match method {
        Method::Single => evaluate_probs("single", &final_probs, &log, &val, &test)?,
        Method::Horizontal => {
            let k = size.expect("checked above");
            evaluate_probs(&format!("horizontal_k{k}"), &horizontal_ensemble(&log, k)?, &log, &val, &test)?
        }
        Method::FixedJumps => {
            let k = size.expect("checked above");
            evaluate_probs(&format!("fixed_jumps_k{k}"), &fixed_jumps_ensemble(&log, k)?, &log, &val, &test)?
        }
        Method::EarlyStopping => {
            let best = early_stopping(&log, &val, &test)?;
            let ck = log.index_of(best.best_epoch).expect("epoch comes from the log");
            evaluate_probs(
                &format!("early_stopping_e{}", best.best_epoch),
                &log.prob_matrix(ck),
                &log,
                &val,
                &test,
            )?
        }
    };
    outputs.table("evaluation", &Table::from_csv(&reports_to_csv(&[single, report.clone()]))?, None)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

pub fn noise_mem(path: &Path, quantile: f64, out: &OutArgs) -> Result<String, CliError> {
    must_exist(path)?;
    let outputs = Outputs::plan(&out.out_dir, out.format, &[path], &["memorization"], &[])?;
    let log = load(path)?;
    let curve = noisy_memorization_curve(&log, quantile)?;
    let mut table = Table::new(["epoch", "threshold", "clean_count", "noisy_count", "difference"]);
    for r in &curve.records {
        table.push(vec![
            r.epoch.to_string(),
            r.threshold.to_string(),
            r.clean_count.to_string(),
            r.noisy_count.to_string(),
            r.difference.to_string(),
        ]);
    }
    outputs.table(
        "memorization",
        &table,
        Some(Plot::Lines {
            x: "epoch",
            ys: vec!["difference", "clean_count", "noisy_count"],
            title: "newly memorized high-loss examples".into(),
        }),
    )?;
    Ok(json!({
        "quantile": curve.quantile,
        "definition": curve.definition,
        "checkpoints": curve.records.len(),
    })
    .to_string())
}
