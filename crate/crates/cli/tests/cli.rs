use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use forgefuse_core::predlog::{encode, split_validation, synthesize_log, write_log, NoiseRecord, SynthSpec};
use forgefuse_core::{FusionPlan, PredictionLog};
use serde_json::Value;

fn forgefuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forgefuse"))
        .args(args)
        .env_remove("FORGEFUSE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {:?}", out))
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {:?}", out))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two-class log where each checkpoint's correctness follows `schedule`.
fn scheduled_log(checkpoints: Vec<u32>, schedule: &[&[bool]], right: [f32; 2], wrong: [f32; 2]) -> PredictionLog {
    let probabilities = schedule
        .iter()
        .flat_map(|row| row.iter().flat_map(|&c| if c { right } else { wrong }))
        .collect();
    PredictionLog {
        checkpoints,
        num_examples: schedule[0].len(),
        num_classes: 2,
        probabilities,
        labels: vec![0; schedule[0].len()],
        noise: None,
        split_name: "test".into(),
        metadata: BTreeMap::new(),
    }
}

fn table_log() -> PredictionLog {
    scheduled_log(
        vec![0, 1, 2],
        &[&[true, false, true, false], &[true, true, false, false], &[true, true, false, true]],
        [0.9, 0.1],
        [0.1, 0.9],
    )
}

fn save(dir: &Path, name: &str, log: &PredictionLog) -> PathBuf {
    let path = dir.join(name);
    write_log(log, &path).unwrap();
    path
}

#[test]
fn inspect_reports_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out = forgefuse(&["inspect", "--log", p(&log)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v = stdout_json(&out);
    assert_eq!(v["valid"], Value::Bool(true));
    assert_eq!(v["manifest"]["num_checkpoints"], 3);
    assert_eq!(v["checkpoints"], serde_json::json!([0, 1, 2]));
    assert_eq!(v["final_accuracy"], 0.75);
}

#[test]
fn inspect_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.plog");
    let mut bytes = encode(&table_log()).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, bytes).unwrap();
    let out = forgefuse(&["inspect", "--log", p(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "bad_magic");
}

#[test]
fn inspect_names_the_mismatched_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dims.plog");
    let mut bytes = encode(&table_log()).unwrap();
    // num_examples lives at offset 10
    bytes[10..14].copy_from_slice(&5u32.to_le_bytes());
    std::fs::write(&path, bytes).unwrap();
    let out = forgefuse(&["inspect", "--log", p(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["field"], "num_examples", "{err}");
}

#[test]
fn missing_input_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = forgefuse(&["inspect", "--log", p(&dir.path().join("absent.plog"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn forget_on_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["forget", "--log", p(&log), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let curve = std::fs::read_to_string(out_dir.join("forget_curve.csv")).unwrap();
    assert_eq!(curve, "epoch,acc,F,L\n0,0.5,0.25,0.5\n1,0.5,0,0.25\n2,0.75,0,0\n");
    let history = std::fs::read_to_string(out_dir.join("example_history.csv")).unwrap();
    assert_eq!(
        history,
        "index,epochs_correct,last_correct_epoch,final_correct\n0,3,2,true\n1,2,2,true\n2,1,0,false\n3,1,2,true\n"
    );
    // example 2 is the only forgotten one and was last right at epoch 0
    let by_epoch = std::fs::read_to_string(out_dir.join("last_correct_histogram.csv")).unwrap();
    assert_eq!(by_epoch, "epoch,examples,fraction\n0,1,1\n1,0,0\n2,0,0\n");
}

#[test]
fn forget_single_checkpoint_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let one = scheduled_log(vec![7], &[&[true, false, true]], [0.9, 0.1], [0.1, 0.9]);
    let log = save(dir.path(), "one.plog", &one);
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["forget", "--log", p(&log), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let curve = std::fs::read_to_string(out_dir.join("forget_curve.csv")).unwrap();
    assert_eq!(curve, format!("epoch,acc,F,L\n7,{},0,0\n", 2.0 / 3.0));
}

/// Final model confidently wrong on examples 0..4; checkpoint 0 right on all.
/// Mixing in checkpoint 0 fixes them once its weight exceeds 1/3.
fn fusion_fixture() -> PredictionLog {
    let forgotten = [false, false, false, false, true, true, true, true];
    let mut log = scheduled_log(vec![0, 5, 10], &[&[true; 8], &forgotten, &forgotten], [0.9, 0.1], [0.3, 0.7]);
    log.split_name = "test".into();
    log
}

#[test]
fn fuse_recovers_the_forgotten_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "f.plog", &fusion_fixture());
    let (val, test) = split_validation(8, 0.5, 3).unwrap();
    assert!(val.iter().any(|&i| i < 4) && test.iter().any(|&i| i < 4), "fixture split must see forgetting");
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["fuse", "--log", p(&log), "--split-seed", "3", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let plan = FusionPlan::from_json(&std::fs::read_to_string(out_dir.join("fusion_plan.json")).unwrap()).unwrap();
    assert_eq!(plan.steps.len(), 1);
    assert_eq!(plan.steps[0].epoch, 0);
    // smallest grid weight strictly above 1/3
    assert!((plan.steps[0].epsilon - 0.34).abs() < 1e-12, "{:?}", plan.steps);
    let summary = stdout_json(&out);
    assert_eq!(summary["test_accuracy"], 1.0);
    assert!(summary["improvement"].as_f64().unwrap() > 0.0);
    let eval = std::fs::read_to_string(out_dir.join("evaluation.csv")).unwrap();
    assert!(eval.starts_with("method,val_acc,test_acc,single_acc,improvement\nfinal_model,"));
    assert!(eval.contains("\nknowledge_fusion,1,1,"));
}

fn walk_log(dir: &Path) -> PathBuf {
    let log = synthesize_log(&SynthSpec::random_walk(12, 300, 5), 17).unwrap();
    save(dir, "walk.plog", &log)
}

#[test]
fn fuse_respects_the_step_budget() {
    let dir = tempfile::tempdir().unwrap();
    let log = walk_log(dir.path());
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["fuse", "--log", p(&log), "--max-steps", "1", "--window", "0", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout_json(&out)["steps"].as_u64().unwrap() <= 1);
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let log = walk_log(dir.path());
    for cmd in ["fuse", "forget"] {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|tag| {
                let out_dir = dir.path().join(format!("{cmd}_{tag}"));
                let out = forgefuse(&[cmd, "--log", p(&log), "--split-seed", "9", "--format", "svg", "--out-dir", p(&out_dir)]);
                assert_eq!(out.status.code(), Some(0), "{out:?}");
                (out.stdout, dir_contents(&out_dir))
            })
            .collect();
        assert!(runs[0].1.keys().any(|k| k.ends_with(".svg")));
        assert_eq!(runs[0], runs[1], "{cmd}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let log = walk_log(dir.path());
    let mut contents = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = Command::new(env!("CARGO_BIN_EXE_forgefuse"))
            .args(["fuse", "--log", p(&log), "--out-dir", p(&out_dir)])
            .env("FORGEFUSE_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        contents.push(dir_contents(&out_dir));
    }
    assert_eq!(contents[0], contents[1]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out = Command::new(env!("CARGO_BIN_EXE_forgefuse"))
        .args(["inspect", "--log", p(&log)])
        .env("FORGEFUSE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "invalid_env");
}

#[test]
fn unknown_baseline_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out = forgefuse(&["baseline", "--log", p(&log), "--method", "bagging", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn ensemble_baselines_need_a_size() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out = forgefuse(&["baseline", "--log", p(&log), "--method", "horizontal", "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn size_one_ensembles_match_the_single_model() {
    let dir = tempfile::tempdir().unwrap();
    let log = walk_log(dir.path());
    for method in ["horizontal", "fixed-jumps"] {
        let out_dir = dir.path().join(method);
        let out = forgefuse(&["baseline", "--log", p(&log), "--method", method, "--k", "1", "--out-dir", p(&out_dir)]);
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        let text = std::fs::read_to_string(out_dir.join("evaluation.csv")).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0][1..], rows[1][1..], "{text}");
        assert_eq!(rows[1][4], "0");
    }
}

#[test]
fn horizontal_baseline_matches_a_brute_force_mean() {
    let dir = tempfile::tempdir().unwrap();
    let log_data = synthesize_log(&SynthSpec::random_walk(6, 200, 4), 5).unwrap();
    let log = save(dir.path(), "w.plog", &log_data);
    let out_dir = dir.path().join("h");
    let out = forgefuse(&["baseline", "--log", p(&log), "--method", "horizontal", "--k", "3", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let (_, test) = split_validation(200, 0.5, 0).unwrap();
    let c = log_data.num_classes;
    let correct = test
        .iter()
        .filter(|&&i| {
            let mean: Vec<f64> = (0..c)
                .map(|j| (3..6).map(|ck| log_data.row(ck, i)[j] as f64).sum::<f64>() / 3.0)
                .collect();
            let best = (0..c).fold(0, |b, j| if mean[j] > mean[b] { j } else { b });
            best == log_data.labels[i] as usize
        })
        .count();
    assert_eq!(stdout_json(&out)["test_accuracy"].as_f64().unwrap(), correct as f64 / test.len() as f64);
}

fn memorization_log() -> PredictionLog {
    let p_label = [
        [0.1f32, 0.1, 0.3, 0.3, 0.3, 0.9],
        [0.8, 0.8, 0.3, 0.3, 0.3, 0.9],
        [0.8, 0.8, 0.7, 0.7, 0.7, 0.9],
    ];
    PredictionLog {
        checkpoints: vec![0, 1, 2],
        num_examples: 6,
        num_classes: 2,
        probabilities: p_label.iter().flat_map(|r| r.iter().flat_map(|&p| [1.0 - p, p])).collect(),
        labels: vec![1; 6],
        noise: Some(NoiseRecord {
            mask: vec![true, true, false, false, false, false],
            true_labels: vec![0, 0, 1, 1, 1, 1],
        }),
        split_name: "train".into(),
        metadata: BTreeMap::new(),
    }
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn noise_memorization_on_the_handcrafted_run() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "m.plog", &memorization_log());
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["noise-mem", "--log", p(&log), "--quantile", "0.5", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(out_dir.join("memorization.csv")).unwrap();
    assert_eq!(column(&csv, "difference"), vec!["-2", "3"]);

    let mut clean = memorization_log();
    clean.noise.as_mut().unwrap().mask = vec![false; 6];
    let log = save(dir.path(), "clean.plog", &clean);
    let out_dir = dir.path().join("clean");
    let out = forgefuse(&["noise-mem", "--log", p(&log), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(out_dir.join("memorization.csv")).unwrap();
    assert!(column(&csv, "noisy_count").iter().all(|c| c == "0"));
}

#[test]
fn noise_memorization_needs_a_mask() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out = forgefuse(&["noise-mem", "--log", p(&log), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "missing_noise_mask");
}

#[test]
fn outputs_never_replace_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("forget_curve.csv");
    std::fs::write(&log, encode(&table_log()).unwrap()).unwrap();
    let before = std::fs::read(&log).unwrap();
    let out = forgefuse(&["forget", "--log", p(&log), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "output_overwrites_input");
    assert_eq!(std::fs::read(&log).unwrap(), before);
}

#[test]
fn json_format_writes_typed_tables() {
    let dir = tempfile::tempdir().unwrap();
    let log = save(dir.path(), "t.plog", &table_log());
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["forget", "--log", p(&log), "--format", "json", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("forget_curve.json")).unwrap()).unwrap();
    assert_eq!(v[0]["F"], 0.25);
    assert_eq!(v[1]["L"], 0.25);
    assert!(!out_dir.join("forget_curve.csv").exists());
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn gaussian(per_class: usize) -> Value {
    serde_json::json!({ "per_class": per_class, "num_classes": 2, "separation": 2.0, "spectrum": [1.0, 0.5, 0.25, 0.1] })
}

#[test]
fn linear_with_zero_step_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "zero.json",
        &serde_json::json!({ "data": gaussian(20), "depth": 2, "gamma": 0.0, "steps": 50, "seed": 1 }),
    );
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["linear", "--config", p(&cfg), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 51);
    let tail = |r: &str| r.split_once(',').unwrap().1.to_string();
    assert!(rows.iter().all(|r| tail(r) == tail(rows[0])));
}

#[test]
fn linear_agrees_with_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "agree.json",
        &serde_json::json!({ "data": gaussian(50), "depth": 2, "stability_ratio": 0.05, "steps": 600, "init_scale": 0.01, "seed": 4 }),
    );
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["linear", "--config", p(&cfg), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let dev = column(&csv, "deviation");
    assert_eq!(dev.len(), 601);
    assert!(dev.iter().all(|d| d.parse::<f64>().unwrap() <= 0.05), "{csv}");
    let report = stdout_json(&out);
    assert!((report["stability_product"].as_f64().unwrap() - 0.05).abs() < 1e-12);
}

#[test]
fn linear_rejects_an_unstable_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "unstable.json",
        &serde_json::json!({ "data": gaussian(20), "depth": 2, "stability_ratio": 1.5, "steps": 10 }),
    );
    let out = forgefuse(&["linear", "--config", p(&cfg), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "stability");
    assert!(err["message"].as_str().unwrap().contains("γ·s_1·L"));
}

#[test]
fn spectral_self_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "g.json", &gaussian(40));
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["spectral", "--config", p(&cfg), "--seed", "2", "--format", "svg", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(out_dir.join("diagonal.csv")).unwrap();
    for cell in column(&csv, "over_model") {
        assert!(cell.is_empty() || cell == "1", "{csv}");
    }
    assert!(std::fs::read_to_string(out_dir.join("overlap_over_model.svg")).unwrap().starts_with("<svg"));
    let header: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("header.json")).unwrap()).unwrap();
    assert_eq!((header["alpha"].as_f64(), header["beta"].as_f64()), (Some(1.0), Some(0.0)));
}

#[test]
fn spectral_against_a_logged_run() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("f.csv");
    std::fs::write(&features, "label,a,b\n0,-2,0.1\n0,-1,-0.3\n1,1,0.2\n1,2,-0.1\n0,0.5,0.4\n1,-0.5,-0.2\n").unwrap();
    let log = save(
        dir.path(),
        "run.plog",
        &PredictionLog {
            labels: vec![0, 0, 1, 1, 0, 1],
            ..scheduled_log(
                vec![0, 10],
                &[&[true, true, false, false, true, true], &[true, true, false, false, false, false]],
                [0.8, 0.2],
                [0.2, 0.8],
            )
        },
    );
    let out_dir = dir.path().join("out");
    let out = forgefuse(&["spectral", "--features", p(&features), "--log", p(&log), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let sizes = std::fs::read_to_string(out_dir.join("sizes.csv")).unwrap();
    assert!(sizes.starts_with("axis,key,size\nk,0,"), "{sizes}");

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "label,a\n0,1\n1,2\n").unwrap();
    let out = forgefuse(&["spectral", "--features", p(&short), "--log", p(&log), "--out-dir", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["field"], "num_examples");
}
