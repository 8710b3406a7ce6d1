use std::path::Path;
use std::process::{Command as Process, Output};

use shiftlab::shiftgen::ShiftKind;
use shiftlab_cli::commands::{combine, curate, er, split, theorem};
use shiftlab_cli::config::{Intervention, SplitSource};
use shiftlab_cli::{CliError, ExperimentConfig};

fn binary(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Process::new(env!("CARGO_BIN_EXE_shiftlab"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

#[test]
fn unknown_keys_rejected() {
    assert!(matches!(ExperimentConfig::from_json(r#"{"trails": 3}"#), Err(CliError::Config(_)) | Err(CliError::Json(_))));
    assert!(ExperimentConfig::from_json(r#"{"generator": {"ambient_dimm": 3}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"shift": {"kind": "spurious", "p_spurius": 0.3}}"#).is_err());
    let cfg = ExperimentConfig::from_json(r#"{"trials": 3, "shift": {"kind": "flip"}}"#).unwrap();
    assert_eq!(cfg.trials, 3);
    assert_eq!(cfg.shift.kind, ShiftKind::Flip);
}

#[test]
fn invalid_values_rejected() {
    for json in [
        r#"{"curate": {"n_curated": 0}}"#,
        r#"{"curate": {"n_curated": 63}}"#,
        r#"{"split": {"folds": 1}}"#,
        r#"{"sweep": {"fractions": [0.0]}}"#,
        r#"{"run_id": "../escape"}"#,
        r#"{"bootstrap": {"resamples": 10}}"#,
    ] {
        let cfg = ExperimentConfig::from_json(json);
        assert!(cfg.is_err() || cfg.unwrap().validate().is_err(), "{json}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = binary(&["theorem-check"], None, tmp.path());
    assert_eq!(ok.status.code(), Some(0));
    let report = std::fs::read_to_string(tmp.path().join("run/theorem-check/report.json")).unwrap();
    assert!(report.contains("\"status\": \"pass\""));
    assert!(report.contains("\"config\""));

    let separable = write_config(tmp.path(), r#"{"run_id": "sep", "theorem": {"label_noise": 0.0}}"#);
    let out = binary(&["theorem-check"], Some(&separable), tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let report = std::fs::read_to_string(tmp.path().join("sep/theorem-check/report.json")).unwrap();
    assert!(report.contains("no-minimum"));

    let bad = write_config(tmp.path(), r#"{"curate": {"n_curated": 0}}"#);
    assert_eq!(binary(&["curate"], Some(&bad), tmp.path()).status.code(), Some(1));

    let degenerate = write_config(tmp.path(), r#"{"run_id": "deg", "sweep": {"fractions": [1.0], "trials": 1, "checkpoints": 0}, "trials": 1}"#);
    assert_eq!(binary(&["er"], Some(&degenerate), tmp.path()).status.code(), Some(3));

    let missing = tmp.path().join("nope.json");
    assert_eq!(binary(&["gen"], Some(&missing), tmp.path()).status.code(), Some(1));
}

#[test]
fn zero_trial_er_is_empty() {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 0;
    let (report, out) = er::run(&cfg).unwrap();
    assert!(report.trials.is_empty());
    assert!(report.mean_er.is_none());
    assert!(out.get("report.json").is_some());
}

#[test]
fn zero_init_has_no_orthogonal_residual() {
    let mut cfg = ExperimentConfig::default();
    cfg.theorem.init_norm = 0.0;
    cfg.theorem.inits = 2;
    let (out, status) = theorem::run(&cfg);
    status.unwrap();
    let v: serde_json::Value = serde_json::from_str(out.get("report.json").unwrap()).unwrap();
    for init in v["inits"].as_array().unwrap() {
        assert!(init["orth_residual"].as_f64().unwrap() <= 1e-14);
    }
}

#[test]
fn identity_intervention_corrects_nothing() {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 4;
    cfg.generator.n_test = 2000;
    cfg.shift.kind = ShiftKind::Combined;
    cfg.combine.intervention = Intervention::Identity;
    let run = combine::execute(&cfg).unwrap();
    let (_, intervention) = run.corrected.iter().find(|(n, _)| n == "intervention").unwrap();
    assert!(intervention.indices.is_empty());
}

#[test]
fn threshold_sweep_is_monotone() {
    let mut cfg = ExperimentConfig::default();
    cfg.generator.n_test = 2000;
    cfg.shift.kind = ShiftKind::UnseenTransform;
    cfg.split.source = SplitSource::Shift;
    let (report, out) = split::run(&cfg).unwrap();
    let counts: Vec<usize> = report.threshold_sweep.iter().map(|t| t.out_of_support).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(out.get("split.csv").unwrap().starts_with("index,ratio,split\n"));
    assert!(out.get("calibration.csv").unwrap().starts_with("bin,mean_pred,rate,lo,hi\n"));
}

#[test]
fn curate_needs_group_imbalance() {
    let cfg = ExperimentConfig::default();
    assert!(curate::run(&cfg).is_err());
}

#[test]
fn curated_scratch_needs_more_data() {
    let mut cfg = ExperimentConfig::default();
    cfg.shift.kind = ShiftKind::GroupImbalance;
    let (report, _) = curate::run(&cfg).unwrap();
    assert_eq!(report.curated_label_counts, (32, 32));
    match report.scratch_size_to_match {
        Some(n) => assert!(n >= 4 * 64, "{n}"),
        None => {}
    }
}
