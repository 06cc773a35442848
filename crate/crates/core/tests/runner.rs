use riesz_lab::config::ExperimentConfig;
use riesz_lab::runner::{emit_report, read_index, run_config, run_experiment, ReportFormat, RunOptions, TaskStatus, CSV_COLUMNS, SCHEMA};

const SMALL: &str = r#"
seed = 11

[grid]
dim = 1
n = 32
side = 8

[[task]]
kind = "fs-constant"
name = "riesz strong"
operator = "classical:R10"
p = 2
trials = 12
restarts = 1
steps = 5

[[task]]
kind = "grid-info"
"#;

fn strip_timestamps(mut v: serde_json::Value) -> serde_json::Value {
    for r in v.as_array_mut().unwrap() {
        r.as_object_mut().unwrap().remove("timestamp");
    }
    v
}

#[test]
fn reruns_differ_only_in_timestamp() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let b = run_experiment(&cfg, &RunOptions { parallel: Some(true), ..Default::default() }).unwrap();
    let ja = strip_timestamps(serde_json::to_value(&a.reports).unwrap());
    let mut jb = strip_timestamps(serde_json::to_value(&b.reports).unwrap());
    // the parallel flag is part of the embedded config; neutralise it
    for r in jb.as_array_mut().unwrap() {
        r["config"]["parallel"] = serde_json::Value::Bool(false);
    }
    assert_eq!(ja, jb);
    assert_eq!(a.exit_code(), 0);
}

#[test]
fn seed_override_changes_search() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let b = run_experiment(&cfg, &RunOptions { seed: Some(12), ..Default::default() }).unwrap();
    assert_eq!(b.reports[0].config.seed, 12);
    assert_ne!(a.reports[0].summary.best_ratio, b.reports[0].summary.best_ratio);
}

#[test]
fn writes_one_json_per_task_and_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let out = dir.path().join("out");
    let run = run_config(&cfg_path, &RunOptions { out: Some(out.clone()), ..Default::default() }).unwrap();
    let names: Vec<String> = run.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["00-riesz_strong.json", "01-grid-info.json", "index.csv"]);

    let first: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&run.files[0]).unwrap()).unwrap();
    assert_eq!(first["schema"], SCHEMA);
    assert_eq!(first["status"], "ok");
    assert_eq!(first["config"]["seed"], 11);
    assert!(first["config"]["tasks"].as_array().unwrap().len() == 2);

    let rows = read_index(out.join("index.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], run.reports[0].summary);
    assert_eq!(rows[0].operator, "classical:R10");
    assert!(rows[0].best_ratio.unwrap() > 0.5);
    assert_eq!(rows[1].best_ratio, None);
}

#[test]
fn empty_report_sets_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let j = dir.path().join("r.json");
    let c = dir.path().join("r.csv");
    emit_report(&[], ReportFormat::Json, &j).unwrap();
    emit_report(&[], ReportFormat::Csv, &c).unwrap();
    assert_eq!(std::fs::read_to_string(&j).unwrap().trim(), "[]");
    assert_eq!(std::fs::read_to_string(&c).unwrap().trim(), CSV_COLUMNS.join(","));
    assert!(read_index(&c).unwrap().is_empty());
}

#[test]
fn csv_round_trips() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let run = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("i.csv");
    emit_report(&run.reports, ReportFormat::Csv, &c).unwrap();
    let back = read_index(&c).unwrap();
    let expected: Vec<_> = run.reports.iter().map(|r| r.summary.clone()).collect();
    assert_eq!(back, expected);
}

#[test]
fn task_failures_are_recorded_not_fatal() {
    let src = "[grid]\ndim = 1\nn = 16\n[[task]]\nkind = \"maximal\"\ninput = \"/nonexistent/f.csv\"\n[[task]]\nkind = \"grid-info\"\n";
    let cfg = ExperimentConfig::from_toml_str(src).unwrap();
    let run = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(run.failed, 1);
    assert_eq!(run.exit_code(), 1);
    assert_eq!(run.reports[0].status, TaskStatus::Error);
    let msg = run.reports[0].error.as_deref().unwrap();
    assert!(msg.contains("nonexistent"), "{msg}");
    assert_eq!(run.reports[1].status, TaskStatus::Ok);
}

#[test]
fn load_prefixes_errors_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[grid]\ndim = 1\nn = 7\n").unwrap();
    let e = ExperimentConfig::load(&p).unwrap_err().to_string();
    assert!(e.contains("bad.toml") && e.contains("line 3"), "{e}");
}
