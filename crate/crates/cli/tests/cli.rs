use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riesz-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn grid_info_prints_a_report() {
    let out = run(&["--seed", "5", "grid-info", "--dim", "2", "--n", "8", "--side", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema"], "riesz-lab/1");
    assert_eq!(v["config"]["seed"], 5);
    assert_eq!(v["config"]["grid"]["n"], 8);
}

#[test]
fn single_task_commands_are_deterministic() {
    let args = ["--seed", "3", "fs-constant", "--n", "32", "--operator", "classical:R10", "--p", "2", "--trials", "10", "--restarts", "1", "--steps", "4"];
    let mut a = json(&run(&args));
    let mut b = json(&run(&args));
    a.as_object_mut().unwrap().remove("timestamp");
    b.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(a, b);
    assert!(a["summary"]["best_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn invalid_input_exits_with_two() {
    let out = run(&["grid-info", "--n", "7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("odd"));
    let out = run(&["rho", "--dim", "3", "--n", "8"]);
    assert_eq!(out.status.code(), Some(2), "a Schrödinger task without a potential");
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_reports_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.toml",
        "seed = 9\n[grid]\ndim = 1\nn = 16\nside = 4\n[[task]]\nkind = \"grid-info\"\n[[task]]\nkind = \"maximal\"\nname = \"hl\"\n",
    );
    let out = dir.path().join("out");
    let o = run(&["--out", out.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["00-grid-info.json", "01-hl.json", "index.csv"]);
    let index = std::fs::read_to_string(out.join("index.csv")).unwrap();
    assert!(index.starts_with("task,operator,maximal,p,theta,best_ratio,stability,samples,seed"));
    assert_eq!(index.lines().count(), 3);
}

#[test]
fn run_reports_config_errors_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[grid]\ndim = 3\nn = 8\n[potential]\nconstant = 1\n[[task]]\nkind = \"fs-constant\"\noperator = \"mixed:2\"\np = 2\n");
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 8") && err.contains("1/2<γ≤1"), "{err}");
}

#[test]
fn failing_task_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.toml", "[grid]\ndim = 1\nn = 16\n[[task]]\nkind = \"maximal\"\ninput = \"missing.csv\"\n");
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
