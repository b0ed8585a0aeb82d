//! End-to-end runs of the `do-icbf` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_do-icbf"));
    c.env_remove("DO_ICBF_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/summary.schema.json");
    jsonschema::validator_for(&read_json(&path)).expect("schema compiles")
}

fn assert_schema_valid(summary: &Value) {
    let v = schema();
    let errors: Vec<String> = v.iter_errors(summary).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "summary.json violates the schema: {errors:#?}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn out_arg(dir: &TempDir, sub: &str) -> String {
    dir.path().join(sub).to_string_lossy().into_owned()
}

#[test]
fn acc_run_is_safe_and_writes_valid_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "acc");
    let o = run(&["run", "--scenario", "acc", "--filter", "do_icbf", "--out", &out, "--emit-plot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema_valid(&summary);
    assert!(summary["metrics"]["min_barrier"]["h_x"].as_f64().unwrap() >= -1e-3);
    assert_eq!(summary["metrics"]["unsafe"], Value::Bool(false));

    let csv = fs::read_to_string(Path::new(&out).join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "t,x0,x1,x2,u0,phi0,vstar0,d0,dhat0,b_h_u,b_h_x,b_h_e,slack_h_u,slack_h_e,c_margin,infeasible"
    );
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 1 + 5001);

    // every column the plot script reads exists in the CSV
    let plot = fs::read_to_string(Path::new(&out).join("plot.gp")).unwrap();
    let cols: Vec<&str> = header.split(',').collect();
    for piece in plot.split("using '").skip(1) {
        for name in piece.split(" with").next().unwrap().split(':') {
            let name = name.trim_matches('\'');
            assert!(cols.contains(&name), "plot uses missing column {name}");
        }
    }
}

#[test]
fn acc_run_without_filter_is_flagged_unsafe() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "off");
    let o = run(&["run", "--scenario", "acc", "--filter", "off", "--out", &out]);
    assert_eq!(code(&o), 0);
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema_valid(&summary);
    assert_eq!(summary["metrics"]["unsafe"], Value::Bool(true));
    assert!(summary["metrics"]["min_barrier"]["h_x"].as_f64().unwrap() < 0.0);
}

#[test]
fn unwritable_output_directory_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("sub").to_string_lossy().into_owned();
    let o = run(&["run", "--scenario", "acc", "--t-end", "0.1", "--out", &out]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn scalar_example_check_lists_the_known_counterexample() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "check");
    let o = run(&["check", "--scenario", "example1", "--out", &out]);
    assert_eq!(code(&o), 4);
    let report = read_json(&Path::new(&out).join("validity.json"));
    assert_eq!(report["valid"], Value::Bool(false));
    let hit = report["counterexamples"].as_array().unwrap().iter().any(|c| {
        c["x"][0].as_f64() == Some(4.0) && c["u"][0].as_f64() == Some(0.0) && c["w"].as_f64().unwrap() > 0.0
    });
    assert!(hit, "no counterexample at x = 4, u = 0");
    for key in ["valid", "relative_degree", "counterexamples"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
}

/// The bicycle chain has relative degree two. The grid scan also finds
/// states heading straight at the obstacle, where steering has no first-order
/// effect on the top level and the nominal rate does not satisfy it.
#[test]
fn bicycle_check_reports_relative_degree_two() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "check");
    let o = run(&["check", "--scenario", "bicycle", "--out", &out]);
    let report = read_json(&Path::new(&out).join("validity.json"));
    assert_eq!(report["relative_degree"].as_u64(), Some(2));
    assert_eq!(code(&o), 4);
    for c in report["counterexamples"].as_array().unwrap() {
        let (x, y, psi) = (c["x"][0].as_f64().unwrap(), c["x"][1].as_f64().unwrap(), c["x"][2].as_f64().unwrap());
        let q = y * psi.cos() - x * psi.sin();
        assert!(q.abs() < 1e-9, "counterexample off the radial line: {c}");
        assert_eq!(c["barrier"], "b2");
    }
}

#[test]
fn empty_barrier_list_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", r#"{"schema": 1, "scenario": "example1", "barriers": []}"#);
    let out = out_arg(&tmp, "o");
    let o = run(&["check", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no barriers"));
}

#[test]
fn barrier_subset_is_checked_alone() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", r#"{"schema": 1, "scenario": "example1", "barriers": ["h_u"]}"#);
    let out = out_arg(&tmp, "o");
    let o = run(&["check", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn acc_compare_contrasts_the_two_filters() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "cmp");
    let o = run(&["compare", "--scenario", "acc", "--out", &out, "--emit-plot"]);
    assert_eq!(code(&o), 0);
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema_valid(&summary);
    assert!(summary["min_barrier"]["do_icbf"]["h_x"].as_f64().unwrap() >= -1e-3);
    assert!(summary["min_barrier"]["icbf"]["h_x"].as_f64().unwrap() < 0.0);
    for f in ["trajectory_do_icbf.csv", "trajectory_icbf.csv", "compare.csv", "plot.gp"] {
        assert!(Path::new(&out).join(f).is_file(), "missing {f}");
    }
    let side = fs::read_to_string(Path::new(&out).join("compare.csv")).unwrap();
    let width = side.lines().next().unwrap().split(',').count();
    assert!(side.lines().all(|l| l.split(',').count() == width));
}

#[test]
fn bicycle_compare_shows_the_unfiltered_car_entering_the_disk() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "cmp");
    let o = run(&["compare", "--scenario", "bicycle", "--out", &out]);
    assert_eq!(code(&o), 0);
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema_valid(&summary);
    assert!(summary["min_barrier"]["off"]["b0"].as_f64().unwrap() < 0.0);
    assert!(summary["min_barrier"]["high_order"]["b0"].as_f64().unwrap() >= -1e-3);
}

#[test]
fn identical_compare_modes_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "cmp");
    let o = run(&["compare", "--scenario", "acc", "--filter", "icbf", "--baseline", "icbf", "--out", &out]);
    assert_eq!(code(&o), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("acc_sinusoid.json");
    let mut files = Vec::new();
    for sub in ["a", "b"] {
        let out = out_arg(&tmp, sub);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--t-end", "5", "--out", &out]);
        assert_eq!(code(&o), 0);
        files.push(fs::read(Path::new(&out).join("trajectory.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn seed_selects_the_stress_disturbance() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("acc_sinusoid.json");
    let mut drawn = Vec::new();
    for seed in ["7", "7", "8"] {
        let out = out_arg(&tmp, seed);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--t-end", "0.5", "--seed", seed, "--out", &out]);
        assert_eq!(code(&o), 0);
        let s = read_json(&Path::new(&out).join("summary.json"));
        assert_schema_valid(&s);
        assert_eq!(s["config"]["seed"].as_u64(), Some(seed.parse().unwrap()));
        drawn.push(s["config"]["drawn_disturbance"].clone());
    }
    assert_eq!(drawn[0], drawn[1]);
    assert_ne!(drawn[0], drawn[2]);
    assert_eq!(drawn[0]["kind"], "sinusoid");
}

#[test]
fn exit_codes_partition_the_outcomes() {
    let tmp = TempDir::new().unwrap();
    let o = |args: &[&str], sub: &str| {
        let out = out_arg(&tmp, sub);
        let mut v: Vec<&str> = args.to_vec();
        v.extend(["--out", &out]);
        code(&run(&v))
    };
    assert_eq!(o(&["run", "--scenario", "example1", "--filter", "off", "--t-end", "1"], "ok"), 0);
    assert_eq!(o(&["run", "--scenario", "nowhere"], "usage"), 1);
    assert_eq!(o(&["run", "--scenario", "acc", "--dt", "-1"], "dt"), 1);
    assert_eq!(o(&["run", "--scenario", "acc", "--filter", "sometimes"], "mode"), 1);
    assert_eq!(o(&["launch"], "verb"), 1);
    assert_eq!(o(&["run", "--scenario", "example1"], "infeasible"), 2);
    assert_eq!(
        o(&["run", "--scenario", "example1", "--filter", "off", "--dt", "0.01", "--t-end", "800"], "blowup"),
        3
    );
    assert_eq!(o(&["check", "--scenario", "example1"], "check"), 4);

    let s = read_json(&tmp.path().join("infeasible/summary.json"));
    assert_schema_valid(&s);
    assert_eq!(s["metrics"]["halt_reason"]["kind"], "infeasible");
    let s = read_json(&tmp.path().join("blowup/summary.json"));
    assert_schema_valid(&s);
    assert_eq!(s["metrics"]["halt_reason"]["kind"], "blow_up");
}

#[test]
fn bad_config_files_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "o");
    for (name, body) in [
        ("version.json", r#"{"schema": 2, "scenario": "acc"}"#),
        ("unknown.json", r#"{"schema": 1, "scenario": "acc", "colour": "red"}"#),
        ("param.json", r#"{"schema": 1, "scenario": "acc", "params": {"mass": -1}}"#),
        ("typo.json", r#"{"schema": 1, "scenario": "acc", "params": {"mas": 1}}"#),
        ("syntax.json", r#"{"schema": 1, "#),
    ] {
        let cfg = write_config(&tmp, name, body);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", &out]);
        assert_eq!(code(&o), 1, "{name}");
    }
    let o = run(&["run", "--config", "/nonexistent/cfg.json", "--out", &out]);
    assert_eq!(code(&o), 1);
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let target = tmp.path().join("from-env");
    let o = bin()
        .args(["run", "--scenario", "bicycle", "--t-end", "0.1"])
        .env("DO_ICBF_OUT", &target)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(target.join("trajectory.csv").is_file());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn shipped_configs_load() {
    let tmp = TempDir::new().unwrap();
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = out_arg(&tmp, path.file_stem().unwrap().to_str().unwrap());
        let o = run(&["run", "--config", path.to_str().unwrap(), "--t-end", "0.2", "--out", &out]);
        let c = code(&o);
        assert!(c == 0 || c == 2, "{}: exit {c}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        assert_schema_valid(&read_json(&Path::new(&out).join("summary.json")));
    }
}
