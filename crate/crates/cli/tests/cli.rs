use std::path::Path;
use std::process::{Command, Output};

fn sddpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sddpc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sddpc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sddpc(&["run", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(sddpc(&["run", "--preset", "scalar_case1", "--variant", "IV"]).status.code(), Some(2));
    assert_eq!(sddpc(&["run"]).status.code(), Some(2));
    assert_eq!(sddpc(&["run", "--scenario", "/nonexistent/scenario.json"]).status.code(), Some(2));
    assert_eq!(sddpc(&["report", "/nonexistent"]).status.code(), Some(2));
}

#[test]
fn scenario_round_trips_through_file() {
    let out = sddpc(&["scenario", "--preset", "scalar_case2"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let res = sddpc(&["synth", "--scenario", path.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let ing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ingredients.json")).unwrap()).unwrap();
    assert!(ing["alpha"].as_f64().unwrap() > 0.0);
    assert!(ing["P"].is_array());
}

#[test]
fn collect_writes_data_files() {
    let dir = tempfile::tempdir().unwrap();
    let res = sddpc(&["collect", "--preset", "scalar_case1", "--out", &out_arg(dir.path())]);
    assert!(res.status.success());
    assert!(dir.path().join("data.json").is_file());
    let csv = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}

#[test]
fn campaigns_are_reproducible_and_reportable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let res = sddpc(&[
            "campaign", "--preset", "scalar_case2", "--samples", "2", "--steps", "5", "--seed", "11", "--out",
            &out_arg(dir.path()),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for f in ["metrics.csv", "histograms.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let rep = sddpc(&["report", &out_arg(a.path()), &out_arg(b.path())]);
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("max relative J_cl difference 0.000e0"), "{text}");
}

#[test]
fn single_run_writes_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let res = sddpc(&["run", "--preset", "scalar_case1", "--steps", "4", "--out", &out_arg(dir.path())]);
    assert!(res.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 1);
}
