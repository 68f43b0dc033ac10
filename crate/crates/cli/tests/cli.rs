use std::process::{Command, Output};

fn bary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bary")).args(args).output().expect("run bary")
}

#[test]
fn props_pass_and_print_one_line_per_item() {
    let out = bary(&["props", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!text.contains("FAIL"));
    assert!(text.contains("all properties pass"));
}

#[test]
fn oracle_solves_discrete_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let path = dir.join("problem.json");
    let problem = r#"{
        "kind": "discrete",
        "marginals": [
            {"points": [[0.0]], "masses": [1.0]},
            {"points": [[1.0]], "masses": [1.0]}
        ],
        "support": [[0.0], [0.5], [1.0]],
        "weights": [0.5, 0.5]
    }"#;
    std::fs::write(&path, problem).unwrap();
    let out = bary(&["oracle", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["value"].as_f64().unwrap() - 0.125).abs() < 1e-9);
    let masses = report["masses"].as_array().unwrap();
    assert!((masses[1].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn run_writes_csv_summary_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{
            "mode": "functional_rate",
            "marginals": [
                {"family": "truncated_gaussian", "mean": [0.4], "sd": [0.1]},
                {"family": "uniform", "lo": [0.3], "hi": [0.8], "floor": 0.1}
            ],
            "n_ladder": [500, 1000, 2000],
            "replications": 10,
            "grid_size": 65
        }"#,
    )
    .unwrap();
    let stem = dir.join("result");
    let out = bary(&[
        "run",
        spec.to_str().unwrap(),
        "--out",
        stem.to_str().unwrap(),
        "--emit-plot-script",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
    assert!(csv.starts_with("mode,d,m,n,m_outer,rep,seed,metric,value\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 10 * 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "functional_rate");
    assert!(summary["slope"].is_number());
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed, summary);
    let plot = std::fs::read_to_string(stem.with_extension("plot.py")).unwrap();
    assert!(plot.contains("result.csv"));
}

#[test]
fn bad_spec_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = dir.join("spec.json");
    std::fs::write(&spec, r#"{"mode": "functional_rate", "bogus": 1}"#).unwrap();
    let out = bary(&["run", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let missing = bary(&["oracle", dir.join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}
