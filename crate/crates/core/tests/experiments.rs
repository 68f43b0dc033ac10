use bary_core::experiments::{plot_script, CSV_HEADER};
use bary_core::{run, ExperimentSpec, Mode};
use serde_json::{json, Value};

fn spec(v: Value) -> ExperimentSpec {
    ExperimentSpec::from_json(&v.to_string()).unwrap()
}

fn two_gaussians(mode: &str) -> Value {
    json!({
        "mode": mode,
        "marginals": [
            {"family": "truncated_gaussian", "mean": [0.4], "sd": [0.1]},
            {"family": "truncated_gaussian", "mean": [0.6], "sd": [0.12]}
        ],
        "n_ladder": [500, 2000, 8000],
        "replications": 10,
        "seed": 5,
        "grid_size": 129
    })
}

#[test]
fn runs_are_deterministic() {
    let s = spec(two_gaussians("barycenter_rate"));
    let (a, b) = (run(&s).unwrap(), run(&s).unwrap());
    assert_eq!(a.csv_string().unwrap(), b.csv_string().unwrap());
    assert_eq!(a.primary().unwrap().slope, b.primary().unwrap().slope);
}

#[test]
fn different_seeds_differ() {
    let mut v = two_gaussians("functional_rate");
    let a = run(&spec(v.clone())).unwrap();
    v["seed"] = json!(6);
    let b = run(&spec(v)).unwrap();
    assert_ne!(a.csv_string().unwrap(), b.csv_string().unwrap());
}

#[test]
fn csv_and_summary_layout() {
    let out = run(&spec(two_gaussians("functional_rate"))).unwrap();
    let csv = out.csv_string().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), out.rows.len());
    assert!(out.rows.iter().all(|r| r.m_outer.is_none() && r.m == 2));
    assert_eq!(out.rows.iter().filter(|r| r.metric == "sq_error").count(), 30);
    let summary = out.summary();
    for key in ["mode", "slope", "slope_ci_lo", "slope_ci_hi", "ladder", "means", "medians", "excluded"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["mode"], "functional_rate");
    assert_eq!(summary["excluded"], 0);
    assert!(out.exclusions.is_empty());
    assert!(plot_script("x.csv").contains("x.csv"));
}

#[test]
fn spec_validation_rejects_bad_input() {
    let mut v = two_gaussians("functional_rate");
    v["colour"] = json!("red");
    assert!(ExperimentSpec::from_json(&v.to_string()).is_err());

    let mut v = two_gaussians("functional_rate");
    v["replications"] = json!(5);
    assert!(ExperimentSpec::from_json(&v.to_string()).is_err());

    let mut v = two_gaussians("functional_rate");
    v["n_ladder"] = json!([1000, 500, 2000]);
    assert!(ExperimentSpec::from_json(&v.to_string()).is_err());

    let mut v = two_gaussians("functional_rate");
    v["weights"] = json!([1.0]);
    assert!(ExperimentSpec::from_json(&v.to_string()).is_err());

    let v = json!({"mode": "two_layer", "n_ladder": [1, 2, 3], "m_fixed": 4});
    assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
}

#[test]
fn property_suite_mode_reports_items() {
    let out = run(&spec(json!({"mode": "property_suite", "seed": 1}))).unwrap();
    assert_eq!(out.mode, Mode::PropertySuite);
    let report = out.properties.as_ref().unwrap();
    assert!(report.pass);
    assert!(report.items.len() >= 10);
    assert!(out.passed());
}

/// Non-uniform weights change the error by about the ratio of
/// `(Σ m ω²)^{1/4}`; a factor of two either way is allowed.
#[test]
fn weight_prefactor_is_mild() {
    let base = |weights: Option<[f64; 3]>| {
        let mut v = json!({
            "mode": "barycenter_rate",
            "marginals": [
                {"family": "truncated_gaussian", "mean": [0.35], "sd": [0.08]},
                {"family": "truncated_gaussian", "mean": [0.5], "sd": [0.1]},
                {"family": "truncated_gaussian", "mean": [0.65], "sd": [0.12]}
            ],
            "n_ladder": [1000, 4000, 16000],
            "replications": 10,
            "seed": 3,
            "grid_size": 257
        });
        if let Some(w) = weights {
            v["weights"] = json!(w);
        }
        run(&spec(v)).unwrap().primary().unwrap().means.clone()
    };
    let w = [0.2, 0.3, 0.5];
    let predicted = (3.0 * w.iter().map(|x| x * x).sum::<f64>()).powf(0.25);
    let (weighted, uniform) = (base(Some(w)), base(None));
    for (a, b) in weighted.iter().zip(&uniform) {
        let ratio = a / b;
        assert!(ratio >= predicted / 2.0 && ratio <= predicted * 2.0, "{ratio} vs {predicted}");
    }
}

#[test]
fn degenerate_population_behaves_like_one_layer() {
    let v = json!({
        "mode": "two_layer",
        "population": {
            "reference": {"family": "truncated_gaussian", "mean": [0.5], "sd": [0.08]},
            "scale": [1.0, 1.0],
            "max_shift": 0.0
        },
        "n_ladder": [1000, 4000, 16000],
        "m_fixed": 4,
        "replications": 10,
        "seed": 2,
        "grid_size": 129
    });
    let out = run(&spec(v)).unwrap();
    let r = out.result("w1_vs_n").unwrap();
    assert!(r.medians_decrease(), "{:?}", r.medians);
    assert!(r.slope < -0.2, "{}", r.slope);
    assert!(out.rows.iter().all(|row| row.m_outer == Some(4)));
}

#[test]
fn density_rate_single_marginal() {
    let v = json!({
        "mode": "density_rate",
        "marginals": [{"family": "truncated_gaussian", "mean": [0.5], "sd": [0.12]}],
        "n_ladder": [500, 2000, 8000],
        "replications": 10,
        "seed": 0,
        "grid_size": 129
    });
    let out = run(&spec(v)).unwrap();
    for metric in ["hneg1_sq", "w2_sq"] {
        let r = out.result(metric).unwrap();
        assert!(r.slope < -0.5, "{metric} {}", r.slope);
    }
}
