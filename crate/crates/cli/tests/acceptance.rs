//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bary_core::experiments::{
    barycenter_recovery, duality_gap_study, run, ExperimentOutput, ExperimentSpec,
};

fn specs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn load(name: &str) -> ExperimentSpec {
    let text = std::fs::read_to_string(specs_dir().join(name)).expect("spec file");
    ExperimentSpec::from_json(&text).expect("valid spec")
}

fn run_spec(name: &str) -> Result<ExperimentOutput, String> {
    run(&load(name)).map_err(|e| e.to_string())
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn slope_line(out: &ExperimentOutput, metric: &str, limit: f64) -> (bool, String) {
    match out.result(metric) {
        Some(r) => (
            r.slope <= limit,
            format!(
                "{metric} slope {:.3} (95% CI [{:.3}, {:.3}]) vs limit {limit}; excluded {}",
                r.slope, r.slope_ci_lo, r.slope_ci_hi, r.excluded
            ),
        ),
        None => (false, format!("{metric} missing")),
    }
}

fn property_suite() -> Outcome {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_bary"))
        .args(["props", "--seed", "0"])
        .output()
        .expect("run bary props");
    let secs = t.elapsed().as_secs_f64();
    let failing: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| l.starts_with("FAIL"))
        .map(str::to_string)
        .collect();
    Outcome {
        pass: out.status.success() && secs <= 300.0,
        detail: format!("exit {:?}, {secs:.1}s, failing: {failing:?}", out.status.code()),
    }
}

fn duality_gap() -> Outcome {
    let t = Instant::now();
    match duality_gap_study(0, 10, 257) {
        Ok(records) => {
            let worst = records.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
            let secs = t.elapsed().as_secs_f64();
            Outcome {
                pass: records.len() == 10 && worst <= 0.02 && secs <= 120.0,
                detail: format!("worst relative gap {worst:.2e} over {} instances, {secs:.1}s", records.len()),
            }
        }
        Err(e) => Outcome { pass: false, detail: e.to_string() },
    }
}

fn recovery() -> Outcome {
    match barycenter_recovery(0, 32000, 10, 257) {
        Ok(r) => Outcome {
            pass: r.pass,
            detail: format!(
                "W1 {:.2e} <= 5h + 3 floor = {:.2e} (h {:.2e}, floor {:.2e}, noiseless {:.2e})",
                r.w1, r.bound, r.h, r.statistical_floor, r.w1_population
            ),
        },
        Err(e) => Outcome { pass: false, detail: e.to_string() },
    }
}

fn rate(name: &str, checks: &[(&str, f64)]) -> Outcome {
    let t = Instant::now();
    match run_spec(name) {
        Ok(out) => {
            let mut pass = true;
            let mut details = Vec::new();
            for (metric, limit) in checks {
                let (ok, d) = slope_line(&out, metric, *limit);
                pass &= ok;
                details.push(d);
            }
            details.push(format!("{:.1}s", t.elapsed().as_secs_f64()));
            Outcome { pass, detail: details.join("; ") }
        }
        Err(e) => Outcome { pass: false, detail: e },
    }
}

fn density() -> Outcome {
    let t = Instant::now();
    match run_spec("density_rate.json") {
        Ok(out) => {
            let (a, da) = slope_line(&out, "hneg1_sq", -0.75);
            let (b, db) = slope_line(&out, "w2_sq", -0.75);
            let g = |k: &str| out.diagnostics.get(k).copied().unwrap_or(f64::NAN);
            let (lo, hi) = (g("risk_ratio_min"), g("risk_ratio_max"));
            let (band_lo, band_hi) = (g("risk_ratio_band_lo"), g("risk_ratio_band_hi"));
            let ratio_ok = lo >= band_lo && hi <= band_hi;
            Outcome {
                pass: a && b && ratio_ok,
                detail: format!(
                    "{da}; {db}; risk ratio in [{lo:.3}, {hi:.3}] within [{band_lo:.2e}, {band_hi:.3}]; {:.1}s",
                    t.elapsed().as_secs_f64()
                ),
            }
        }
        Err(e) => Outcome { pass: false, detail: e },
    }
}

fn two_dimensional() -> Outcome {
    let t = Instant::now();
    match run_spec("functional_d2.json") {
        Ok(out) => match out.primary() {
            Some(r) => Outcome {
                pass: r.ladder.len() == 4 && r.medians_decrease(),
                detail: format!(
                    "medians {:?} along n {:?}; {:.1}s",
                    r.medians.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>(),
                    r.ladder,
                    t.elapsed().as_secs_f64()
                ),
            },
            None => Outcome { pass: false, detail: "no result".into() },
        },
        Err(e) => Outcome { pass: false, detail: e },
    }
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("bary-acceptance-{}", std::process::id()));
    let spec = specs_dir().join("barycenter_d1.json");
    let mut csvs = Vec::new();
    for k in 0..2 {
        let stem = dir.join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_bary"))
            .arg("run")
            .arg(&spec)
            .arg("--out")
            .arg(&stem)
            .output()
            .expect("run bary");
        if !status.status.success() {
            return Outcome { pass: false, detail: String::from_utf8_lossy(&status.stderr).into_owned() };
        }
        csvs.push(std::fs::read(stem.with_extension("csv")).unwrap_or_default());
    }
    let _ = std::fs::remove_dir_all(&dir);
    Outcome {
        pass: !csvs[0].is_empty() && csvs[0] == csvs[1],
        detail: format!("two runs, {} bytes each, identical: {}", csvs[0].len(), csvs[0] == csvs[1]),
    }
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("property suite", Box::new(property_suite)),
        ("duality gap", Box::new(duality_gap)),
        ("barycenter recovery", Box::new(recovery)),
        ("functional rate d=1", Box::new(|| rate("functional_d1.json", &[("sq_error", -0.7)]))),
        ("barycenter rate d=1", Box::new(|| rate("barycenter_d1.json", &[("w1", -0.1)]))),
        ("density rates", Box::new(density)),
        (
            "two-layer rates",
            Box::new(|| {
                let m = rate("two_layer_m.json", &[("w1_vs_m", -0.3)]);
                let n = rate("two_layer_n.json", &[("w1_vs_n", -0.1)]);
                Outcome { pass: m.pass && n.pass, detail: format!("{}; {}", m.detail, n.detail) }
            }),
        ),
        ("d=2 monotone medians", Box::new(two_dimensional)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
